#pragma once

// Null forms on R^{3+1} and semilinear wave systems built from them.
//
// Index convention for covectors and form matrices: slot 0 = t, 1 = x,
// 2 = y, 3 = z; the Minkowski metric is diag(1,-1,-1,-1).

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace nullwave {

using Covector4 = Eigen::Vector4d;
using Matrix4 = Eigen::Matrix4d;

namespace covector {
inline Covector4 dt() { return {1.0, 0.0, 0.0, 0.0}; }
inline Covector4 dx() { return {0.0, 1.0, 0.0, 0.0}; }
inline Covector4 dy() { return {0.0, 0.0, 1.0, 0.0}; }
inline Covector4 dz() { return {0.0, 0.0, 0.0, 1.0}; }
/// d(t - x), the conormal of the plane-wave fronts.
inline Covector4 du_prime() { return {1.0, -1.0, 0.0, 0.0}; }
/// d(t + x).
inline Covector4 dv_prime() { return {1.0, 1.0, 0.0, 0.0}; }
}  // namespace covector

/// Minkowski metric diag(1,-1,-1,-1).
Matrix4 minkowski();

/// A bilinear form m(xi, eta) = xi^T M eta.
class NullForm {
 public:
  NullForm() : matrix_(Matrix4::Zero()) {}
  explicit NullForm(const Matrix4& m) : matrix_(m) {}

  /// The standard null form m(xi, eta) = xi_a eta^a.
  static NullForm standard();
  /// The antisymmetric form dx^a ^ dx^b: M[a][b] = 1, M[b][a] = -1.
  static NullForm wedge(int a, int b);

  const Matrix4& matrix() const { return matrix_; }
  NullForm transposed() const { return NullForm(matrix_.transpose()); }

 private:
  Matrix4 matrix_;
};

double eval_form(const NullForm& form, const Covector4& xi, const Covector4& eta);

struct NullFormCheck {
  bool is_null = false;
  double c = 0.0;              // least-squares multiple of the metric in Sym(M)
  double residual = 0.0;       // max-norm of Sym(M) - c * metric
  double witness_max = 0.0;    // max |v^T M v| / (|M|_max |v|^2) over sampled null vectors
  bool witness_agrees = true;  // sampled null-vector test agrees with the exact test
};

/// Exact symmetric-part test (primary) plus a seeded random null-vector
/// witness (secondary). tol must be positive.
NullFormCheck is_null_form(const NullForm& form, double tol = 1e-10,
                           std::size_t witness_samples = 10000,
                           std::uint64_t seed = 0x6e756c6cULL);

/// Randomized test alone: true iff every sampled null vector v has
/// |v^T M v| <= rel_tol * |M|_max * |v|^2.
bool null_vector_test(const NullForm& form, std::size_t samples, std::uint64_t seed,
                      double rel_tol = 1e-10, double* worst = nullptr);

/// Coupling tensor m_{i j l} for an N-component system. Storage is kept
/// symmetrized: M[i][j][l] == M[i][l][j]^T.
class NullFormTensor {
 public:
  explicit NullFormTensor(int n);

  int size() const { return n_; }
  const NullForm& operator()(int i, int j, int l) const { return forms_[index(i, j, l)]; }

  /// Adds `form` to the (i, j, l) slot; the contribution to the quadratic
  /// term is preserved while the stored tensor stays symmetrized.
  void add(int i, int j, int l, const NullForm& form);

 private:
  std::size_t index(int i, int j, int l) const {
    return (static_cast<std::size_t>(i) * n_ + j) * n_ + l;
  }
  int n_;
  std::vector<NullForm> forms_;
};

struct SemilinearSystem {
  NullFormTensor tensor;
  std::string label;

  int size() const { return tensor.size(); }
};

/// First-order coefficients of the linearization around f(t - x):
///   box psi_i = sum_{j,l} f'_j (a_{ijl} (d_t + d_x) + b_{ijl} d_y + c_{ijl} d_z) psi_l
/// where j indexes the background and l the perturbation.
struct CouplingTensors {
  int n = 0;
  std::vector<double> a, b, c;

  double A(int i, int j, int l) const { return a[idx(i, j, l)]; }
  double B(int i, int j, int l) const { return b[idx(i, j, l)]; }
  double C(int i, int j, int l) const { return c[idx(i, j, l)]; }
  std::size_t idx(int i, int j, int l) const {
    return (static_cast<std::size_t>(i) * n + j) * n + l;
  }

  /// sum_j a_{i j l} fprime_j as an N x N matrix (row i, column l).
  Eigen::MatrixXd contract_a(const Eigen::VectorXd& fprime) const;
  Eigen::MatrixXd contract_b(const Eigen::VectorXd& fprime) const;
  Eigen::MatrixXd contract_c(const Eigen::VectorXd& fprime) const;
};

/// Gradients are stored one covector per row (N x 4).
using Gradients = Eigen::Matrix<double, Eigen::Dynamic, 4>;

/// Q_i = sum_{j,l} m_{ijl}(d phi_j, d phi_l).
Eigen::VectorXd quadratic_rhs(const SemilinearSystem& system, const Gradients& grads);

CouplingTensors coupling_tensors(const SemilinearSystem& system);

struct ConditionOneViolation {
  int i, j, l;
  double b, c;
};

struct ConditionOneResult {
  bool satisfied = true;
  std::vector<ConditionOneViolation> violations;
};

/// `active` holds 0-based indices of components with f_j not identically zero.
ConditionOneResult check_condition_one(const SemilinearSystem& system,
                                       const std::vector<int>& active, double tol = 1e-12);

/// Named systems: "example1" (stable structure) and "example2" (unstable).
SemilinearSystem fixture_system(const std::string& name);
std::vector<std::string> fixture_names();

/// {"N": int, "forms": [{"i","j","l","matrix": [16 reals, row-major]}], "label"?}
/// Indices are 1-based as in the mathematical notation.
SemilinearSystem system_from_json(const nlohmann::json& doc);
nlohmann::json system_to_json(const SemilinearSystem& system);

}  // namespace nullwave
