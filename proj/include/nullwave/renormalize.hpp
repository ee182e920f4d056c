#pragma once

// Renormalization A(u) removing the (d_t + d_x) coupling, the transformed
// transverse coefficients B_y(u), B_z(u), Condition 2 and the growth rate K.

#include "nullwave/nullform.hpp"
#include "nullwave/profiles.hpp"

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace nullwave {

struct RenormalizerOptions {
  double pad = 0.05;
  double local_tol = 1e-8;  // step-doubling error limit per step
  int max_depth = 12;       // recursive step subdivision limit
};

/// A(u) on an ascending grid covering [-1 - pad, 1 + pad]; u = 1 is a node.
class Renormalizer {
 public:
  int size() const { return n_; }
  double step() const { return h_; }
  const std::vector<double>& grid() const { return u_; }
  const Eigen::MatrixXd& A_node(std::size_t k) const { return a_[k]; }
  const Eigen::MatrixXd& Ainv_node(std::size_t k) const { return ainv_[k]; }
  double det_node(std::size_t k) const { return det_[k]; }
  /// Number of RK4 steps that had to be subdivided.
  int subdivided_steps() const { return subdivided_; }

  /// Cubic Hermite interpolation; identity for u >= 1, constant for u below the grid.
  Eigen::MatrixXd A(double u) const;
  Eigen::MatrixXd Ainv(double u) const;

 private:
  friend Renormalizer solve_renormalizer(const CouplingTensors&, const WaveProfile&, double,
                                         const RenormalizerOptions&);
  int n_ = 0;
  double h_ = 0.0;
  int subdivided_ = 0;
  std::vector<double> u_;
  std::vector<Eigen::MatrixXd> a_, da_, ainv_;
  std::vector<double> det_;
};

/// RK4 for A' = -1/2 A (a . f') from u = 1 leftwards, A = I at u = 1.
/// Requires h <= 1e-2. Throws NumericalError if a step cannot meet local_tol.
Renormalizer solve_renormalizer(const CouplingTensors& couplings, const WaveProfile& profile,
                                double h = 1e-3, const RenormalizerOptions& opts = {});

/// exp(1/2 int_u^1 tr(a . f')(s) ds) by adaptive quadrature.
double liouville_determinant(const CouplingTensors& couplings, const WaveProfile& profile,
                             double u);

using MatrixFn = std::function<Eigen::MatrixXd(double)>;

/// B_y(u), B_z(u), tabulated on a grid with exact evaluators alongside.
struct LinearizedCoefficients {
  int n = 0;
  std::vector<double> u;
  std::vector<Eigen::MatrixXd> by, bz;
  MatrixFn by_fn, bz_fn;

  Eigen::MatrixXd By(double s) const { return by_fn(s); }
  Eigen::MatrixXd Bz(double s) const { return bz_fn(s); }

  /// Tabulate arbitrary coefficient functions on [lo, hi] with step h.
  static LinearizedCoefficients from_functions(int n, MatrixFn fy, MatrixFn fz, double lo,
                                               double hi, double h);
  /// Scalar B_y = B(u), B_z = 0.
  static LinearizedCoefficients scalar(std::function<double(double)> b, double lo = -1.05,
                                       double hi = 1.05, double h = 1e-3);
};

/// (B_y)_{ip} = A_{ij} b_{j l q} f'_l A^{-1}_{qp}, same with c for B_z.
LinearizedCoefficients linearized_coefficients(const Renormalizer& renorm,
                                               const CouplingTensors& couplings,
                                               const WaveProfile& profile);

/// max Re(lambda) over the eigenvalues of m.
double spectral_abscissa(const Eigen::MatrixXd& m);
/// max |Re(lambda)| over the eigenvalues of m.
double max_abs_real_part(const Eigen::MatrixXd& m);

struct ConditionTwoResult {
  bool satisfied = false;
  double u0 = 0.0, theta = 0.0;
  double eigenvalue_real = 0.0;  // real part of the witnessing eigenvalue
};

/// Scans u nodes (every `u_stride`-th) and theta in [0, pi) on n_theta points,
/// refining the best theta by golden-section search.
ConditionTwoResult check_condition_two(const LinearizedCoefficients& coeffs, int n_theta = 360,
                                       int u_stride = 1, double tol = 1e-8);

struct GrowthRateEstimate {
  double K = 0.0;
  bool positive = false;  // false means "no positive rate found"
  double theta = 0.0;
  double u1 = 0.0, u2 = 0.0;
  std::string method;  // "scalar-integral" or "spectral-abscissa"
};

struct GrowthRateOptions {
  int n_theta = 360;
  double h_u = 1e-3;
  double coarse_h_u = 1e-2;
};

GrowthRateEstimate growth_rate_estimate(const LinearizedCoefficients& coeffs,
                                        const GrowthRateOptions& opts = {});

/// u, then B_y entries row-major, then B_z entries row-major.
void write_coefficients_csv(const std::string& path, const LinearizedCoefficients& coeffs);

}  // namespace nullwave
