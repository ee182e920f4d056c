#include "nullwave/nullform.hpp"

#include "nullwave/errors.hpp"

#include <cmath>
#include <random>

namespace nullwave {

Matrix4 minkowski() { return Eigen::Vector4d(1.0, -1.0, -1.0, -1.0).asDiagonal(); }

NullForm NullForm::standard() { return NullForm(minkowski()); }

NullForm NullForm::wedge(int a, int b) {
  Matrix4 m = Matrix4::Zero();
  m(a, b) = 1.0;
  m(b, a) = -1.0;
  return NullForm(m);
}

double eval_form(const NullForm& form, const Covector4& xi, const Covector4& eta) {
  return xi.dot(form.matrix() * eta);
}

namespace {

// Uniform direction on S^2 lifted to a null covector (s|w|, w), s = +-1.
Covector4 random_null(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  Eigen::Vector3d w(gauss(rng), gauss(rng), gauss(rng));
  w *= scale(rng) / w.norm();
  const double s = (rng() & 1u) ? 1.0 : -1.0;
  return {s * w.norm(), w.x(), w.y(), w.z()};
}

}  // namespace

bool null_vector_test(const NullForm& form, std::size_t samples, std::uint64_t seed,
                      double rel_tol, double* worst) {
  std::mt19937_64 rng(seed);
  const double mmax = std::max(form.matrix().cwiseAbs().maxCoeff(), 1e-300);
  double w = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const Covector4 v = random_null(rng);
    const double q = std::abs(eval_form(form, v, v)) / (mmax * v.squaredNorm());
    w = std::max(w, q);
  }
  if (worst) *worst = w;
  return w <= rel_tol;
}

NullFormCheck is_null_form(const NullForm& form, double tol, std::size_t witness_samples,
                           std::uint64_t seed) {
  if (!(tol > 0.0)) throw ValidationError("is_null_form: tol must be positive");
  const Matrix4 sym = 0.5 * (form.matrix() + form.matrix().transpose());
  const Matrix4 g = minkowski();
  NullFormCheck out;
  // <Sym, g> / <g, g>; <g, g> = 4.
  out.c = (sym.cwiseProduct(g)).sum() / 4.0;
  out.residual = (sym - out.c * g).cwiseAbs().maxCoeff();
  out.is_null = out.residual <= tol;
  if (witness_samples > 0) {
    const bool witness = null_vector_test(form, witness_samples, seed, tol, &out.witness_max);
    out.witness_agrees = (witness == out.is_null);
  }
  return out;
}

NullFormTensor::NullFormTensor(int n) : n_(n) {
  if (n <= 0) throw ValidationError("NullFormTensor: N must be positive");
  forms_.resize(static_cast<std::size_t>(n) * n * n);
}

void NullFormTensor::add(int i, int j, int l, const NullForm& form) {
  if (i < 0 || j < 0 || l < 0 || i >= n_ || j >= n_ || l >= n_)
    throw ValidationError("NullFormTensor: index out of range");
  const Matrix4& m = form.matrix();
  forms_[index(i, j, l)] = NullForm(forms_[index(i, j, l)].matrix() + 0.5 * m);
  forms_[index(i, l, j)] = NullForm(forms_[index(i, l, j)].matrix() + 0.5 * m.transpose());
}

Eigen::VectorXd quadratic_rhs(const SemilinearSystem& system, const Gradients& grads) {
  const int n = system.size();
  Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
      const Covector4 gj = grads.row(j).transpose();
      for (int l = 0; l < n; ++l) {
        const Matrix4& m = system.tensor(i, j, l).matrix();
        if (m.isZero(0.0)) continue;
        acc += gj.dot(m * grads.row(l).transpose());
      }
    }
    q[i] = acc;
  }
  return q;
}

CouplingTensors coupling_tensors(const SemilinearSystem& system) {
  const int n = system.size();
  CouplingTensors out;
  out.n = n;
  const std::size_t total = static_cast<std::size_t>(n) * n * n;
  out.a.assign(total, 0.0);
  out.b.assign(total, 0.0);
  out.c.assign(total, 0.0);
  const Covector4 du = covector::du_prime();
  const Covector4 dv = covector::dv_prime();
  const Covector4 dy = covector::dy();
  const Covector4 dz = covector::dz();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) {
        const NullForm& m = system.tensor(i, j, l);
        const NullForm& mt = system.tensor(i, l, j);
        // d psi = 1/2 (d_t + d_x) psi dv' + 1/2 (d_t - d_x) psi du' + psi_y dy + psi_z dz,
        // and m(du', du') = 0 for every null form.
        out.a[out.idx(i, j, l)] = 0.5 * (eval_form(m, du, dv) + eval_form(mt, dv, du));
        out.b[out.idx(i, j, l)] = eval_form(m, du, dy) + eval_form(mt, dy, du);
        out.c[out.idx(i, j, l)] = eval_form(m, du, dz) + eval_form(mt, dz, du);
      }
  return out;
}

namespace {
Eigen::MatrixXd contract(const CouplingTensors& t, const std::vector<double>& data,
                         const Eigen::VectorXd& fprime) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(t.n, t.n);
  for (int i = 0; i < t.n; ++i)
    for (int j = 0; j < t.n; ++j) {
      if (fprime[j] == 0.0) continue;
      for (int l = 0; l < t.n; ++l) out(i, l) += data[t.idx(i, j, l)] * fprime[j];
    }
  return out;
}
}  // namespace

Eigen::MatrixXd CouplingTensors::contract_a(const Eigen::VectorXd& fp) const {
  return contract(*this, a, fp);
}
Eigen::MatrixXd CouplingTensors::contract_b(const Eigen::VectorXd& fp) const {
  return contract(*this, b, fp);
}
Eigen::MatrixXd CouplingTensors::contract_c(const Eigen::VectorXd& fp) const {
  return contract(*this, c, fp);
}

ConditionOneResult check_condition_one(const SemilinearSystem& system,
                                       const std::vector<int>& active, double tol) {
  const int n = system.size();
  std::vector<bool> on(n, false);
  for (int j : active) {
    if (j < 0 || j >= n) throw ValidationError("check_condition_one: active index out of range");
    on[j] = true;
  }
  const CouplingTensors t = coupling_tensors(system);
  ConditionOneResult out;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) {
        if (!on[j] && !on[l]) continue;
        const double b = t.B(i, j, l);
        const double c = t.C(i, j, l);
        if (std::abs(b) > tol || std::abs(c) > tol) out.violations.push_back({i, j, l, b, c});
      }
  out.satisfied = out.violations.empty();
  return out;
}

SemilinearSystem fixture_system(const std::string& name) {
  // The shorthand "box phi_1 = m(d phi_1, d phi_2)" sets both m_{112} and m_{121}
  // to m, so the quadratic term is the full symmetric sum over (j, l).
  if (name == "example1") {
    NullFormTensor t(2);
    t.add(0, 0, 1, NullForm::standard());
    t.add(0, 1, 0, NullForm::standard());
    t.add(1, 0, 0, NullForm::standard());
    return {t, "example1"};
  }
  if (name == "example2") {
    NullFormTensor t(2);
    const NullForm e = NullForm::wedge(0, 2);  // dt ^ dy
    t.add(0, 0, 1, e);
    t.add(0, 1, 0, e.transposed());
    t.add(1, 0, 0, NullForm::standard());
    return {t, "example2"};
  }
  throw ValidationError("unknown fixture system '" + name + "'");
}

std::vector<std::string> fixture_names() { return {"example1", "example2"}; }

SemilinearSystem system_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("N") || !doc["N"].is_number_integer())
    throw ValidationError("system: integer field 'N' is required");
  const int n = doc["N"].get<int>();
  if (n <= 0) throw ValidationError("system: N must be positive");
  NullFormTensor tensor(n);
  if (doc.contains("forms")) {
    if (!doc["forms"].is_array()) throw ValidationError("system: 'forms' must be an array");
    for (const auto& f : doc["forms"]) {
      for (const char* key : {"i", "j", "l"})
        if (!f.contains(key) || !f[key].is_number_integer())
          throw ValidationError(std::string("system: form entry needs integer '") + key + "'");
      if (!f.contains("matrix") || !f["matrix"].is_array() || f["matrix"].size() != 16)
        throw ValidationError("system: form 'matrix' must hold 16 numbers");
      const int i = f["i"].get<int>() - 1, j = f["j"].get<int>() - 1, l = f["l"].get<int>() - 1;
      if (i < 0 || j < 0 || l < 0 || i >= n || j >= n || l >= n)
        throw ValidationError("system: form index out of range (indices are 1-based)");
      Matrix4 m;
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m(r, c) = f["matrix"][4 * r + c].get<double>();
      tensor.add(i, j, l, NullForm(m));
    }
  }
  return {tensor, doc.value("label", std::string("custom"))};
}

nlohmann::json system_to_json(const SemilinearSystem& system) {
  nlohmann::json forms = nlohmann::json::array();
  const int n = system.size();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) {
        const Matrix4& m = system.tensor(i, j, l).matrix();
        if (m.isZero(0.0)) continue;
        std::vector<double> flat;
        for (int r = 0; r < 4; ++r)
          for (int c = 0; c < 4; ++c) flat.push_back(m(r, c));
        // Both (j, l) and (l, j) slots are written; reloading averages them back
        // into the same symmetrized tensor.
        forms.push_back({{"i", i + 1}, {"j", j + 1}, {"l", l + 1}, {"matrix", flat}});
      }
  return {{"N", n}, {"label", system.label}, {"forms", forms}};
}

}  // namespace nullwave
