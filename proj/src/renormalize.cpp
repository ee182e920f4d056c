#include "nullwave/renormalize.hpp"

#include "nullwave/errors.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>

namespace nullwave {

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::MatrixXd rhs_matrix(const CouplingTensors& t, const WaveProfile& p, double u) {
  return -0.5 * t.contract_a(p.eval(u, 1));
}

Eigen::MatrixXd rk4(const CouplingTensors& t, const WaveProfile& p, const Eigen::MatrixXd& a,
                    double u, double h) {
  const Eigen::MatrixXd m0 = rhs_matrix(t, p, u);
  const Eigen::MatrixXd mh = rhs_matrix(t, p, u + 0.5 * h);
  const Eigen::MatrixXd m1 = rhs_matrix(t, p, u + h);
  const Eigen::MatrixXd k1 = a * m0;
  const Eigen::MatrixXd k2 = (a + 0.5 * h * k1) * mh;
  const Eigen::MatrixXd k3 = (a + 0.5 * h * k2) * mh;
  const Eigen::MatrixXd k4 = (a + h * k3) * m1;
  return a + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// One step of size h with step-doubling error control; subdivides until the
// estimate is below tol.
Eigen::MatrixXd controlled_step(const CouplingTensors& t, const WaveProfile& p,
                                const Eigen::MatrixXd& a, double u, double h, double tol,
                                int depth, int max_depth, bool& subdivided) {
  const Eigen::MatrixXd whole = rk4(t, p, a, u, h);
  const Eigen::MatrixXd half = rk4(t, p, a, u, 0.5 * h);
  const Eigen::MatrixXd two = rk4(t, p, half, u + 0.5 * h, 0.5 * h);
  const double err = (two - whole).cwiseAbs().maxCoeff() / 15.0;
  if (!std::isfinite(err)) throw NumericalError("renormalizer: non-finite A", u);
  if (err <= tol) return two;
  if (depth >= max_depth)
    throw NumericalError("renormalizer: local error " + std::to_string(err) +
                             " above limit after maximal subdivision",
                         u);
  subdivided = true;
  const Eigen::MatrixXd mid =
      controlled_step(t, p, a, u, 0.5 * h, 0.5 * tol, depth + 1, max_depth, subdivided);
  return controlled_step(t, p, mid, u + 0.5 * h, 0.5 * h, 0.5 * tol, depth + 1, max_depth,
                         subdivided);
}

}  // namespace

Renormalizer solve_renormalizer(const CouplingTensors& couplings, const WaveProfile& profile,
                                double h, const RenormalizerOptions& opts) {
  if (!(h > 0.0) || h > 1e-2) throw ValidationError("solve_renormalizer: need 0 < h <= 1e-2");
  if (profile.size() != couplings.n) throw ValidationError("solve_renormalizer: size mismatch");
  if (opts.pad < 0.0) throw ValidationError("solve_renormalizer: pad must be >= 0");
  const int n = couplings.n;
  const long left = static_cast<long>(std::ceil((2.0 + opts.pad) / h - 1e-9));
  const long right = static_cast<long>(std::ceil(opts.pad / h - 1e-9));
  const std::size_t count = static_cast<std::size_t>(left + right + 1);

  Renormalizer r;
  r.n_ = n;
  r.h_ = h;
  r.u_.resize(count);
  r.a_.resize(count);
  r.da_.resize(count);
  r.ainv_.resize(count);
  r.det_.resize(count);
  for (std::size_t k = 0; k < count; ++k) r.u_[k] = 1.0 + (static_cast<long>(k) - left) * h;

  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  for (std::size_t k = static_cast<std::size_t>(left); k < count; ++k) r.a_[k] = eye;
  for (long k = left - 1; k >= 0; --k) {
    bool sub = false;
    r.a_[k] = controlled_step(couplings, profile, r.a_[k + 1], r.u_[k + 1], -h, opts.local_tol,
                              0, opts.max_depth, sub);
    if (sub) ++r.subdivided_;
  }
  for (std::size_t k = 0; k < count; ++k) {
    r.da_[k] = r.a_[k] * rhs_matrix(couplings, profile, r.u_[k]);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(r.a_[k]);
    r.det_[k] = lu.determinant();
    if (!(std::abs(r.det_[k]) > 0.0)) throw NumericalError("renormalizer: singular A", r.u_[k]);
    r.ainv_[k] = lu.inverse();
  }
  return r;
}

Eigen::MatrixXd Renormalizer::A(double u) const {
  if (u >= 1.0) return Eigen::MatrixXd::Identity(n_, n_);
  if (u <= u_.front()) return a_.front();
  const double pos = (u - u_.front()) / h_;
  std::size_t k = static_cast<std::size_t>(pos);
  if (k + 1 >= u_.size()) k = u_.size() - 2;
  const double s = (u - u_[k]) / h_;
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
  return h00 * a_[k] + h10 * h_ * da_[k] + h01 * a_[k + 1] + h11 * h_ * da_[k + 1];
}

Eigen::MatrixXd Renormalizer::Ainv(double u) const {
  if (u >= 1.0) return Eigen::MatrixXd::Identity(n_, n_);
  if (u <= u_.front()) return ainv_.front();
  return A(u).inverse();
}

double liouville_determinant(const CouplingTensors& couplings, const WaveProfile& profile,
                             double u) {
  if (u >= 1.0) return 1.0;
  auto tr = [&](double s) { return couplings.contract_a(profile.eval(s, 1)).trace(); };
  const double lo = std::max(u, -1.0);
  const double integral =
      boost::math::quadrature::gauss_kronrod<double, 61>::integrate(tr, lo, 1.0, 15, 1e-13);
  return std::exp(0.5 * integral);
}

LinearizedCoefficients LinearizedCoefficients::from_functions(int n, MatrixFn fy, MatrixFn fz,
                                                              double lo, double hi, double h) {
  if (!(hi > lo) || !(h > 0.0)) throw ValidationError("coefficients: bad tabulation range");
  LinearizedCoefficients c;
  c.n = n;
  c.by_fn = std::move(fy);
  c.bz_fn = std::move(fz);
  const std::size_t count = static_cast<std::size_t>(std::llround((hi - lo) / h)) + 1;
  const double step = (hi - lo) / static_cast<double>(count - 1);
  for (std::size_t k = 0; k < count; ++k) {
    const double u = lo + k * step;
    c.u.push_back(u);
    c.by.push_back(c.by_fn(u));
    c.bz.push_back(c.bz_fn(u));
  }
  return c;
}

LinearizedCoefficients LinearizedCoefficients::scalar(std::function<double(double)> b, double lo,
                                                      double hi, double h) {
  MatrixFn fy = [b](double u) { return Eigen::MatrixXd::Constant(1, 1, b(u)); };
  MatrixFn fz = [](double) { return Eigen::MatrixXd::Zero(1, 1); };
  return from_functions(1, fy, fz, lo, hi, h);
}

LinearizedCoefficients linearized_coefficients(const Renormalizer& renorm,
                                               const CouplingTensors& couplings,
                                               const WaveProfile& profile) {
  if (renorm.size() != couplings.n || profile.size() != couplings.n)
    throw ValidationError("linearized_coefficients: size mismatch");
  auto r = std::make_shared<const Renormalizer>(renorm);
  auto t = std::make_shared<const CouplingTensors>(couplings);
  auto p = std::make_shared<const WaveProfile>(profile);
  MatrixFn fy = [r, t, p](double u) -> Eigen::MatrixXd {
    const Eigen::VectorXd fp = p->eval(u, 1);
    if (fp.isZero(0.0)) return Eigen::MatrixXd::Zero(t->n, t->n);
    return r->A(u) * t->contract_b(fp) * r->Ainv(u);
  };
  MatrixFn fz = [r, t, p](double u) -> Eigen::MatrixXd {
    const Eigen::VectorXd fp = p->eval(u, 1);
    if (fp.isZero(0.0)) return Eigen::MatrixXd::Zero(t->n, t->n);
    return r->A(u) * t->contract_c(fp) * r->Ainv(u);
  };
  LinearizedCoefficients c;
  c.n = couplings.n;
  c.by_fn = fy;
  c.bz_fn = fz;
  const auto& grid = renorm.grid();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    c.u.push_back(grid[k]);
    const Eigen::VectorXd fp = profile.eval(grid[k], 1);
    c.by.push_back(renorm.A_node(k) * couplings.contract_b(fp) * renorm.Ainv_node(k));
    c.bz.push_back(renorm.A_node(k) * couplings.contract_c(fp) * renorm.Ainv_node(k));
  }
  return c;
}

namespace {

// Real part of the eigenvalue with the largest real part (max) or largest
// |real part| (dominant).
struct RealParts {
  double max;
  double dominant;
};

RealParts real_parts(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() == 0)
    throw ValidationError("spectral_abscissa: matrix must be square and nonempty");
  if (!m.allFinite()) throw ValidationError("spectral_abscissa: non-finite entries");
  if (m.rows() == 1) return {m(0, 0), m(0, 0)};
  if (m.rows() == 2) {
    const double half_tr = 0.5 * (m(0, 0) + m(1, 1));
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    const double disc = half_tr * half_tr - det;
    if (disc < 0.0) return {half_tr, half_tr};
    const double root = std::sqrt(disc);
    const double hi = half_tr + root, lo = half_tr - root;
    return {hi, std::abs(hi) >= std::abs(lo) ? hi : lo};
  }
  Eigen::EigenSolver<Eigen::MatrixXd> es;
  es.setMaxIterations(1000);
  es.compute(m, false);
  if (es.info() != Eigen::Success)
    throw NumericalError("spectral_abscissa: eigenvalue iteration did not converge");
  const Eigen::VectorXcd ev = es.eigenvalues();
  RealParts out{-1e300, 0.0};
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    out.max = std::max(out.max, ev[k].real());
    if (std::abs(ev[k].real()) > std::abs(out.dominant)) out.dominant = ev[k].real();
  }
  return out;
}

template <class F>
double golden_max(F&& f, double a, double b, int iters, double& arg) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int k = 0; k < iters; ++k) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  if (fc >= fd) {
    arg = c;
    return fc;
  }
  arg = d;
  return fd;
}

}  // namespace

double spectral_abscissa(const Eigen::MatrixXd& m) { return real_parts(m).max; }

double max_abs_real_part(const Eigen::MatrixXd& m) { return std::abs(real_parts(m).dominant); }

ConditionTwoResult check_condition_two(const LinearizedCoefficients& coeffs, int n_theta,
                                       int u_stride, double tol) {
  if (n_theta < 1 || u_stride < 1 || coeffs.u.empty())
    throw ValidationError("check_condition_two: empty grid");
  ConditionTwoResult best;
  double best_val = -1.0;
  std::size_t best_k = 0;
  for (std::size_t k = 0; k < coeffs.u.size(); k += u_stride) {
    const Eigen::MatrixXd& by = coeffs.by[k];
    const Eigen::MatrixXd& bz = coeffs.bz[k];
    if (by.isZero(0.0) && bz.isZero(0.0)) continue;
    for (int i = 0; i < n_theta; ++i) {
      const double th = kPi * i / n_theta;
      const double v = max_abs_real_part(std::cos(th) * by + std::sin(th) * bz);
      if (v > best_val) {
        best_val = v;
        best_k = k;
        best.theta = th;
      }
    }
  }
  if (best_val < 0.0) return best;
  const Eigen::MatrixXd& by = coeffs.by[best_k];
  const Eigen::MatrixXd& bz = coeffs.bz[best_k];
  auto f = [&](double th) { return max_abs_real_part(std::cos(th) * by + std::sin(th) * bz); };
  const double dth = kPi / n_theta;
  double th_ref = best.theta;
  const double refined = golden_max(f, best.theta - dth, best.theta + dth, 40, th_ref);
  if (refined > best_val) {
    best_val = refined;
    best.theta = std::fmod(th_ref + kPi, kPi);
  }
  best.u0 = coeffs.u[best_k];
  best.eigenvalue_real =
      real_parts(std::cos(best.theta) * by + std::sin(best.theta) * bz).dominant;
  best.satisfied = best_val > tol;
  return best;
}

namespace {

// 4-point Gauss-Legendre nodes and weights on [-1, 1].
constexpr double kGlX[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                            0.8611363115940526};
constexpr double kGlW[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                            0.3478548451374538};

template <class F>
double cell_integral(F&& f, double a, double b) {
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double s = 0.0;
  for (int q = 0; q < 4; ++q) s += kGlW[q] * f(mid + half * kGlX[q]);
  return s * half;
}

struct IntervalScore {
  double value = -1e300;
  double u1 = 0.0, u2 = 0.0;
};

// Best (1/sqrt2) int_{u_i}^{u_j} lambda / sqrt(u_j - u_i) over pairs inside runs
// of positive lambda.
IntervalScore best_positive_interval(const std::vector<double>& nodes,
                                     const std::vector<double>& lam,
                                     const std::vector<double>& cell) {
  IntervalScore best;
  const std::size_t n = nodes.size();
  std::size_t k = 0;
  while (k < n) {
    if (!(lam[k] > 0.0)) {
      ++k;
      continue;
    }
    std::size_t end = k;
    while (end + 1 < n && lam[end + 1] > 0.0) ++end;
    std::vector<double> cum(end - k + 1, 0.0);
    for (std::size_t m = k; m < end; ++m) cum[m - k + 1] = cum[m - k] + cell[m];
    for (std::size_t i = 0; i < cum.size(); ++i)
      for (std::size_t j = i + 1; j < cum.size(); ++j) {
        const double v = (cum[j] - cum[i]) / (std::sqrt(2.0) * std::sqrt(nodes[k + j] - nodes[k + i]));
        if (v > best.value) best = {v, nodes[k + i], nodes[k + j]};
      }
    k = end + 1;
  }
  return best;
}

}  // namespace

GrowthRateEstimate growth_rate_estimate(const LinearizedCoefficients& coeffs,
                                        const GrowthRateOptions& opts) {
  if (coeffs.u.empty() || !coeffs.by_fn) throw ValidationError("growth_rate_estimate: no coefficients");
  const double lo = coeffs.u.front(), hi = coeffs.u.back();
  auto make_grid = [&](double h) {
    const std::size_t m = static_cast<std::size_t>(std::llround((hi - lo) / h)) + 1;
    std::vector<double> g(m);
    for (std::size_t k = 0; k < m; ++k) g[k] = lo + (hi - lo) * k / static_cast<double>(m - 1);
    return g;
  };

  bool bz_zero = true;
  for (const auto& m : coeffs.bz) bz_zero = bz_zero && m.isZero(0.0);

  GrowthRateEstimate out;
  out.K = 0.0;

  if (coeffs.n == 1 && bz_zero) {
    const std::vector<double> g = make_grid(opts.h_u);
    std::vector<double> cum(g.size(), 0.0);
    auto b = [&](double s) { return coeffs.by_fn(s)(0, 0); };
    for (std::size_t k = 0; k + 1 < g.size(); ++k) cum[k + 1] = cum[k] + cell_integral(b, g[k], g[k + 1]);
    const double h = (hi - lo) / static_cast<double>(g.size() - 1);
    const PairSup s = sup_half_ratio(cum, h, false);
    const double k_scalar = s.value / std::sqrt(2.0);
    if (k_scalar > 0.0) {
      out.K = k_scalar;
      out.u1 = g[s.i];
      out.u2 = g[s.j];
      out.theta = 0.0;
      out.method = "scalar-integral";
    }
  }

  // Matrix path: coarse theta scan on a coarse u grid, then golden refinement
  // on the fine grid.
  auto score = [&](double th, const std::vector<double>& g, bool gauss) {
    const double c = std::cos(th), s = std::sin(th);
    auto lam = [&](double u) { return spectral_abscissa(c * coeffs.by_fn(u) + s * coeffs.bz_fn(u)); };
    std::vector<double> l(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) l[k] = lam(g[k]);
    std::vector<double> cell(g.size(), 0.0);
    for (std::size_t k = 0; k + 1 < g.size(); ++k) {
      if (!(l[k] > 0.0 && l[k + 1] > 0.0)) continue;
      cell[k] = gauss ? cell_integral(lam, g[k], g[k + 1]) : 0.5 * (l[k] + l[k + 1]) * (g[k + 1] - g[k]);
    }
    return best_positive_interval(g, l, cell);
  };
  const std::vector<double> coarse = make_grid(opts.coarse_h_u);
  const int n_theta = 2 * opts.n_theta;
  double best_th = 0.0, best_val = -1e300;
  for (int i = 0; i < n_theta; ++i) {
    const double th = 2.0 * kPi * i / n_theta;
    const double v = score(th, coarse, false).value;
    if (v > best_val) {
      best_val = v;
      best_th = th;
    }
  }
  if (best_val > 0.0) {
    const std::vector<double> fine = make_grid(opts.h_u);
    const double dth = 2.0 * kPi / n_theta;
    double th_ref = best_th;
    golden_max([&](double th) { return score(th, fine, true).value; }, best_th - dth,
               best_th + dth, 30, th_ref);
    IntervalScore at_ref = score(th_ref, fine, true);
    const IntervalScore at_node = score(best_th, fine, true);
    if (at_node.value >= at_ref.value) {
      at_ref = at_node;
      th_ref = best_th;
    }
    if (at_ref.value > out.K) {
      out.K = at_ref.value;
      out.theta = std::fmod(th_ref + 2.0 * kPi, 2.0 * kPi);
      out.u1 = at_ref.u1;
      out.u2 = at_ref.u2;
      out.method = "spectral-abscissa";
    }
  }
  out.positive = out.K > 1e-14;
  if (!out.positive) {
    out.K = 0.0;
    out.method = "none";
  }
  return out;
}

void write_coefficients_csv(const std::string& path, const LinearizedCoefficients& coeffs) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write " + path);
  os << "u";
  for (const char* name : {"By", "Bz"})
    for (int i = 0; i < coeffs.n; ++i)
      for (int j = 0; j < coeffs.n; ++j) os << ',' << name << '_' << i + 1 << j + 1;
  os << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k < coeffs.u.size(); ++k) {
    os << coeffs.u[k];
    for (const auto* tab : {&coeffs.by, &coeffs.bz})
      for (int i = 0; i < coeffs.n; ++i)
        for (int j = 0; j < coeffs.n; ++j) os << ',' << (*tab)[k](i, j);
    os << '\n';
  }
}

}  // namespace nullwave
