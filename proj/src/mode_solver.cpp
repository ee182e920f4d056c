#include "nullwave/mode_solver.hpp"

#include "nullwave/errors.hpp"
#include "nullwave/parallel.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace nullwave {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

std::size_t GoursatGrid::nu() const {
  return static_cast<std::size_t>(std::floor((u_max - u_min) / h_u + 1e-9)) + 1;
}

std::size_t GoursatGrid::nv() const {
  return static_cast<std::size_t>(std::floor((v_max - 1.0) / h_v + 1e-9)) + 1;
}

void GoursatGrid::validate() const {
  if (!(h_u > 0.0) || !(h_v > 0.0)) throw ValidationError("goursat grid: steps must be positive");
  if (!(u_max > u_min)) throw ValidationError("goursat grid: need u_max > u_min");
  if (!(v_max > 1.0)) throw ValidationError("goursat grid: need v_max > 1");
  if (nu() < 2 || nv() < 2) throw ValidationError("goursat grid: fewer than two nodes per axis");
}

ScaledComplex ScaledRow::at(std::size_t node, int comp, int n) const {
  const cplx w = values[node * n + comp];
  return {std::log(std::abs(w)) + log_scale, std::arg(w)};
}

TransverseMode goursat_solve(const LinearizedCoefficients& coeffs, double xi_y, double xi_z,
                             const GoursatGrid& grid, const GoursatData& data,
                             const GoursatOptions& opts) {
  grid.validate();
  if (!coeffs.by_fn || !coeffs.bz_fn) throw ValidationError("goursat_solve: no coefficients");
  if (!(opts.time_bin > 0.0)) throw ValidationError("goursat_solve: time_bin must be positive");
  const int n = coeffs.n;
  const std::size_t nu = grid.nu(), nv = grid.nv();
  const double hu = grid.h_u, hv = grid.h_v;
  const double xi2 = xi_y * xi_y + xi_z * xi_z;
  const cplx I(0.0, 1.0);

  // Per-cell propagators: q_NE = P s1 + R s2 with s1 = q_N + q_E - q_C,
  // s2 = q_N + q_E + q_C, P = (I - kappa)^{-1}, R = P kappa.
  const std::size_t nn = static_cast<std::size_t>(n) * n;
  std::vector<cplx> P((nu - 1) * nn), R((nu - 1) * nn);
  Eigen::MatrixXcd cumulative = Eigen::MatrixXcd::Zero(n, n);
  double omega_max = 0.0, omega_at = grid.u_min;
  for (std::size_t i = 0; i + 1 < nu; ++i) {
    const double um = grid.u(i) + 0.5 * hu;
    const Eigen::MatrixXcd c = -(xi2 * Eigen::MatrixXcd::Identity(n, n) +
                                 I * xi_y * coeffs.By(um).cast<cplx>() +
                                 I * xi_z * coeffs.Bz(um).cast<cplx>());
    const Eigen::MatrixXcd kappa = (hu * hv / 16.0) * c;
    const Eigen::MatrixXcd p = (Eigen::MatrixXcd::Identity(n, n) - kappa).inverse();
    const Eigen::MatrixXcd r = p * kappa;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        P[i * nn + a * n + b] = p(a, b);
        R[i * nn + a * n + b] = r(a, b);
      }
    cumulative += (hu / 4.0) * c;
    const double omega = n == 1 ? std::abs(cumulative(0, 0))
                                : Eigen::JacobiSVD<Eigen::MatrixXcd>(cumulative).singularValues()(0);
    if (omega > omega_max) {
      omega_max = omega;
      omega_at = um + 0.5 * hu;
    }
  }
  if (opts.enforce_resolution && omega_max * hv > 2.0 * kPi / opts.nodes_per_wavelength) {
    const double wavelength = 2.0 * kPi / omega_max;
    throw NumericalError("goursat_solve: local v' wavelength " + std::to_string(wavelength) +
                             " at u' = " + std::to_string(omega_at) + " is resolved by " +
                             std::to_string(wavelength / hv) + " nodes (need " +
                             std::to_string(opts.nodes_per_wavelength) + ")",
                         0.5 * (omega_at + 1.0));
  }

  auto left = [&](double v) -> VectorXc {
    return data.on_u_min ? data.on_u_min(v) : VectorXc::Ones(n);
  };
  auto bottom = [&](double u) -> VectorXc {
    return data.on_v_one ? data.on_v_one(u) : VectorXc::Ones(n);
  };

  TransverseMode mode;
  mode.n = n;
  mode.xi_y = xi_y;
  mode.xi_z = xi_z;
  mode.grid = grid;
  mode.field_stride_u = std::max<std::size_t>(1, opts.field_stride_u);

  const double t_min = 0.5 * (grid.u_min + 1.0);
  const double t_max = 0.5 * (grid.u(nu - 1) + grid.v(nv - 1));
  const std::size_t nbins = static_cast<std::size_t>(std::ceil((t_max - t_min) / opts.time_bin)) + 1;
  mode.t.resize(nbins);
  for (std::size_t b = 0; b < nbins; ++b) mode.t[b] = t_min + (b + 0.5) * opts.time_bin;
  mode.log_max.assign(nbins, kNegInf);

  std::vector<std::size_t> sample_rows;
  for (double sv : opts.sample_v) {
    const double pos = std::clamp((sv - 1.0) / hv, 0.0, static_cast<double>(nv - 1));
    sample_rows.push_back(static_cast<std::size_t>(std::llround(pos)));
  }

  std::vector<cplx> prev(nu * n), next(nu * n);
  double scale = 0.0;
  for (std::size_t i = 0; i < nu; ++i) {
    const VectorXc d = bottom(grid.u(i));
    for (int a = 0; a < n; ++a) prev[i * n + a] = d[a];
  }
  {
    const VectorXc d = left(1.0);
    for (int a = 0; a < n; ++a)
      if (std::abs(d[a] - prev[a]) > 1e-12 * (1.0 + std::abs(d[a])))
        throw ValidationError("goursat_solve: boundary data disagree at the corner");
  }

  auto record = [&](const std::vector<cplx>& row, std::size_t j) {
    const double v = grid.v(j);
    double best = 0.0;
    std::size_t bin = static_cast<std::size_t>(-1);
    auto flush = [&] {
      if (bin < nbins && best > 0.0)
        mode.log_max[bin] = std::max(mode.log_max[bin], 0.5 * std::log(best) + scale);
    };
    for (std::size_t i = 0; i < nu; ++i) {
      double sq = 0.0;
      for (int a = 0; a < n; ++a) sq += std::norm(row[i * n + a]);
      const std::size_t b =
          static_cast<std::size_t>(std::floor((0.5 * (grid.u(i) + v) - t_min) / opts.time_bin));
      if (b != bin) {
        flush();
        bin = b;
        best = 0.0;
      }
      best = std::max(best, sq);
    }
    flush();
    for (std::size_t s = 0; s < sample_rows.size(); ++s)
      if (sample_rows[s] == j) mode.samples.push_back({v, scale, row});
    if (opts.field_stride_u > 0 && opts.field_stride_v > 0 && j % opts.field_stride_v == 0) {
      ScaledRow fr{v, scale, {}};
      for (std::size_t i = 0; i < nu; i += opts.field_stride_u)
        for (int a = 0; a < n; ++a) fr.values.push_back(row[i * n + a]);
      mode.field.push_back(std::move(fr));
    }
  };

  record(prev, 0);
  std::vector<cplx> s1(n), s2(n);
  for (std::size_t j = 0; j + 1 < nv; ++j) {
    const double v = grid.v(j + 1);
    const VectorXc d = left(v);
    const double inv = std::exp(-scale);
    for (int a = 0; a < n; ++a) next[a] = d[a] * inv;
    if (n == 1) {
      for (std::size_t i = 0; i + 1 < nu; ++i) {
        const cplx qn = next[i], qe = prev[i + 1], qc = prev[i];
        next[i + 1] = P[i] * (qn + qe - qc) + R[i] * (qn + qe + qc);
      }
    } else {
      for (std::size_t i = 0; i + 1 < nu; ++i) {
        for (int a = 0; a < n; ++a) {
          const cplx qn = next[i * n + a], qe = prev[(i + 1) * n + a], qc = prev[i * n + a];
          s1[a] = qn + qe - qc;
          s2[a] = qn + qe + qc;
        }
        const cplx* p = &P[i * nn];
        const cplx* r = &R[i * nn];
        for (int a = 0; a < n; ++a) {
          cplx acc = 0.0;
          for (int b = 0; b < n; ++b) acc += p[a * n + b] * s1[b] + r[a * n + b] * s2[b];
          next[(i + 1) * n + a] = acc;
        }
      }
    }
    double mx = 0.0;
    for (const cplx& w : next) mx = std::max(mx, std::abs(w));
    if (!std::isfinite(mx))
      throw NumericalError("goursat_solve: non-finite value", 0.5 * (grid.u_min + v));
    if (mx > 1e100) {
      const double lg = std::log(mx);
      const double f = std::exp(-lg);
      for (cplx& w : next) w *= f;
      for (cplx& w : prev) w *= f;
      scale += lg;
    }
    record(next, j + 1);
    std::swap(prev, next);
  }
  mode.last_row = {grid.v(nv - 1), scale, prev};
  return mode;
}

std::vector<TransverseMode> goursat_solve_many(const LinearizedCoefficients& coeffs,
                                               const std::vector<std::pair<double, double>>& xis,
                                               const GoursatGrid& grid,
                                               const GoursatOptions& opts) {
  std::vector<TransverseMode> out(xis.size());
  parallel_for(xis.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k)
      out[k] = goursat_solve(coeffs, xis[k].first, xis[k].second, grid, {}, opts);
  });
  return out;
}

ScaledComplex closed_form_from_integrals(double int_by, double int_bz, double xi_y, double xi_z,
                                         double du, double v) {
  const cplx I(0.0, 1.0);
  const cplx int_a = -((xi_y * xi_y + xi_z * xi_z) * du + I * (xi_y * int_by + xi_z * int_bz)) / 4.0;
  const cplx z = 2.0 * std::sqrt((v - 1.0) * int_a);
  return bessel_I0_scaled(z);
}

ScaledComplex closed_form_scalar(const std::function<double(double)>& b_y,
                                 const std::function<double(double)>& b_z, double xi_y,
                                 double xi_z, double u0, double u, double v) {
  if (u < u0) throw ValidationError("closed_form_scalar: need u' >= u0");
  using boost::math::quadrature::gauss_kronrod;
  double iy = 0.0, iz = 0.0;
  if (u > u0) {
    if (b_y) iy = gauss_kronrod<double, 61>::integrate(b_y, u0, u, 20, 1e-10);
    if (b_z) iz = gauss_kronrod<double, 61>::integrate(b_z, u0, u, 20, 1e-10);
  }
  return closed_form_from_integrals(iy, iz, xi_y, xi_z, u - u0, v);
}

GrowthSeries sup_growth_profile(const TransverseMode& mode) {
  GrowthSeries s;
  for (std::size_t b = 0; b < mode.t.size(); ++b) {
    if (!std::isfinite(mode.log_max[b])) continue;
    s.t.push_back(mode.t[b]);
    s.log_max.push_back(mode.log_max[b]);
  }
  return s;
}

BlowupScan nirenberg_blowup_scan(const LinearizedCoefficients& coeffs, double xi_y,
                                 std::vector<double> deltas, const GoursatGrid& grid,
                                 const GoursatOptions& opts) {
  if (coeffs.n != 1) throw ValidationError("nirenberg_blowup_scan: scalar systems only");
  if (deltas.empty()) throw ValidationError("nirenberg_blowup_scan: empty delta list");
  for (double d : deltas)
    if (!(d > 0.0)) throw ValidationError("nirenberg_blowup_scan: deltas must be positive");
  std::sort(deltas.begin(), deltas.end(), std::greater<>());
  if (std::adjacent_find(deltas.begin(), deltas.end()) != deltas.end())
    throw ValidationError("nirenberg_blowup_scan: deltas must be distinct");

  const TransverseMode mode = goursat_solve(coeffs, xi_y, 0.0, grid, {}, opts);
  BlowupScan scan;
  scan.growth = sup_growth_profile(mode);
  const double t0 = 0.5 * (grid.u_min + 1.0);
  const auto& t = scan.growth.t;
  const auto& g = scan.growth.log_max;
  for (double d : deltas) {
    BlowupEntry e{d, std::nullopt};
    const double thr = -std::log(d);
    if (thr <= 0.0) {
      e.t_blow = t0;
    } else {
      for (std::size_t k = 0; k < t.size(); ++k) {
        if (g[k] < thr) continue;
        if (k == 0) {
          e.t_blow = t[0];
        } else {
          const double w = (thr - g[k - 1]) / (g[k] - g[k - 1]);
          e.t_blow = t[k - 1] + w * (t[k] - t[k - 1]);
        }
        break;
      }
    }
    scan.entries.push_back(e);
  }
  return scan;
}

void write_mode_csv(const std::string& path, const TransverseMode& mode) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write " + path);
  os << "u_prime,v_prime,log_abs_q,arg_q\n" << std::setprecision(12);
  for (const ScaledRow& row : mode.field) {
    const std::size_t nodes = row.values.size() / mode.n;
    for (std::size_t k = 0; k < nodes; ++k) {
      const ScaledComplex w = row.at(k, 0, mode.n);
      os << mode.grid.u(k * mode.field_stride_u) << ',' << row.v << ',' << w.log_abs << ',' << w.arg << '\n';
    }
  }
}

void write_growth_csv(const std::string& path, const GrowthSeries& series) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write " + path);
  os << "t,log_max_abs_q\n" << std::setprecision(15);
  for (std::size_t k = 0; k < series.t.size(); ++k)
    os << series.t[k] << ',' << series.log_max[k] << '\n';
}

}  // namespace nullwave
