#include "nullwave/diagnostics.hpp"

#include "nullwave/errors.hpp"
#include "nullwave/parallel.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace nullwave {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

bool in_interaction_region(double t, double x, double y, double z) {
  const double r = std::sqrt(x * x + y * y + z * z);
  return r <= t + 1.0 && std::abs(t - x) <= 1.0;
}

VolumeEstimate region_volume(double t, std::size_t samples, std::uint64_t seed) {
  if (!(t >= 1.0)) throw ValidationError("region_volume: need t >= 1");
  if (samples < 100000) throw ValidationError("region_volume: need at least 1e5 samples");
  constexpr std::size_t kBatch = 1 << 16;
  const std::size_t batches = (samples + kBatch - 1) / kBatch;
  std::vector<std::size_t> hits(batches, 0);
  const double radius = 2.0 * std::sqrt(t);
  parallel_for(batches, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(b)};
      std::mt19937_64 rng(seq);
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      const std::size_t n = std::min(kBatch, samples - b * kBatch);
      std::size_t h = 0;
      for (std::size_t s = 0; s < n; ++s) {
        const double x = t - 1.0 + 2.0 * uni(rng);
        const double rho = radius * std::sqrt(uni(rng));
        const double ang = 2.0 * kPi * uni(rng);
        if (in_interaction_region(t, x, rho * std::cos(ang), rho * std::sin(ang))) ++h;
      }
      hits[b] = h;
    }
  });
  std::size_t total = 0;
  for (std::size_t h : hits) total += h;
  const double p = static_cast<double>(total) / static_cast<double>(samples);
  const double cylinder = 2.0 * kPi * radius * radius;
  return {cylinder * p, cylinder * std::sqrt(p * (1.0 - p) / static_cast<double>(samples)),
          samples, seed};
}

namespace {
void check_cap_args(double t, double r) {
  if (!(t >= 2.0)) throw ValidationError("sphere_cap_measure: need t >= 2");
  if (!(r >= 0.0)) throw ValidationError("sphere_cap_measure: need r >= 0");
}
}  // namespace

double sphere_cap_archimedes(double t, double r) {
  check_cap_args(t, r);
  if (r > t + 1.0 || r <= 0.0) return 0.0;
  const double a = std::max(-1.0, (t - 1.0) / r), b = std::min(1.0, (t + 1.0) / r);
  return b > a ? 2.0 * kPi * (b - a) : 0.0;
}

double sphere_cap_measure(double t, double r) {
  check_cap_args(t, r);
  if (r > t + 1.0 || r <= 0.0) return 0.0;
  const double alpha = (t - 1.0) / r, beta = (t + 1.0) / r;
  if (alpha >= 1.0) return 0.0;
  // omega = (sqrt(1 - c^2) cos phi, sqrt(1 - c^2) sin phi, c); for fixed phi the
  // admissible c form two symmetric intervals of total length
  // 2 (sqrt(1 - s_lo^2) - sqrt(1 - s_hi^2)), s = omega_x / cos phi.
  auto c_measure = [&](double phi) {
    const double k = std::cos(phi);
    if (k <= 0.0) return 0.0;
    const double s_lo = std::min(1.0, std::max(0.0, alpha / k));
    const double s_hi = std::min(1.0, std::max(0.0, beta / k));
    return 2.0 * (std::sqrt(1.0 - s_lo * s_lo) - std::sqrt(1.0 - s_hi * s_hi));
  };
  std::vector<double> cuts{0.0};
  for (double w : {alpha, beta})
    if (w > 0.0 && w < 1.0) cuts.push_back(std::acos(w));
  cuts.push_back(kPi / 2);
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  using boost::math::quadrature::gauss_kronrod;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
    if (cuts[k + 1] > cuts[k])
      total += gauss_kronrod<double, 61>::integrate(c_measure, cuts[k], cuts[k + 1], 25, 1e-12);
  return 2.0 * total;  // phi in (-pi/2, 0) by symmetry
}

const std::array<FieldId, kFieldCount>& all_fields() {
  static const std::array<FieldId, kFieldCount> f{
      FieldId::Dt,  FieldId::Dx,  FieldId::Dy,  FieldId::Dz,  FieldId::Oxy, FieldId::Oxz,
      FieldId::Oyz, FieldId::Otx, FieldId::Oty, FieldId::Otz, FieldId::S};
  return f;
}

std::string to_string(FieldId id) {
  switch (id) {
    case FieldId::Dt: return "dt";
    case FieldId::Dx: return "dx";
    case FieldId::Dy: return "dy";
    case FieldId::Dz: return "dz";
    case FieldId::Oxy: return "Oxy";
    case FieldId::Oxz: return "Oxz";
    case FieldId::Oyz: return "Oyz";
    case FieldId::Otx: return "Otx";
    case FieldId::Oty: return "Oty";
    case FieldId::Otz: return "Otz";
    case FieldId::S: return "S";
  }
  return "?";
}

Eigen::Vector4d field_coefficients(FieldId id, const Point4& p) {
  const double t = p[0], x = p[1], y = p[2], z = p[3];
  switch (id) {
    case FieldId::Dt: return {1, 0, 0, 0};
    case FieldId::Dx: return {0, 1, 0, 0};
    case FieldId::Dy: return {0, 0, 1, 0};
    case FieldId::Dz: return {0, 0, 0, 1};
    case FieldId::Oxy: return {0, -y, x, 0};
    case FieldId::Oxz: return {0, -z, 0, x};
    case FieldId::Oyz: return {0, 0, -z, y};
    case FieldId::Otx: return {x, t, 0, 0};
    case FieldId::Oty: return {y, 0, t, 0};
    case FieldId::Otz: return {z, 0, 0, t};
    case FieldId::S: return {t, x, y, z};
  }
  return Eigen::Vector4d::Zero();
}

namespace {

using VectorField = std::function<Eigen::Vector4d(const Point4&)>;

double apply_vf(const VectorField& vf, const SpacetimeFn& f, const Point4& p, double h) {
  const Eigen::Vector4d c = vf(p);
  double out = 0.0;
  for (int a = 0; a < 4; ++a) {
    if (c[a] == 0.0) continue;
    Point4 e = Point4::Zero();
    e[a] = h;
    out += c[a] * (f(p + e) - f(p - e)) / (2.0 * h);
  }
  return out;
}

}  // namespace

double apply_field(FieldId id, const SpacetimeFn& f, const Point4& p, double h) {
  return apply_vf([id](const Point4& q) { return field_coefficients(id, q); }, f, p, h);
}

double apply_string(const std::vector<FieldId>& ids, const SpacetimeFn& f, const Point4& p,
                    double h) {
  if (ids.empty()) return f(p);
  const std::vector<FieldId> rest(ids.begin() + 1, ids.end());
  SpacetimeFn inner = [&](const Point4& q) { return apply_string(rest, f, q, h); };
  return apply_field(ids.front(), inner, p, h);
}

std::vector<double> apply_field_grid(FieldId id, const GridGeometry& g, double t,
                                     const std::vector<double>& values,
                                     const std::vector<double>& dt_values,
                                     std::vector<char>* valid) {
  if (values.size() != g.size() || dt_values.size() != g.size())
    throw ValidationError("apply_field_grid: size mismatch");
  std::vector<double> out(g.size(), 0.0);
  if (valid) valid->assign(g.size(), 0);
  const double inv = 1.0 / (2.0 * g.h);
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j)
      for (int k = 0; k < g.nz; ++k) {
        if (!g.interior(i, j, k)) continue;
        const std::size_t c = g.index(i, j, k);
        const Eigen::Vector4d co = field_coefficients(id, {t, g.x(i), g.y(j), g.z(k)});
        double v = co[0] * dt_values[c];
        if (co[1] != 0.0) v += co[1] * (values[g.index(i + 1, j, k)] - values[g.index(i - 1, j, k)]) * inv;
        if (co[2] != 0.0)
          v += co[2] * (values[g.index(i, g.wrap_y(j + 1), k)] - values[g.index(i, g.wrap_y(j - 1), k)]) * inv;
        if (co[3] != 0.0)
          v += co[3] * (values[g.index(i, j, g.wrap_z(k + 1))] - values[g.index(i, j, g.wrap_z(k - 1))]) * inv;
        out[c] = v;
        if (valid) (*valid)[c] = 1;
      }
  return out;
}

CommutatorReport commutator_check(std::uint64_t seed, std::size_t points, double h) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  struct Bump {
    Eigen::Vector3d c;
    double s, w, a, ph;
  };
  std::vector<Bump> bumps;
  for (int m = 0; m < 4; ++m)
    bumps.push_back({Eigen::Vector3d(2 * uni(rng), 2 * uni(rng), 2 * uni(rng)),
                     1.0 + 0.5 * std::abs(uni(rng)), 1.0 + uni(rng), uni(rng), kPi * uni(rng)});
  const SpacetimeFn f = [bumps](const Point4& p) {
    double s = 0.0;
    for (const Bump& b : bumps) {
      const double d2 = (p.tail<3>() - b.c).squaredNorm();
      s += b.a * std::exp(-d2 / (2 * b.s * b.s)) * std::cos(b.w * p[0] + b.ph);
    }
    return s;
  };

  auto radial = [](const Point4& p) -> Eigen::Vector4d {
    const double r = p.tail<3>().norm();
    return {1.0, p[1] / r, p[2] / r, p[3] / r};
  };
  auto angular = [](FieldId id) -> VectorField {
    return [id](const Point4& p) { return field_coefficients(id, p) / p.tail<3>().norm(); };
  };
  const std::vector<VectorField> good{radial, angular(FieldId::Oxy), angular(FieldId::Oxz),
                                      angular(FieldId::Oyz)};
  const std::vector<FieldId> rotations{FieldId::Oxy, FieldId::Oxz, FieldId::Oyz};

  CommutatorReport rep;
  std::uniform_real_distribution<double> tdist(1.0, 5.0);
  for (std::size_t n = 0; n < points; ++n) {
    Point4 p(tdist(rng), 3 * uni(rng), 3 * uni(rng), 3 * uni(rng));
    if (p.tail<3>().norm() < 0.5) continue;
    double good_norm = 0.0;
    for (const auto& g : good) good_norm += std::pow(apply_vf(g, f, p, h), 2);
    good_norm = std::sqrt(good_norm);
    if (good_norm < 1e-3) continue;
    for (FieldId rot : rotations) {
      const VectorField rv = [rot](const Point4& q) { return field_coefficients(rot, q); };
      for (const auto& g : good) {
        const SpacetimeFn gf = [&](const Point4& q) { return apply_vf(g, f, q, h); };
        const SpacetimeFn rf = [&](const Point4& q) { return apply_vf(rv, f, q, h); };
        const double comm = apply_vf(rv, gf, p, h) - apply_vf(g, rf, p, h);
        rep.max_ratio = std::max(rep.max_ratio, std::abs(comm) / good_norm);
      }
    }
    ++rep.points;
  }
  return rep;
}

WeightGrowthReport weight_growth_check(const std::function<double(double)>& F, int k,
                                       const std::vector<double>& times,
                                       const std::vector<FieldId>& fields, int lattice) {
  if (k != 1 && k != 2) throw ValidationError("weight_growth_check: k must be 1 or 2");
  if (times.size() < 2) throw ValidationError("weight_growth_check: need at least two times");
  if (lattice < 3) throw ValidationError("weight_growth_check: lattice too small");
  const std::vector<FieldId> alphabet =
      fields.empty() ? std::vector<FieldId>(all_fields().begin(), all_fields().end()) : fields;
  std::vector<std::vector<FieldId>> strings;
  for (FieldId a : alphabet) {
    if (k == 1) {
      strings.push_back({a});
      continue;
    }
    for (FieldId b : alphabet) strings.push_back({a, b});
  }
  const SpacetimeFn f = [&F](const Point4& p) { return F(p[0] - p[1]); };

  WeightGrowthReport rep;
  rep.k = k;
  rep.t = times;
  rep.max_value.assign(times.size(), 0.0);
  rep.worst_string.assign(times.size(), "");
  parallel_for(times.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t n = b; n < e; ++n) {
      const double t = times[n];
      if (!(t >= 1.0)) throw ValidationError("weight_growth_check: times must be >= 1");
      const double ext = 2.0 * std::sqrt(t);
      double best = 0.0;
      std::string worst;
      for (int i = 0; i < lattice; ++i)
        for (int j = 0; j < lattice; ++j)
          for (int l = 0; l < lattice; ++l) {
            const double x = t - 1.0 + 2.0 * i / (lattice - 1);
            const double y = -ext + 2.0 * ext * j / (lattice - 1);
            const double z = -ext + 2.0 * ext * l / (lattice - 1);
            if (!in_interaction_region(t, x, y, z)) continue;
            const Point4 p(t, x, y, z);
            for (const auto& s : strings) {
              const double v = std::abs(apply_string(s, f, p, 1e-3));
              if (v > best) {
                best = v;
                worst.clear();
                for (FieldId id : s) worst += (worst.empty() ? "" : " ") + to_string(id);
              }
            }
          }
      rep.max_value[n] = best;
      rep.worst_string[n] = worst;
    }
  });
  std::vector<double> lx, ly;
  for (std::size_t n = 0; n < times.size(); ++n) {
    if (!(rep.max_value[n] > 0.0)) continue;
    lx.push_back(std::log(times[n]));
    ly.push_back(std::log(rep.max_value[n]));
  }
  if (lx.size() >= 2) {
    const FitResult fit = linear_fit(lx, ly);
    rep.exponent = fit.exponent;
    rep.r2 = fit.r2;
  }
  rep.within_bound = rep.exponent <= 0.5 * k + 0.1;
  return rep;
}

FitResult linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("linear_fit: need >= 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (!(sxx > 0.0)) throw ValidationError("linear_fit: abscissae are all equal");
  FitResult f;
  f.model = "linear";
  f.exponent = sxy / sxx;
  f.intercept = my - f.exponent * mx;
  double ss_res = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double r = y[k] - f.intercept - f.exponent * x[k];
    ss_res += r * r;
  }
  f.r2 = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : (ss_res == 0.0 ? 1.0 : 0.0);
  f.t_lo = *std::min_element(x.begin(), x.end());
  f.t_hi = *std::max_element(x.begin(), x.end());
  f.points = x.size();
  return f;
}

namespace {
FitResult windowed_fit(const std::vector<double>& t, const std::vector<double>& log_y,
                       double t_min, bool sqrt_model, const char* model) {
  if (t.size() != log_y.size()) throw ValidationError("fit: series lengths differ");
  std::vector<double> x, y;
  double lo = 1e300, hi = -1e300;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] < t_min) continue;
    if (!std::isfinite(log_y[k])) throw ValidationError("fit: non-finite value");
    x.push_back(sqrt_model ? std::sqrt(t[k]) : std::log1p(t[k]));
    y.push_back(log_y[k]);
    lo = std::min(lo, t[k]);
    hi = std::max(hi, t[k]);
  }
  if (x.size() < 8) throw ValidationError("fit: need at least 8 points in the window");
  FitResult f = linear_fit(x, y);
  f.model = model;
  f.t_lo = lo;
  f.t_hi = hi;
  return f;
}

std::vector<double> checked_log(const std::vector<double>& y) {
  std::vector<double> out(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (!(y[k] > 0.0)) throw ValidationError("fit: values must be positive");
    out[k] = std::log(y[k]);
  }
  return out;
}
}  // namespace

FitResult fit_sqrt_exponential(const std::vector<double>& t, const std::vector<double>& y,
                               double t_min) {
  return windowed_fit(t, checked_log(y), t_min, true, "exp-sqrt");
}

FitResult fit_sqrt_exponential_log(const std::vector<double>& t, const std::vector<double>& log_y,
                                   double t_min) {
  return windowed_fit(t, log_y, t_min, true, "exp-sqrt");
}

FitResult fit_power_decay(const std::vector<double>& t, const std::vector<double>& y,
                          double t_min) {
  return windowed_fit(t, checked_log(y), t_min, false, "power");
}

double theil_sen_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("theil_sen_slope: need >= 2 points");
  std::vector<double> slopes;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j)
      if (x[j] != x[i]) slopes.push_back((y[j] - y[i]) / (x[j] - x[i]));
  if (slopes.empty()) throw ValidationError("theil_sen_slope: abscissae are all equal");
  const std::size_t mid = slopes.size() / 2;
  std::nth_element(slopes.begin(), slopes.begin() + mid, slopes.end());
  double m = slopes[mid];
  if (slopes.size() % 2 == 0) {
    const double lower = *std::max_element(slopes.begin(), slopes.begin() + mid);
    m = 0.5 * (m + lower);
  }
  return m;
}

nlohmann::json to_json(const FitResult& f) {
  return {{"model", f.model}, {"exponent", f.exponent}, {"intercept", f.intercept},
          {"r2", f.r2},       {"t_lo", f.t_lo},         {"t_hi", f.t_hi},
          {"points", f.points}};
}

nlohmann::json to_json(const VolumeEstimate& v) {
  return {{"value", v.value}, {"std_error", v.std_error}, {"samples", v.samples}, {"seed", v.seed}};
}

nlohmann::json to_json(const WeightGrowthReport& r) {
  return {{"k", r.k},
          {"t", r.t},
          {"max_value", r.max_value},
          {"worst_string", r.worst_string},
          {"exponent", r.exponent},
          {"r2", r.r2},
          {"within_bound", r.within_bound}};
}

double worst_relative_increase(const std::vector<double>& t, const std::vector<double>& y) {
  if (t.size() != y.size()) throw ValidationError("worst_relative_increase: lengths differ");
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < t.size(); ++k) {
    const double dy = y[k + 1] - y[k];
    if (dy <= 0.0) continue;
    const double dt = t[k + 1] - t[k];
    worst = std::max(worst, y[k] > 0.0 ? dy / (y[k] * dt) : std::numeric_limits<double>::infinity());
  }
  return worst;
}

}  // namespace nullwave
