#include "nullwave/diagnostics.hpp"
#include "nullwave/errors.hpp"
#include "nullwave/profiles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace nullwave;

namespace {

double exact_volume(double t) {
  // Disks of radius^2 (t + 1)^2 - x^2 for x in [t - 1, t + 1].
  const double a = t - 1.0, b = t + 1.0;
  return M_PI * ((t + 1.0) * (t + 1.0) * (b - a) - (b * b * b - a * a * a) / 3.0);
}

std::vector<double> range(double lo, double step, int n) {
  std::vector<double> v;
  for (int k = 0; k < n; ++k) v.push_back(lo + step * k);
  return v;
}

}  // namespace

TEST_CASE("interaction region membership bounds") {
  std::mt19937_64 rng(1);
  for (double t : {1.0, 4.0, 30.0}) {
    std::uniform_real_distribution<double> ux(t - 1.0, t + 1.0), uyz(-3.0 * std::sqrt(t), 3.0 * std::sqrt(t));
    int members = 0;
    for (int k = 0; k < 20000; ++k) {
      const double x = ux(rng), y = uyz(rng), z = uyz(rng);
      if (!in_interaction_region(t, x, y, z)) continue;
      ++members;
      const double r = std::sqrt(x * x + y * y + z * z);
      CHECK(r - x <= 2.0 + 1e-12);
      CHECK(std::abs(y) <= 2.0 * std::sqrt(t) + 1e-12);
      CHECK(std::abs(z) <= 2.0 * std::sqrt(t) + 1e-12);
    }
    CHECK(members > 0);
  }
  CHECK_FALSE(in_interaction_region(5.0, 3.5, 0.0, 0.0));
  CHECK_FALSE(in_interaction_region(5.0, 5.0, 4.0, 0.0));
}

TEST_CASE("region volume agrees with the exact slab integral") {
  for (double t : {1.0, 4.0, 16.0, 100.0}) {
    const VolumeEstimate v = region_volume(t, 400000);
    CHECK(v.std_error > 0.0);
    CHECK(std::abs(v.value - exact_volume(t)) <= 4.0 * v.std_error);
    CHECK(v.value / t <= 100.0);
  }
  CHECK(region_volume(4.0, 1000000).value <= 400.0);
  const double per_t = region_volume(100.0, 200000).value / 100.0;
  CHECK(per_t >= 1.0);
  CHECK(per_t <= 100.0);
  CHECK(region_volume(3.0, 200000, 5).value == region_volume(3.0, 200000, 5).value);
  CHECK_THROWS_AS(region_volume(0.5, 200000), ValidationError);
  CHECK_THROWS_AS(region_volume(2.0, 1000), ValidationError);
}

TEST_CASE("sphere cap measure") {
  for (double t : {2.0, 5.0, 16.0, 300.0})
    for (double dr : {-1.0, -0.6, 0.0, 0.4, 0.99, 1.5})
      CHECK(sphere_cap_measure(t, t + dr) ==
            doctest::Approx(sphere_cap_archimedes(t, t + dr)).epsilon(1e-9).scale(1e-12));
  CHECK(sphere_cap_measure(10.0, 7.0) == 0.0);
  CHECK(sphere_cap_measure(10.0, 11.5) == 0.0);
  for (double r : {4.0, 5.0, 6.0, 7.0}) CHECK(sphere_cap_measure(5.0, r) <= 4.0 * M_PI);
  double lo = 1e300, hi = 0.0;
  for (double t : {16.0, 64.0, 256.0, 1024.0}) {
    const double v = t * sphere_cap_measure(t, t);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(hi / lo <= 3.0);
  CHECK_THROWS_AS(sphere_cap_measure(1.0, 1.0), ValidationError);
}

TEST_CASE("vector fields on invariant functions") {
  const SpacetimeFn lorentz = [](const Point4& p) {
    return p[0] * p[0] - p[1] * p[1] - p[2] * p[2] - p[3] * p[3];
  };
  const SpacetimeFn time = [](const Point4& p) { return p[0]; };
  const SpacetimeFn radial = [](const Point4& p) { return p[1] * p[1] + p[2] * p[2]; };
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 20; ++k) {
    const Point4 p(u(rng), u(rng), u(rng), u(rng));
    for (FieldId id : {FieldId::Oxy, FieldId::Oxz, FieldId::Oyz, FieldId::Otx, FieldId::Oty, FieldId::Otz})
      CHECK(std::abs(apply_field(id, lorentz, p)) < 1e-8);
    CHECK(apply_field(FieldId::S, lorentz, p) == doctest::Approx(2.0 * lorentz(p)).scale(1.0));
    CHECK(apply_field(FieldId::S, time, p) == doctest::Approx(p[0]).scale(1.0));
    CHECK(std::abs(apply_field(FieldId::Oxy, radial, p)) < 1e-8);
  }
  const Point4 p(2.0, 1.0, -3.0, 0.5);
  CHECK(field_coefficients(FieldId::Oty, p) == Eigen::Vector4d(-3.0, 0.0, 2.0, 0.0));
  CHECK(field_coefficients(FieldId::S, p) == p);
  CHECK(all_fields().size() == 11);
  // Omega_xy Omega_xy x = -x.
  const SpacetimeFn xf = [](const Point4& q) { return q[1]; };
  CHECK(apply_string({FieldId::Oxy, FieldId::Oxy}, xf, p) == doctest::Approx(-1.0).epsilon(1e-5));
}

TEST_CASE("grid application is exact on quadratics") {
  GridGeometry g;
  g.nx = g.ny = g.nz = 7;
  g.h = 0.5;
  g.x0 = g.y0 = g.z0 = -1.5;
  const double t = 1.3;
  std::vector<double> w(g.size()), wt(g.size());
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j)
      for (int k = 0; k < g.nz; ++k) {
        const double x = g.x(i), y = g.y(j), z = g.z(k);
        w[g.index(i, j, k)] = x * y + t * t + z * z;
        wt[g.index(i, j, k)] = 2.0 * t;
      }
  std::vector<char> valid;
  const auto boost = apply_field_grid(FieldId::Otx, g, t, w, wt, &valid);
  const auto scale = apply_field_grid(FieldId::S, g, t, w, wt);
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j)
      for (int k = 0; k < g.nz; ++k) {
        const std::size_t c = g.index(i, j, k);
        if (!g.interior(i, j, k)) {
          CHECK(valid[c] == 0);
          continue;
        }
        const double x = g.x(i), y = g.y(j);
        CHECK(valid[c] == 1);
        CHECK(boost[c] == doctest::Approx(t * y + x * 2.0 * t).scale(1.0));
        // S is Euler's operator; w is homogeneous of degree 2.
        CHECK(scale[c] == doctest::Approx(2.0 * w[c]).scale(1.0));
      }
  CHECK_THROWS_AS(apply_field_grid(FieldId::Dx, g, t, w, std::vector<double>(3)), ValidationError);
}

TEST_CASE("rotation commutators are controlled by good derivatives") {
  const CommutatorReport r = commutator_check(11, 400);
  CHECK(r.points >= 360);
  CHECK(r.max_ratio > 0.0);
  CHECK(r.max_ratio <= 5.0);
}

TEST_CASE("weight growth exponents") {
  const auto F = [](double u) { return bump(u); };
  const std::vector<double> times{4, 8, 16, 32, 64};
  const WeightGrowthReport one = weight_growth_check(F, 1, times, {FieldId::Oty});
  CHECK(one.exponent == doctest::Approx(0.5).epsilon(0.2));
  CHECK(one.within_bound);
  const WeightGrowthReport trans =
      weight_growth_check(F, 1, times, {FieldId::Dt, FieldId::Dx, FieldId::Dy, FieldId::Dz});
  CHECK(std::abs(trans.exponent) < 0.05);
  const WeightGrowthReport two = weight_growth_check(F, 2, times);
  CHECK(two.exponent <= 1.1);
  CHECK(two.within_bound);
  CHECK(two.worst_string.size() == times.size());
  CHECK_THROWS_AS(weight_growth_check(F, 3, times), ValidationError);
}

TEST_CASE("curve fits on synthetic series") {
  const auto t = range(5.0, 1.0, 40);
  std::vector<double> ex, sq, pw, flat;
  for (double s : t) {
    ex.push_back(std::exp(3.0 * std::sqrt(s)));
    sq.push_back(s * s);
    pw.push_back(1.0 / (1.0 + s));
    flat.push_back(2.5);
  }
  const FitResult fe = fit_sqrt_exponential(t, ex);
  CHECK(fe.exponent == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(fe.r2 == doctest::Approx(1.0));
  CHECK(fe.model == "exp-sqrt");
  CHECK(fit_sqrt_exponential(range(5.0, 5.0, 200), [&] {
          std::vector<double> y;
          for (double s : range(5.0, 5.0, 200)) y.push_back(s * s);
          return y;
        }()).r2 < 0.999);
  const FitResult fp = fit_power_decay(t, pw);
  CHECK(fp.exponent == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(std::abs(fit_power_decay(t, flat).exponent) < 1e-12);
  for (const FitResult& f : {fe, fp, fit_sqrt_exponential(t, sq)}) {
    CHECK(f.r2 >= 0.0);
    CHECK(f.r2 <= 1.0);
  }

  // Scale equivariance: the slope does not move.
  std::vector<double> ex7;
  for (double y : ex) ex7.push_back(7.0 * y);
  const FitResult f7 = fit_sqrt_exponential(t, ex7);
  CHECK(std::abs(f7.exponent - fe.exponent) <= 1e-12);
  CHECK(f7.intercept == doctest::Approx(fe.intercept + std::log(7.0)));

  std::vector<double> bad = ex;
  bad[10] = -1.0;
  CHECK_THROWS_AS(fit_sqrt_exponential(t, bad), ValidationError);
  CHECK_THROWS_AS(fit_power_decay(range(5.0, 1.0, 5), std::vector<double>(5, 1.0)), ValidationError);
  const FitResult window = fit_power_decay(range(0.0, 1.0, 20), std::vector<double>(20, 1.0), 5.0);
  CHECK(window.points == 15);
  CHECK(window.t_lo == 5.0);
}

TEST_CASE("Theil-Sen slope and relative increase") {
  auto x = range(0.0, 1.0, 11);
  std::vector<double> y;
  for (double s : x) y.push_back(2.0 * s + 1.0);
  y[3] = 100.0;
  CHECK(theil_sen_slope(x, y) == doctest::Approx(2.0));
  CHECK(linear_fit(x, y).exponent != doctest::Approx(2.0));

  const std::vector<double> t{0.0, 1.0, 2.0, 2.5};
  CHECK(worst_relative_increase(t, {4.0, 3.0, 2.0, 1.0}) == 0.0);
  CHECK(worst_relative_increase(t, {1.0, 1.1, 1.1, 1.21}) == doctest::Approx(0.2));
  CHECK_THROWS_AS(worst_relative_increase(t, {1.0}), ValidationError);
}

TEST_CASE("JSON records") {
  const VolumeEstimate v = region_volume(2.0, 100000, 9);
  const auto j = to_json(v);
  CHECK(j["seed"] == 9);
  CHECK(j["samples"] == 100000);
  const auto f = to_json(fit_power_decay(range(5.0, 1.0, 10), std::vector<double>(10, 1.0)));
  CHECK(f["model"] == "power");
}
