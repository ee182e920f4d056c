#include "nullwave/diagnostics.hpp"
#include "nullwave/errors.hpp"
#include "nullwave/mode_solver.hpp"
#include "nullwave/profiles.hpp"

#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <random>

using namespace nullwave;

namespace {

LinearizedCoefficients scalar_bump(double amp) {
  const WaveProfile p({amp});
  return LinearizedCoefficients::scalar([p](double u) { return p.eval(0, u, 1); });
}

/// max |q - closed form| / max |closed form| along the last row.
double max_rel_error(const TransverseMode& m, const LinearizedCoefficients& co, double xi) {
  const auto by = [&co](double u) { return co.By(u)(0, 0); };
  double worst = 0.0, scale = 0.0;
  const std::size_t nu = m.grid.nu();
  for (std::size_t i = 0; i < nu; i += std::max<std::size_t>(1, nu / 20)) {
    const ScaledComplex cf = closed_form_scalar(by, nullptr, xi, 0.0, m.grid.u_min, m.grid.u(i),
                                                m.grid.v_max);
    const cplx num = m.last_row.at(i, 0, 1).value();
    worst = std::max(worst, std::abs(num - cf.value()));
    scale = std::max(scale, std::abs(cf.value()));
  }
  return worst / scale;
}

}  // namespace

TEST_CASE("constant data without coupling stay constant") {
  const auto co = LinearizedCoefficients::scalar([](double) { return 0.0; });
  GoursatGrid g;
  g.u_min = -1.0;
  g.u_max = 0.0;
  g.v_max = 3.0;
  g.h_u = g.h_v = 1.0 / 50;
  const TransverseMode m = goursat_solve(co, 0.0, 0.0, g);
  for (std::size_t i = 0; i < g.nu(); ++i)
    CHECK(std::abs(m.last_row.at(i, 0, 1).value() - 1.0) < 1e-14);
  const GrowthSeries s = sup_growth_profile(m);
  for (double l : s.log_max) CHECK(std::abs(l) < 1e-14);
}

TEST_CASE("free oscillation matches the closed form") {
  const auto co = LinearizedCoefficients::scalar([](double) { return 0.0; });
  GoursatGrid g;
  g.u_min = -1.0;
  g.u_max = -0.5;
  g.v_max = 3.0;
  g.h_u = g.h_v = 1.0 / 1600;
  const TransverseMode m = goursat_solve(co, 4.0, 0.0, g);
  CHECK(max_rel_error(m, co, 4.0) < 1e-6);
}

TEST_CASE("scheme is second order") {
  const auto co = scalar_bump(2.0);
  double err[2];
  for (int k = 0; k < 2; ++k) {
    GoursatGrid g;
    g.u_min = -0.8;
    g.u_max = 0.2;
    g.v_max = 6.0;
    g.h_u = g.h_v = 1.0 / (50 << k);
    GoursatOptions o;
    o.enforce_resolution = false;
    err[k] = max_rel_error(goursat_solve(co, 3.0, 0.0, g, {}, o), co, 3.0);
  }
  CHECK(std::log2(err[0] / err[1]) >= 1.8);
}

TEST_CASE("growth factor along u' = 1 converges to the closed form") {
  const auto co = scalar_bump(2.0);
  const auto by = [&co](double u) { return co.By(u)(0, 0); };
  const ScaledComplex cf = closed_form_scalar(by, nullptr, 5.0, 0.0, -1.0, 1.0, 30.0);
  double err[2];
  for (int k = 0; k < 2; ++k) {
    GoursatGrid g;
    g.u_min = -1.0;
    g.u_max = 1.0;
    g.v_max = 30.0;
    g.h_u = g.h_v = 1.0 / (200 << k);
    const ScaledComplex num = goursat_solve(co, 5.0, 0.0, g).last_row.at(g.nu() - 1, 0, 1);
    err[k] = std::abs(num.log_abs - cf.log_abs) / std::abs(cf.log_abs);
  }
  CHECK(err[1] < 1e-4);
  CHECK(err[0] / err[1] > 3.5);
}

TEST_CASE("prescribed Goursat data are kept exactly") {
  const auto co = scalar_bump(1.0);
  GoursatGrid g;
  g.u_min = -0.5;
  g.u_max = 0.5;
  g.v_max = 4.0;
  g.h_u = g.h_v = 1.0 / 100;
  GoursatData data;
  data.on_u_min = [](double v) { return VectorXc::Constant(1, cplx(std::cos(v), 0.2)); };
  data.on_v_one = [](double u) { return VectorXc::Constant(1, cplx(std::cos(1.0) + u + 0.5, 0.2)); };
  GoursatOptions o;
  o.sample_v = {1.0};
  o.field_stride_u = 1;
  o.field_stride_v = 1;
  const TransverseMode m = goursat_solve(co, 2.0, 0.0, g, data, o);
  for (const ScaledRow& row : m.field)
    CHECK(std::abs(row.at(0, 0, 1).value() - data.on_u_min(row.v)(0)) <= 1e-15);
  REQUIRE_FALSE(m.field.empty());
  for (std::size_t i = 0; i < g.nu(); ++i) {
    const cplx want = data.on_v_one(g.u(i))(0);
    CHECK(std::abs(m.field.front().at(i, 0, 1).value() - want) <= 1e-15 * std::abs(want));
  }
}

TEST_CASE("conjugation invariance") {
  const WaveProfile p({1.0});
  const MatrixFn by = [p](double u) {
    Eigen::MatrixXd m(2, 2);
    m << p.eval(0, u, 1), 0.5, -0.3, 0.0;
    return m;
  };
  const MatrixFn zero = [](double) { return Eigen::MatrixXd::Zero(2, 2); };
  const auto co = LinearizedCoefficients::from_functions(2, by, zero, -1.05, 1.05, 1e-3);
  // Coefficient tables are real, so S is real.
  std::mt19937_64 rng(4);
  std::normal_distribution<double> d;
  Eigen::Matrix2d R;
  R << 1.0 + 0.3 * d(rng), d(rng), d(rng), 1.0 + 0.3 * d(rng);
  const Eigen::Matrix2d Ri = R.inverse();
  const MatrixFn by2 = [&](double u) { return Eigen::MatrixXd(R * by(u) * Ri); };
  const auto co2 = LinearizedCoefficients::from_functions(2, by2, zero, -1.05, 1.05, 1e-3);

  const VectorXc q0 = (VectorXc(2) << cplx(1.0, 0.0), cplx(0.3, -0.2)).finished();
  const VectorXc q1 = R.cast<cplx>() * q0;
  GoursatData a, b;
  a.on_u_min = a.on_v_one = [q0](double) { return q0; };
  b.on_u_min = b.on_v_one = [q1](double) { return q1; };
  GoursatGrid g;
  g.u_min = -1.0;
  g.u_max = 1.0;
  g.v_max = 10.0;
  g.h_u = 1.0 / 200;
  g.h_v = 1.0 / 100;
  const TransverseMode ma = goursat_solve(co, 3.0, 0.0, g, a);
  const TransverseMode mb = goursat_solve(co2, 3.0, 0.0, g, b);
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < g.nu(); ++i) {
    VectorXc x(2), y(2);
    for (int c = 0; c < 2; ++c) {
      x(c) = ma.last_row.at(i, c, 2).value();
      y(c) = mb.last_row.at(i, c, 2).value();
    }
    worst = std::max(worst, (R.cast<cplx>() * x - y).norm());
    scale = std::max(scale, y.norm());
  }
  CHECK(worst <= 1e-8 * scale);
}

TEST_CASE("resolution guard") {
  const auto co = scalar_bump(2.0);
  GoursatGrid g;
  g.u_min = -1.0;
  g.u_max = 1.0;
  g.v_max = 20.0;
  g.h_u = g.h_v = 1.0 / 10;
  CHECK_THROWS_AS(goursat_solve(co, 50.0, 0.0, g), NumericalError);
  g.h_u = -1.0;
  CHECK_THROWS_AS(goursat_solve(co, 1.0, 0.0, g), ValidationError);
}

TEST_CASE("closed form edge values and asymptotics") {
  const WaveProfile p({2.0});
  const auto b = [p](double u) { return p.eval(0, u, 1); };
  CHECK(std::abs(closed_form_scalar(b, nullptr, 20.0, 0.0, 0.1, 0.1, 50.0).value() - 1.0) < 1e-14);
  CHECK(std::abs(closed_form_scalar(b, nullptr, 20.0, 0.0, -0.3, 0.4, 1.0).value() - 1.0) < 1e-14);

  const HolderHalf h = holder_half_seminorm(p, 0, 1e-3);
  const double u0 = std::min(h.u0, h.u1), u = std::max(h.u0, h.u1), v = 400.0;
  const double intB = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(b, u0, u);
  const double asym = std::sqrt(v - 1.0) / (2.0 * std::sqrt(u - u0)) * std::abs(intB);
  const ScaledComplex cf = closed_form_scalar(b, nullptr, 20.0, 0.0, u0, u, v);
  // The exponential rate; log|I0(z)| also carries -1/2 log(2 pi |z|).
  const double abs_z = 2.0 * std::sqrt((v - 1.0) * std::abs(cplx(400.0 * (u - u0), 20.0 * intB)) / 4.0);
  CHECK(cf.log_abs + 0.5 * std::log(2.0 * M_PI * abs_z) == doctest::Approx(asym).epsilon(0.02));
  CHECK(cf.log_abs < asym);
}

TEST_CASE("unstable scalar mode grows at the predicted rate") {
  const auto co = scalar_bump(2.0);
  const GrowthRateEstimate gr = growth_rate_estimate(co);
  REQUIRE(gr.positive);
  GoursatGrid g;
  g.u_min = gr.u1;
  g.u_max = 1.0;
  g.v_max = 400.0;
  g.h_u = 1.0 / 800;
  g.h_v = 1.0 / 128;
  GoursatOptions o;
  o.time_bin = 1.0;
  const TransverseMode m = goursat_solve(co, 8.0, 0.0, g, {}, o);
  const GrowthSeries s = sup_growth_profile(m);
  std::vector<double> t, l;
  for (std::size_t k = 0; k < s.t.size(); ++k)
    if (s.t[k] <= 0.5 * (g.u_min + g.v_max)) {
      t.push_back(s.t[k]);
      l.push_back(s.log_max[k]);
    }
  for (std::size_t k = 10; k < l.size(); ++k) CHECK(l[k] > l[k - 10]);
  const FitResult f = fit_sqrt_exponential_log(t, l, 5.0);
  CHECK(f.exponent == doctest::Approx(gr.K).epsilon(0.10));
  CHECK(f.exponent <= 10.0 * gr.K);
}

TEST_CASE("blow-up scan edge cases") {
  GoursatGrid g;
  g.u_min = -1.0;
  g.u_max = 1.0;
  g.v_max = 30.0;
  g.h_u = g.h_v = 1.0 / 100;
  const auto co = scalar_bump(2.0);
  const BlowupScan past = nirenberg_blowup_scan(co, 4.0, {1.5}, g);
  REQUIRE(past.entries[0].t_blow.has_value());
  CHECK(*past.entries[0].t_blow <= 0.5 * (g.u_min + 1.0) + 1e-12);

  const auto flat = LinearizedCoefficients::scalar([](double) { return 0.0; });
  const BlowupScan none = nirenberg_blowup_scan(flat, 4.0, {1e-2, 1e-3}, g);
  for (const auto& e : none.entries) CHECK_FALSE(e.t_blow.has_value());
  const BlowupScan sorted = nirenberg_blowup_scan(co, 4.0, {1e-3, 1e-1, 1e-2}, g);
  for (std::size_t k = 1; k < sorted.entries.size(); ++k)
    CHECK(sorted.entries[k].delta < sorted.entries[k - 1].delta);
  CHECK_THROWS_AS(nirenberg_blowup_scan(co, 4.0, {1e-3, 1e-3}, g), ValidationError);
}
