#include "nullwave/errors.hpp"
#include "nullwave/geoptics.hpp"
#include "nullwave/profiles.hpp"

#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace nullwave;

namespace {

InitialProfile gaussian(double u1, double w, int n = 1) {
  return [=](double x, double y, double z) {
    const double g = std::exp(-((x + u1) * (x + u1) + y * y + z * z) / (2.0 * w * w));
    return Eigen::VectorXcd::Constant(n, cplx(g, 0.0));
  };
}

RayBundle bundle(double u1, double u2, double T, int na, int nb, double spacing, int steps) {
  RayBundle b;
  b.dir = null_vector(u1, u2, T);
  b.na = na;
  b.nb = nb;
  b.nc = 1;
  b.spacing = spacing;
  b.steps = steps;
  return b;
}

}  // namespace

TEST_CASE("null vector") {
  const NullDirection d = null_vector(-1.0, 1.0, 200.0);
  CHECK(d.L(0) == 1.0);
  CHECK(d.L(1) == doctest::Approx(0.99).epsilon(1e-14));
  CHECK(d.L(2) == doctest::Approx(-std::sqrt(0.0199)).epsilon(1e-14));
  CHECK(d.L(3) == 0.0);
  CHECK(std::abs(d.minkowski_norm()) <= 1e-14);
  CHECK(d.pairing() == doctest::Approx(2.0));
  const NullDirection far = null_vector(-1.0, 1.0, 1e12);
  CHECK(far.L(1) == doctest::Approx(1.0));
  CHECK(std::abs(far.L(2)) < 1e-5);
  CHECK_THROWS_AS(null_vector(-1.0, 1.0, 2.0), ValidationError);
  CHECK_THROWS_AS(null_vector(0.5, 0.5, 20.0), ValidationError);
}

TEST_CASE("amplitudes are transported unchanged without coupling") {
  const auto co = LinearizedCoefficients::scalar([](double) { return 0.0; });
  const RayBundle b = bundle(-0.9, -0.1, 20.0, 9, 9, 0.5, 400);
  const GeoOpticsSolution sol = transport_solve(co, b, 0, gaussian(-0.9, 3.0));
  for (int i = 0; i < b.na; ++i)
    for (int j = 0; j < b.nb; ++j) {
      const cplx start = sol.phi[0][sol.offset(0, i, j, 0)];
      for (int s = 0; s <= b.steps; s += 50) CHECK(sol.phi[0][sol.offset(s, i, j, 0)] == start);
    }
}

TEST_CASE("scalar transport matches the closed form along every ray") {
  const WaveProfile p({1.0});
  const auto b_of_u = [p](double u) { return p.eval(0, u, 1); };
  const auto co = LinearizedCoefficients::scalar(b_of_u);
  const RayBundle b = bundle(-0.9, -0.1, 20.0, 5, 5, 0.2, 2000);
  const GeoOpticsSolution sol = transport_solve(co, b, 0, gaussian(-0.9, 3.0));
  const double ly = b.dir.L(2), slope = 1.0 - b.dir.L(1);
  double worst = 0.0;
  for (int i = 0; i < b.na; ++i) {
    const double ua = b.u_prime(i, 0.0), ub = b.u_prime(i, b.dir.T);
    const double integral = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        b_of_u, ua, ub, 12, 1e-13);
    const double factor = std::exp(-0.5 * ly * integral / slope);
    const cplx start = sol.phi[0][sol.offset(0, i, 2, 0)];
    const cplx end = sol.phi[0][sol.offset(b.steps, i, 2, 0)];
    worst = std::max(worst, std::abs(end - factor * start) / std::abs(factor * start));
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("central ray agrees with the comparison ODE") {
  const auto ct = coupling_tensors(fixture_system("example2"));
  const WaveProfile p({0.0, 2.0});
  const auto co = linearized_coefficients(solve_renormalizer(ct, p), ct, p);
  const double u1 = -0.6, u2 = 0.3, T = 50.0;
  const RayBundle b = bundle(u1, u2, T, 5, 5, 0.25, 1000);
  const GeoOpticsSolution sol = transport_solve(co, b, 0, gaussian(u1, 3.0, 2));
  const MatrixFn P = [&](double a) { return co.By(u1 + a * (u2 - u1)); };
  const Eigen::VectorXcd r0 = gaussian(u1, 3.0, 2)(-u1, 0.0, 0.0);
  const auto path = comparison_ode_solve(P, T, -b.dir.L(2), r0, b.steps);
  double worst = 0.0;
  for (int s = 0; s <= b.steps; ++s) {
    Eigen::VectorXcd phi(2);
    for (int c = 0; c < 2; ++c) phi(c) = sol.phi[0][sol.offset(s, 2, 2, 0) + c];
    worst = std::max(worst, (phi - path[s]).norm() / path[s].norm());
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("comparison ODE with constant scalar data is exact") {
  const NullDirection d = null_vector(-0.5, 0.5, 400.0);
  const double p0 = 0.8;
  const MatrixFn P = [p0](double) { return Eigen::MatrixXd::Constant(1, 1, p0); };
  const ComparisonReport rep = comparison_ode_check(P, d, 5, 3, 0.1, 20000);
  CHECK(rep.integral_lambda == doctest::Approx(p0).epsilon(1e-12));
  CHECK(rep.rate_scale == doctest::Approx(std::sqrt(400.0 / 2.0)));
  CHECK(rep.achieved_log_growth == doctest::Approx(-0.5 * d.L(2) * p0 * 400.0).epsilon(1e-10));
  CHECK(rep.upper_ok);
  CHECK(rep.lower_ok);
  CHECK_FALSE(rep.inconclusive);
}

TEST_CASE("comparison check is invariant under rotations") {
  const NullDirection d = null_vector(-0.5, 0.5, 200.0);
  const MatrixFn P = [](double a) {
    Eigen::MatrixXd m(2, 2);
    m << 1.0 - 0.5 * a, 0.0, 0.0, -0.5 + 0.5 * a * a;
    return m;
  };
  const double th = 0.7;
  Eigen::MatrixXd Q(2, 2);
  Q << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  const MatrixFn PQ = [&](double a) { return Eigen::MatrixXd(Q * P(a) * Q.transpose()); };
  const ComparisonReport a = comparison_ode_check(P, d, 4, 9, 0.1, 5000);
  const ComparisonReport b = comparison_ode_check(PQ, d, 4, 9, 0.1, 5000);
  CHECK(b.integral_lambda == doctest::Approx(a.integral_lambda).epsilon(1e-10));
  CHECK(b.achieved_log_growth == doctest::Approx(a.achieved_log_growth).epsilon(1e-8));
  CHECK(a.upper_ok);
  CHECK(b.upper_ok);
  CHECK(a.integral_lambda == doctest::Approx(0.75).epsilon(1e-10));
  CHECK(a.achieved_log_growth == doctest::Approx(-0.5 * d.L(2) * 200.0 * 0.75).epsilon(1e-8));
}

TEST_CASE("diagonal pencil grows at the rate of its top entry") {
  const NullDirection d = null_vector(-0.5, 0.5, 1e4);
  const MatrixFn P = [](double a) {
    Eigen::MatrixXd m(2, 2);
    m << 0.5 + 2.0 * std::sin(M_PI * a), 0.0, 0.0, 0.3;
    return m;
  };
  const ComparisonReport rep = comparison_ode_check(P, d, 10, 5, 0.1, 100000);
  const double want = 0.5 + 4.0 / M_PI;
  CHECK(rep.integral_lambda == doctest::Approx(want).epsilon(1e-8));
  CHECK(rep.upper_ok);
  CHECK(rep.lower_ok);
  CHECK(rep.achieved_log_growth / rep.rate_scale == doctest::Approx(want).epsilon(0.01));
}

TEST_CASE("remainder shrinks like mu^-M") {
  const WaveProfile p({1.0});
  const auto co = LinearizedCoefficients::scalar([p](double u) { return p.eval(0, u, 1); });
  const RayBundle b = bundle(-0.9, -0.1, 20.0, 13, 13, 0.5, 1000);
  for (int M : {1, 2}) {
    const GeoOpticsSolution sol = transport_solve(co, b, M, gaussian(-0.9, 3.0));
    const double r40 = ansatz_residual(sol, co, 40.0), r80 = ansatz_residual(sol, co, 80.0);
    const double want = std::pow(2.0, M);
    CHECK(r40 / r80 == doctest::Approx(want).epsilon(0.25));
  }
}

TEST_CASE("remainder proxy uses the default frequency") {
  const auto co = LinearizedCoefficients::scalar([](double) { return 0.0; });
  const RayBundle b = bundle(-0.9, -0.1, 20.0, 13, 13, 0.5, 200);
  GeoOpticsSolution sol = transport_solve(co, b, 1, gaussian(-0.9, 3.0));
  CHECK(sol.mu == doctest::Approx(std::exp(0.1 * std::sqrt(20.0))));
  CHECK(default_frequency(1e9) == 1e6);
  CHECK(measure_remainder(sol, co) == sol.remainder_proxy);
  CHECK(std::isfinite(sol.remainder_proxy));
}

TEST_CASE("transport input checks") {
  const auto co = LinearizedCoefficients::scalar([](double) { return 0.0; });
  RayBundle b = bundle(-0.9, -0.1, 20.0, 5, 5, 0.5, 100);
  CHECK_THROWS_AS(transport_solve(co, b, 2, gaussian(-0.9, 3.0)), ValidationError);
  CHECK_THROWS_AS(transport_solve(co, b, -1, gaussian(-0.9, 3.0)), ValidationError);
  CHECK_THROWS_AS(transport_solve(co, b, 0, gaussian(-0.9, 3.0, 2)), ValidationError);
  b.steps = 3;
  CHECK_THROWS_AS(transport_solve(co, b, 0, gaussian(-0.9, 3.0)), ValidationError);
}

TEST_CASE("ray CSV") {
  const auto co = LinearizedCoefficients::scalar([](double) { return 0.0; });
  const RayBundle b = bundle(-0.9, -0.1, 20.0, 5, 5, 0.5, 50);
  const GeoOpticsSolution sol = transport_solve(co, b, 1, gaussian(-0.9, 3.0));
  const auto path = std::filesystem::temp_directory_path() / "nullwave_ray_test.csv";
  write_ray_csv(path.string(), sol, 2, 2, 0);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,u_prime,re_phi0_1,im_phi0_1,re_phi1_1,im_phi1_1");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == b.steps + 1);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(write_ray_csv(path.string(), sol, 5, 0, 0), ValidationError);
}
