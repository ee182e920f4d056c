#include "nullwave/bessel.hpp"

#include <doctest.h>

#include <boost/math/special_functions/bessel.hpp>

#include <cmath>

using namespace nullwave;

TEST_CASE("I0 at small arguments") {
  CHECK(bessel_I0(0.0) == cplx(1.0, 0.0));
  CHECK(std::abs(bessel_I0(1.0) - 1.2660658777520084) < 1e-15);
}

TEST_CASE("series and asymptotic agree at the crossover") {
  for (double arg = 0.0; arg < 6.3; arg += 0.35) {
    const cplx z = std::polar(30.0, arg);
    const ScaledComplex s = ScaledComplex::from(bessel_I0_series(z));
    const ScaledComplex a = bessel_I0_asymptotic_scaled(z);
    CHECK(std::abs(s.log_abs - a.log_abs) < 1e-8);
    CHECK(std::abs(std::remainder(s.arg - a.arg, 2.0 * M_PI)) < 1e-8);
  }
}

TEST_CASE("I0 on the real axis matches Boost") {
  for (double x : {0.5, 3.0, 12.0, 29.0, 31.0, 80.0, 400.0}) {
    const ScaledComplex s = bessel_I0_scaled(x);
    CHECK(s.log_abs == doctest::Approx(std::log(boost::math::cyl_bessel_i(0, x))).epsilon(1e-13));
  }
}

TEST_CASE("I0 on the imaginary axis is J0") {
  for (double y : {0.7, 5.0, 25.0, 45.0}) {
    const cplx v = bessel_I0(cplx(0.0, y));
    CHECK(std::abs(v.real() - boost::math::cyl_bessel_j(0, y)) < 1e-12);
    CHECK(std::abs(v.imag()) < 1e-12);
  }
}

TEST_CASE("I0 is even") {
  for (const cplx z : {cplx(2.0, 1.0), cplx(-40.0, 7.0), cplx(3.0, -60.0)}) {
    const ScaledComplex a = bessel_I0_scaled(z), b = bessel_I0_scaled(-z);
    CHECK(a.log_abs == doctest::Approx(b.log_abs).epsilon(1e-12));
  }
}

TEST_CASE("scaled form survives overflow") {
  const ScaledComplex s = bessel_I0_scaled(cplx(2000.0, 10.0));
  CHECK(std::isfinite(s.log_abs));
  CHECK(s.log_abs == doctest::Approx(2000.0 - 0.5 * std::log(2.0 * M_PI * std::abs(cplx(2000.0, 10.0))))
                         .epsilon(1e-6));
}
