#include "nullwave/bessel.hpp"

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>

namespace nullwave {

namespace {
constexpr double kCrossover = 30.0;
constexpr double kPi = 3.14159265358979323846;
}  // namespace

cplx bessel_I0_series(cplx z) {
  // Terms reach e^|z| before cancelling for imaginary z; quad precision keeps
  // about 20 digits through |z| = 30.
  using real = boost::multiprecision::cpp_bin_float_quad;
  const real qr = real(z.real()) * z.real() / 4 - real(z.imag()) * z.imag() / 4;
  const real qi = real(z.real()) * z.imag() / 2;
  real tr = 1, ti = 0, sr = 1, si = 0;
  const real eps = real(1e-34);
  for (int k = 1; k < 2000; ++k) {
    const real kk = real(k) * k;
    const real nr = (tr * qr - ti * qi) / kk;
    const real ni = (tr * qi + ti * qr) / kk;
    tr = nr;
    ti = ni;
    sr += tr;
    si += ti;
    if (abs(tr) + abs(ti) < eps * (1 + abs(sr) + abs(si)) && real(k) * k > abs(qr) + abs(qi))
      break;
  }
  return {static_cast<double>(sr), static_cast<double>(si)};
}

ScaledComplex bessel_I0_asymptotic_scaled(cplx z) {
  // I_0 is even; work in Re z >= 0 where e^{-2z} is bounded.
  if (z.real() < 0.0) z = -z;
  const cplx inv = 1.0 / z;
  cplx s1 = 1.0, s2 = 1.0, pw = 1.0;
  double c = 1.0, last = 1e300;
  for (int k = 1; k < 500; ++k) {
    c *= (2.0 * k - 1.0) * (2.0 * k - 1.0) / (8.0 * k);
    pw *= inv;
    const cplx term = c * pw;
    const double mag = std::abs(term);
    if (mag > last) break;
    s1 += term;
    s2 += (k % 2 ? -1.0 : 1.0) * term;
    last = mag;
    if (mag < 1e-17) break;
  }
  const cplx sign = z.imag() >= 0.0 ? cplx(0.0, 1.0) : cplx(0.0, -1.0);
  const cplx w = s1 + sign * std::exp(-2.0 * z) * s2;
  const cplx pref = 2.0 * kPi * z;
  ScaledComplex out;
  out.log_abs = z.real() + std::log(std::abs(w)) - 0.5 * std::log(std::abs(pref));
  out.arg = z.imag() + std::arg(w) - 0.5 * std::arg(pref);
  return out;
}

ScaledComplex bessel_I0_scaled(cplx z) {
  if (std::abs(z) <= kCrossover) return ScaledComplex::from(bessel_I0_series(z));
  return bessel_I0_asymptotic_scaled(z);
}

cplx bessel_I0(cplx z) {
  if (std::abs(z) <= kCrossover) return bessel_I0_series(z);
  return bessel_I0_asymptotic_scaled(z).value();
}

}  // namespace nullwave
