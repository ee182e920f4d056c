#pragma once

// Modified Bessel function I_0 for complex argument.

#include <complex>

namespace nullwave {

using cplx = std::complex<double>;

/// log|w| and a continuous-as-possible arg w, so that w = exp(log_abs + i arg).
struct ScaledComplex {
  double log_abs = 0.0;
  double arg = 0.0;

  cplx value() const { return std::polar(std::exp(log_abs), arg); }
  static ScaledComplex from(cplx w) { return {std::log(std::abs(w)), std::arg(w)}; }
};

/// Power series sum (z^2/4)^k / (k!)^2, summed in extended precision.
cplx bessel_I0_series(cplx z);
/// Large-|z| expansion with both exponentials kept; terms are added until they
/// drop below 1e-17 relative (or start to grow).
ScaledComplex bessel_I0_asymptotic_scaled(cplx z);

/// Series for |z| <= 30, asymptotic beyond.
ScaledComplex bessel_I0_scaled(cplx z);
cplx bessel_I0(cplx z);

}  // namespace nullwave
