#pragma once

// Transverse Fourier modes of the transformed linear equation
//   4 d_u' d_v' q = -(|xi|^2 I + i xi_y B_y(u') + i xi_z B_z(u')) q
// on the characteristic rectangle [u_min, u_max] x [1, V].

#include "nullwave/bessel.hpp"
#include "nullwave/renormalize.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace nullwave {

struct GoursatGrid {
  double u_min = -1.0, u_max = 1.0, h_u = 1.0 / 400;
  double v_max = 200.0, h_v = 1.0 / 400;

  std::size_t nu() const;  // node counts
  std::size_t nv() const;
  double u(std::size_t i) const { return u_min + static_cast<double>(i) * h_u; }
  double v(std::size_t j) const { return 1.0 + static_cast<double>(j) * h_v; }
  void validate() const;
};

using VectorXc = Eigen::VectorXcd;

/// Data on u' = u_min (function of v') and on v' = 1 (function of u').
/// Empty functions mean q = (1, ..., 1).
struct GoursatData {
  std::function<VectorXc(double)> on_u_min;
  std::function<VectorXc(double)> on_v_one;
};

struct GoursatOptions {
  bool enforce_resolution = true;
  double nodes_per_wavelength = 20.0;
  double time_bin = 0.25;          // width of the t = (u' + v')/2 bins
  std::vector<double> sample_v;    // rows kept in full
  std::size_t field_stride_u = 0;  // > 0 keeps a downsampled field
  std::size_t field_stride_v = 0;
};

/// A row of q with a shared exponent: q = values * exp(log_scale).
struct ScaledRow {
  double v = 0.0;
  double log_scale = 0.0;
  std::vector<cplx> values;  // node-major, n components per node

  ScaledComplex at(std::size_t node, int comp, int n) const;
};

struct TransverseMode {
  int n = 1;
  double xi_y = 0.0, xi_z = 0.0;
  GoursatGrid grid;
  std::vector<double> t;        // bin centres
  std::vector<double> log_max;  // log max |q| per bin (-inf if the bin is empty)
  std::vector<ScaledRow> samples;
  ScaledRow last_row;
  std::vector<ScaledRow> field;  // downsampled rows, every field_stride_u-th node
  std::size_t field_stride_u = 1;
};

/// Second-order implicit box scheme. Throws NumericalError if the v' step
/// resolves fewer than nodes_per_wavelength nodes of the local oscillation.
TransverseMode goursat_solve(const LinearizedCoefficients& coeffs, double xi_y, double xi_z,
                             const GoursatGrid& grid, const GoursatData& data = {},
                             const GoursatOptions& opts = {});

/// Solves several frequencies concurrently.
std::vector<TransverseMode> goursat_solve_many(const LinearizedCoefficients& coeffs,
                                               const std::vector<std::pair<double, double>>& xis,
                                               const GoursatGrid& grid,
                                               const GoursatOptions& opts = {});

/// I_0(2 sqrt((v' - 1) int_{u0}^{u'} a)), a = -(|xi|^2 + i xi_y B_y + i xi_z B_z)/4,
/// with the B integrals done by adaptive Gauss-Kronrod (tol 1e-10).
ScaledComplex closed_form_scalar(const std::function<double(double)>& b_y,
                                 const std::function<double(double)>& b_z, double xi_y,
                                 double xi_z, double u0, double u, double v);

/// Same, with int B_y and int B_z over [u0, u'] already known.
ScaledComplex closed_form_from_integrals(double int_by, double int_bz, double xi_y, double xi_z,
                                         double du, double v);

struct GrowthSeries {
  std::vector<double> t;
  std::vector<double> log_max;
};

/// (t, log max_u' |q|) with empty bins removed.
GrowthSeries sup_growth_profile(const TransverseMode& mode);

struct BlowupEntry {
  double delta = 0.0;
  std::optional<double> t_blow;
};

struct BlowupScan {
  std::vector<BlowupEntry> entries;
  GrowthSeries growth;
};

/// Scalar Nirenberg scan. phi = delta Re(q e^{i(xi_y y + theta)}) with the phase
/// chosen at each time to put the trough at -delta |q|; blow-up of
/// eta = -log(1 + phi) happens when delta max|q| first reaches 1.
BlowupScan nirenberg_blowup_scan(const LinearizedCoefficients& coeffs, double xi_y,
                                 std::vector<double> deltas, const GoursatGrid& grid,
                                 const GoursatOptions& opts = {});

/// (u', v', log|q|, arg q) for component 0 of the downsampled field.
void write_mode_csv(const std::string& path, const TransverseMode& mode);
/// (t, log_max) per bin.
void write_growth_csv(const std::string& path, const GrowthSeries& series);

}  // namespace nullwave
