#pragma once

// High-frequency ansatz eta = exp(i mu Lbar.zeta) sum_j phi_j / (i mu)^j for
//   box eta - B_y d_y eta - B_z d_z eta = 0,
// with phi_j transported along the null direction L.

#include "nullwave/bessel.hpp"
#include "nullwave/renormalize.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace nullwave {

struct NullDirection {
  Eigen::Vector4d L;     // (1, L_x, L_y, L_z)
  Eigen::Vector4d Lbar;  // (1, -L_x, -L_y, -L_z)
  double u1 = 0.0, u2 = 0.0, T = 0.0;

  double minkowski_norm() const;  // L_t^2 - |L_spatial|^2
  /// L_t Lbar_t - L_spatial . Lbar_spatial
  double pairing() const;
};

/// L = (1, 1 - D/T, -sqrt(2 D/T - D^2/T^2), 0), D = u2 - u1. Needs T > D > 0.
NullDirection null_vector(double u1, double u2, double T);

/// Rays X(t) = X0 + t (L_x, L_y, L_z) with X0 on a lattice centred at
/// (-u1, 0, 0). A count of 1 along an axis means the data do not depend on it.
struct RayBundle {
  NullDirection dir;
  int na = 9, nb = 9, nc = 1;
  double spacing = 0.1;
  int steps = 2000;  // t steps on [0, T]

  double dt() const { return dir.T / steps; }
  Eigen::Vector3d base_point(int i, int j, int k) const;
  /// u' = t - x along the ray through lattice column i.
  double u_prime(int i, double t) const;
  std::size_t rays() const { return static_cast<std::size_t>(na) * nb * nc; }
};

using InitialProfile = std::function<Eigen::VectorXcd(double, double, double)>;

struct GeoOpticsSolution {
  RayBundle bundle;
  int M = 0;
  int n = 1;
  double mu = 1.0;  // frequency used for the remainder proxy
  double remainder_proxy = std::numeric_limits<double>::quiet_NaN();
  /// phi[j][((s * na + i) * nb + jj) * nc + k) * n + comp]
  std::vector<std::vector<cplx>> phi;
  /// Lattice margin at which phi_j is defined (grows by 2 per level on axes with count > 1).
  std::vector<int> margin;

  std::size_t offset(int s, int i, int j, int k) const {
    return ((((static_cast<std::size_t>(s) * bundle.na + i) * bundle.nb + j) * bundle.nc + k)) *
           n;
  }
};

/// RK4 along every ray for j = 0..M; forcing -box phi_{j-1} + B.d phi_{j-1} comes
/// from 4th-order cross-ray differences and is interpolated to half steps.
GeoOpticsSolution transport_solve(const LinearizedCoefficients& coeffs, const RayBundle& bundle,
                                  int M, const InitialProfile& phi0);

/// sup |e^{-i mu theta} (box - B_y d_y - B_z d_z)(ansatz)| / sup |sum_j phi_j/(i mu)^j|
/// over the lattice where every term is defined, derivatives by differencing.
double ansatz_residual(const GeoOpticsSolution& sol, const LinearizedCoefficients& coeffs,
                       double mu);

/// Residual at sol.mu, stored in sol.remainder_proxy.
double measure_remainder(GeoOpticsSolution& sol, const LinearizedCoefficients& coeffs);

/// exp(0.1 sqrt(T)) capped at 1e6.
double default_frequency(double T);

/// R' = 1/2 P(t/T) (-L_y) R by RK4 on `steps` uniform steps; returns R at every node.
std::vector<Eigen::VectorXcd> comparison_ode_solve(const MatrixFn& P, double T, double minus_Ly,
                                                   const Eigen::VectorXcd& R0, int steps);

struct ComparisonReport {
  double integral_lambda = 0.0;  // int_0^1 lambda(P(tau)) dtau
  double rate_scale = 0.0;       // sqrt((u2 - u1) T / 2)
  bool upper_ok = true;          // every random start obeys the upper bound
  double worst_upper_margin = 0.0;  // max over samples of log|R(t)| - log bound (<= 0 is fine)
  bool lower_ok = false;
  double achieved_log_growth = 0.0;  // log(|R(T)| / |R0|) for the constructed data
  double required_log_growth = 0.0;  // rate_scale (int lambda - eps)
  double min_gap = 0.0;              // smallest eigen-gap between the top real part and the rest
  bool inconclusive = false;         // min_gap < 1e-3
};

/// Upper bound for `samples` seeded random unit R(0) and lower bound for data
/// along the top eigenvector of P(0), both with slack eps.
ComparisonReport comparison_ode_check(const MatrixFn& P, const NullDirection& dir, int samples,
                                      std::uint64_t seed = 7, double eps = 0.1,
                                      int steps = 100000);

/// t, u', then Re/Im of phi_j for every level, for the ray through lattice node (i, j, k).
void write_ray_csv(const std::string& path, const GeoOpticsSolution& sol, int i, int j, int k);

}  // namespace nullwave
