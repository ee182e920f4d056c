#pragma once

// Interaction-region geometry, commuting vector fields and curve fits.

#include "nullwave/grid.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace nullwave {

using Point4 = Eigen::Vector4d;  // (t, x, y, z)

/// S_t = {r <= t + 1} cap {|t - x| <= 1} on the slice at time t.
bool in_interaction_region(double t, double x, double y, double z);

struct VolumeEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
};

/// Monte Carlo over the cylinder x in [t-1, t+1], y^2 + z^2 <= 4t.
/// Batches use fixed seeds, so the result does not depend on the thread count.
VolumeEstimate region_volume(double t, std::size_t samples, std::uint64_t seed = 12345);

/// Normalized measure (solid angle) of {omega : r omega in S_t}; requires
/// t >= 2 and r >= 0 (empty outside |r - t| <= 1). Quadrature over (cos theta, phi) with the polar
/// axis along z.
double sphere_cap_measure(double t, double r);
/// 2 pi times the clipped length of the admissible omega_x interval.
double sphere_cap_archimedes(double t, double r);

enum class FieldId {
  Dt, Dx, Dy, Dz,     // translations
  Oxy, Oxz, Oyz,      // rotations x d_y - y d_x, ...
  Otx, Oty, Otz,      // boosts t d_x + x d_t, ...
  S,                  // scaling t d_t + x d_x + y d_y + z d_z
};

constexpr int kFieldCount = 11;
const std::array<FieldId, kFieldCount>& all_fields();
std::string to_string(FieldId id);

/// Coefficients (c_t, c_x, c_y, c_z) of the field at p.
Eigen::Vector4d field_coefficients(FieldId id, const Point4& p);

using SpacetimeFn = std::function<double(const Point4&)>;

/// Central-difference application (step h in every direction).
double apply_field(FieldId id, const SpacetimeFn& f, const Point4& p, double h = 1e-3);
/// Gamma^{ids[0]} Gamma^{ids[1]} ... f by nested central differences.
double apply_string(const std::vector<FieldId>& ids, const SpacetimeFn& f, const Point4& p,
                    double h = 1e-3);

/// Grid version on one time slice: d_t comes from `dt_values`, spatial
/// derivatives are centred. Nodes whose stencil leaves the grid get 0 and a
/// false entry in `valid`.
std::vector<double> apply_field_grid(FieldId id, const GridGeometry& g, double t,
                                     const std::vector<double>& values,
                                     const std::vector<double>& dt_values,
                                     std::vector<char>* valid = nullptr);

struct CommutatorReport {
  double max_ratio = 0.0;  // max |[Omega, good derivative] h| / |good derivatives of h|
  std::size_t points = 0;
};

/// Rotations against the good derivatives d_t + d_r and r^{-1} Omega on
/// seeded smooth data, sampled away from the axis r = 0.
CommutatorReport commutator_check(std::uint64_t seed, std::size_t points = 400,
                                  double h = 1e-3);

struct WeightGrowthReport {
  int k = 1;
  std::vector<double> t;
  std::vector<double> max_value;
  std::vector<std::string> worst_string;
  double exponent = 0.0;  // log-log slope of max_value against t
  double r2 = 0.0;
  bool within_bound = false;  // exponent <= k/2 + 0.1
};

/// max over S_t lattice points of |Gamma^alpha F(t - x)| over every string of
/// length k, then the power-law exponent in t. `fields` restricts the alphabet
/// (default: all 11).
WeightGrowthReport weight_growth_check(const std::function<double(double)>& F, int k,
                                       const std::vector<double>& times,
                                       const std::vector<FieldId>& fields = {},
                                       int lattice = 9);

struct FitResult {
  std::string model;  // "exp-sqrt", "power" or "linear"
  double exponent = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double t_lo = 0.0, t_hi = 0.0;
  std::size_t points = 0;
};

/// Least squares y = a + b x.
FitResult linear_fit(const std::vector<double>& x, const std::vector<double>& y);
/// log y against sqrt t over t >= t_min; y must be positive, >= 8 points.
FitResult fit_sqrt_exponential(const std::vector<double>& t, const std::vector<double>& y,
                               double t_min = 5.0);
/// Same with log y supplied directly.
FitResult fit_sqrt_exponential_log(const std::vector<double>& t, const std::vector<double>& log_y,
                                   double t_min = 5.0);
/// log y against log(1 + t) over t >= t_min.
FitResult fit_power_decay(const std::vector<double>& t, const std::vector<double>& y,
                          double t_min = 5.0);
/// max over consecutive samples of (y[k+1] - y[k]) / (y[k] (t[k+1] - t[k])); 0 if y never grows.
double worst_relative_increase(const std::vector<double>& t, const std::vector<double>& y);

/// Median of pairwise slopes.
double theil_sen_slope(const std::vector<double>& x, const std::vector<double>& y);

nlohmann::json to_json(const FitResult& f);
nlohmann::json to_json(const VolumeEstimate& v);
nlohmann::json to_json(const WeightGrowthReport& r);

}  // namespace nullwave
