#pragma once

// Plane-wave profiles f : R -> R^N supported in [-1, 1].

#include "nullwave/nullform.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

#include <json.hpp>

namespace nullwave {

enum class ShapeId {
  Bump,         // exp(1 - 1/(1 - u^2))
  OddBump,      // 2u * bump
  TiltedBump,   // (1 + u/2) * bump
  Linear,       // u on [-1, 1]; synthetic, not smooth at the ends
};

ShapeId shape_from_string(const std::string& name);
std::string to_string(ShapeId id);

class WaveProfile {
 public:
  WaveProfile() = default;
  /// One shape for every component.
  WaveProfile(std::vector<double> amplitudes, ShapeId shape = ShapeId::Bump);
  WaveProfile(std::vector<double> amplitudes, std::vector<ShapeId> shapes);

  static WaveProfile zero(int n) { return WaveProfile(std::vector<double>(n, 0.0)); }

  int size() const { return static_cast<int>(amplitudes_.size()); }
  double amplitude(int i) const { return amplitudes_[i]; }
  ShapeId shape(int i) const { return shapes_[i]; }

  /// Derivative of the given order (0..3) of every component at u.
  Eigen::VectorXd eval(double u, int order = 0) const;
  double eval(int component, double u, int order = 0) const;

  /// Components that are not identically zero.
  std::vector<int> active() const;

  /// Same shapes, amplitudes multiplied by `factor`.
  WaveProfile scaled(double factor) const;

 private:
  std::vector<double> amplitudes_;
  std::vector<ShapeId> shapes_;
};

/// The unit bump exp(1 - 1/(1 - u^2)) and its derivatives (order 0..3).
double bump(double u, int order = 0);

/// {"shape": "bump", "amplitudes": [...]} or {"shapes": [...], "amplitudes": [...]}.
WaveProfile profile_from_json(const nlohmann::json& doc);
nlohmann::json profile_to_json(const WaveProfile& p);

struct HolderHalf {
  double value = 0.0;
  double u0 = 0.0, u1 = 0.0;  // witness pair
};

/// sup over grid pairs in [-1, 1] of |f_i(u1) - f_i(u0)| / sqrt(u1 - u0).
HolderHalf holder_half_seminorm(const WaveProfile& profile, int component, double h_u = 1e-3);

/// Brute-force sup over index pairs i < j of (F[j] - F[i]) / sqrt((j - i) h); with
/// `absolute` the numerator is |F[j] - F[i]|. Witness indices are returned.
struct PairSup {
  double value = -1e300;
  std::size_t i = 0, j = 0;
};
PairSup sup_half_ratio(const std::vector<double>& values, double h, bool absolute);

/// max over samples u of |box f(t - x) - Q(df)| with df = f'(u) (dt - dx).
double verify_travelling_wave(const SemilinearSystem& system, const WaveProfile& profile,
                              const std::vector<double>& samples);

}  // namespace nullwave
