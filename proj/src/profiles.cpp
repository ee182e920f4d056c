#include "nullwave/profiles.hpp"

#include "nullwave/errors.hpp"

#include <cmath>

namespace nullwave {

ShapeId shape_from_string(const std::string& name) {
  if (name == "bump") return ShapeId::Bump;
  if (name == "odd_bump") return ShapeId::OddBump;
  if (name == "tilted_bump") return ShapeId::TiltedBump;
  if (name == "linear") return ShapeId::Linear;
  throw ValidationError("unknown profile shape '" + name + "'");
}

std::string to_string(ShapeId id) {
  switch (id) {
    case ShapeId::Bump: return "bump";
    case ShapeId::OddBump: return "odd_bump";
    case ShapeId::TiltedBump: return "tilted_bump";
    case ShapeId::Linear: return "linear";
  }
  return "bump";
}

double bump(double u, int order) {
  if (std::abs(u) >= 1.0) return 0.0;
  const double s = 1.0 - u * u;
  const double b = std::exp(1.0 - 1.0 / s);
  if (order == 0) return b;
  // b = exp(g), g = 1 - 1/s
  const double g1 = -2.0 * u / (s * s);
  if (order == 1) return g1 * b;
  const double g2 = -2.0 / (s * s) - 8.0 * u * u / (s * s * s);
  if (order == 2) return (g2 + g1 * g1) * b;
  const double g3 = -24.0 * u / (s * s * s) - 48.0 * u * u * u / (s * s * s * s);
  if (order == 3) return (g3 + 3.0 * g1 * g2 + g1 * g1 * g1) * b;
  throw ValidationError("bump: derivative order must be 0..3");
}

namespace {

// p(u) * bump(u) with p a polynomial of degree <= 1: p = p0 + p1 u.
double linear_times_bump(double p0, double p1, double u, int order) {
  const double p = p0 + p1 * u;
  // Leibniz: (p b)^(k) = p b^(k) + k p' b^(k-1)
  if (order == 0) return p * bump(u, 0);
  return p * bump(u, order) + order * p1 * bump(u, order - 1);
}

double shape_eval(ShapeId id, double u, int order) {
  if (order < 0 || order > 3) throw ValidationError("profile: derivative order must be 0..3");
  switch (id) {
    case ShapeId::Bump: return bump(u, order);
    case ShapeId::OddBump: return linear_times_bump(0.0, 2.0, u, order);
    case ShapeId::TiltedBump: return linear_times_bump(1.0, 0.5, u, order);
    case ShapeId::Linear:
      if (std::abs(u) > 1.0) return 0.0;
      return order == 0 ? u : (order == 1 ? 1.0 : 0.0);
  }
  return 0.0;
}

}  // namespace

WaveProfile::WaveProfile(std::vector<double> amplitudes, ShapeId shape)
    : amplitudes_(std::move(amplitudes)), shapes_(amplitudes_.size(), shape) {}

WaveProfile::WaveProfile(std::vector<double> amplitudes, std::vector<ShapeId> shapes)
    : amplitudes_(std::move(amplitudes)), shapes_(std::move(shapes)) {
  if (shapes_.size() != amplitudes_.size())
    throw ValidationError("profile: shapes and amplitudes differ in length");
}

double WaveProfile::eval(int component, double u, int order) const {
  const double a = amplitudes_[component];
  if (a == 0.0) return 0.0;
  return a * shape_eval(shapes_[component], u, order);
}

Eigen::VectorXd WaveProfile::eval(double u, int order) const {
  Eigen::VectorXd out(size());
  for (int i = 0; i < size(); ++i) out[i] = eval(i, u, order);
  return out;
}

std::vector<int> WaveProfile::active() const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (amplitudes_[i] != 0.0) out.push_back(i);
  return out;
}

WaveProfile WaveProfile::scaled(double factor) const {
  std::vector<double> a = amplitudes_;
  for (double& x : a) x *= factor;
  return WaveProfile(a, shapes_);
}

WaveProfile profile_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("profile: expected an object");
  if (!doc.contains("amplitudes") || !doc["amplitudes"].is_array())
    throw ValidationError("profile: 'amplitudes' array is required");
  std::vector<double> amps;
  for (const auto& a : doc["amplitudes"]) {
    if (!a.is_number()) throw ValidationError("profile: amplitudes must be numbers");
    amps.push_back(a.get<double>());
  }
  if (doc.contains("shapes")) {
    std::vector<ShapeId> shapes;
    for (const auto& s : doc["shapes"]) shapes.push_back(shape_from_string(s.get<std::string>()));
    return WaveProfile(amps, shapes);
  }
  return WaveProfile(amps, shape_from_string(doc.value("shape", std::string("bump"))));
}

nlohmann::json profile_to_json(const WaveProfile& p) {
  nlohmann::json shapes = nlohmann::json::array();
  nlohmann::json amps = nlohmann::json::array();
  for (int i = 0; i < p.size(); ++i) {
    shapes.push_back(to_string(p.shape(i)));
    amps.push_back(p.amplitude(i));
  }
  return {{"shapes", shapes}, {"amplitudes", amps}};
}

PairSup sup_half_ratio(const std::vector<double>& values, double h, bool absolute) {
  PairSup best;
  const std::size_t n = values.size();
  if (n < 2) return best;
  std::vector<double> inv_sqrt(n);
  for (std::size_t d = 1; d < n; ++d) inv_sqrt[d] = 1.0 / std::sqrt(static_cast<double>(d) * h);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double fi = values[i];
    for (std::size_t j = i + 1; j < n; ++j) {
      double diff = values[j] - fi;
      if (absolute) diff = std::abs(diff);
      const double r = diff * inv_sqrt[j - i];
      if (r > best.value) {
        best.value = r;
        best.i = i;
        best.j = j;
      }
    }
  }
  return best;
}

HolderHalf holder_half_seminorm(const WaveProfile& profile, int component, double h_u) {
  if (component < 0 || component >= profile.size())
    throw ValidationError("holder_half_seminorm: component out of range");
  if (!(h_u > 0.0)) throw ValidationError("holder_half_seminorm: h_u must be positive");
  const std::size_t n = static_cast<std::size_t>(std::llround(2.0 / h_u)) + 1;
  const double h = 2.0 / static_cast<double>(n - 1);
  std::vector<double> f(n);
  for (std::size_t k = 0; k < n; ++k) f[k] = profile.eval(component, -1.0 + k * h, 0);
  const PairSup s = sup_half_ratio(f, h, true);
  HolderHalf out;
  if (s.value <= 0.0) return out;
  out.value = s.value;
  out.u0 = -1.0 + s.i * h;
  out.u1 = -1.0 + s.j * h;
  return out;
}

double verify_travelling_wave(const SemilinearSystem& system, const WaveProfile& profile,
                              const std::vector<double>& samples) {
  const int n = system.size();
  if (profile.size() != n) throw ValidationError("verify_travelling_wave: size mismatch");
  double worst = 0.0;
  for (double u : samples) {
    const Eigen::VectorXd f2 = profile.eval(u, 2);
    const Eigen::VectorXd f1 = profile.eval(u, 1);
    Gradients grads(n, 4);
    for (int j = 0; j < n; ++j) grads.row(j) = f1[j] * covector::du_prime().transpose();
    const Eigen::VectorXd q = quadratic_rhs(system, grads);
    // d_t^2 f(t - x) = f'', d_x^2 f(t - x) = f''
    const Eigen::VectorXd box = f2 - f2;
    worst = std::max(worst, (box - q).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace nullwave
