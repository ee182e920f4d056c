#pragma once

// 3+1 finite differences for box psi = Q(d psi + df) - Q(df) around the plane
// wave f(t - x): 7-point Laplacian, velocity Verlet in time.

#include "nullwave/grid.hpp"
#include "nullwave/nullform.hpp"
#include "nullwave/profiles.hpp"
#include "nullwave/renormalize.hpp"

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace nullwave {

struct GridSpec {
  double half_width = 24.0;  // x, y, z in [-L, L]
  double h = 0.5;
  double cfl = 0.45;
  double t_max = 20.0;
  /// Periodic y, z strip with strip_ny x strip_nz nodes (spacing h) instead of [-L, L]^2.
  bool strip = false;
  int strip_ny = 16, strip_nz = 1;

  double dt_max() const;
  GridGeometry geometry() const;
  void validate() const;
};

enum class Coupling {
  Nonlinear,   // Q(d psi + df) - Q(df)
  Linearized,  // sum f'_j (a (d_t + d_x) + b d_y + c d_z) psi
  Free,        // box psi = 0
};

Coupling coupling_from_string(const std::string& s);
std::string to_string(Coupling c);

/// Everything the stepper needs; the background is evaluated, never gridded.
struct FdtdModel {
  SemilinearSystem system;
  WaveProfile profile;
  Coupling coupling = Coupling::Nonlinear;

  FdtdModel(SemilinearSystem sys, WaveProfile prof, Coupling c);
  int size() const { return system.size(); }

  CouplingTensors couplings;
  struct Term {
    int i, j, l;
    Eigen::Matrix4d m;
  };
  std::vector<Term> terms;  // nonzero m_{ijl}
};

struct FieldState {
  GridGeometry grid;
  int n = 1;
  double t = 0.0;
  std::vector<double> psi;  // node-major: psi[node * n + comp]
  std::vector<double> pi;   // d_t psi at the same time
  std::vector<double> accel, accel_prev;
  bool accel_valid = false;
  double last_dt = 0.0;

  std::size_t size() const { return grid.size(); }
};

FieldState zero_state(const GridGeometry& g, int n);

/// psi = eps bump(r) on the listed components (all if empty), pi = 0.
FieldState initial_bump(const GridSpec& spec, double eps, int n,
                        const std::vector<int>& components = {});
/// Strip data eps bump((x - x_center) / width) cos(k_y y); with k_y = 0 the data are planar.
FieldState initial_strip_mode(const GridSpec& spec, double eps, int n, double k_y,
                              const std::vector<int>& components = {}, double x_center = 0.0,
                              double width = 1.0);

/// One step of size dt; throws NumericalError with the failure time if a
/// value stops being finite.
void step_leapfrog(FieldState& s, const FdtdModel& model, double dt);

/// d_tt psi - Laplacian psi at the current state (i.e. the right-hand side).
std::vector<double> right_hand_side(const FieldState& s, const FdtdModel& model);

/// 1/2 sum h^3 (pi^2 + |forward gradient|^2).
double flat_energy(const FieldState& s);
/// flat_energy - dt^2/8 sum h^3 |Laplacian psi|^2, conserved exactly by the free scheme.
double discrete_energy(const FieldState& s, double dt);
/// Flat energy of gamma = A(t - x) psi.
double gamma_energy(const FieldState& s, const Renormalizer& renorm,
                    const CouplingTensors& couplings, const WaveProfile& profile);
/// gamma = A(t - x) psi on the grid.
std::vector<double> gamma_field(const FieldState& s, const Renormalizer& renorm);

struct PointwiseNorms {
  double sup_psi = 0.0;
  double sup_dpsi = 0.0;
  double weighted_dpsi = 0.0;  // sup (1+t+r)^{1-delta} (1+|t-r|)^{1/2} |d psi|
  double weighted_good = 0.0;  // sup (1+t+r)^{3/2-delta} |dbar psi|
};
PointwiseNorms pointwise_norms(const FieldState& s, double delta);

struct WeightedNorms {
  std::vector<double> energy;  // index k: sum over |alpha| <= k of flat + good-derivative energy
};
/// E_1 / E_2-style surrogates up to `order` (<= 2).
WeightedNorms weighted_norms(const FieldState& s, int order, double delta);

/// Q(u) = q0 + int_{-1}^u (|B_y|^2 + |B_z|^2) (operator norms), tabulated.
class MultiplierWeight {
 public:
  MultiplierWeight(const LinearizedCoefficients& coeffs, double q0 = 1.0);
  double Q(double u) const;
  /// g = sqrt(Q(u')) sqrt(v' + 1).
  double g(double u, double v) const;

 private:
  double q0_;
  std::vector<double> u_, q_;
};

/// sum over the strip slice -1 <= t - x <= 1 of e^{-g} (|d_y eta|^2 + |d_z eta|^2
/// + 4 |d_v' eta|^2) / 2 with eta = A(t - x) psi (A = I without a renormalizer).
double multiplier_energy(const FieldState& s, const MultiplierWeight& w,
                         const Renormalizer* renorm = nullptr);

/// max over x of |sum_y psi cos(k_y y)| / ny on one component (strip runs).
double mode_amplitude(const FieldState& s, double k_y, int component);

/// max |psi| outside r <= t + 1 + margin h, relative to max |psi|.
double support_leak(const FieldState& s, double margin = 3.0);

struct LedgerEntry {
  double t = 0.0;
  double flat_energy = 0.0;
  double discrete_energy = 0.0;
  double gamma_energy = 0.0;
  PointwiseNorms norms;
  std::vector<double> weighted;  // E_0 .. E_order surrogates
  double multiplier = 0.0;
  double mode = 0.0;
};

struct DiagnosticsLedger {
  double delta = 0.05;
  bool has_gamma = false, has_multiplier = false, has_mode = false;
  int weighted_order = -1;
  std::vector<LedgerEntry> rows;

  std::vector<double> column(const std::string& name) const;
  std::vector<std::string> column_names() const;
};

struct EvolveOptions {
  double output_interval = 1.0;
  double delta = 0.05;
  int weighted_order = -1;  // -1: skip the E_k surrogates
  const Renormalizer* renorm = nullptr;              // gamma energy when set
  const MultiplierWeight* multiplier = nullptr;      // strip runs
  double mode_ky = 0.0;                              // mode amplitude when > 0
  int mode_component = 0;
};

struct EvolveResult {
  DiagnosticsLedger ledger;
  FieldState final_state;
  double dt = 0.0;
  std::size_t steps = 0;
};

/// Steps from the initial state to spec.t_max, sampling every output_interval.
EvolveResult evolve(const FdtdModel& model, const GridSpec& spec, FieldState initial,
                    const EvolveOptions& opts = {});

void write_ledger_csv(const std::string& path, const DiagnosticsLedger& ledger);
/// <prefix>.bin (float64 little endian, node-major, components innermost) and <prefix>.json.
void write_snapshot(const std::string& prefix, const FieldState& s);

}  // namespace nullwave
