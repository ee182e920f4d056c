#include "nullwave/fdtd.hpp"

#include "nullwave/diagnostics.hpp"
#include "nullwave/errors.hpp"
#include "nullwave/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <fstream>
#include <optional>

namespace nullwave {

double GridSpec::dt_max() const { return cfl * h / std::sqrt(3.0); }

GridGeometry GridSpec::geometry() const {
  GridGeometry g;
  g.h = h;
  g.nx = static_cast<int>(std::lround(2.0 * half_width / h)) + 1;
  g.x0 = -half_width;
  if (strip) {
    g.ny = strip_ny;
    g.nz = strip_nz;
    g.y0 = 0.0;
    g.z0 = 0.0;
    g.periodic_yz = true;
  } else {
    g.ny = g.nz = g.nx;
    g.y0 = g.z0 = -half_width;
  }
  return g;
}

void GridSpec::validate() const {
  if (!(h > 0.0)) throw ValidationError("grid: spacing h must be positive");
  if (!(cfl > 0.0 && cfl <= 1.0)) throw ValidationError("grid: cfl must lie in (0, 1]");
  if (!(t_max >= 0.0)) throw ValidationError("grid: t_max must be >= 0");
  if (half_width < t_max + 2.0)
    throw ValidationError("grid: half_width must be at least t_max + 2");
  if (strip && (strip_ny < 1 || strip_nz < 1))
    throw ValidationError("grid: strip node counts must be positive");
  const double nodes = 2.0 * half_width / h + 1.0;
  const double total = strip ? nodes * strip_ny * strip_nz : nodes * nodes * nodes;
  if (total > 4e8) throw ValidationError("grid: more than 4e8 nodes");
}

Coupling coupling_from_string(const std::string& s) {
  if (s == "nonlinear") return Coupling::Nonlinear;
  if (s == "linearized") return Coupling::Linearized;
  if (s == "free") return Coupling::Free;
  throw ValidationError("unknown coupling '" + s + "' (nonlinear | linearized | free)");
}

std::string to_string(Coupling c) {
  switch (c) {
    case Coupling::Nonlinear: return "nonlinear";
    case Coupling::Linearized: return "linearized";
    case Coupling::Free: return "free";
  }
  return "?";
}

FdtdModel::FdtdModel(SemilinearSystem sys, WaveProfile prof, Coupling c)
    : system(std::move(sys)), profile(std::move(prof)), coupling(c) {
  if (profile.size() != system.size())
    throw ValidationError("fdtd: profile and system sizes differ");
  couplings = coupling_tensors(system);
  const int n = system.size();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) {
        const Matrix4& m = system.tensor(i, j, l).matrix();
        if (!m.isZero(0.0)) terms.push_back({i, j, l, m});
      }
}

FieldState zero_state(const GridGeometry& g, int n) {
  FieldState s;
  s.grid = g;
  s.n = n;
  s.psi.assign(g.size() * n, 0.0);
  s.pi.assign(g.size() * n, 0.0);
  return s;
}

namespace {

std::vector<int> resolve_components(const std::vector<int>& comps, int n) {
  if (comps.empty()) {
    std::vector<int> all(n);
    for (int c = 0; c < n; ++c) all[c] = c;
    return all;
  }
  for (int c : comps)
    if (c < 0 || c >= n) throw ValidationError("fdtd: data component out of range");
  return comps;
}

struct Box {
  int i0, i1, j0, j1, k0, k1;  // inclusive update ranges
};

Box active_box(const GridGeometry& g, double t) {
  const double R = t + 1.0 + 20.0 * g.h;
  auto lo = [&](double origin, int count) {
    return std::clamp(static_cast<int>(std::floor((-R - origin) / g.h)), 1, count - 2);
  };
  auto hi = [&](double origin, int count) {
    return std::clamp(static_cast<int>(std::ceil((R - origin) / g.h)), 1, count - 2);
  };
  Box b{lo(g.x0, g.nx), hi(g.x0, g.nx), 0, g.ny - 1, 0, g.nz - 1};
  if (!g.periodic_yz) {
    b.j0 = lo(g.y0, g.ny);
    b.j1 = hi(g.y0, g.ny);
    b.k0 = lo(g.z0, g.nz);
    b.k1 = hi(g.z0, g.nz);
  }
  return b;
}

// Per x column background data at time t.
struct Column {
  Eigen::VectorXd fp;
  Eigen::MatrixXd a, b, c;
};

std::vector<Column> columns(const FdtdModel& m, const GridGeometry& g, double t, const Box& box) {
  std::vector<Column> out(g.nx);
  for (int i = box.i0; i <= box.i1; ++i) {
    Column& col = out[i];
    col.fp = m.profile.eval(t - g.x(i), 1);
    if (m.coupling == Coupling::Linearized) {
      col.a = m.couplings.contract_a(col.fp);
      col.b = m.couplings.contract_b(col.fp);
      col.c = m.couplings.contract_c(col.fp);
    }
  }
  return out;
}

// out = Laplacian psi + R(d psi) on the box; zero elsewhere.
void acceleration(const FieldState& s, const std::vector<double>& psi,
                  const std::vector<double>& pi, double t, const FdtdModel& m, const Box& box,
                  std::vector<double>& out) {
  const GridGeometry& g = s.grid;
  const int n = s.n;
  out.assign(psi.size(), 0.0);
  const auto cols = columns(m, g, t, box);
  const double ih2 = 1.0 / (g.h * g.h), i2h = 0.5 / g.h;
  const std::size_t sx = static_cast<std::size_t>(g.ny) * g.nz * n;
  const int count = box.i1 - box.i0 + 1;
  if (count <= 0) return;

  parallel_for(static_cast<std::size_t>(count), [&](std::size_t lo, std::size_t hi) {
    std::vector<Eigen::Vector4d> grad(n);
    for (std::size_t ii = lo; ii < hi; ++ii) {
      const int i = box.i0 + static_cast<int>(ii);
      const Column& col = cols[i];
      for (int j = box.j0; j <= box.j1; ++j) {
        const int jp = g.wrap_y(j + 1), jm = g.wrap_y(j - 1);
        for (int k = box.k0; k <= box.k1; ++k) {
          const int kp = g.wrap_z(k + 1), km = g.wrap_z(k - 1);
          const std::size_t c0 = g.index(i, j, k) * n;
          const std::size_t cyp = g.index(i, jp, k) * n, cym = g.index(i, jm, k) * n;
          const std::size_t czp = g.index(i, j, kp) * n, czm = g.index(i, j, km) * n;
          for (int q = 0; q < n; ++q) {
            const double v = psi[c0 + q];
            const double xp = psi[c0 + sx + q], xm = psi[c0 - sx + q];
            const double yp = psi[cyp + q], ym = psi[cym + q];
            const double zp = psi[czp + q], zm = psi[czm + q];
            out[c0 + q] = (xp + xm + yp + ym + zp + zm - 6.0 * v) * ih2;
            grad[q] = {pi[c0 + q], (xp - xm) * i2h, (yp - ym) * i2h, (zp - zm) * i2h};
          }
          switch (m.coupling) {
            case Coupling::Free:
              break;
            case Coupling::Linearized:
              for (int r = 0; r < n; ++r) {
                double acc = 0.0;
                for (int q = 0; q < n; ++q)
                  acc += col.a(r, q) * (grad[q][0] + grad[q][1]) + col.b(r, q) * grad[q][2] +
                         col.c(r, q) * grad[q][3];
                out[c0 + r] += acc;
              }
              break;
            case Coupling::Nonlinear:
              for (const auto& term : m.terms) {
                const Eigen::Vector4d fj(col.fp[term.j], -col.fp[term.j], 0.0, 0.0);
                const Eigen::Vector4d fl(col.fp[term.l], -col.fp[term.l], 0.0, 0.0);
                const Eigen::Vector4d gj = grad[term.j] + fj, gl = grad[term.l] + fl;
                out[c0 + term.i] += gj.dot(term.m * gl) - fj.dot(term.m * fl);
              }
              break;
          }
        }
      }
    }
  });
}

void check_finite(const std::vector<double>& v, double t) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericalError("fdtd: non-finite field value", t);
}

}  // namespace

FieldState initial_bump(const GridSpec& spec, double eps, int n, const std::vector<int>& components) {
  if (!(eps >= 0.0)) throw ValidationError("initial_bump: eps must be >= 0");
  spec.validate();
  const GridGeometry g = spec.geometry();
  FieldState s = zero_state(g, n);
  const auto comps = resolve_components(components, n);
  if (eps == 0.0) return s;
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j)
      for (int k = 0; k < g.nz; ++k) {
        const double r = std::sqrt(g.x(i) * g.x(i) + g.y(j) * g.y(j) + g.z(k) * g.z(k));
        if (r >= 1.0) continue;
        const double v = eps * bump(r);
        for (int c : comps) s.psi[g.index(i, j, k) * n + c] = v;
      }
  return s;
}

FieldState initial_strip_mode(const GridSpec& spec, double eps, int n, double k_y,
                              const std::vector<int>& components, double x_center,
                              double width) {
  if (!(width > 0.0) || std::abs(x_center) + width > 1.0 + 1e-12)
    throw ValidationError("initial_strip_mode: data must sit inside |x| <= 1");
  if (!spec.strip) throw ValidationError("initial_strip_mode: grid is not a strip");
  spec.validate();
  const GridGeometry g = spec.geometry();
  FieldState s = zero_state(g, n);
  const auto comps = resolve_components(components, n);
  for (int i = 0; i < g.nx; ++i) {
    const double x = (g.x(i) - x_center) / width;
    if (std::abs(x) >= 1.0) continue;
    for (int j = 0; j < g.ny; ++j)
      for (int k = 0; k < g.nz; ++k) {
        const double v = eps * bump(x) * std::cos(k_y * g.y(j));
        for (int c : comps) s.psi[g.index(i, j, k) * n + c] = v;
      }
  }
  return s;
}

std::vector<double> right_hand_side(const FieldState& s, const FdtdModel& model) {
  const GridGeometry& g = s.grid;
  Box box{1, g.nx - 2, 0, g.ny - 1, 0, g.nz - 1};
  if (!g.periodic_yz) box = {1, g.nx - 2, 1, g.ny - 2, 1, g.nz - 2};
  std::vector<double> acc;
  acceleration(s, s.psi, s.pi, s.t, model, box, acc);
  std::vector<double> lap;
  FdtdModel free_model = model;
  free_model.coupling = Coupling::Free;
  acceleration(s, s.psi, s.pi, s.t, free_model, box, lap);
  for (std::size_t q = 0; q < acc.size(); ++q) acc[q] -= lap[q];
  return acc;
}

void step_leapfrog(FieldState& s, const FdtdModel& model, double dt) {
  if (!(dt > 0.0) || dt > s.grid.h / std::sqrt(3.0) * (1.0 + 1e-12))
    throw ValidationError("step_leapfrog: dt violates the CFL limit");
  if (model.size() != s.n) throw ValidationError("step_leapfrog: component count mismatch");
  const Box box = active_box(s.grid, s.t + dt);
  if (!s.accel_valid) acceleration(s, s.psi, s.pi, s.t, model, box, s.accel);

  std::vector<double> pi_half(s.pi.size());
  for (std::size_t q = 0; q < s.pi.size(); ++q) {
    pi_half[q] = s.pi[q] + 0.5 * dt * s.accel[q];
    s.psi[q] += dt * pi_half[q];
  }
  const double t1 = s.t + dt;
  std::vector<double> a1;
  acceleration(s, s.psi, pi_half, t1, model, box, a1);
  if (model.coupling != Coupling::Free) {
    std::vector<double> pi_star(s.pi.size());
    for (std::size_t q = 0; q < s.pi.size(); ++q) pi_star[q] = pi_half[q] + 0.5 * dt * a1[q];
    acceleration(s, s.psi, pi_star, t1, model, box, a1);
  }
  for (std::size_t q = 0; q < s.pi.size(); ++q) s.pi[q] = pi_half[q] + 0.5 * dt * a1[q];
  s.accel_prev = std::move(s.accel);
  s.accel = std::move(a1);
  s.accel_valid = true;
  s.last_dt = dt;
  s.t = t1;
  check_finite(s.psi, s.t);
  check_finite(s.pi, s.t);
}

namespace {

double energy_of(const GridGeometry& g, int n, const std::vector<double>& w,
                 const std::vector<double>& wt) {
  const double h = g.h, vol = h * h * h;
  std::vector<double> part(g.nx, 0.0);
  parallel_for(static_cast<std::size_t>(g.nx), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t ii = lo; ii < hi; ++ii) {
      const int i = static_cast<int>(ii);
      double acc = 0.0;
      for (int j = 0; j < g.ny; ++j)
        for (int k = 0; k < g.nz; ++k) {
          const std::size_t c0 = g.index(i, j, k) * n;
          for (int q = 0; q < n; ++q) {
            const double v = w[c0 + q];
            acc += wt[c0 + q] * wt[c0 + q];
            if (i + 1 < g.nx) {
              const double d = (w[g.index(i + 1, j, k) * n + q] - v) / h;
              acc += d * d;
            }
            if (g.periodic_yz || j + 1 < g.ny) {
              const double d = (w[g.index(i, g.wrap_y(j + 1), k) * n + q] - v) / h;
              acc += d * d;
            }
            if (g.periodic_yz || k + 1 < g.nz) {
              const double d = (w[g.index(i, j, g.wrap_z(k + 1)) * n + q] - v) / h;
              acc += d * d;
            }
          }
        }
      part[ii] = acc;
    }
  });
  double total = 0.0;
  for (double p : part) total += p;
  return 0.5 * vol * total;
}

}  // namespace

double flat_energy(const FieldState& s) { return energy_of(s.grid, s.n, s.psi, s.pi); }

double discrete_energy(const FieldState& s, double dt) {
  const GridGeometry& g = s.grid;
  const int n = s.n;
  const double ih2 = 1.0 / (g.h * g.h);
  double acc = 0.0;
  for (int i = 1; i + 1 < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j) {
      if (!g.periodic_yz && (j == 0 || j + 1 == g.ny)) continue;
      for (int k = 0; k < g.nz; ++k) {
        if (!g.periodic_yz && (k == 0 || k + 1 == g.nz)) continue;
        for (int q = 0; q < n; ++q) {
          const double v = s.psi[g.index(i, j, k) * n + q];
          const double lap =
              (s.psi[g.index(i + 1, j, k) * n + q] + s.psi[g.index(i - 1, j, k) * n + q] +
               s.psi[g.index(i, g.wrap_y(j + 1), k) * n + q] +
               s.psi[g.index(i, g.wrap_y(j - 1), k) * n + q] +
               s.psi[g.index(i, j, g.wrap_z(k + 1)) * n + q] +
               s.psi[g.index(i, j, g.wrap_z(k - 1)) * n + q] - 6.0 * v) *
              ih2;
          acc += lap * lap;
        }
      }
    }
  return flat_energy(s) - dt * dt / 8.0 * g.h * g.h * g.h * acc;
}

std::vector<double> gamma_field(const FieldState& s, const Renormalizer& renorm) {
  const GridGeometry& g = s.grid;
  const int n = s.n;
  std::vector<double> out(s.psi.size(), 0.0);
  for (int i = 0; i < g.nx; ++i) {
    const Eigen::MatrixXd A = renorm.A(s.t - g.x(i));
    for (int j = 0; j < g.ny; ++j)
      for (int k = 0; k < g.nz; ++k) {
        const std::size_t c0 = g.index(i, j, k) * n;
        const Eigen::Map<const Eigen::VectorXd> v(s.psi.data() + c0, n);
        Eigen::Map<Eigen::VectorXd>(out.data() + c0, n) = A * v;
      }
  }
  return out;
}

double gamma_energy(const FieldState& s, const Renormalizer& renorm,
                    const CouplingTensors& couplings, const WaveProfile& profile) {
  const GridGeometry& g = s.grid;
  const int n = s.n;
  const std::vector<double> gamma = gamma_field(s, renorm);
  std::vector<double> gt(s.pi.size(), 0.0);
  for (int i = 0; i < g.nx; ++i) {
    const double u = s.t - g.x(i);
    const Eigen::MatrixXd A = renorm.A(u);
    const Eigen::MatrixXd dA = -0.5 * A * couplings.contract_a(profile.eval(u, 1));
    for (int j = 0; j < g.ny; ++j)
      for (int k = 0; k < g.nz; ++k) {
        const std::size_t c0 = g.index(i, j, k) * n;
        const Eigen::Map<const Eigen::VectorXd> v(s.psi.data() + c0, n), p(s.pi.data() + c0, n);
        Eigen::Map<Eigen::VectorXd>(gt.data() + c0, n) = dA * v + A * p;
      }
  }
  return energy_of(g, n, gamma, gt);
}

namespace {

// Centred gradient (d_t from `wt`) of component q at an interior node.
Eigen::Vector4d centred(const GridGeometry& g, int n, const std::vector<double>& w,
                        const std::vector<double>& wt, int i, int j, int k, int q) {
  const double i2h = 0.5 / g.h;
  return {wt[g.index(i, j, k) * n + q],
          (w[g.index(i + 1, j, k) * n + q] - w[g.index(i - 1, j, k) * n + q]) * i2h,
          (w[g.index(i, g.wrap_y(j + 1), k) * n + q] - w[g.index(i, g.wrap_y(j - 1), k) * n + q]) *
              i2h,
          (w[g.index(i, j, g.wrap_z(k + 1)) * n + q] - w[g.index(i, j, g.wrap_z(k - 1)) * n + q]) *
              i2h};
}

// |dbar w|^2 = (d_t w + d_r w)^2 + |angular gradient|^2.
double good_sq(const Eigen::Vector4d& d, const Eigen::Vector3d& x) {
  const double r = x.norm();
  const Eigen::Vector3d grad = d.tail<3>();
  if (r < 1e-12) return d[0] * d[0] + grad.squaredNorm();
  const Eigen::Vector3d w = x / r;
  const double dr = grad.dot(w);
  return (d[0] + dr) * (d[0] + dr) + (grad - dr * w).squaredNorm();
}

template <class F>
void for_interior(const GridGeometry& g, F&& f) {
  for (int i = 1; i + 1 < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j) {
      if (!g.periodic_yz && (j == 0 || j + 1 == g.ny)) continue;
      for (int k = 0; k < g.nz; ++k) {
        if (!g.periodic_yz && (k == 0 || k + 1 == g.nz)) continue;
        f(i, j, k);
      }
    }
}

Eigen::Vector3d position(const GridGeometry& g, int i, int j, int k) {
  return {g.x(i), g.y(j), g.z(k)};
}

}  // namespace

PointwiseNorms pointwise_norms(const FieldState& s, double delta) {
  const GridGeometry& g = s.grid;
  PointwiseNorms out;
  for (double v : s.psi) out.sup_psi = std::max(out.sup_psi, std::abs(v));
  for_interior(g, [&](int i, int j, int k) {
    const Eigen::Vector3d x = position(g, i, j, k);
    const double r = x.norm();
    double d2 = 0.0, good2 = 0.0;
    for (int q = 0; q < s.n; ++q) {
      const Eigen::Vector4d d = centred(g, s.n, s.psi, s.pi, i, j, k, q);
      d2 += d.squaredNorm();
      good2 += good_sq(d, x);
    }
    const double dn = std::sqrt(d2);
    out.sup_dpsi = std::max(out.sup_dpsi, dn);
    out.weighted_dpsi = std::max(
        out.weighted_dpsi,
        std::pow(1.0 + s.t + r, 1.0 - delta) * std::sqrt(1.0 + std::abs(s.t - r)) * dn);
    out.weighted_good =
        std::max(out.weighted_good, std::pow(1.0 + s.t + r, 1.5 - delta) * std::sqrt(good2));
  });
  return out;
}

WeightedNorms weighted_norms(const FieldState& s, int order, double delta) {
  if (order < 0 || order > 2) throw ValidationError("weighted_norms: order must be 0, 1 or 2");
  const GridGeometry& g = s.grid;
  const int n = s.n;
  const std::size_t nodes = g.size();

  // One component at a time: (w, d_t w, d_tt w, d_ttt w).
  auto slice = [&](const std::vector<double>& v, int q) {
    std::vector<double> out(nodes);
    for (std::size_t c = 0; c < nodes; ++c) out[c] = v[c * n + q];
    return out;
  };
  std::vector<double> weight(nodes, 0.0);
  for_interior(g, [&](int i, int j, int k) {
    const double u = s.t - position(g, i, j, k).norm();
    weight[g.index(i, j, k)] = std::pow(1.0 + std::abs(u), -1.0 - delta);
  });
  auto energy = [&](const std::vector<double>& w, const std::vector<double>& wt) {
    double good = 0.0;
    for_interior(g, [&](int i, int j, int k) {
      good += weight[g.index(i, j, k)] *
              good_sq(centred(g, 1, w, wt, i, j, k, 0), position(g, i, j, k));
    });
    return energy_of(g, 1, w, wt) + 0.5 * g.h * g.h * g.h * good;
  };
  // d_t (Gamma w) = Gamma d_t w + [d_t, Gamma] w; the commutator is d_i for boosts, d_t for S.
  auto field = [&](FieldId f, const std::vector<double>& w, const std::vector<double>& wt) {
    return apply_field_grid(f, g, s.t, w, wt);
  };
  auto commutator = [&](FieldId f) -> std::optional<FieldId> {
    switch (f) {
      case FieldId::Otx: return FieldId::Dx;
      case FieldId::Oty: return FieldId::Dy;
      case FieldId::Otz: return FieldId::Dz;
      case FieldId::S: return FieldId::Dt;
      default: return std::nullopt;
    }
  };
  auto add = [](std::vector<double>& a, const std::vector<double>& b, double c) {
    for (std::size_t q = 0; q < a.size(); ++q) a[q] += c * b[q];
  };

  WeightedNorms out;
  out.energy.assign(order + 1, 0.0);
  const std::vector<double> zero(nodes, 0.0);
  for (int q = 0; q < n; ++q) {
    const auto w0 = slice(s.psi, q), w1 = slice(s.pi, q);
    const auto w2 = s.accel_valid ? slice(s.accel, q) : zero;
    std::vector<double> w3 = zero;
    if (s.accel_valid && s.accel_prev.size() == s.accel.size() && s.last_dt > 0.0) {
      const auto prev = slice(s.accel_prev, q);
      for (std::size_t c = 0; c < nodes; ++c) w3[c] = (w2[c] - prev[c]) / s.last_dt;
    }
    const double e0 = energy(w0, w1);
    for (int k = 0; k <= order; ++k) out.energy[k] += e0;
    if (order == 0) continue;
    for (FieldId f1 : all_fields()) {
      const auto a0 = field(f1, w0, w1);
      auto a1 = field(f1, w1, w2);
      std::vector<double> a2;
      if (order == 2) a2 = field(f1, w2, w3);
      if (const auto c = commutator(f1)) {
        add(a1, field(*c, w0, w1), 1.0);
        if (order == 2) add(a2, field(*c, w1, w2), 2.0);
      }
      const double e1 = energy(a0, a1);
      for (int k = 1; k <= order; ++k) out.energy[k] += e1;
      if (order < 2) continue;
      for (FieldId f2 : all_fields()) {
        const auto b0 = field(f2, a0, a1);
        auto b1 = field(f2, a1, a2);
        if (const auto c = commutator(f2)) add(b1, field(*c, a0, a1), 1.0);
        out.energy[2] += energy(b0, b1);
      }
    }
  }
  return out;
}

MultiplierWeight::MultiplierWeight(const LinearizedCoefficients& coeffs, double q0) : q0_(q0) {
  if (!(q0 > 0.0)) throw ValidationError("multiplier: q0 must be positive");
  const int m = 2000;
  const double h = 2.0 / m;
  auto rate = [&](double u) {
    double r = 0.0;
    for (const Eigen::MatrixXd& b : {coeffs.By(u), coeffs.Bz(u)}) {
      if (b.size() == 0) continue;
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(b);
      const double s = svd.singularValues()(0);
      r += s * s;
    }
    return r;
  };
  u_.resize(m + 1);
  q_.resize(m + 1);
  u_[0] = -1.0;
  q_[0] = q0;
  double prev = rate(-1.0);
  for (int k = 1; k <= m; ++k) {
    u_[k] = -1.0 + k * h;
    const double mid = rate(u_[k] - 0.5 * h), cur = rate(u_[k]);
    q_[k] = q_[k - 1] + h / 6.0 * (prev + 4.0 * mid + cur);
    prev = cur;
  }
}

double MultiplierWeight::Q(double u) const {
  if (u <= u_.front()) return q_.front();
  if (u >= u_.back()) return q_.back();
  const double pos = (u - u_.front()) / (u_[1] - u_[0]);
  const std::size_t k = std::min(static_cast<std::size_t>(pos), u_.size() - 2);
  const double s = pos - k;
  return (1.0 - s) * q_[k] + s * q_[k + 1];
}

double MultiplierWeight::g(double u, double v) const {
  return std::sqrt(Q(u)) * std::sqrt(std::max(0.0, v + 1.0));
}

double multiplier_energy(const FieldState& s, const MultiplierWeight& w, const Renormalizer* renorm) {
  const GridGeometry& g = s.grid;
  const int n = s.n;
  double acc = 0.0;
  Eigen::VectorXd dy(n), dz(n), dv(n);
  for (int i = 1; i + 1 < g.nx; ++i) {
    const double u = s.t - g.x(i), v = s.t + g.x(i);
    if (u < -1.0 || u > 1.0) continue;
    const Eigen::MatrixXd A = renorm ? renorm->A(u) : Eigen::MatrixXd::Identity(n, n);
    const double weight = std::exp(-w.g(u, v));
    for (int j = 0; j < g.ny; ++j) {
      if (!g.periodic_yz && (j == 0 || j + 1 == g.ny)) continue;
      for (int k = 0; k < g.nz; ++k) {
        if (!g.periodic_yz && (k == 0 || k + 1 == g.nz)) continue;
        for (int q = 0; q < n; ++q) {
          const Eigen::Vector4d d = centred(g, n, s.psi, s.pi, i, j, k, q);
          dv(q) = d[0] + d[1];
          dy(q) = d[2];
          dz(q) = d[3];
        }
        acc += weight * 0.5 * ((A * dy).squaredNorm() + (A * dz).squaredNorm() +
                               (A * dv).squaredNorm());
      }
    }
  }
  return acc * g.h * g.h * g.h;
}

double mode_amplitude(const FieldState& s, double k_y, int component) {
  const GridGeometry& g = s.grid;
  if (component < 0 || component >= s.n) throw ValidationError("mode_amplitude: bad component");
  double best = 0.0;
  for (int i = 0; i < g.nx; ++i)
    for (int k = 0; k < g.nz; ++k) {
      double c = 0.0, si = 0.0;
      for (int j = 0; j < g.ny; ++j) {
        const double v = s.psi[g.index(i, j, k) * s.n + component];
        c += v * std::cos(k_y * g.y(j));
        si += v * std::sin(k_y * g.y(j));
      }
      best = std::max(best, 2.0 / g.ny * std::hypot(c, si));
    }
  return best;
}

double support_leak(const FieldState& s, double margin) {
  const GridGeometry& g = s.grid;
  const double R = s.t + 1.0 + margin * g.h;
  double inside = 0.0, outside = 0.0;
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j)
      for (int k = 0; k < g.nz; ++k) {
        const double r = g.periodic_yz ? std::abs(g.x(i))
                                       : std::sqrt(g.x(i) * g.x(i) + g.y(j) * g.y(j) +
                                                   g.z(k) * g.z(k));
        for (int q = 0; q < s.n; ++q) {
          const double v = std::abs(s.psi[g.index(i, j, k) * s.n + q]);
          inside = std::max(inside, v);
          if (r > R) outside = std::max(outside, v);
        }
      }
  return inside > 0.0 ? outside / inside : 0.0;
}

std::vector<std::string> DiagnosticsLedger::column_names() const {
  std::vector<std::string> c{"t",     "flat_energy",   "discrete_energy", "sup_psi",
                             "sup_dpsi", "weighted_dpsi", "weighted_good"};
  if (has_gamma) c.push_back("gamma_energy");
  for (int k = 0; k <= weighted_order; ++k) c.push_back("E" + std::to_string(k));
  if (has_multiplier) c.push_back("multiplier_energy");
  if (has_mode) c.push_back("mode_amplitude");
  return c;
}

std::vector<double> DiagnosticsLedger::column(const std::string& name) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (name == "t") out.push_back(r.t);
    else if (name == "flat_energy") out.push_back(r.flat_energy);
    else if (name == "discrete_energy") out.push_back(r.discrete_energy);
    else if (name == "sup_psi") out.push_back(r.norms.sup_psi);
    else if (name == "sup_dpsi") out.push_back(r.norms.sup_dpsi);
    else if (name == "weighted_dpsi") out.push_back(r.norms.weighted_dpsi);
    else if (name == "weighted_good") out.push_back(r.norms.weighted_good);
    else if (name == "gamma_energy") out.push_back(r.gamma_energy);
    else if (name == "multiplier_energy") out.push_back(r.multiplier);
    else if (name == "mode_amplitude") out.push_back(r.mode);
    else if (name.size() == 2 && name[0] == 'E' && std::isdigit(name[1]) &&
             name[1] - '0' < static_cast<int>(r.weighted.size()))
      out.push_back(r.weighted[name[1] - '0']);
    else
      throw ValidationError("ledger: unknown column '" + name + "'");
  }
  return out;
}

EvolveResult evolve(const FdtdModel& model, const GridSpec& spec, FieldState initial,
                    const EvolveOptions& opts) {
  spec.validate();
  if (!(opts.output_interval > 0.0)) throw ValidationError("evolve: output_interval must be > 0");
  if (initial.n != model.size()) throw ValidationError("evolve: component count mismatch");

  EvolveResult res;
  DiagnosticsLedger& led = res.ledger;
  led.delta = opts.delta;
  led.has_gamma = opts.renorm != nullptr;
  led.has_multiplier = opts.multiplier != nullptr;
  led.has_mode = opts.mode_ky > 0.0;
  led.weighted_order = opts.weighted_order;

  // dt divides the output interval; the last step may be shorter to land on t_max.
  const std::size_t every = static_cast<std::size_t>(
      std::ceil(opts.output_interval / spec.dt_max() - 1e-9));
  const double dt = opts.output_interval / static_cast<double>(every);
  std::size_t steps = static_cast<std::size_t>(std::floor(spec.t_max / dt + 1e-9));
  const double tail = spec.t_max - steps * dt;
  if (tail > 1e-9 * dt) ++steps;
  res.dt = dt;
  res.steps = steps;

  FieldState& s = initial;
  const double t0 = s.t;
  auto record = [&]() {
    LedgerEntry e;
    e.t = s.t;
    e.flat_energy = flat_energy(s);
    e.discrete_energy = discrete_energy(s, dt);
    e.norms = pointwise_norms(s, opts.delta);
    if (opts.renorm) e.gamma_energy = gamma_energy(s, *opts.renorm, model.couplings, model.profile);
    if (opts.weighted_order >= 0) e.weighted = weighted_norms(s, opts.weighted_order, opts.delta).energy;
    if (opts.multiplier) e.multiplier = multiplier_energy(s, *opts.multiplier, opts.renorm);
    if (led.has_mode) e.mode = mode_amplitude(s, opts.mode_ky, opts.mode_component);
    led.rows.push_back(std::move(e));
  };
  record();
  for (std::size_t k = 1; k <= steps; ++k) {
    const double t_next = std::min(spec.t_max, t0 + k * dt);
    step_leapfrog(s, model, t_next - s.t);
    s.t = t_next;
    if (k % every == 0 || k == steps) record();
  }
  res.final_state = std::move(s);
  return res;
}

void write_ledger_csv(const std::string& path, const DiagnosticsLedger& ledger) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path);
  out.precision(12);
  const auto names = ledger.column_names();
  std::vector<std::vector<double>> cols;
  for (const auto& n : names) cols.push_back(ledger.column(n));
  for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
  out << '\n';
  for (std::size_t r = 0; r < ledger.rows.size(); ++r) {
    for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << cols[c][r];
    out << '\n';
  }
}

void write_snapshot(const std::string& prefix, const FieldState& s) {
  {
    std::ofstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw ValidationError("cannot open " + prefix + ".bin");
    // x86-64 and aarch64 targets are little endian already.
    bin.write(reinterpret_cast<const char*>(s.psi.data()),
              static_cast<std::streamsize>(s.psi.size() * sizeof(double)));
  }
  nlohmann::json side;
  side["dims"] = {s.grid.nx, s.grid.ny, s.grid.nz};
  side["components"] = s.n;
  std::vector<std::string> names;
  for (int q = 0; q < s.n; ++q) names.push_back("psi_" + std::to_string(q + 1));
  side["component_names"] = names;
  side["spacing"] = s.grid.h;
  side["origin"] = {s.grid.x0, s.grid.y0, s.grid.z0};
  side["periodic_yz"] = s.grid.periodic_yz;
  side["time"] = s.t;
  side["dtype"] = "float64";
  side["endianness"] = "little";
  side["layout"] = "x slowest, then y, then z, components innermost";
  std::ofstream js(prefix + ".json");
  if (!js) throw ValidationError("cannot open " + prefix + ".json");
  js << side.dump(2) << '\n';
}

}  // namespace nullwave
