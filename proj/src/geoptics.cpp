#include "nullwave/geoptics.hpp"

#include "nullwave/errors.hpp"
#include "nullwave/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

namespace nullwave {

double NullDirection::minkowski_norm() const {
  return L(0) * L(0) - L.tail<3>().squaredNorm();
}

double NullDirection::pairing() const {
  return L(0) * Lbar(0) - L.tail<3>().dot(Lbar.tail<3>());
}

NullDirection null_vector(double u1, double u2, double T) {
  const double d = u2 - u1;
  if (!(d > 0.0)) throw ValidationError("null_vector: need u2 > u1");
  if (!(T > d)) throw ValidationError("null_vector: need T > u2 - u1");
  NullDirection out;
  out.u1 = u1;
  out.u2 = u2;
  out.T = T;
  const double r = d / T;
  out.L << 1.0, 1.0 - r, -std::sqrt(std::max(0.0, 2.0 * r - r * r)), 0.0;
  out.Lbar << out.L(0), -out.L(1), -out.L(2), -out.L(3);
  return out;
}

Eigen::Vector3d RayBundle::base_point(int i, int j, int k) const {
  return {-dir.u1 + spacing * (i - (na - 1) / 2.0), spacing * (j - (nb - 1) / 2.0),
          spacing * (k - (nc - 1) / 2.0)};
}

double RayBundle::u_prime(int i, double t) const {
  const double x0 = base_point(i, 0, 0)(0);
  return t - (x0 + dir.L(1) * t);
}

double default_frequency(double T) { return std::min(std::exp(0.1 * std::sqrt(T)), 1e6); }

namespace {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;

// Fourth-order stencils in t (offsets relative to the node, weights / 12).
struct Stencil {
  int first;
  std::array<double, 6> w;
  int len;
};

Stencil d1_stencil(int s, int last) {
  if (s >= 2 && s <= last - 2) return {-2, {1, -8, 0, 8, -1, 0}, 5};
  if (s == 0) return {0, {-25, 48, -36, 16, -3, 0}, 5};
  if (s == 1) return {-1, {-3, -10, 18, -6, 1, 0}, 5};
  if (s == last - 1) return {-3, {-1, 6, -18, 10, 3, 0}, 5};
  return {-4, {3, -16, 36, -48, 25, 0}, 5};
}

Stencil d2_stencil(int s, int last) {
  if (s >= 2 && s <= last - 2) return {-2, {-1, 16, -30, 16, -1, 0}, 5};
  if (s == 0) return {0, {45, -154, 214, -156, 61, -10}, 6};
  if (s == 1) return {-1, {10, -15, -4, 14, -6, 1}, 6};
  if (s == last - 1) return {-4, {1, -6, 14, -4, -15, 10}, 6};
  return {-5, {-10, 61, -156, 214, -154, 45}, 6};
}

constexpr std::array<double, 5> kD1 = {1, -8, 0, 8, -1};
constexpr std::array<double, 5> kD2 = {-1, 16, -30, 16, -1};

struct Layout {
  int na, nb, nc, n, nt;
  std::size_t st, sa, sb, sc;
  std::array<bool, 3> active;
  std::array<int, 3> count;
  std::array<std::size_t, 3> stride;

  explicit Layout(const RayBundle& b, int n_) : na(b.na), nb(b.nb), nc(b.nc), n(n_) {
    nt = b.steps + 1;
    sc = n;
    sb = sc * nc;
    sa = sb * nb;
    st = sa * na;
    count = {na, nb, nc};
    stride = {sa, sb, sc};
    for (int a = 0; a < 3; ++a) active[a] = count[a] > 1;
  }
  std::size_t size() const { return st * nt; }
  bool inside(int i, int j, int k, int margin) const {
    const std::array<int, 3> idx = {i, j, k};
    for (int a = 0; a < 3; ++a)
      if (active[a] && (idx[a] < margin || idx[a] > count[a] - 1 - margin)) return false;
    return true;
  }
};

// G(t) = -1/2 (L_y B_y + L_z B_z) at u'(i, t) on the half-step grid t = m dt / 2.
std::vector<std::vector<Eigen::MatrixXd>> transport_matrices(const LinearizedCoefficients& coeffs,
                                                             const RayBundle& b) {
  std::vector<std::vector<Eigen::MatrixXd>> out(b.na);
  const double ly = b.dir.L(2), lz = b.dir.L(3);
  parallel_for(static_cast<std::size_t>(b.na), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      auto& col = out[i];
      col.resize(2 * static_cast<std::size_t>(b.steps) + 1);
      for (std::size_t m = 0; m < col.size(); ++m) {
        const double u = b.u_prime(static_cast<int>(i), 0.5 * b.dt() * m);
        Eigen::MatrixXd g = ly * coeffs.By(u);
        if (lz != 0.0) g += lz * coeffs.Bz(u);
        col[m] = -0.5 * g;
      }
    }
  });
  return out;
}

// S = box phi - B_y d_y phi - B_z d_z phi in ray coordinates, on nodes at
// `margin + 2`; zero elsewhere.
std::vector<cplx> box_operator(const std::vector<cplx>& phi, const Layout& lay,
                               const RayBundle& b, const LinearizedCoefficients& coeffs,
                               int margin) {
  std::vector<cplx> out(lay.size(), cplx(0.0));
  const int m2 = margin + 2;
  const double d = b.spacing, dt = b.dt();
  const std::array<double, 3> l = {b.dir.L(1), b.dir.L(2), b.dir.L(3)};
  const int n = lay.n, last = b.steps;
  const std::size_t nodes = static_cast<std::size_t>(lay.na) * lay.nb * lay.nc;

  parallel_for(nodes, [&](std::size_t lo, std::size_t hi) {
    std::vector<cplx> g(static_cast<std::size_t>(lay.nt) * n);
    std::vector<cplx> dy(n), dz(n);
    for (std::size_t node = lo; node < hi; ++node) {
      const int i = static_cast<int>(node / (lay.nb * lay.nc));
      const int j = static_cast<int>((node / lay.nc) % lay.nb);
      const int k = static_cast<int>(node % lay.nc);
      if (!lay.inside(i, j, k, m2)) continue;
      const std::size_t base = i * lay.sa + j * lay.sb + k * lay.sc;

      for (int s = 0; s < lay.nt; ++s) {
        const cplx* p = phi.data() + s * lay.st + base;
        cplx* o = out.data() + s * lay.st + base;
        const double u = b.u_prime(i, s * dt);
        for (int c = 0; c < n; ++c) {
          std::array<cplx, 3> grad{};
          cplx spatial(0.0);
          for (int a = 0; a < 3; ++a) {
            if (!lay.active[a]) continue;
            const std::ptrdiff_t sa = static_cast<std::ptrdiff_t>(lay.stride[a]);
            cplx d1(0.0), d2(0.0);
            for (int q = 0; q < 5; ++q) {
              d1 += kD1[q] * p[(q - 2) * sa + c];
              d2 += kD2[q] * p[(q - 2) * sa + c];
            }
            grad[a] = d1 / (12.0 * d);
            spatial += (l[a] * l[a] - 1.0) * d2 / (12.0 * d * d);
          }
          for (int a = 0; a < 3; ++a)
            for (int a2 = a + 1; a2 < 3; ++a2) {
              if (!lay.active[a] || !lay.active[a2] || l[a] * l[a2] == 0.0) continue;
              const std::ptrdiff_t s1 = static_cast<std::ptrdiff_t>(lay.stride[a]);
              const std::ptrdiff_t s2 = static_cast<std::ptrdiff_t>(lay.stride[a2]);
              cplx mix(0.0);
              for (int q1 = 0; q1 < 5; ++q1)
                for (int q2 = 0; q2 < 5; ++q2)
                  if (kD1[q1] != 0.0 && kD1[q2] != 0.0)
                    mix += kD1[q1] * kD1[q2] * p[(q1 - 2) * s1 + (q2 - 2) * s2 + c];
              spatial += 2.0 * l[a] * l[a2] * mix / (144.0 * d * d);
            }
          g[static_cast<std::size_t>(s) * n + c] = l[0] * grad[0] + l[1] * grad[1] + l[2] * grad[2];
          dy[c] = grad[1];
          dz[c] = grad[2];
          o[c] = spatial;
        }
        cplx* o2 = out.data() + s * lay.st + base;
        if (lay.active[1]) {
          const Eigen::MatrixXd by = coeffs.By(u);
          for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) o2[r] -= by(r, c) * dy[c];
        }
        if (lay.active[2]) {
          const Eigen::MatrixXd bz = coeffs.Bz(u);
          for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) o2[r] -= bz(r, c) * dz[c];
        }
      }

      for (int s = 0; s < lay.nt; ++s) {
        const Stencil s1 = d1_stencil(s, last), s2 = d2_stencil(s, last);
        cplx* o = out.data() + s * lay.st + base;
        for (int c = 0; c < n; ++c) {
          cplx tt(0.0), tg(0.0);
          for (int q = 0; q < s2.len; ++q)
            tt += s2.w[q] * phi[(s + s2.first + q) * lay.st + base + c];
          for (int q = 0; q < s1.len; ++q)
            tg += s1.w[q] * g[static_cast<std::size_t>(s + s1.first + q) * n + c];
          o[c] += tt / (12.0 * dt * dt) - 2.0 * tg / (12.0 * dt);
        }
      }
    }
  });
  return out;
}

void check_bundle(const RayBundle& b, int n) {
  if (n < 1) throw ValidationError("transport: empty system");
  if (b.steps < 6) throw ValidationError("transport: need at least 6 t steps");
  if (!(b.spacing > 0.0)) throw ValidationError("transport: spacing must be positive");
  if (b.na < 1 || b.nb < 1 || b.nc < 1) throw ValidationError("transport: empty lattice");
}

void require_width(const RayBundle& b, int margin, const char* what) {
  for (int c : {b.na, b.nb, b.nc})
    if (c > 1 && c < 2 * margin + 1)
      throw ValidationError(std::string(what) + ": lattice too narrow for the requested order");
}

}  // namespace

GeoOpticsSolution transport_solve(const LinearizedCoefficients& coeffs, const RayBundle& bundle,
                                  int M, const InitialProfile& phi0) {
  const int n = coeffs.n;
  check_bundle(bundle, n);
  if (M < 0) throw ValidationError("transport: M must be >= 0");
  require_width(bundle, 2 * M, "transport");

  GeoOpticsSolution sol;
  sol.bundle = bundle;
  sol.M = M;
  sol.n = n;
  sol.mu = default_frequency(bundle.dir.T);
  const Layout lay(bundle, n);
  const auto G = transport_matrices(coeffs, bundle);
  const double dt = bundle.dt();
  const int steps = bundle.steps;
  const std::size_t nodes = bundle.rays();

  for (int level = 0; level <= M; ++level) {
    const int margin = 2 * level;
    std::vector<cplx> forcing;
    if (level > 0) forcing = box_operator(sol.phi[level - 1], lay, bundle, coeffs, margin - 2);
    std::vector<cplx> phi(lay.size(), cplx(0.0));

    parallel_for(nodes, [&](std::size_t lo, std::size_t hi) {
      VectorXcd y(n), k1(n), k2(n), k3(n), k4(n), f0(n), fh(n), f1(n);
      for (std::size_t node = lo; node < hi; ++node) {
        const int i = static_cast<int>(node / (lay.nb * lay.nc));
        const int j = static_cast<int>((node / lay.nc) % lay.nb);
        const int k = static_cast<int>(node % lay.nc);
        if (!lay.inside(i, j, k, margin)) continue;
        const std::size_t base = i * lay.sa + j * lay.sb + k * lay.sc;
        if (level == 0) {
          const Eigen::Vector3d x0 = bundle.base_point(i, j, k);
          y = phi0(x0(0), x0(1), x0(2));
          if (y.size() != n) throw ValidationError("transport: initial profile has wrong size");
        } else {
          y.setZero();
        }
        for (int c = 0; c < n; ++c) phi[base + c] = y(c);

        auto F = [&](int s, VectorXcd& out) {
          for (int c = 0; c < n; ++c) out(c) = -0.5 * forcing[s * lay.st + base + c];
        };
        auto Fhalf = [&](int s, VectorXcd& out) {
          int first;
          std::array<double, 4> w;
          if (s == 0) {
            first = 0;
            w = {0.3125, 0.9375, -0.3125, 0.0625};
          } else if (s == steps - 1) {
            first = steps - 3;
            w = {0.0625, -0.3125, 0.9375, 0.3125};
          } else {
            first = s - 1;
            w = {-0.0625, 0.5625, 0.5625, -0.0625};
          }
          for (int c = 0; c < n; ++c) {
            cplx acc(0.0);
            for (int q = 0; q < 4; ++q) acc += w[q] * forcing[(first + q) * lay.st + base + c];
            out(c) = -0.5 * acc;
          }
        };

        const auto& Gi = G[i];
        for (int s = 0; s < steps; ++s) {
          if (level > 0) {
            F(s, f0);
            Fhalf(s, fh);
            F(s + 1, f1);
          } else {
            f0.setZero();
            fh.setZero();
            f1.setZero();
          }
          k1 = Gi[2 * s].cast<cplx>() * y + f0;
          k2 = Gi[2 * s + 1].cast<cplx>() * (y + 0.5 * dt * k1) + fh;
          k3 = Gi[2 * s + 1].cast<cplx>() * (y + 0.5 * dt * k2) + fh;
          k4 = Gi[2 * s + 2].cast<cplx>() * (y + dt * k3) + f1;
          y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
          for (int c = 0; c < n; ++c) phi[(s + 1) * lay.st + base + c] = y(c);
        }
        if (!y.allFinite()) throw NumericalError("transport: non-finite amplitude", bundle.dir.T);
      }
    });
    sol.phi.push_back(std::move(phi));
    sol.margin.push_back(margin);
  }
  return sol;
}

double ansatz_residual(const GeoOpticsSolution& sol, const LinearizedCoefficients& coeffs,
                       double mu) {
  if (!(mu > 0.0)) throw ValidationError("ansatz_residual: mu must be positive");
  const RayBundle& b = sol.bundle;
  const int n = sol.n, M = sol.M;
  require_width(b, 2 * M + 2, "ansatz_residual");
  const Layout lay(b, n);
  const int region = 2 * M + 2;

  std::vector<std::vector<cplx>> S;
  for (int j = 0; j <= M; ++j) S.push_back(box_operator(sol.phi[j], lay, b, coeffs, 2 * j));
  const auto G = transport_matrices(coeffs, b);

  const cplx imu(0.0, mu);
  std::vector<cplx> pw(M + 2);  // (i mu)^{1 - j}
  for (int j = 0; j <= M + 1; ++j) pw[j] = std::pow(imu, 1 - j);

  const std::size_t nodes = b.rays();
  std::vector<double> num(nodes, 0.0), den(nodes, 0.0);
  const double dt = b.dt();
  const int last = b.steps;
  parallel_for(nodes, [&](std::size_t lo, std::size_t hi) {
    VectorXcd phi(n), dphi(n), r(n), big(n);
    for (std::size_t node = lo; node < hi; ++node) {
      const int i = static_cast<int>(node / (lay.nb * lay.nc));
      const int j = static_cast<int>((node / lay.nc) % lay.nb);
      const int k = static_cast<int>(node % lay.nc);
      if (!lay.inside(i, j, k, region)) continue;
      const std::size_t base = i * lay.sa + j * lay.sb + k * lay.sc;
      for (int s = 0; s < lay.nt; ++s) {
        // -1/2 (L_y B_y + L_z B_z), so the transport operator is 2 d_t - 2 G.
        const Eigen::MatrixXcd Gs = G[i][2 * s].cast<cplx>();
        const Stencil st = d1_stencil(s, last);
        r.setZero();
        big.setZero();
        for (int lvl = 0; lvl <= M; ++lvl) {
          const auto& p = sol.phi[lvl];
          for (int c = 0; c < n; ++c) {
            phi(c) = p[s * lay.st + base + c];
            cplx acc(0.0);
            for (int q = 0; q < st.len; ++q) acc += st.w[q] * p[(s + st.first + q) * lay.st + base + c];
            dphi(c) = acc / (12.0 * dt);
          }
          VectorXcd defect = 2.0 * dphi - 2.0 * Gs * phi;
          if (lvl > 0)
            for (int c = 0; c < n; ++c) defect(c) += S[lvl - 1][s * lay.st + base + c];
          r += pw[lvl] * defect;
          big += pw[lvl + 1] * phi;
        }
        for (int c = 0; c < n; ++c) r(c) += pw[M + 1] * S[M][s * lay.st + base + c];
        num[node] = std::max(num[node], r.norm());
        den[node] = std::max(den[node], big.norm());
      }
    }
  });
  const double top = *std::max_element(num.begin(), num.end());
  const double bottom = *std::max_element(den.begin(), den.end());
  if (!(bottom > 0.0)) throw NumericalError("ansatz_residual: ansatz vanishes", 0.0);
  return top / bottom;
}

double measure_remainder(GeoOpticsSolution& sol, const LinearizedCoefficients& coeffs) {
  sol.remainder_proxy = ansatz_residual(sol, coeffs, sol.mu);
  return sol.remainder_proxy;
}

std::vector<VectorXcd> comparison_ode_solve(const MatrixFn& P, double T, double minus_Ly,
                                            const VectorXcd& R0, int steps) {
  if (steps < 1 || !(T > 0.0)) throw ValidationError("comparison_ode_solve: bad grid");
  const double dt = T / steps;
  auto rhs = [&](double t, const VectorXcd& r) -> VectorXcd {
    return 0.5 * minus_Ly * (P(t / T).cast<cplx>() * r);
  };
  std::vector<VectorXcd> out;
  out.reserve(steps + 1);
  VectorXcd y = R0;
  out.push_back(y);
  for (int s = 0; s < steps; ++s) {
    const double t = s * dt;
    const VectorXcd k1 = rhs(t, y);
    const VectorXcd k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1);
    const VectorXcd k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2);
    const VectorXcd k4 = rhs(t + dt, y + dt * k3);
    y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    out.push_back(y);
  }
  return out;
}

namespace {

// Top real part and the distance to the next eigenvalue that is not its conjugate.
std::pair<double, double> top_and_gap(const Eigen::MatrixXd& m) {
  if (m.rows() == 1) return {m(0, 0), std::numeric_limits<double>::infinity()};
  Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
  const Eigen::VectorXcd ev = es.eigenvalues();
  int top = 0;
  for (int i = 1; i < ev.size(); ++i)
    if (ev(i).real() > ev(top).real()) top = i;
  double gap = std::numeric_limits<double>::infinity();
  bool paired = ev(top).imag() != 0.0;
  for (int i = 0; i < ev.size(); ++i) {
    if (i == top) continue;
    if (paired && std::abs(ev(i) - std::conj(ev(top))) <= 1e-12 * (1.0 + std::abs(ev(top)))) {
      paired = false;
      continue;
    }
    gap = std::min(gap, ev(top).real() - ev(i).real());
  }
  return {ev(top).real(), gap};
}

}  // namespace

ComparisonReport comparison_ode_check(const MatrixFn& P, const NullDirection& dir, int samples,
                                      std::uint64_t seed, double eps, int steps) {
  if (samples < 0 || steps < 10) throw ValidationError("comparison_ode_check: bad sizes");
  const Eigen::MatrixXd P0 = P(0.0);
  const int n = static_cast<int>(P0.rows());
  const double T = dir.T, minus_ly = -dir.L(2);

  ComparisonReport rep;
  rep.rate_scale = std::sqrt((dir.u2 - dir.u1) * T / 2.0);

  // Cumulative int_0^a lambda on the step grid (Simpson per step).
  std::vector<double> lam(2 * steps + 1);
  double gap = std::numeric_limits<double>::infinity();
  for (int m = 0; m <= 2 * steps; ++m) {
    const auto [top, g] = top_and_gap(P(static_cast<double>(m) / (2 * steps)));
    lam[m] = top;
    gap = std::min(gap, g);
  }
  std::vector<double> cum(steps + 1, 0.0);
  const double h = 1.0 / steps;
  for (int s = 0; s < steps; ++s)
    cum[s + 1] = cum[s] + h / 6.0 * (lam[2 * s] + 4.0 * lam[2 * s + 1] + lam[2 * s + 2]);
  rep.integral_lambda = cum[steps];
  rep.min_gap = gap;
  rep.inconclusive = gap < 1e-3;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  rep.worst_upper_margin = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < samples; ++k) {
    VectorXcd r0(n);
    for (int c = 0; c < n; ++c) r0(c) = cplx(normal(rng), normal(rng));
    r0.normalize();
    const auto path = comparison_ode_solve(P, T, minus_ly, r0, steps);
    for (int s = 0; s <= steps; ++s) {
      const double margin = std::log(path[s].norm()) - rep.rate_scale * (cum[s] + eps);
      rep.worst_upper_margin = std::max(rep.worst_upper_margin, margin);
    }
  }
  rep.upper_ok = samples == 0 || rep.worst_upper_margin <= 0.0;

  VectorXcd r0(n);
  if (n == 1) {
    r0(0) = 1.0;
  } else {
    Eigen::EigenSolver<Eigen::MatrixXd> es(P0);
    int top = 0;
    for (int i = 1; i < n; ++i)
      if (es.eigenvalues()(i).real() > es.eigenvalues()(top).real()) top = i;
    r0 = es.eigenvectors().col(top);
    r0.normalize();
  }
  const auto path = comparison_ode_solve(P, T, minus_ly, r0, steps);
  rep.achieved_log_growth = std::log(path.back().norm());
  rep.required_log_growth = rep.rate_scale * (rep.integral_lambda - eps);
  rep.lower_ok = rep.achieved_log_growth >= rep.required_log_growth;
  return rep;
}

void write_ray_csv(const std::string& path, const GeoOpticsSolution& sol, int i, int j, int k) {
  const RayBundle& b = sol.bundle;
  if (i < 0 || i >= b.na || j < 0 || j >= b.nb || k < 0 || k >= b.nc)
    throw ValidationError("write_ray_csv: ray index out of range");
  std::ofstream out(path);
  if (!out) throw ValidationError("write_ray_csv: cannot open " + path);
  out.precision(12);
  out << "t,u_prime";
  for (int lvl = 0; lvl <= sol.M; ++lvl)
    for (int c = 0; c < sol.n; ++c)
      out << ",re_phi" << lvl << '_' << c + 1 << ",im_phi" << lvl << '_' << c + 1;
  out << '\n';
  for (int s = 0; s <= b.steps; ++s) {
    const double t = s * b.dt();
    out << t << ',' << b.u_prime(i, t);
    for (int lvl = 0; lvl <= sol.M; ++lvl)
      for (int c = 0; c < sol.n; ++c) {
        const cplx v = sol.phi[lvl][sol.offset(s, i, j, k) + c];
        out << ',' << v.real() << ',' << v.imag();
      }
    out << '\n';
  }
}

}  // namespace nullwave
