#pragma once

#include <cstddef>

namespace nullwave {

/// Uniform Cartesian node lattice; node (i, j, k) sits at origin + h (i, j, k).
/// With periodic_yz the y and z axes wrap around (the last node is not repeated).
struct GridGeometry {
  int nx = 1, ny = 1, nz = 1;
  double x0 = 0.0, y0 = 0.0, z0 = 0.0;
  double h = 1.0;
  bool periodic_yz = false;

  std::size_t size() const { return static_cast<std::size_t>(nx) * ny * nz; }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * ny + j) * nz + k;
  }
  double x(int i) const { return x0 + h * i; }
  double y(int j) const { return y0 + h * j; }
  double z(int k) const { return z0 + h * k; }
  int wrap_y(int j) const { return periodic_yz ? (j + ny) % ny : j; }
  int wrap_z(int k) const { return periodic_yz ? (k + nz) % nz : k; }
  /// True if the 7-point stencil around (i, j, k) stays on the grid.
  bool interior(int i, int j, int k) const {
    if (i < 1 || i > nx - 2) return false;
    if (periodic_yz) return true;
    return j >= 1 && j <= ny - 2 && k >= 1 && k <= nz - 2;
  }
};

}  // namespace nullwave
