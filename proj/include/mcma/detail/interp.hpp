// Bilinear interpolation helpers shared by flow resizing, warping and decoding.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace mcma::detail {

/// Integer neighbours and fractional weight of a coordinate clamped to
/// [0, size - 1].
struct Tap {
  int i0 = 0;
  int i1 = 0;
  double t = 0.0;
};

inline Tap make_tap(double coord, int size) {
  const double clamped = std::clamp(coord, 0.0, static_cast<double>(size - 1));
  Tap tap;
  tap.i0 = static_cast<int>(std::floor(clamped));
  tap.i1 = std::min(tap.i0 + 1, size - 1);
  tap.t = clamped - tap.i0;
  return tap;
}

/// Source coordinate of target cell `dst` under half-pixel-centre mapping.
inline double source_coord(int dst, int src_size, int dst_size) {
  return (dst + 0.5) * static_cast<double>(src_size) / dst_size - 0.5;
}

// a + t (b - a): exact at t = 0 and on constant inputs, and never leaves
// [min(a, b), max(a, b)] once rounded back to float.
inline double lerp(double a, double b, double t) { return a + t * (b - a); }

/// Samples a row-major plane at (x.t, y.t) from the precomputed taps.
template <typename T>
inline double sample(const T* plane, int width, const Tap& tx, const Tap& ty) {
  const T* row0 = plane + static_cast<std::size_t>(ty.i0) * width;
  const T* row1 = plane + static_cast<std::size_t>(ty.i1) * width;
  const double top = lerp(row0[tx.i0], row0[tx.i1], tx.t);
  const double bottom = lerp(row1[tx.i0], row1[tx.i1], tx.t);
  return lerp(top, bottom, ty.t);
}

}  // namespace mcma::detail
