#pragma once

#include <cmath>
#include <vector>

#include "aalab/linalg.hpp"

namespace aalab {

/// Uniform tensor-product grid over a box. Flat indices are row-major: the
/// last axis varies fastest.
struct Grid {
  Box box;
  std::vector<int> counts;

  Grid() = default;
  Grid(Box b, std::vector<int> c) : box(std::move(b)), counts(std::move(c)) {}

  /// Grid with the same number of samples on every axis.
  static Grid uniform(Box b, int per_axis) {
    std::vector<int> c(static_cast<std::size_t>(b.dim()), per_axis);
    return Grid(std::move(b), std::move(c));
  }

  /// Grid whose spacing is as close as possible to h on every axis.
  static Grid with_spacing(Box b, double h) {
    std::vector<int> c;
    for (int a = 0; a < b.dim(); ++a) {
      c.push_back(std::max(2, static_cast<int>(std::lround((b.hi[a] - b.lo[a]) / h)) + 1));
    }
    return Grid(std::move(b), std::move(c));
  }

  int dim() const { return static_cast<int>(counts.size()); }

  int size() const {
    int n = 1;
    for (int c : counts) n *= c;
    return n;
  }

  double spacing(int axis) const {
    return (box.hi[axis] - box.lo[axis]) / static_cast<double>(counts[static_cast<std::size_t>(axis)] - 1);
  }

  double max_spacing() const {
    double h = 0.0;
    for (int a = 0; a < dim(); ++a) h = std::max(h, spacing(a));
    return h;
  }

  int stride(int axis) const {
    int s = 1;
    for (int a = dim() - 1; a > axis; --a) s *= counts[static_cast<std::size_t>(a)];
    return s;
  }

  std::vector<int> multi_index(int flat) const {
    std::vector<int> idx(counts.size());
    for (int a = dim() - 1; a >= 0; --a) {
      const int c = counts[static_cast<std::size_t>(a)];
      idx[static_cast<std::size_t>(a)] = flat % c;
      flat /= c;
    }
    return idx;
  }

  int flat_index(const std::vector<int>& idx) const {
    int f = 0;
    for (int a = 0; a < dim(); ++a) f = f * counts[static_cast<std::size_t>(a)] + idx[static_cast<std::size_t>(a)];
    return f;
  }

  Vec point(int flat) const {
    const auto idx = multi_index(flat);
    Vec p(dim());
    for (int a = 0; a < dim(); ++a) p[a] = box.lo[a] + spacing(a) * idx[static_cast<std::size_t>(a)];
    return p;
  }

  /// Number of index layers between a point and the nearest grid face.
  int layer(int flat) const {
    const auto idx = multi_index(flat);
    int l = 1 << 30;
    for (int a = 0; a < dim(); ++a) {
      l = std::min({l, idx[static_cast<std::size_t>(a)], counts[static_cast<std::size_t>(a)] - 1 - idx[static_cast<std::size_t>(a)]});
    }
    return l;
  }

  /// Nearest grid node to p (clamped to the box).
  int nearest(const Vec& p) const {
    std::vector<int> idx(counts.size());
    for (int a = 0; a < dim(); ++a) {
      const double t = (p[a] - box.lo[a]) / spacing(a);
      idx[static_cast<std::size_t>(a)] = std::clamp(static_cast<int>(std::lround(t)), 0, counts[static_cast<std::size_t>(a)] - 1);
    }
    return flat_index(idx);
  }
};

/// Second-order finite difference of sampled values (one column per grid
/// node) along `axis`: centered inside, one-sided three-point on the faces.
inline Mat grid_diff(const Grid& g, const Mat& values, int axis) {
  const int c = g.counts[static_cast<std::size_t>(axis)];
  if (c < 3) fail(ErrorKind::StencilOverflow, "need at least 3 samples along an axis to differentiate");
  const int s = g.stride(axis);
  const double h = g.spacing(axis);
  Mat out(values.rows(), values.cols());
  for (int f = 0; f < g.size(); ++f) {
    const int i = (f / s) % c;
    if (i == 0) {
      out.col(f) = (-3.0 * values.col(f) + 4.0 * values.col(f + s) - values.col(f + 2 * s)) / (2.0 * h);
    } else if (i == c - 1) {
      out.col(f) = (3.0 * values.col(f) - 4.0 * values.col(f - s) + values.col(f - 2 * s)) / (2.0 * h);
    } else {
      out.col(f) = (values.col(f + s) - values.col(f - s)) / (2.0 * h);
    }
  }
  return out;
}

/// Jacobian-style derivative: for values with d rows returns d*m rows, row
/// index r*m + a holding the derivative of row r along axis a.
inline Mat grid_gradient(const Grid& g, const Mat& values) {
  const int m = g.dim();
  Mat out(values.rows() * m, values.cols());
  for (int a = 0; a < m; ++a) {
    const Mat d = grid_diff(g, values, a);
    for (int r = 0; r < values.rows(); ++r) out.row(r * m + a) = d.row(r);
  }
  return out;
}

/// Multilinear interpolation of sampled values at an arbitrary point of the
/// box (clamped).
inline Vec grid_interpolate(const Grid& g, const Mat& values, const Vec& p) {
  const int m = g.dim();
  std::vector<int> base(static_cast<std::size_t>(m));
  std::vector<double> frac(static_cast<std::size_t>(m));
  for (int a = 0; a < m; ++a) {
    const int c = g.counts[static_cast<std::size_t>(a)];
    double t = (p[a] - g.box.lo[a]) / g.spacing(a);
    t = std::clamp(t, 0.0, static_cast<double>(c - 1));
    int i = std::min(static_cast<int>(std::floor(t)), c - 2);
    base[static_cast<std::size_t>(a)] = i;
    frac[static_cast<std::size_t>(a)] = t - i;
  }
  Vec out = Vec::Zero(values.rows());
  for (int corner = 0; corner < (1 << m); ++corner) {
    double w = 1.0;
    std::vector<int> idx(base);
    for (int a = 0; a < m; ++a) {
      const bool up = (corner >> a) & 1;
      idx[static_cast<std::size_t>(a)] += up ? 1 : 0;
      w *= up ? frac[static_cast<std::size_t>(a)] : 1.0 - frac[static_cast<std::size_t>(a)];
    }
    if (w != 0.0) out += w * values.col(g.flat_index(idx));
  }
  return out;
}

}  // namespace aalab
