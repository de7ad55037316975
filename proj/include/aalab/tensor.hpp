#pragma once

// Multilinear maps (R^m)^q -> R^n stored as n * m^q flat components,
// row r * m^q + (a_1 ... a_q read in base m, a_q fastest).

#include <cmath>
#include <vector>

#include "aalab/linalg.hpp"

namespace aalab {

inline int ipow(int b, int e) {
  int r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

/// Digits of a flat slot index in base m, most significant first.
inline std::vector<int> slot_digits(int flat, int m, int q) {
  std::vector<int> d(static_cast<std::size_t>(q));
  for (int s = q - 1; s >= 0; --s) {
    d[static_cast<std::size_t>(s)] = flat % m;
    flat /= m;
  }
  return d;
}

inline int slot_flat(const std::vector<int>& d, int m) {
  int f = 0;
  for (int v : d) f = f * m + v;
  return f;
}

/// Output map L (n' x n) applied on the left, input map R (m x m') on every
/// slot: T'(x_1..x_q) = L T(R x_1, ..., R x_q).
inline Vec transform_tensor(const Vec& t, int n, int m, int q, const Mat& left, const Mat& right) {
  const int mp = static_cast<int>(right.cols());
  Vec cur = t;
  int rows = n;
  // Contract slots one at a time.
  for (int s = 0; s < q; ++s) {
    const int before = ipow(mp, s);
    const int after = ipow(m, q - 1 - s);
    Vec next = Vec::Zero(rows * before * mp * after);
    for (int r = 0; r < rows; ++r)
      for (int b = 0; b < before; ++b)
        for (int a = 0; a < m; ++a)
          for (int c = 0; c < after; ++c) {
            const double v = cur[((r * before + b) * m + a) * after + c];
            if (v == 0.0) continue;
            for (int ap = 0; ap < mp; ++ap) next[((r * before + b) * mp + ap) * after + c] += v * right(a, ap);
          }
    cur = std::move(next);
  }
  const int slots = ipow(mp, q);
  Vec out = Vec::Zero(left.rows() * slots);
  for (int i = 0; i < left.rows(); ++i)
    for (int r = 0; r < rows; ++r) {
      const double l = left(i, r);
      if (l == 0.0) continue;
      out.segment(i * slots, slots) += l * cur.segment(r * slots, slots);
    }
  return out;
}

/// T evaluated on all slots except `skip`, as an n x m matrix in that slot.
inline Mat tensor_partial(const Vec& t, int n, int m, int q, const std::vector<Vec>& x, int skip) {
  const int slots = ipow(m, q);
  Mat out = Mat::Zero(n, m);
  for (int f = 0; f < slots; ++f) {
    const auto d = slot_digits(f, m, q);
    double w = 1.0;
    for (int s = 0; s < q && w != 0.0; ++s)
      if (s != skip) w *= x[static_cast<std::size_t>(s)][d[static_cast<std::size_t>(s)]];
    if (w == 0.0) continue;
    for (int r = 0; r < n; ++r) out(r, d[static_cast<std::size_t>(skip)]) += w * t[r * slots + f];
  }
  return out;
}

/// sup |T(x_1..x_q)| over unit x_i (Euclidean on both sides), by alternating
/// maximisation from the unfolding singular vectors and every basis vector.
inline double tensor_operator_norm(const Vec& t, int n, int m, int q) {
  if (q == 0) return t.norm();
  if (t.norm() == 0.0) return 0.0;
  if (q == 1) {
    Mat a(n, m);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < m; ++c) a(r, c) = t[r * m + c];
    return spectral_norm(a);
  }
  std::vector<std::vector<Vec>> starts;
  {
    std::vector<Vec> init;
    for (int s = 0; s < q; ++s) {
      // Unfolding along slot s: (n * m^{q-1}) x m.
      const int slots = ipow(m, q);
      Mat u = Mat::Zero(n * ipow(m, q - 1), m);
      for (int r = 0; r < n; ++r)
        for (int f = 0; f < slots; ++f) {
          auto d = slot_digits(f, m, q);
          const int a = d[static_cast<std::size_t>(s)];
          d.erase(d.begin() + s);
          u(r * ipow(m, q - 1) + slot_flat(d, m), a) = t[r * slots + f];
        }
      Eigen::JacobiSVD<Mat> svd(u, Eigen::ComputeThinV);
      init.push_back(svd.matrixV().col(0));
    }
    starts.push_back(init);
  }
  for (int a = 0; a < m; ++a) {
    Vec e = Vec::Zero(m);
    e[a] = 1.0;
    starts.emplace_back(static_cast<std::size_t>(q), e);
  }
  double best = 0.0;
  for (auto x : starts) {
    double val = 0.0;
    for (int it = 0; it < 100; ++it) {
      double prev = val;
      for (int s = 0; s < q; ++s) {
        const Mat p = tensor_partial(t, n, m, q, x, s);
        Eigen::SelfAdjointEigenSolver<Mat> es(p.transpose() * p);
        val = std::sqrt(std::max(0.0, es.eigenvalues()(m - 1)));
        if (val == 0.0) break;
        x[static_cast<std::size_t>(s)] = es.eigenvectors().col(m - 1);
      }
      if (val == 0.0 || std::abs(val - prev) <= 1e-14 * val) break;
    }
    best = std::max(best, val);
  }
  return best;
}

/// Largest |T_{..a..b..} - T_{..b..a..}| over the first two slots.
inline double slot_symmetry_residual(const Vec& t, int n, int m, int q) {
  if (q < 2) return 0.0;
  const int slots = ipow(m, q);
  double r = 0.0;
  for (int row = 0; row < n; ++row)
    for (int f = 0; f < slots; ++f) {
      auto d = slot_digits(f, m, q);
      std::swap(d[0], d[1]);
      r = std::max(r, std::abs(t[row * slots + f] - t[row * slots + slot_flat(d, m)]));
    }
  return r;
}

}  // namespace aalab
