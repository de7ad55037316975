#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "aalab/error.hpp"

namespace aalab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Axis-aligned box [lo, hi] in R^n.
struct Box {
  Vec lo;
  Vec hi;

  int dim() const { return static_cast<int>(lo.size()); }

  bool contains(const Vec& p, double margin = 0.0) const {
    for (int a = 0; a < dim(); ++a) {
      if (p[a] < lo[a] + margin || p[a] > hi[a] - margin) return false;
    }
    return true;
  }

  /// Euclidean distance from an interior point to the boundary (0 outside).
  double boundary_distance(const Vec& p) const {
    double d = std::numeric_limits<double>::infinity();
    for (int a = 0; a < dim(); ++a) d = std::min({d, p[a] - lo[a], hi[a] - p[a]});
    return std::max(d, 0.0);
  }

  double diameter() const { return (hi - lo).norm(); }

  static Box cube(int n, double half) {
    return Box{Vec::Constant(n, -half), Vec::Constant(n, half)};
  }
  static Box around(const Vec& c, double half) {
    return Box{c.array() - half, c.array() + half};
  }
};

/// Largest singular value. The SVD is iterative (Jacobi sweeps to machine
/// precision), which is tighter than the 1e-12 the norm needs.
inline double spectral_norm(const Mat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues()(0);
}

inline double smallest_singular_value(const Mat& a) {
  Eigen::JacobiSVD<Mat> svd(a);
  const auto& s = svd.singularValues();
  return s(s.size() - 1);
}

/// S^t for symmetric positive definite S.
inline Mat spd_power(const Mat& s, double t) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (s + s.transpose()));
  Vec ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) ev[i] = std::pow(ev[i], t);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline Mat spd_sqrt(const Mat& s) { return spd_power(s, 0.5); }
inline Mat spd_inv_sqrt(const Mat& s) { return spd_power(s, -0.5); }

inline double min_eigenvalue(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (s + s.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double symmetry_residual(const Mat& s) { return (s - s.transpose()).norm(); }

/// Orthogonal matrix whose first columns span the columns of `t` (full column
/// rank assumed) and whose determinant is +1.
inline Mat aligned_rotation(const Mat& t) {
  const int n = static_cast<int>(t.rows());
  const int m = static_cast<int>(t.cols());
  Eigen::HouseholderQR<Mat> qr(t);
  Mat q = qr.householderQ() * Mat::Identity(n, n);
  // Make the tangential block orientation match t.
  Mat r = q.leftCols(m).transpose() * t;
  for (int j = 0; j < m; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  if (q.determinant() < 0) q.col(n - 1) *= -1.0;
  return q;
}

/// Euclidean-orthonormal basis of the orthogonal complement of span(t).
inline Mat orthogonal_complement(const Mat& t) {
  const int n = static_cast<int>(t.rows());
  const int m = static_cast<int>(t.cols());
  return aligned_rotation(t).rightCols(n - m);
}

}  // namespace aalab
