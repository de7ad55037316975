#pragma once

// Analytic metric fixtures with exact derivative callbacks.

#include <cstdint>
#include <random>
#include <vector>

#include "aalab/ambient.hpp"

namespace aalab::metrics {

inline MetricField identity(int n, const Box& box, double h = 1e-3) {
  return MetricField(
      box, h, [n](const Vec&) { return Mat(Mat::Identity(n, n)); }, 4,
      [n](const Vec&) { return std::vector<Mat>(static_cast<std::size_t>(n), Mat::Zero(n, n)); }, "identity");
}

inline MetricField constant(const Mat& m, const Box& box, double h = 1e-3) {
  const int n = static_cast<int>(m.rows());
  return MetricField(
      box, h, [m](const Vec&) { return m; }, 4,
      [n](const Vec&) { return std::vector<Mat>(static_cast<std::size_t>(n), Mat::Zero(n, n)); }, "constant");
}

inline MetricField diagonal(const Vec& d, const Box& box, double h = 1e-3) {
  return constant(Mat(d.asDiagonal()), box, h);
}

/// diag(1, x_1^2) on x_1 > 0: the flat metric in polar coordinates.
inline MetricField polar(const Box& box, double h = 1e-3) {
  return MetricField(
      box, h,
      [](const Vec& p) {
        Mat m = Mat::Identity(2, 2);
        m(1, 1) = p[0] * p[0];
        return m;
      },
      4,
      [](const Vec& p) {
        std::vector<Mat> d(2, Mat::Zero(2, 2));
        d[0](1, 1) = 2.0 * p[0];
        return d;
      },
      "polar");
}

/// Metric induced on the disc |x| < R by the upper hemisphere of radius R
/// viewed as the graph x -> sqrt(R^2 - |x|^2): M = I + x x^T / (R^2 - |x|^2).
inline MetricField sphere_graph(int n, double radius, const Box& box, double h = 1e-3) {
  const double r2 = radius * radius;
  return MetricField(
      box, h,
      [n, r2](const Vec& x) {
        const double s = r2 - x.squaredNorm();
        if (s <= 0) fail(ErrorKind::DomainExit, "sphere-graph metric evaluated outside the open disc");
        return Mat(Mat::Identity(n, n) + x * x.transpose() / s);
      },
      4,
      [n, r2](const Vec& x) {
        const double s = r2 - x.squaredNorm();
        std::vector<Mat> d;
        for (int k = 0; k < n; ++k) {
          Vec e = Vec::Zero(n);
          e[k] = 1.0;
          d.push_back((e * x.transpose() + x * e.transpose()) / s + x * x.transpose() * (2.0 * x[k]) / (s * s));
        }
        return d;
      },
      "sphere-graph");
}

/// Conformal metric exp(2 u(x)) I with u(x) = a * sum_i sin(w x_i).
inline MetricField conformal_wave(int n, double amplitude, double freq, const Box& box, double h = 1e-3) {
  return MetricField(
      box, h,
      [n, amplitude, freq](const Vec& x) {
        double u = 0.0;
        for (int i = 0; i < n; ++i) u += amplitude * std::sin(freq * x[i]);
        return Mat(std::exp(2.0 * u) * Mat::Identity(n, n));
      },
      4,
      [n, amplitude, freq](const Vec& x) {
        double u = 0.0;
        for (int i = 0; i < n; ++i) u += amplitude * std::sin(freq * x[i]);
        std::vector<Mat> d;
        for (int k = 0; k < n; ++k) {
          const double du = amplitude * freq * std::cos(freq * x[k]);
          d.push_back(2.0 * du * std::exp(2.0 * u) * Mat::Identity(n, n));
        }
        return d;
      },
      "conformal-wave");
}

/// Random analytic SPD field M(x) = B(x) B(x)^T + c I with trigonometric
/// entries B_ij(x) = a_ij + b_ij sin(w_ij . x + phi_ij).
inline MetricField random_analytic(int n, std::uint64_t seed, const Box& box, double h = 1e-3,
                                   double amplitude = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  struct Entry {
    double a, b, phase;
    Vec w;
  };
  std::vector<Entry> entries;
  for (int i = 0; i < n * n; ++i) {
    Entry e{0.4 * u(rng) + (i % (n + 1) == 0 ? 1.0 : 0.0), amplitude * u(rng), 3.0 * u(rng), Vec(n)};
    for (int k = 0; k < n; ++k) e.w[k] = 1.5 * u(rng);
    entries.push_back(e);
  }
  const double floor = 0.3;
  auto bmat = [n, entries](const Vec& x) {
    Mat b(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const auto& e = entries[static_cast<std::size_t>(i * n + j)];
        b(i, j) = e.a + e.b * std::sin(e.w.dot(x) + e.phase);
      }
    return b;
  };
  return MetricField(
      box, h,
      [n, bmat, floor](const Vec& x) {
        const Mat b = bmat(x);
        return Mat(b * b.transpose() + floor * Mat::Identity(n, n));
      },
      4,
      [n, bmat, entries](const Vec& x) {
        const Mat b = bmat(x);
        std::vector<Mat> d;
        for (int k = 0; k < n; ++k) {
          Mat db(n, n);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
              const auto& e = entries[static_cast<std::size_t>(i * n + j)];
              db(i, j) = e.b * e.w[k] * std::cos(e.w.dot(x) + e.phase);
            }
          d.push_back(db * b.transpose() + b * db.transpose());
        }
        return d;
      },
      "random-analytic");
}

/// Random symmetric positive definite matrix with eigenvalues in [lo, hi].
inline Mat random_spd(int n, std::mt19937_64& rng, double lo = 0.25, double hi = 4.0) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(lo, hi);
  Mat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
  Eigen::HouseholderQR<Mat> qr(a);
  const Mat q = qr.householderQ() * Mat::Identity(n, n);
  Vec ev(n);
  for (int i = 0; i < n; ++i) ev[i] = u(rng);
  return q * ev.asDiagonal() * q.transpose();
}

inline Mat random_invertible(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  for (;;) {
    Mat a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = g(rng);
    if (smallest_singular_value(a) > 0.2) return a;
  }
}

}  // namespace aalab::metrics
