#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "aalab/grid.hpp"
#include "aalab/linalg.hpp"

namespace aalab {

enum class DerivativeMode { Analytic, FiniteDifference };

using PointFn = std::function<Vec(const Vec&)>;
using MatrixFn = std::function<Mat(const Vec&)>;
using MatrixDerivFn = std::function<std::vector<Mat>(const Vec&)>;

/// Riemannian metric on a box of R^n, given by its SPD matrix field M(p).
/// Derivatives come from an analytic callback when available, otherwise from
/// centered differences with step equal to the resolution h.
class MetricField {
 public:
  MetricField() = default;
  MetricField(Box domain, double resolution, MatrixFn eval, int order = 2, MatrixDerivFn deriv = {},
              std::string label = "metric")
      : domain_(std::move(domain)),
        h_(resolution),
        eval_(std::move(eval)),
        deriv_(std::move(deriv)),
        order_(order),
        label_(std::move(label)) {}

  int dim() const { return domain_.dim(); }
  const Box& domain() const { return domain_; }
  double resolution() const { return h_; }
  int order() const { return order_; }
  const std::string& label() const { return label_; }
  DerivativeMode mode() const { return deriv_ ? DerivativeMode::Analytic : DerivativeMode::FiniteDifference; }

  Mat operator()(const Vec& p) const { return eval_(p); }

  /// Margin a point must keep from the boundary for derivatives to exist.
  double stencil_margin() const { return mode() == DerivativeMode::Analytic ? 0.0 : h_; }

  bool admits_derivative(const Vec& p) const { return domain_.contains(p, stencil_margin()); }

  /// Partial derivatives dM/dx_k, k = 0..n-1.
  std::vector<Mat> derivative(const Vec& p) const {
    if (!admits_derivative(p)) {
      fail(ErrorKind::BoundaryProximity, "derivative stencil of '" + label_ + "' leaves the domain");
    }
    if (deriv_) return deriv_(p);
    std::vector<Mat> d;
    d.reserve(static_cast<std::size_t>(dim()));
    for (int k = 0; k < dim(); ++k) {
      Vec e = Vec::Zero(dim());
      e[k] = h_;
      d.push_back((eval_(p + e) - eval_(p - e)) / (2.0 * h_));
    }
    return d;
  }

  /// Same field with the analytic derivative dropped (finite differences only).
  MetricField finite_difference_only(double resolution) const {
    return MetricField(domain_, resolution, eval_, order_, {}, label_ + "[fd]");
  }

  MetricField with_order(int k) const {
    MetricField m = *this;
    m.order_ = k;
    return m;
  }

 private:
  Box domain_;
  double h_ = 1e-3;
  MatrixFn eval_;
  MatrixDerivFn deriv_;
  int order_ = 2;
  std::string label_;
};

/// Christoffel symbols of the second kind, Gamma^i_{jk}.
struct Christoffel {
  int n = 0;
  std::vector<double> data;

  double operator()(int i, int j, int k) const { return data[static_cast<std::size_t>((i * n + j) * n + k)]; }
  double& at(int i, int j, int k) { return data[static_cast<std::size_t>((i * n + j) * n + k)]; }

  /// Gamma(v, w)^i = Gamma^i_{jk} v^j w^k.
  Vec contract(const Vec& v, const Vec& w) const {
    Vec out = Vec::Zero(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) out[i] += (*this)(i, j, k) * v[j] * w[k];
    return out;
  }

  /// Connection matrix C^i_j = Gamma^i_{jk} v^k.
  Mat connection_matrix(const Vec& v) const {
    Mat c = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) c(i, j) += (*this)(i, j, k) * v[k];
    return c;
  }

  double max_abs() const {
    double m = 0.0;
    for (double x : data) m = std::max(m, std::abs(x));
    return m;
  }
};

/// Levi-Civita symbols from the metric and its first derivatives.
inline Christoffel christoffel_from(const Mat& m, const std::vector<Mat>& dm) {
  const int n = static_cast<int>(m.rows());
  const Mat inv = m.inverse();
  Christoffel g{n, std::vector<double>(static_cast<std::size_t>(n * n * n), 0.0)};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = j; k < n; ++k) {
        double s = 0.0;
        for (int l = 0; l < n; ++l) {
          s += inv(i, l) * (dm[static_cast<std::size_t>(j)](l, k) + dm[static_cast<std::size_t>(k)](l, j) -
                            dm[static_cast<std::size_t>(l)](j, k));
        }
        g.at(i, j, k) = 0.5 * s;
        g.at(i, k, j) = 0.5 * s;
      }
  return g;
}

inline Christoffel christoffel(const MetricField& metric, const Vec& p) {
  return christoffel_from(metric(p), metric.derivative(p));
}

// ---------------------------------------------------------------------------
// Geodesics and the exponential map

struct GeodesicResult {
  std::vector<Vec> path;
  Vec endpoint;
  bool exited = false;
  int steps = 0;
  /// D Exp_p(0) with respect to a g-orthonormal frame of T_p (frame M(p)^{-1/2}).
  Mat jacobian;
  /// Measured envelope of |D^2 Exp_p(0)(w,w)| over unit frame directions.
  double second_derivative_norm = 0.0;
};

namespace detail {

struct GeodesicRun {
  std::vector<Vec> path;
  bool exited = false;
};

inline GeodesicRun rk4_geodesic(const MetricField& metric, const Vec& p, const Vec& v, int steps) {
  const int n = metric.dim();
  const double dt = 1.0 / steps;
  GeodesicRun run;
  run.path.reserve(static_cast<std::size_t>(steps + 1));
  run.path.push_back(p);
  Vec x = p;
  Vec u = v;
  auto accel = [&](const Vec& xx, const Vec& uu, bool& ok) -> Vec {
    if (!metric.admits_derivative(xx)) {
      ok = false;
      return Vec::Zero(n);
    }
    return -christoffel(metric, xx).contract(uu, uu);
  };
  for (int s = 0; s < steps; ++s) {
    bool ok = true;
    const Vec k1x = u;
    const Vec k1u = accel(x, u, ok);
    const Vec k2x = u + 0.5 * dt * k1u;
    const Vec k2u = accel(x + 0.5 * dt * k1x, k2x, ok);
    const Vec k3x = u + 0.5 * dt * k2u;
    const Vec k3u = accel(x + 0.5 * dt * k2x, k3x, ok);
    const Vec k4x = u + dt * k3u;
    const Vec k4u = accel(x + dt * k3x, k4x, ok);
    if (!ok) {
      run.exited = true;
      return run;
    }
    x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    u += dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
    if (!metric.domain().contains(x)) {
      run.exited = true;
      return run;
    }
    run.path.push_back(x);
  }
  return run;
}

}  // namespace detail

inline constexpr double kGeodesicTolerance = 1e-8;

/// Geodesic endpoint Exp_p(v): fixed-step RK4, step count doubled until the
/// endpoint moves by less than 1e-8.
inline GeodesicResult geodesic(const MetricField& metric, const Vec& p, const Vec& v, int steps = 16) {
  if (steps < 16) fail(ErrorKind::ParamOutOfRange, "geodesic integration needs at least 16 steps");
  if (!metric.domain().contains(p)) fail(ErrorKind::DomainExit, "geodesic start point outside the domain");
  auto coarse = detail::rk4_geodesic(metric, p, v, steps);
  GeodesicResult out;
  for (int level = 0; level < 14; ++level) {
    auto fine = detail::rk4_geodesic(metric, p, v, 2 * steps);
    if (coarse.exited || fine.exited) {
      out.path = std::move(fine.path);
      out.endpoint = out.path.back();
      out.exited = true;
      out.steps = 2 * steps;
      return out;
    }
    const double moved = (fine.path.back() - coarse.path.back()).norm();
    steps *= 2;
    coarse = std::move(fine);
    if (moved < kGeodesicTolerance) {
      out.path = std::move(coarse.path);
      out.endpoint = out.path.back();
      out.steps = steps;
      return out;
    }
  }
  fail(ErrorKind::NonConvergence, "geodesic integrator did not settle under step doubling");
}

/// Exponential map with the frame derivative D Exp_p(0) and a second
/// derivative envelope for the exponential-chart bounds.
inline GeodesicResult exp_map(const MetricField& metric, const Vec& p, const Vec& v, int steps = 16) {
  GeodesicResult out = geodesic(metric, p, v, steps);
  const int n = metric.dim();
  const Mat frame = spd_inv_sqrt(metric(p));
  constexpr double t = 1e-3;
  out.jacobian = Mat(n, n);
  auto shoot = [&](const Vec& w) -> Vec {
    auto g = geodesic(metric, p, frame * w, steps);
    if (g.exited) fail(ErrorKind::DomainExit, "derivative probe geodesic left the domain");
    return g.endpoint;
  };
  for (int i = 0; i < n; ++i) {
    Vec e = Vec::Zero(n);
    e[i] = 1.0;
    const Vec plus = shoot(t * e);
    const Vec minus = shoot(-t * e);
    out.jacobian.col(i) = (plus - minus) / (2.0 * t);
    out.second_derivative_norm = std::max(out.second_derivative_norm, (plus + minus - 2.0 * p).norm() / (t * t));
    for (int j = i + 1; j < n; ++j) {
      for (double sgn : {1.0, -1.0}) {
        Vec w = e;
        w[j] = sgn;
        w.normalize();
        const Vec a = shoot(t * w);
        const Vec b = shoot(-t * w);
        out.second_derivative_norm = std::max(out.second_derivative_norm, (a + b - 2.0 * p).norm() / (t * t));
      }
    }
  }
  return out;
}

/// Riemannian length of a sampled path using midpoint metric evaluations.
inline double path_length(const MetricField& metric, const std::vector<Vec>& path) {
  double len = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const Vec d = path[i] - path[i - 1];
    const Vec mid = 0.5 * (path[i] + path[i - 1]);
    len += std::sqrt(d.dot(metric(mid) * d));
  }
  return len;
}

// ---------------------------------------------------------------------------
// Metric statistics and C^k norms

/// Sup-norm statistics on a region: |M|, |M^-1| (spectral) and an upper bound
/// sqrt(sum_k |d_k M|^2) for sup over unit X of |D_X M|.
struct MetricStats {
  double norm = 0.0;
  double inv_norm = 0.0;
  double deriv_norm = 0.0;
};

inline MetricStats metric_stats(const MetricField& metric, const std::vector<Vec>& points) {
  MetricStats s;
  for (const Vec& p : points) {
    const Mat m = metric(p);
    s.norm = std::max(s.norm, spectral_norm(m));
    s.inv_norm = std::max(s.inv_norm, spectral_norm(m.inverse()));
    if (metric.admits_derivative(p)) {
      double acc = 0.0;
      for (const Mat& d : metric.derivative(p)) acc += std::pow(spectral_norm(d), 2);
      s.deriv_norm = std::max(s.deriv_norm, std::sqrt(acc));
    }
  }
  return s;
}

inline std::vector<Vec> grid_points(const Grid& g) {
  std::vector<Vec> pts;
  pts.reserve(static_cast<std::size_t>(g.size()));
  for (int f = 0; f < g.size(); ++f) pts.push_back(g.point(f));
  return pts;
}

/// Sum over orders 0..k of the sup (Frobenius) norm of D^i of a sampled
/// matrix field. The sum convention matches the C^{k,alpha} norm.
inline double sampled_ck_norm(const Grid& g, const Mat& flat_values, int k) {
  double total = 0.0;
  Mat cur = flat_values;
  for (int i = 0; i <= k; ++i) {
    double sup = 0.0;
    for (int c = 0; c < cur.cols(); ++c) sup = std::max(sup, cur.col(c).norm());
    total += sup;
    if (i < k) cur = grid_gradient(g, cur);
  }
  return total;
}

inline Mat flatten_samples(const Grid& g, const std::function<Mat(const Vec&)>& field) {
  Mat out;
  for (int f = 0; f < g.size(); ++f) {
    const Mat m = field(g.point(f));
    if (out.size() == 0) out.resize(m.size(), g.size());
    out.col(f) = Eigen::Map<const Vec>(m.data(), m.size());
  }
  return out;
}

/// |M|_{C^k} and |M^{-1}|_{C^k} over a sample grid.
inline std::pair<double, double> metric_ck_norms(const MetricField& metric, const Grid& g, int k) {
  const Mat vals = flatten_samples(g, [&](const Vec& p) { return metric(p); });
  const Mat inv = flatten_samples(g, [&](const Vec& p) { return Mat(metric(p).inverse()); });
  return {sampled_ck_norm(g, vals, k), sampled_ck_norm(g, inv, k)};
}

// ---------------------------------------------------------------------------
// Levi-Civita lift

/// Lift Tg of g to TU. In coordinates (x, v) with the adapted frame
/// E = [[I, 0], [-C(v), I]] (horizontal lift, vertical fibre) Tg is
/// diag(M, M); the coordinate matrix is E^{-T} diag(M, M) E^{-1}.
class LiftedMetric {
 public:
  LiftedMetric(MetricField base, double velocity_bound) : base_(std::move(base)), vmax_(velocity_bound) {
    const int n = base_.dim();
    Box b{Vec(2 * n), Vec(2 * n)};
    b.lo << base_.domain().lo, Vec::Constant(n, -vmax_);
    b.hi << base_.domain().hi, Vec::Constant(n, vmax_);
    const MetricField base_copy = base_;
    lifted_ = MetricField(
        b, base_.resolution(),
        [base_copy](const Vec& z) {
          const int nn = base_copy.dim();
          return coordinate_matrix_of(base_copy, z.head(nn), z.tail(nn));
        },
        std::max(base_.order() - 1, 1), {}, "lift(" + base_.label() + ")");
  }

  const MetricField& base() const { return base_; }
  const MetricField& lifted() const { return lifted_; }
  double velocity_bound() const { return vmax_; }

  static Mat coordinate_matrix_of(const MetricField& base, const Vec& p, const Vec& v) {
    const int n = base.dim();
    const Mat m = base(p);
    Mat c = Mat::Zero(n, n);
    if (base.admits_derivative(p)) c = christoffel(base, p).connection_matrix(v);
    Mat tg(2 * n, 2 * n);
    tg.topLeftCorner(n, n) = m + c.transpose() * m * c;
    tg.topRightCorner(n, n) = c.transpose() * m;
    tg.bottomLeftCorner(n, n) = m * c;
    tg.bottomRightCorner(n, n) = m;
    return tg;
  }

  Mat coordinate_matrix(const Vec& p, const Vec& v) const { return coordinate_matrix_of(base_, p, v); }

  /// Columns: horizontal lifts of e_1..e_n, then vertical e_1..e_n.
  Mat adapted_frame(const Vec& p, const Vec& v) const {
    const int n = base_.dim();
    Mat e = Mat::Identity(2 * n, 2 * n);
    e.bottomLeftCorner(n, n) = -christoffel(base_, p).connection_matrix(v);
    return e;
  }

  /// Tg expressed in the adapted frame.
  Mat in_adapted_frame(const Vec& p, const Vec& v) const {
    const Mat e = adapted_frame(p, v);
    return e.transpose() * coordinate_matrix(p, v) * e;
  }

  double cross_block_residual(const Vec& p, const Vec& v) const {
    const int n = base_.dim();
    return spectral_norm(in_adapted_frame(p, v).topRightCorner(n, n));
  }

  /// |Tg|_{C^{k-1}} + |Tg^{-1}|_{C^{k-1}} sampled on a grid over U x [-V, V]^n.
  double ck_bound(int per_axis = 5) const {
    const int order = std::max(base_.order() - 1, 1);
    Box b = lifted_.domain();
    const double m = 2.0 * base_.resolution();
    for (int a = 0; a < base_.dim(); ++a) {
      b.lo[a] += m;
      b.hi[a] -= m;
    }
    const Grid g = Grid::uniform(b, per_axis);
    auto [a, inv] = metric_ck_norms(lifted_, g, std::min(order, 1));
    return a + inv;
  }

 private:
  MetricField base_;
  MetricField lifted_;
  double vmax_;
};

inline LiftedMetric levi_civita_lift(const MetricField& metric, double velocity_bound = 1.0) {
  if (metric.order() < 2) fail(ErrorKind::OrderExhausted, "lifting needs a metric of order at least 2");
  return LiftedMetric(metric, velocity_bound);
}

// ---------------------------------------------------------------------------
// Isometry derivative bounds

/// A map evaluated at sample points; the Jacobian callback is optional
/// (centered differences otherwise).
struct SampledMap {
  PointFn map;
  MatrixFn jacobian;
  std::vector<Vec> samples;
  double fd_step = 1e-5;

  Mat jacobian_at(const Vec& p) const {
    if (jacobian) return jacobian(p);
    const Vec f0 = map(p);
    Mat j(f0.size(), p.size());
    for (int a = 0; a < p.size(); ++a) {
      Vec e = Vec::Zero(p.size());
      e[a] = fd_step;
      j.col(a) = (map(p + e) - map(p - e)) / (2.0 * fd_step);
    }
    return j;
  }

  /// D^2 phi(p)[v, .] as an n x n matrix.
  Mat second_derivative_along(const Vec& p, const Vec& v) const {
    const double s = 1e-4;
    return (jacobian_at(p + s * v) - jacobian_at(p - s * v)) / (2.0 * s);
  }
};

struct IsometryBoundReport {
  int samples = 0;
  double max_dphi = 0.0;
  double max_bound = 0.0;
  double min_slack = std::numeric_limits<double>::infinity();  // bound - |D phi|
  int violations = 0;
  int equality_cases = 0;
  double max_pullback_residual = 0.0;
  bool second_order_checked = false;
  double max_d2phi = 0.0;
  double max_second_envelope = 0.0;
  int second_violations = 0;
};

/// Checks |D phi| <= |N^{-1/2}| |M^{1/2}| at every sample of an isometry
/// phi^*h = g; for k >= 2 also checks |D^2 phi(v, .)| against the same
/// inequality applied to the lifted metrics, since T phi is an isometry of
/// the Levi-Civita lifts.
inline IsometryBoundReport isometry_derivative_bound(const MetricField& source, const MetricField& target,
                                                      const SampledMap& phi, int k = 1,
                                                      double tol_pullback = 1e-8, double equality_tol = 1e-9) {
  IsometryBoundReport r;
  const int n = source.dim();
  std::vector<Vec> dirs;
  if (k >= 2) {
    for (int i = 0; i < n; ++i) {
      Vec e = Vec::Zero(n);
      e[i] = 1.0;
      dirs.push_back(e);
      for (int j = i + 1; j < n; ++j) {
        for (double sgn : {1.0, -1.0}) {
          Vec w = e;
          w[j] = sgn;
          dirs.push_back(w.normalized());
        }
      }
    }
  }
  for (const Vec& p : phi.samples) {
    const Mat d = phi.jacobian_at(p);
    const Vec q = phi.map(p);
    const Mat m = source(p);
    const Mat nq = target(q);
    const double res = (d.transpose() * nq * d - m).norm();
    r.max_pullback_residual = std::max(r.max_pullback_residual, res);
    if (res > tol_pullback * std::max(1.0, m.norm())) {
      fail(ErrorKind::PullbackResidual, "map is not an isometry to tolerance (residual " + std::to_string(res) + ")");
    }
    const double dn = spectral_norm(d);
    const double bound = spectral_norm(spd_inv_sqrt(nq)) * spectral_norm(spd_sqrt(m));
    r.max_dphi = std::max(r.max_dphi, dn);
    r.max_bound = std::max(r.max_bound, bound);
    const double slack = bound - dn;
    r.min_slack = std::min(r.min_slack, slack);
    if (slack < -equality_tol * bound) ++r.violations;
    if (std::abs(slack) <= equality_tol * bound) ++r.equality_cases;
    if (k >= 2) {
      r.second_order_checked = true;
      for (const Vec& v : dirs) {
        const Mat d2 = phi.second_derivative_along(p, v);
        const double lhs = spectral_norm(d2);
        const Mat tm = LiftedMetric::coordinate_matrix_of(source, p, v);
        const Mat tn = LiftedMetric::coordinate_matrix_of(target, q, d * v);
        const double env = spectral_norm(spd_inv_sqrt(tn)) * spectral_norm(spd_sqrt(tm));
        r.max_d2phi = std::max(r.max_d2phi, lhs);
        r.max_second_envelope = std::max(r.max_second_envelope, env);
        if (lhs > env * (1.0 + 1e-6) + 1e-8) ++r.second_violations;
      }
    }
    ++r.samples;
  }
  return r;
}

}  // namespace aalab
