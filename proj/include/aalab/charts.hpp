#pragma once

// Normalised charts, transition bounds and optimal atlases of a metric
// given on a coordinate box.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "aalab/ambient.hpp"
#include "aalab/graphrep.hpp"
#include "aalab/holder.hpp"

namespace aalab {

/// A chart x : U -> V sampled through its inverse on the cube [-rho, rho]^n
/// (which contains the closed ball B_rho(0)).
struct NormalizedChart {
  std::string kind = "exp";
  MetricField base;  // metric in the coordinates the inverse lands in
  Vec center;        // p, with x(p) = 0
  double rho = 0.0;
  int order = 2;
  Mat frame;         // linear normalisation at the centre
  Grid grid;
  Mat points;        // x^-1 at the nodes
  Mat metric;        // A = (x^-1)^* g at the nodes, column-major n*n
  double gamma = 0.0;          // max of the two norms below
  double metric_norm = 0.0;    // |A|_{C^{k-1}}
  double inverse_norm = 0.0;   // |A^-1|_{C^{k-1}}
  std::function<Vec(const Vec&)> inverse;
  std::function<Mat(const Vec&)> inverse_jacobian;
  std::vector<Mat> node_jacobians;  // inverse_jacobian at the nodes

  int dim() const { return grid.dim(); }

  Mat metric_at(int node) const {
    const int n = dim();
    return Eigen::Map<const Mat>(metric.col(node).data(), n, n);
  }

  /// A at an arbitrary chart point, from a fresh evaluation of x^-1.
  Mat metric_at_point(const Vec& y) const {
    const Mat j = inverse_jacobian(y);
    return j.transpose() * base(inverse(y)) * j;
  }

  /// Interpolated A (used by the sampled chart distance).
  Mat interpolated_metric(const Vec& y) const {
    const int n = dim();
    const Vec v = grid_interpolate(grid, metric, y);
    return Eigen::Map<const Mat>(v.data(), n, n);
  }

  /// Solve x^-1(z) = X. Start from the linearisation at the nearest node,
  /// take chord steps with that Jacobian and fall back to damped Newton when
  /// they stop contracting.
  std::optional<Vec> chart_of(const Vec& x) const {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int f = 0; f < points.cols(); ++f) {
      const double d = (points.col(f) - x).squaredNorm();
      if (d < bd) {
        bd = d;
        best = f;
      }
    }
    Mat j = node_jacobians.empty() ? inverse_jacobian(grid.point(best)) : node_jacobians[static_cast<std::size_t>(best)];
    Eigen::FullPivLU<Mat> lu(j);
    Vec z = grid.point(best) + lu.solve(x - points.col(best));
    const Box dom = Box::cube(dim(), rho * 1.5);
    const double tol = 1e-12 * std::max(1.0, x.norm());
    auto residual = [&](const Vec& w) -> std::optional<Vec> {
      if (!dom.contains(w)) return std::nullopt;
      try {
        return inverse(w) - x;
      } catch (const LabError&) {
        return std::nullopt;
      }
    };
    auto r = residual(z);
    if (!r) return std::nullopt;
    for (int it = 0; it < 60; ++it) {
      const double rn = r->norm();
      if (rn <= tol) return z;
      const Vec trial = z - lu.solve(*r);
      auto rt = residual(trial);
      if (rt && rt->norm() < 0.5 * rn) {
        z = trial;
        r = rt;
        continue;
      }
      lu.compute(inverse_jacobian(z));
      const Vec step = lu.solve(*r);
      bool ok = false;
      double lam = 1.0;
      for (int bt = 0; bt < 10 && !ok; ++bt, lam *= 0.5) {
        auto rb = residual(z - lam * step);
        if (rb && rb->norm() < rn) {
          z -= lam * step;
          r = rb;
          ok = true;
        }
      }
      if (!ok) return rn <= 1e-9 * std::max(1.0, x.norm()) ? std::optional<Vec>(z) : std::nullopt;
    }
    return std::nullopt;
  }
};

struct ChartOptions {
  int order = 2;
  int per_axis = 13;
  std::optional<double> gamma_cap;
  std::optional<Mat> rotation;  // extra orthogonal factor in the normalisation
};

namespace detail {

// Fixed-step RK4 shot; a smooth function of (p, v) for a fixed step count.
inline std::optional<Vec> shoot(const MetricField& m, const Vec& p, const Vec& v, int steps) {
  auto run = rk4_geodesic(m, p, v, steps);
  if (run.exited) return std::nullopt;
  return run.path.back();
}

inline double frob_ck(const Grid& g, const Mat& flat, int k) { return sampled_ck_norm(g, flat, k); }

inline void finish_chart(NormalizedChart& c, const ChartOptions& opt) {
  const int n = c.dim();
  const int nodes = c.grid.size();
  c.metric.resize(n * n, nodes);
  Mat inv(n * n, nodes);
  c.node_jacobians.clear();
  for (int f = 0; f < nodes; ++f) {
    const Vec y = c.grid.point(f);
    c.node_jacobians.push_back(c.inverse_jacobian(y));
    const Mat& j = c.node_jacobians.back();
    const Mat a = j.transpose() * c.base(c.points.col(f)) * j;
    c.metric.col(f) = Eigen::Map<const Vec>(a.data(), n * n);
    const Mat ai = a.inverse();
    inv.col(f) = Eigen::Map<const Vec>(ai.data(), n * n);
  }
  c.metric_norm = frob_ck(c.grid, c.metric, c.order - 1);
  c.inverse_norm = frob_ck(c.grid, inv, c.order - 1);
  c.gamma = std::max(c.metric_norm, c.inverse_norm);
  if (opt.gamma_cap && c.gamma > *opt.gamma_cap)
    fail(ErrorKind::BudgetExceeded, "measured Gamma " + std::to_string(c.gamma) + " exceeds the cap");
}

}  // namespace detail

/// Exponential coordinates at p followed by the normalisation M(p)^{-1/2}:
/// x^-1(y) = Exp_p(M(p)^{-1/2} Q y).
inline NormalizedChart build_normalized_chart(const MetricField& m, const Vec& p, double rho,
                                              const ChartOptions& opt = {}) {
  if (!(rho > 0.0)) fail(ErrorKind::Domain, "chart radius must be positive");
  if (opt.order < 1) fail(ErrorKind::OrderExhausted, "chart order must be at least 1");
  const int n = m.dim();
  if (!m.admits_derivative(p)) fail(ErrorKind::DomainOverflow, "chart centre too close to the domain boundary");
  NormalizedChart c;
  c.kind = "exp";
  c.base = m;
  c.center = p;
  c.rho = rho;
  c.order = opt.order;
  c.frame = spd_inv_sqrt(m(p));
  if (opt.rotation) c.frame = c.frame * *opt.rotation;
  c.grid = Grid::uniform(Box::cube(n, rho), opt.per_axis);

  // One step count for every shot: double until the farthest corner settles.
  const Vec corner = c.frame * Vec::Constant(n, rho);
  int steps = 16;
  auto prev = detail::shoot(m, p, corner, steps);
  if (!prev) fail(ErrorKind::DomainOverflow, "exponential chart leaves the metric domain");
  for (;;) {
    auto next = detail::shoot(m, p, corner, 2 * steps);
    if (!next) fail(ErrorKind::DomainOverflow, "exponential chart leaves the metric domain");
    steps *= 2;
    const double moved = (*next - *prev).norm();
    prev = next;
    if (moved < 1e-10 || steps >= 1024) break;
  }
  const Mat frame = c.frame;
  c.inverse = [m, p, frame, steps](const Vec& y) {
    auto x = detail::shoot(m, p, frame * y, steps);
    if (!x) fail(ErrorKind::DomainOverflow, "exponential chart leaves the metric domain");
    return *x;
  };
  auto inv = c.inverse;
  c.inverse_jacobian = [inv, n](const Vec& y) {
    constexpr double t = 1e-4;
    Mat j(n, n);
    for (int a = 0; a < n; ++a) {
      Vec e = Vec::Zero(n);
      e[a] = t;
      j.col(a) = (inv(y + e) - inv(y - e)) / (2 * t);
    }
    return j;
  };
  c.points.resize(n, c.grid.size());
  for (int f = 0; f < c.grid.size(); ++f) {
    const Vec y = c.grid.point(f);
    c.points.col(f) = c.inverse(y);
    // Derivative probes must stay inside too.
    if (!m.domain().contains(c.points.col(f))) fail(ErrorKind::DomainOverflow, "chart sample outside the domain");
  }
  detail::finish_chart(c, opt);
  return c;
}

/// True iff the builder succeeds with measured Gamma' <= gamma.
inline bool is_normalisable(const MetricField& m, const Vec& p, double rho, double gamma, int k) {
  try {
    ChartOptions o;
    o.order = k;
    return build_normalized_chart(m, p, rho, o).gamma <= gamma;
  } catch (const LabError&) {
    return false;
  }
}

inline double isometric_radius(double rho, double k) {
  if (!(rho > 0.0) || k < 0.0) fail(ErrorKind::Domain, "isometric radius needs rho > 0 and K >= 0");
  return rho / (2.0 * k + 1.0);
}

struct TransitionReport {
  double norm = 0.0;           // |x2 o x1^-1|_{C^{k,alpha}(B)}
  Vec ball_center;             // B in x1 coordinates
  double ball_radius = 0.0;
  int samples = 0;
  int violations = 0;          // first-derivative inequality
  double max_dphi = 0.0;
  double max_bound = 0.0;
  double isometry_residual = 0.0;  // |Dphi^T A2 Dphi - A1|
};

/// Transition x2 o x1^-1 on the largest ball inscribed in x1 of the overlap
/// (found on c1's nodes); the C^{k,alpha} norm is taken on the cube
/// inscribed in that ball.
inline TransitionReport transition_bound_check(const NormalizedChart& c1, const NormalizedChart& c2, double alpha,
                                               int per_axis = 9) {
  const int n = c1.dim();
  const Grid& g = c1.grid;
  std::vector<char> in(static_cast<std::size_t>(g.size()), 0);
  bool any = false;
  for (int f = 0; f < g.size(); ++f) {
    if (g.point(f).norm() > c1.rho * (1 + 1e-12)) continue;
    auto z = c2.chart_of(c1.points.col(f));
    if (z && z->norm() <= c2.rho) {
      in[static_cast<std::size_t>(f)] = 1;
      any = true;
    }
  }
  if (!any) fail(ErrorKind::EmptyOverlap, "charts do not overlap on the sample grid");
  // Inscribed ball: distance from an overlap node to the nearest excluded node
  // or to the sphere |y| = rho1.
  TransitionReport rep;
  for (int f = 0; f < g.size(); ++f) {
    if (!in[static_cast<std::size_t>(f)]) continue;
    const Vec y = g.point(f);
    double r = c1.rho - y.norm();
    for (int e = 0; e < g.size(); ++e)
      if (!in[static_cast<std::size_t>(e)]) r = std::min(r, (g.point(e) - y).norm());
    if (r > rep.ball_radius) {
      rep.ball_radius = r;
      rep.ball_center = y;
    }
  }
  if (!(rep.ball_radius > 0.0)) fail(ErrorKind::EmptyOverlap, "overlap contains no ball");
  const Grid sub(Box::around(rep.ball_center, rep.ball_radius / std::sqrt(double(n))),
                 std::vector<int>(static_cast<std::size_t>(n), per_axis));
  Mat phi(n, sub.size());
  for (int f = 0; f < sub.size(); ++f) {
    const Vec y = sub.point(f);
    const Vec x = c1.inverse(y);
    auto z = c2.chart_of(x);
    if (!z) fail(ErrorKind::EmptyOverlap, "transition undefined inside the inscribed ball");
    phi.col(f) = *z;
    const Mat j1 = c1.inverse_jacobian(y);
    const Mat j2 = c2.inverse_jacobian(*z);
    const Mat dphi = j2.fullPivLu().solve(j1);
    const Mat mx = c1.base(x);
    const Mat a1 = j1.transpose() * mx * j1;
    const Mat a2 = j2.transpose() * c2.base(c2.inverse(*z)) * j2;
    const double lhs = spectral_norm(dphi);
    const double bound = spectral_norm(spd_inv_sqrt(a2)) * spectral_norm(spd_sqrt(a1));
    rep.max_dphi = std::max(rep.max_dphi, lhs);
    rep.max_bound = std::max(rep.max_bound, bound);
    rep.isometry_residual = std::max(rep.isometry_residual, (dphi.transpose() * a2 * dphi - a1).norm());
    if (lhs > bound * (1 + 1e-9)) ++rep.violations;
    ++rep.samples;
  }
  rep.norm = ck_alpha_norm(SampledFunction(sub, phi), c1.order, alpha).total;
  return rep;
}

// Sampled geodesic distances

/// Grid graph whose edges join nodes offset by primitive integer vectors of
/// length <= `reach` cells; edge weight = g-length of the segment with the
/// endpoint-averaged metric. Nodes where the metric fails are dropped.
struct DistanceGraph {
  Grid grid;
  std::function<Mat(const Vec&)> metric;
  std::vector<std::vector<int>> offsets;
  std::vector<double> cache;  // n*n per node, NaN where undefined
  int reach = 3;

  DistanceGraph(Grid g, std::function<Mat(const Vec&)> m, int r = 3) : grid(std::move(g)), metric(std::move(m)), reach(r) {
    const int n = grid.dim();
    const int side = 2 * reach + 1;
    for (int c = 0; c < ipow(side, n); ++c) {
      auto d = slot_digits(c, side, n);
      int gcd = 0;
      for (auto& v : d) {
        v -= reach;
        gcd = std::gcd(gcd, std::abs(v));
      }
      if (gcd == 1) offsets.push_back(d);
    }
    cache.assign(static_cast<std::size_t>(grid.size() * n * n), std::numeric_limits<double>::quiet_NaN());
    for (int f = 0; f < grid.size(); ++f) {
      try {
        const Mat mf = metric(grid.point(f));
        std::copy(mf.data(), mf.data() + n * n, cache.begin() + static_cast<std::ptrdiff_t>(f) * n * n);
      } catch (const LabError&) {
      }
    }
  }

  bool valid(int f) const { return !std::isnan(cache[static_cast<std::size_t>(f) * grid.dim() * grid.dim()]); }

  // sqrt(d^T (Ma + Mb)/2 d) from two cached n*n blocks.
  double weight(const double* ma, const double* mb, const double* d) const {
    const int n = grid.dim();
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) s += d[i] * d[j] * 0.5 * (ma[i * n + j] + mb[i * n + j]);
    return std::sqrt(std::max(0.0, s));
  }

  double point_to_node(const Vec& x, const Mat& mx, int f) const {
    const int n = grid.dim();
    const Vec d = grid.point(f) - x;
    return weight(mx.data(), cache.data() + static_cast<std::ptrdiff_t>(f) * n * n, d.data());
  }

  std::vector<int> nearby(const Vec& x) const {
    const int n = grid.dim();
    std::vector<int> centre(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a)
      centre[static_cast<std::size_t>(a)] =
          static_cast<int>(std::floor((x[a] - grid.box.lo[a]) / grid.spacing(a)));
    std::vector<int> out;
    for (int c = 0; c < ipow(4, n); ++c) {
      auto d = slot_digits(c, 4, n);
      auto idx = centre;
      bool ok = true;
      for (int a = 0; a < n; ++a) {
        idx[static_cast<std::size_t>(a)] += d[static_cast<std::size_t>(a)] - 1;
        if (idx[static_cast<std::size_t>(a)] < 0 || idx[static_cast<std::size_t>(a)] >= grid.counts[static_cast<std::size_t>(a)]) ok = false;
      }
      if (ok && valid(grid.flat_index(idx))) out.push_back(grid.flat_index(idx));
    }
    return out;
  }

  /// Distances from an arbitrary point to every node.
  std::vector<double> from(const Vec& x) const {
    const int n = grid.dim();
    const int nodes = grid.size();
    std::vector<double> dist(static_cast<std::size_t>(nodes), std::numeric_limits<double>::infinity());
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    const Mat mx = metric(x);
    for (int f : nearby(x)) {
      const double d = point_to_node(x, mx, f);
      if (d < dist[static_cast<std::size_t>(f)]) {
        dist[static_cast<std::size_t>(f)] = d;
        pq.push({d, f});
      }
    }
    std::vector<double> step(static_cast<std::size_t>(n));
    while (!pq.empty()) {
      auto [d, f] = pq.top();
      pq.pop();
      if (d > dist[static_cast<std::size_t>(f)]) continue;
      const auto idx = grid.multi_index(f);
      for (const auto& off : offsets) {
        auto j = idx;
        bool ok = true;
        for (std::size_t a = 0; a < j.size(); ++a) {
          j[a] += off[a];
          if (j[a] < 0 || j[a] >= grid.counts[a]) ok = false;
          step[a] = off[a] * grid.spacing(static_cast<int>(a));
        }
        if (!ok) continue;
        const int nb = grid.flat_index(j);
        if (!valid(nb)) continue;
        const double nd = d + weight(cache.data() + static_cast<std::ptrdiff_t>(f) * n * n,
                                     cache.data() + static_cast<std::ptrdiff_t>(nb) * n * n, step.data());
        if (nd < dist[static_cast<std::size_t>(nb)]) {
          dist[static_cast<std::size_t>(nb)] = nd;
          pq.push({nd, nb});
        }
      }
    }
    return dist;
  }

  /// Point-to-point distance using a precomputed `from(x)` table.
  double to(const std::vector<double>& table, const Vec& y) const {
    const Mat my = metric(y);
    double best = std::numeric_limits<double>::infinity();
    for (int f : nearby(y)) best = std::min(best, table[static_cast<std::size_t>(f)] + point_to_node(y, my, f));
    return best;
  }
};

struct IsometryCheck {
  double max_gap = 0.0;  // max |D_q(y, y') - d(x^-1 y, x^-1 y')|
  double tolerance = 0.0;
  int pairs = 0;
  bool passed = true;
};

/// Chart distance (A interpolated from the chart grid) against intrinsic
/// distance (the base metric) for pairs of lattice points in B_{rho'}. Both
/// sides run Dijkstra on a local grid of `per_axis` nodes covering twice the
/// ball, so the tolerance is two cells of the coarser of the two grids.
inline IsometryCheck distance_isometry_check(const NormalizedChart& c, double rho_prime, int per_axis = 33,
                                             int lattice = 5) {
  const int n = c.dim();
  const double reach = std::min(2.0 * rho_prime, c.rho);
  const DistanceGraph chart_graph(Grid::uniform(Box::cube(n, reach), per_axis),
                                  [&c](const Vec& y) { return c.interpolated_metric(y); });
  // Base box: the image of the chart cube of half-width `reach`.
  Vec lo = c.center, hi = c.center;
  const Grid probe = Grid::uniform(Box::cube(n, reach), 5);
  for (int f = 0; f < probe.size(); ++f) {
    const Vec x = c.inverse(probe.point(f));
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  }
  const Vec pad = Vec::Constant(n, 0.25 * (hi - lo).maxCoeff());
  const Box bb{(lo - pad).cwiseMax(c.base.domain().lo), (hi + pad).cwiseMin(c.base.domain().hi)};
  const MetricField base = c.base;
  const DistanceGraph base_graph(Grid::uniform(bb, per_axis), [base](const Vec& x) { return base(x); });

  std::vector<Vec> ys;
  const Grid lat = Grid::uniform(Box::cube(n, rho_prime), lattice);
  for (int f = 0; f < lat.size(); ++f)
    if (lat.point(f).norm() <= rho_prime * (1 + 1e-12)) ys.push_back(lat.point(f));
  IsometryCheck out;
  out.tolerance = 2.0 * std::max(chart_graph.grid.max_spacing(), base_graph.grid.max_spacing() * std::sqrt(c.base(c.center).norm()));
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const auto dc = chart_graph.from(ys[i]);
    const auto db = base_graph.from(c.inverse(ys[i]));
    for (std::size_t j = i + 1; j < ys.size(); ++j) {
      const double a = chart_graph.to(dc, ys[j]);
      const double b = base_graph.to(db, c.inverse(ys[j]));
      out.max_gap = std::max(out.max_gap, std::abs(a - b));
      ++out.pairs;
    }
  }
  out.passed = out.pairs > 0 && out.max_gap <= out.tolerance;
  return out;
}

// Atlases

struct AtlasOptions {
  int order = 2;
  int per_axis = 13;
  int base_per_axis = 41;
  int transition_per_axis = 7;
  int max_charts = 64;
  bool check_distances = true;
};

struct OptimalAtlas {
  std::vector<NormalizedChart> charts;
  double K = 0.0;
  double rho = 0.0;
  double R = 0.0;
  double alpha = 1.0;
  double rho_prime = 0.0;
  Mat transition_bounds;            // NaN where charts are not neighbours
  std::vector<double> metric_bounds;  // max(|A|, |A^-1|) in C^{k-1,alpha}
  std::vector<IsometryCheck> isometry;
  int transition_violations = 0;    // first-derivative inequality
  int ball_samples = 0;
  double coverage_gap = 0.0;        // max over ball samples of distance to the nearest centre
  Grid base_grid;
};

/// Charts at a greedy (rho'/2)-net of the sampled ball B_R(p); every chart
/// and every neighbouring transition must be bounded by K.
inline OptimalAtlas build_optimal_atlas(const MetricField& m, const Vec& p, double r_cov, double rho, double k,
                                        double alpha, const AtlasOptions& opt = {}) {
  OptimalAtlas at;
  at.K = k;
  at.rho = rho;
  at.R = r_cov;
  at.alpha = alpha;
  at.rho_prime = isometric_radius(rho, k);
  const double delta = at.rho_prime / 2;
  at.base_grid = Grid::uniform(m.domain(), opt.base_per_axis);
  const DistanceGraph graph(at.base_grid, [m](const Vec& x) { return m(x); });

  const auto from_p = graph.from(p);
  std::vector<int> ball;
  for (int f = 0; f < at.base_grid.size(); ++f)
    if (from_p[static_cast<std::size_t>(f)] <= r_cov) ball.push_back(f);
  std::stable_sort(ball.begin(), ball.end(), [&](int a, int b) {
    return from_p[static_cast<std::size_t>(a)] < from_p[static_cast<std::size_t>(b)];
  });
  at.ball_samples = static_cast<int>(ball.size());

  std::vector<Vec> centres{p};
  std::vector<std::vector<double>> tables{from_p};
  for (int f : ball) {
    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& t : tables) nearest = std::min(nearest, t[static_cast<std::size_t>(f)]);
    if (nearest <= delta) continue;
    if (static_cast<int>(centres.size()) >= opt.max_charts)
      fail(ErrorKind::BudgetExceeded, "more than " + std::to_string(opt.max_charts) + " charts needed");
    centres.push_back(at.base_grid.point(f));
    tables.push_back(graph.from(centres.back()));
  }
  for (int f : ball) {
    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& t : tables) nearest = std::min(nearest, t[static_cast<std::size_t>(f)]);
    at.coverage_gap = std::max(at.coverage_gap, nearest);
  }

  ChartOptions co;
  co.order = opt.order;
  co.per_axis = opt.per_axis;
  for (std::size_t i = 0; i < centres.size(); ++i) {
    NormalizedChart c;
    try {
      c = build_normalized_chart(m, centres[i], rho, co);
    } catch (const LabError& e) {
      fail(ErrorKind::BudgetExceeded, "chart " + std::to_string(i) + " cannot be built: " + e.what());
    }
    const int n = c.dim();
    Mat inv(n * n, c.grid.size());
    for (int f = 0; f < c.grid.size(); ++f) {
      const Mat ai = c.metric_at(f).inverse();
      inv.col(f) = Eigen::Map<const Vec>(ai.data(), n * n);
    }
    const double bound = std::max(ck_alpha_norm(SampledFunction(c.grid, c.metric), opt.order - 1, alpha).total,
                                  ck_alpha_norm(SampledFunction(c.grid, inv), opt.order - 1, alpha).total);
    if (bound > k)
      fail(ErrorKind::BudgetExceeded,
           "chart " + std::to_string(i) + ": metric bound " + std::to_string(bound) + " exceeds K");
    at.metric_bounds.push_back(bound);
    at.charts.push_back(std::move(c));
  }

  // Transitions between charts whose isometric balls meet.
  const int nc = static_cast<int>(at.charts.size());
  at.transition_bounds = Mat::Constant(nc, nc, std::numeric_limits<double>::quiet_NaN());
  for (int i = 0; i < nc; ++i)
    for (int j = 0; j < nc; ++j) {
      if (graph.to(tables[static_cast<std::size_t>(i)], centres[static_cast<std::size_t>(j)]) > 2 * at.rho_prime) continue;
      const auto tr = transition_bound_check(at.charts[static_cast<std::size_t>(i)],
                                             at.charts[static_cast<std::size_t>(j)], alpha,
                                             opt.transition_per_axis);
      at.transition_bounds(i, j) = tr.norm;
      at.transition_violations += tr.violations;
      if (tr.norm > k)
        fail(ErrorKind::BudgetExceeded, "transition " + std::to_string(i) + " -> " + std::to_string(j) + ": " +
                                            std::to_string(tr.norm) + " exceeds K");
    }
  if (opt.check_distances)
    for (const auto& c : at.charts) at.isometry.push_back(distance_isometry_check(c, at.rho_prime));
  return at;
}

/// Chart of the graph patch's sheet: y -> alpha(L y) with L = G(0)^{-1/2},
/// G the induced metric read in the patch's x coordinates.
inline NormalizedChart graph_to_chart(const GraphPatch& patch, const MetricField& induced, const ChartOptions& opt = {}) {
  const SampledFunction f = patch.graph_function();
  const Grid& sub = f.grid;
  const int m = patch.dim();
  // alpha on the cube subgrid.
  Mat al(m, sub.size());
  {
    const int c = patch.grid.counts[0] / 2;
    const int k = (sub.counts[0] - 1) / 2;
    for (int node = 0; node < sub.size(); ++node) {
      auto idx = sub.multi_index(node);
      for (auto& i : idx) i += c - k;
      al.col(node) = patch.reparam.col(patch.grid.flat_index(idx));
    }
  }
  const Mat dal = grid_gradient(sub, al);  // row r * m + a
  auto jac_at = [m, sub, dal](const Vec& x) {
    const Vec v = grid_interpolate(sub, dal, x);
    Mat j(m, m);
    for (int r = 0; r < m; ++r)
      for (int a = 0; a < m; ++a) j(r, a) = v[r * m + a];
    return j;
  };
  const Mat d0 = jac_at(Vec::Zero(m));
  const Mat g0 = d0.transpose() * induced(patch.center) * d0;
  NormalizedChart c;
  c.kind = "graph";
  c.base = induced;
  c.center = patch.center;
  c.order = opt.order;
  c.frame = spd_inv_sqrt(g0);
  const double half = sub.box.hi[0];
  // Largest chart cube whose image L y stays in the subgrid cube.
  double row = 0.0;
  for (int r = 0; r < m; ++r) row = std::max(row, c.frame.row(r).cwiseAbs().sum());
  c.rho = half / row;
  c.grid = Grid::uniform(Box::cube(m, c.rho), opt.per_axis);
  const Mat l = c.frame;
  c.inverse = [sub, al, l](const Vec& y) { return grid_interpolate(sub, al, Vec(l * y)); };
  c.inverse_jacobian = [jac_at, l](const Vec& y) { return Mat(jac_at(Vec(l * y)) * l); };
  c.points.resize(m, c.grid.size());
  for (int node = 0; node < c.grid.size(); ++node) c.points.col(node) = c.inverse(c.grid.point(node));
  detail::finish_chart(c, opt);
  return c;
}

}  // namespace aalab
