#pragma once

// Pointed finite metric spaces, covering numbers, pointed GH distance,
// pointed limits and the limit-submanifold pipeline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "aalab/charts.hpp"
#include "aalab/graphrep.hpp"
#include "aalab/holder.hpp"
#include "aalab/submanifold.hpp"

namespace aalab {

inline constexpr double kTriangleTol = 1e-9;

struct PointedSample {
  std::vector<std::string> ids;
  Mat dist;
  int basepoint = 0;

  int size() const { return static_cast<int>(dist.rows()); }

  /// Throws InvalidFixture unless the matrix is a pseudo-metric with a valid
  /// basepoint. Triangles are exhaustive up to 200 points, 1e5 random above.
  void validate(double tol = kTriangleTol) const {
    const int n = size();
    if (n == 0 || dist.cols() != n) fail(ErrorKind::InvalidFixture, "distance matrix must be square and non-empty");
    if (!ids.empty() && static_cast<int>(ids.size()) != n) fail(ErrorKind::InvalidFixture, "id count mismatch");
    if (basepoint < 0 || basepoint >= n) fail(ErrorKind::InvalidFixture, "basepoint out of range");
    for (int i = 0; i < n; ++i) {
      if (dist(i, i) != 0.0) fail(ErrorKind::InvalidFixture, "non-zero diagonal at " + std::to_string(i));
      for (int j = 0; j < n; ++j) {
        if (!std::isfinite(dist(i, j)) || dist(i, j) < 0.0)
          fail(ErrorKind::InvalidFixture, "negative or non-finite distance");
        if (dist(i, j) != dist(j, i)) fail(ErrorKind::InvalidFixture, "distance matrix is not symmetric");
      }
    }
    auto check = [&](int i, int j, int k) {
      if (dist(i, k) > dist(i, j) + dist(j, k) + tol)
        fail(ErrorKind::InvalidFixture, "triangle inequality fails on (" + std::to_string(i) + ", " +
                                            std::to_string(j) + ", " + std::to_string(k) + ")");
    };
    if (n <= 200) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          for (int k = 0; k < n; ++k) check(i, j, k);
    } else {
      std::mt19937_64 rng(0x5eed);
      std::uniform_int_distribution<int> u(0, n - 1);
      for (int t = 0; t < 100000; ++t) check(u(rng), u(rng), u(rng));
    }
  }

  double diameter() const { return dist.maxCoeff(); }

  /// Largest nearest-neighbour distance (the sampling resolution).
  double resolution() const {
    double h = 0.0;
    for (int i = 0; i < size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < size(); ++j)
        if (j != i) best = std::min(best, dist(i, j));
      if (std::isfinite(best)) h = std::max(h, best);
    }
    return h;
  }
};

/// Validated sample; the matrix is symmetrised first (sampled distances are
/// only symmetric up to rounding).
inline PointedSample make_sample(Mat d, int basepoint, std::vector<std::string> ids = {}) {
  PointedSample s;
  s.dist = 0.5 * (d + d.transpose());
  s.dist.diagonal().setZero();
  s.basepoint = basepoint;
  s.ids = std::move(ids);
  if (s.ids.empty())
    for (int i = 0; i < s.size(); ++i) s.ids.push_back(std::to_string(i));
  s.validate();
  return s;
}

inline PointedSample euclidean_sample(const Mat& pts, int basepoint) {
  const int n = static_cast<int>(pts.cols());
  Mat d(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) d(i, j) = (pts.col(i) - pts.col(j)).norm();
  return make_sample(d, basepoint);
}

/// Points of X within the closed R-ball about the basepoint (basepoint first).
inline PointedSample restrict_ball(const PointedSample& x, double r) {
  std::vector<int> keep{x.basepoint};
  for (int i = 0; i < x.size(); ++i)
    if (i != x.basepoint && x.dist(x.basepoint, i) <= r * (1 + 1e-12)) keep.push_back(i);
  const int n = static_cast<int>(keep.size());
  PointedSample s;
  s.dist.resize(n, n);
  for (int i = 0; i < n; ++i) {
    s.ids.push_back(x.ids.empty() ? std::to_string(keep[static_cast<std::size_t>(i)])
                                  : x.ids[static_cast<std::size_t>(keep[static_cast<std::size_t>(i)])]);
    for (int j = 0; j < n; ++j)
      s.dist(i, j) = x.dist(keep[static_cast<std::size_t>(i)], keep[static_cast<std::size_t>(j)]);
  }
  s.basepoint = 0;
  return s;
}

struct Correspondence {
  std::vector<std::pair<int, int>> pairs;
  double distortion = 0.0;
};

inline double distortion(const PointedSample& x, const PointedSample& y, const std::vector<std::pair<int, int>>& r) {
  double d = 0.0;
  for (const auto& [a, b] : r)
    for (const auto& [c, e] : r) d = std::max(d, std::abs(x.dist(a, c) - y.dist(b, e)));
  return d;
}

/// Every point of both sides related, basepoints related.
inline bool is_correspondence(const PointedSample& x, const PointedSample& y, const Correspondence& c) {
  std::vector<char> sx(static_cast<std::size_t>(x.size()), 0), sy(static_cast<std::size_t>(y.size()), 0);
  bool base = false;
  for (const auto& [a, b] : c.pairs) {
    if (a < 0 || a >= x.size() || b < 0 || b >= y.size()) return false;
    sx[static_cast<std::size_t>(a)] = sy[static_cast<std::size_t>(b)] = 1;
    base = base || (a == x.basepoint && b == y.basepoint);
  }
  return base && std::all_of(sx.begin(), sx.end(), [](char v) { return v != 0; }) &&
         std::all_of(sy.begin(), sy.end(), [](char v) { return v != 0; });
}

// Covering numbers

struct CoveringReport {
  int count = 0;
  std::vector<int> centers;
  std::vector<int> owner;  // a center within delta of each point (certificate)
  int packing = 0;         // greedy maximal delta-separated set; itself a cover
  int lower_bound = 0;     // greedy 2 delta-separated set; no delta-ball holds two
  bool exact = false;      // minimum found by complete search
};

struct CoveringOptions {
  long long budget = 200000;  // search nodes for the exact minimum
  int exact_limit = 400;      // larger samples keep the greedy cover
};

namespace detail {

using Bits = std::vector<std::uint64_t>;

inline int popcount(const Bits& b) {
  int c = 0;
  for (auto w : b) c += __builtin_popcountll(w);
  return c;
}

inline int count_new(const Bits& ball, const Bits& covered) {
  int c = 0;
  for (std::size_t w = 0; w < ball.size(); ++w) c += __builtin_popcountll(ball[w] & ~covered[w]);
  return c;
}

inline std::vector<int> separated_set(const PointedSample& x, double sep) {
  std::vector<int> out;
  std::vector<int> order(static_cast<std::size_t>(x.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_partition(order.begin(), order.end(), [&](int i) { return i == x.basepoint; });
  for (int i : order) {
    bool far = true;
    for (int c : out)
      if (x.dist(i, c) <= sep) {
        far = false;
        break;
      }
    if (far) out.push_back(i);
  }
  return out;
}

struct CoverSearch {
  const std::vector<Bits>& balls;
  const std::vector<std::vector<int>>& holders;  // balls containing each point
  int n = 0;
  int max_ball = 1;
  long long budget = 0;
  long long nodes = 0;
  bool exhausted = false;
  std::vector<int> best;
  std::vector<int> stack;

  void run(Bits& covered, int left) {
    if (++nodes > budget) {
      exhausted = true;
      return;
    }
    if (left == 0) {
      if (best.empty() || stack.size() < best.size()) best = stack;
      return;
    }
    const int need = (left + max_ball - 1) / max_ball;
    if (!best.empty() && static_cast<int>(stack.size()) + need >= static_cast<int>(best.size())) return;
    // Branch on the uncovered point with the fewest holders.
    int pick = -1;
    std::size_t fewest = std::numeric_limits<std::size_t>::max();
    for (int i = 0; i < n; ++i)
      if (!((covered[static_cast<std::size_t>(i) / 64] >> (i % 64)) & 1ULL) &&
          holders[static_cast<std::size_t>(i)].size() < fewest) {
        fewest = holders[static_cast<std::size_t>(i)].size();
        pick = i;
      }
    std::vector<std::pair<int, int>> cand;
    for (int c : holders[static_cast<std::size_t>(pick)])
      cand.push_back({-count_new(balls[static_cast<std::size_t>(c)], covered), c});
    std::sort(cand.begin(), cand.end());
    for (const auto& [neg, c] : cand) {
      Bits next = covered;
      for (std::size_t w = 0; w < next.size(); ++w) next[w] |= balls[static_cast<std::size_t>(c)][w];
      stack.push_back(c);
      run(next, left + neg);
      stack.pop_back();
      if (exhausted) return;
    }
  }
};

}  // namespace detail

/// Minimum number of closed delta-balls centred at sample points covering X.
/// Exact on small samples (complete search seeded with greedy set cover);
/// otherwise the better of greedy set cover and the maximal delta-net.
inline CoveringReport covering_number(const PointedSample& x, double delta, const CoveringOptions& opt = {}) {
  if (!(delta > 0.0)) fail(ErrorKind::Domain, "covering radius must be positive");
  const int n = x.size();
  const std::size_t words = (static_cast<std::size_t>(n) + 63) / 64;
  std::vector<detail::Bits> balls(static_cast<std::size_t>(n), detail::Bits(words, 0));
  std::vector<std::vector<int>> holders(static_cast<std::size_t>(n));
  int max_ball = 1;
  for (int c = 0; c < n; ++c) {
    for (int i = 0; i < n; ++i)
      if (x.dist(c, i) <= delta) {
        balls[static_cast<std::size_t>(c)][static_cast<std::size_t>(i) / 64] |= 1ULL << (i % 64);
        holders[static_cast<std::size_t>(i)].push_back(c);
      }
    max_ball = std::max(max_ball, detail::popcount(balls[static_cast<std::size_t>(c)]));
  }

  CoveringReport rep;
  const auto net = detail::separated_set(x, delta);
  rep.packing = static_cast<int>(net.size());
  rep.lower_bound = static_cast<int>(detail::separated_set(x, 2 * delta).size());

  // Greedy set cover.
  std::vector<int> greedy;
  {
    detail::Bits covered(words, 0);
    int left = n;
    while (left > 0) {
      int best = -1, gain = -1;
      for (int c = 0; c < n; ++c) {
        const int g = detail::count_new(balls[static_cast<std::size_t>(c)], covered);
        if (g > gain) {
          gain = g;
          best = c;
        }
      }
      greedy.push_back(best);
      for (std::size_t w = 0; w < words; ++w) covered[w] |= balls[static_cast<std::size_t>(best)][w];
      left -= gain;
    }
  }
  rep.centers = greedy.size() <= net.size() ? greedy : net;
  if (static_cast<int>(rep.centers.size()) == rep.lower_bound) rep.exact = true;

  if (!rep.exact && n <= opt.exact_limit) {
    detail::CoverSearch s{balls, holders, n, max_ball, opt.budget, 0, false, {}, {}};
    s.best = rep.centers;
    detail::Bits covered(words, 0);
    s.run(covered, n);
    rep.centers = s.best;
    rep.exact = !s.exhausted;
  }
  rep.count = static_cast<int>(rep.centers.size());
  rep.owner.assign(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i)
    for (int c : rep.centers)
      if (x.dist(c, i) <= delta) {
        rep.owner[static_cast<std::size_t>(i)] = c;
        break;
      }
  return rep;
}

// Pointed Gromov-Hausdorff distance

struct GHOptions {
  long long budget = 1000000;        // search nodes
  long long max_cells = 40000;       // |X||Y| above which only the greedy bound runs
};

struct GHResult {
  double value = 0.0;  // half the distortion of `correspondence`
  Correspondence correspondence;
  bool exact = false;             // search completed: value is the pointed GH distance
  bool budget_exhausted = false;  // value is an upper bound only
  long long nodes = 0;
};

namespace detail {

// Incremental distortion of adding (a, b) to a relation: inc(a, b) is the
// largest |d_X(a, a') - d_Y(b, b')| over pairs (a', b') already chosen.
struct GHState {
  const PointedSample& x;
  const PointedSample& y;
  Mat inc;
  double cur = 0.0;

  GHState(const PointedSample& xx, const PointedSample& yy) : x(xx), y(yy), inc(Mat::Zero(xx.size(), yy.size())) {}

  void add(int a, int b) {
    cur = std::max(cur, inc(a, b));
    for (int i = 0; i < x.size(); ++i)
      for (int j = 0; j < y.size(); ++j) inc(i, j) = std::max(inc(i, j), std::abs(x.dist(i, a) - y.dist(j, b)));
  }
};

inline std::vector<int> by_radius(const PointedSample& s) {
  std::vector<int> order;
  for (int i = 0; i < s.size(); ++i)
    if (i != s.basepoint) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return s.dist(s.basepoint, a) < s.dist(s.basepoint, b); });
  return order;
}

inline Correspondence greedy_correspondence(const PointedSample& x, const PointedSample& y) {
  GHState st(x, y);
  Correspondence c;
  c.pairs.push_back({x.basepoint, y.basepoint});
  st.add(x.basepoint, y.basepoint);
  std::vector<char> ycov(static_cast<std::size_t>(y.size()), 0);
  ycov[static_cast<std::size_t>(y.basepoint)] = 1;
  for (int a : by_radius(x)) {
    int b = 0;
    st.inc.row(a).minCoeff(&b);
    c.pairs.push_back({a, b});
    ycov[static_cast<std::size_t>(b)] = 1;
    st.add(a, b);
  }
  for (int b : by_radius(y)) {
    if (ycov[static_cast<std::size_t>(b)]) continue;
    int a = 0;
    st.inc.col(b).minCoeff(&a);
    c.pairs.push_back({a, b});
    st.add(a, b);
  }
  c.distortion = st.cur;
  return c;
}

struct GHSearch {
  const PointedSample& x;
  const PointedSample& y;
  std::vector<int> xs, ys;  // variable order
  long long budget = 0;
  long long nodes = 0;
  bool exhausted = false;
  double best = 0.0;
  std::vector<std::pair<int, int>> best_pairs, stack;

  // Function phase: each x gets an image; then every still uncovered y gets a
  // preimage. Any correspondence contains such a relation.
  void run(const GHState& st, std::size_t depth, std::vector<char>& ycov) {
    if (++nodes > budget) {
      exhausted = true;
      return;
    }
    if (st.cur >= best) return;
    const std::size_t nx = xs.size();
    // Forward check: every open variable needs a candidate below `best`.
    for (std::size_t v = depth; v < nx; ++v)
      if (st.inc.row(xs[v]).minCoeff() >= best) return;
    for (int b : ys)
      if (!ycov[static_cast<std::size_t>(b)] && st.inc.col(b).minCoeff() >= best) return;
    if (depth < nx) {
      const int a = xs[depth];
      std::vector<std::pair<double, int>> cand;
      for (int b = 0; b < y.size(); ++b)
        if (st.inc(a, b) < best) cand.push_back({st.inc(a, b), b});
      std::stable_sort(cand.begin(), cand.end());
      for (const auto& [v, b] : cand) {
        GHState next = st;
        next.add(a, b);
        const char was = ycov[static_cast<std::size_t>(b)];
        ycov[static_cast<std::size_t>(b)] = 1;
        stack.push_back({a, b});
        run(next, depth + 1, ycov);
        stack.pop_back();
        ycov[static_cast<std::size_t>(b)] = was;
        if (exhausted) return;
      }
      return;
    }
    int open = -1;
    for (int b : ys)
      if (!ycov[static_cast<std::size_t>(b)]) {
        open = b;
        break;
      }
    if (open < 0) {
      best = st.cur;
      best_pairs = stack;
      return;
    }
    std::vector<std::pair<double, int>> cand;
    for (int a = 0; a < x.size(); ++a)
      if (st.inc(a, open) < best) cand.push_back({st.inc(a, open), a});
    std::stable_sort(cand.begin(), cand.end());
    for (const auto& [v, a] : cand) {
      GHState next = st;
      next.add(a, open);
      ycov[static_cast<std::size_t>(open)] = 1;
      stack.push_back({a, open});
      run(next, depth, ycov);
      stack.pop_back();
      ycov[static_cast<std::size_t>(open)] = 0;
      if (exhausted) return;
    }
  }
};

// Canonical argument order so that d(X, Y) and d(Y, X) run the same search.
inline bool canonical_before(const PointedSample& a, const PointedSample& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  if (a.basepoint != b.basepoint) return a.basepoint < b.basepoint;
  return std::lexicographical_compare(a.dist.data(), a.dist.data() + a.dist.size(), b.dist.data(),
                                      b.dist.data() + b.dist.size());
}

}  // namespace detail

/// Pointed GH distance: half the least distortion over correspondences that
/// relate the basepoints. Greedy upper bound, then branch and bound.
inline GHResult gh_distance(const PointedSample& x0, const PointedSample& y0, const GHOptions& opt = {}) {
  const bool swap = detail::canonical_before(y0, x0);
  const PointedSample& x = swap ? y0 : x0;
  const PointedSample& y = swap ? x0 : y0;
  GHResult res;
  Correspondence c = detail::greedy_correspondence(x, y);
  if (c.distortion == 0.0) {
    res.exact = true;
  } else if (static_cast<long long>(x.size()) * y.size() > opt.max_cells) {
    res.budget_exhausted = true;
  } else {
    detail::GHSearch s{x, y, detail::by_radius(x), detail::by_radius(y), opt.budget, 0, false, 0.0, {}, {}};
    s.best = c.distortion;
    detail::GHState st(x, y);
    st.add(x.basepoint, y.basepoint);
    std::vector<char> ycov(static_cast<std::size_t>(y.size()), 0);
    ycov[static_cast<std::size_t>(y.basepoint)] = 1;
    s.run(st, 0, ycov);
    res.nodes = s.nodes;
    if (!s.best_pairs.empty()) {
      c.pairs = s.best_pairs;
      c.pairs.insert(c.pairs.begin(), {x.basepoint, y.basepoint});
      c.distortion = s.best;
    }
    res.exact = !s.exhausted;
    res.budget_exhausted = s.exhausted;
  }
  if (swap)
    for (auto& pr : c.pairs) std::swap(pr.first, pr.second);
  res.correspondence = c;
  res.value = 0.5 * c.distortion;
  return res;
}

// Sample builders

namespace samples {

/// n + 1 equally spaced points of [0, L], basepoint 0.
inline PointedSample interval(int n, double length = 1.0) {
  Mat pts(1, n + 1);
  for (int i = 0; i <= n; ++i) pts(0, i) = length * i / n;
  return euclidean_sample(pts, 0);
}

/// n equally spaced points of the circle of radius r with the arc metric.
inline PointedSample circle(int n, double r = 1.0) {
  Mat d(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int k = std::abs(i - j);
      d(i, j) = r * 2.0 * std::numbers::pi * std::min(k, n - k) / n;
    }
  return make_sample(d, 0);
}

/// Intrinsic distances between the nodes of `sample` (a grid over the
/// metric's domain, optionally masked) computed by Dijkstra on `fine`.
inline PointedSample metric_sample(const std::function<Mat(const Vec&)>& metric, const Grid& fine,
                                   const std::vector<Vec>& pts, int basepoint) {
  const DistanceGraph g(fine, metric);
  const int n = static_cast<int>(pts.size());
  Mat d(n, n);
  for (int i = 0; i < n; ++i) {
    const auto table = g.from(pts[static_cast<std::size_t>(i)]);
    for (int j = 0; j < n; ++j) d(i, j) = i == j ? 0.0 : g.to(table, pts[static_cast<std::size_t>(j)]);
  }
  // Graph distances satisfy the triangle inequality up to the point-to-node
  // legs; close them with one Floyd pass.
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) d(i, j) = std::min(d(i, j), d(i, k) + d(k, j));
  return make_sample(d, basepoint);
}

/// Grid nodes (per_axis^2) inside the disc of radius r; basepoint at 0.
inline std::vector<Vec> disc_nodes(double r, int per_axis) {
  std::vector<Vec> out{Vec::Zero(2)};
  const Grid g = Grid::uniform(Box::cube(2, r), per_axis);
  for (int f = 0; f < g.size(); ++f) {
    const Vec x = g.point(f);
    if (x.norm() <= r * (1 + 1e-12) && x.norm() > 1e-12) out.push_back(x);
  }
  return out;
}

/// Disc sample of the graph z = f(x) over R^2 with induced metric I + grad f grad f^T.
inline PointedSample graph_disc(const std::function<Vec(const Vec&)>& grad, double r, int per_axis, int fine = 41) {
  auto metric = [grad](const Vec& x) {
    const Vec g = grad(x);
    return Mat(Mat::Identity(2, 2) + g * g.transpose());
  };
  return metric_sample(metric, Grid::uniform(Box::cube(2, r * 1.05), fine), disc_nodes(r, per_axis), 0);
}

/// Wedge of g flat square tori of side L (k x k samples each) glued at a
/// common basepoint: diameter stays L (each torus has diameter L / sqrt 2)
/// while area grows linearly in g.
inline PointedSample torus_wedge(int g, int k, double side = 1.0) {
  const int per = k * k;
  const int n = 1 + g * (per - 1);
  auto torus_d = [&](int a, int b) {
    const int ax = a % k, ay = a / k, bx = b % k, by = b / k;
    const int dx = std::min(std::abs(ax - bx), k - std::abs(ax - bx));
    const int dy = std::min(std::abs(ay - by), k - std::abs(ay - by));
    return side / k * std::hypot(double(dx), double(dy));
  };
  // Point 0 is the shared node (local index 0); torus t owns local 1..per-1.
  auto split = [&](int i) { return i == 0 ? std::pair<int, int>{-1, 0} : std::pair<int, int>{(i - 1) / (per - 1), 1 + (i - 1) % (per - 1)}; };
  Mat d(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const auto [ti, li] = split(i);
      const auto [tj, lj] = split(j);
      if (ti == tj || ti < 0 || tj < 0)
        d(i, j) = torus_d(li, lj);
      else
        d(i, j) = torus_d(li, 0) + torus_d(0, lj);
    }
  return make_sample(d, 0);
}

}  // namespace samples

// Pointed limits

struct PointedLimitOptions {
  std::vector<double> deltas;     // covering levels; default R/2, R/4, R/8
  double growth = 1.5;            // max allowed ratio of tail to head covering numbers
  double net_radius = 0.0;        // 0 keeps every point of the last element
  GHOptions gh{20000, 40000};
  std::optional<std::function<int(double)>> cover_bound;  // user supplied Cov(delta)
};

struct PointedLimitReport {
  PointedSample limit;
  std::vector<double> trace;               // gh upper bounds d(X_n, limit)
  std::vector<char> trace_exact;
  std::vector<double> deltas;
  std::vector<std::vector<int>> covering;  // covering[n][level]
  std::vector<int> indices;                // tail used for the limit distances
  double resolution = 0.0;
  double tolerance = 0.0;
  bool monotone_tail = false;
  bool converged = false;
};

namespace detail {

// First and last quarter of a sequence of length n.
inline std::pair<int, int> quarters(int n) {
  const int q = std::max(1, (n + 3) / 4);
  return {q, n - q};
}

}  // namespace detail

/// Pointed limit of a sequence restricted to R-balls. Total boundedness is
/// checked first: at every delta level the covering numbers of the last
/// quarter may not exceed `growth` times those of the first quarter (or a
/// supplied bound). The limit is a net of the last element with distances
/// averaged over the last quarter through GH correspondences.
inline PointedLimitReport pointed_limit(const std::vector<PointedSample>& seq, double r,
                                        const PointedLimitOptions& opt = {}) {
  if (seq.empty()) fail(ErrorKind::SequenceTooShort, "empty sequence");
  if (!(r > 0.0)) fail(ErrorKind::Domain, "ball radius must be positive");
  PointedLimitReport rep;
  rep.deltas = opt.deltas.empty() ? std::vector<double>{r / 2, r / 4, r / 8} : opt.deltas;
  std::vector<PointedSample> balls;
  for (const auto& s : seq) balls.push_back(restrict_ball(s, r));
  const int n = static_cast<int>(balls.size());

  CoveringOptions co;
  co.budget = 20000;
  for (const auto& b : balls) {
    std::vector<int> row;
    for (double d : rep.deltas) row.push_back(covering_number(b, d, co).count);
    rep.covering.push_back(row);
  }
  const auto [head, tail_start] = detail::quarters(n);
  for (std::size_t l = 0; l < rep.deltas.size(); ++l) {
    int hmax = 0, tmax = 0;
    for (int i = 0; i < head; ++i) hmax = std::max(hmax, rep.covering[static_cast<std::size_t>(i)][l]);
    for (int i = tail_start; i < n; ++i) tmax = std::max(tmax, rep.covering[static_cast<std::size_t>(i)][l]);
    const std::string lvl = "delta = " + std::to_string(rep.deltas[l]);
    if (n >= 4 && tmax > opt.growth * hmax)
      fail(ErrorKind::NotTotallyBounded, "covering numbers grow from " + std::to_string(hmax) + " to " +
                                             std::to_string(tmax) + " at " + lvl);
    if (opt.cover_bound)
      for (int i = 0; i < n; ++i)
        if (rep.covering[static_cast<std::size_t>(i)][l] > (*opt.cover_bound)(rep.deltas[l]))
          fail(ErrorKind::NotTotallyBounded, "term " + std::to_string(i) + " exceeds the covering bound at " + lvl);
  }

  // Limit candidate: net of the last element, distances averaged on the tail.
  const PointedSample& last = balls.back();
  std::vector<int> net;
  if (opt.net_radius > 0.0) {
    net = detail::separated_set(last, opt.net_radius);
  } else {
    net.resize(static_cast<std::size_t>(last.size()));
    std::iota(net.begin(), net.end(), 0);
  }
  const int k = static_cast<int>(net.size());
  Mat base(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) base(i, j) = last.dist(net[static_cast<std::size_t>(i)], net[static_cast<std::size_t>(j)]);
  PointedSample netted;
  netted.dist = base;
  netted.basepoint = 0;  // separated_set and iota both start at the basepoint
  for (int i = 0; i < k; ++i) netted.ids.push_back(last.ids[static_cast<std::size_t>(net[static_cast<std::size_t>(i)])]);

  Mat avg = Mat::Zero(k, k);
  for (int t = tail_start; t < n; ++t) {
    rep.indices.push_back(t);
    const PointedSample& xt = balls[static_cast<std::size_t>(t)];
    const auto g = gh_distance(netted, xt, opt.gh);
    std::vector<int> image(static_cast<std::size_t>(k), -1);
    for (const auto& [a, b] : g.correspondence.pairs)
      if (image[static_cast<std::size_t>(a)] < 0) image[static_cast<std::size_t>(a)] = b;
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) avg(i, j) += xt.dist(image[static_cast<std::size_t>(i)], image[static_cast<std::size_t>(j)]);
  }
  avg /= static_cast<double>(rep.indices.size());
  rep.limit = netted;
  rep.limit.dist = 0.5 * (avg + avg.transpose());
  rep.limit.dist.diagonal().setZero();
  rep.limit.validate();

  for (const auto& b : balls) {
    const auto g = gh_distance(b, rep.limit, opt.gh);
    rep.trace.push_back(g.value);
    rep.trace_exact.push_back(g.exact ? 1 : 0);
  }
  for (int t = tail_start; t < n; ++t) rep.resolution = std::max(rep.resolution, balls[static_cast<std::size_t>(t)].resolution());
  rep.tolerance = 2.0 * rep.resolution;
  // Monotone up to a quarter cell of slack (the trace holds upper bounds).
  rep.monotone_tail = true;
  for (int t = tail_start + 1; t < n; ++t)
    if (rep.trace[static_cast<std::size_t>(t)] > rep.trace[static_cast<std::size_t>(t - 1)] + 0.25 * rep.resolution)
      rep.monotone_tail = false;
  rep.converged = rep.monotone_tail;
  for (int t = tail_start; t < n; ++t)
    if (rep.trace[static_cast<std::size_t>(t)] > rep.tolerance) rep.converged = false;
  return rep;
}

// Limit submanifolds

/// A failure inside a sequence pipeline, naming the offending term.
class SequenceFailure : public LabError {
 public:
  SequenceFailure(ErrorKind kind, const std::string& what, int index, double measured)
      : LabError(kind, what), index(index), measured(measured) {}
  int index;
  double measured;
};

struct LimitOptions {
  double eps = 0.5;            // ambient radius for the certified radius
  double r = 0.9;              // intrinsic radius for the certified radius
  int per_axis = 41;           // graph patch samples per axis
  double alpha = 1.0;          // weak C^{k-1,alpha} convergence
  double tol = kConvergenceTol;
  std::optional<double> holder_budget;  // default from the certified bounds
};

struct LimitSubmanifoldReport {
  std::vector<double> measured_a;  // max script A_k per term on the R-ball
  std::vector<double> deltas;      // certified radius per term
  double Delta = 0.0;              // shared radius
  double spacing = 0.0;            // parameter grid spacing (starvation guard)
  std::vector<GraphPatch> patches;
  std::vector<SampledFunction> graphs;
  double holder_budget = 0.0;
  ExtractionResult extraction;
  WeakConvergenceReport weak;
  double limit_sup = 0.0;          // sup |f_inf|
  double limit_a = 0.0;            // measured script A_k of the limit graph
  bool limit_within_budget = false;
  bool converged = false;
};

/// Ambient metric read in a patch's graph coordinates z: X = origin + A z.
inline MetricField patch_metric(const GraphPatch& gp, const MetricField& ambient, double half) {
  const Mat a = gp.rotation;
  const Vec o = gp.origin;
  const int n = static_cast<int>(a.rows());
  return MetricField(
      Box::cube(n, half), ambient.resolution(),
      [a, o, ambient](const Vec& z) { return Mat(a.transpose() * ambient(Vec(o + a * z)) * a); }, ambient.order(), {},
      ambient.label() + "[patch]");
}

/// Per-term budget check on the R-ball, a shared certified radius, graph
/// extraction at that radius, subsequence extraction and a weak convergence
/// test of the graph functions in C^{k-1, alpha}.
inline LimitSubmanifoldReport limit_submanifold(const std::vector<Immersion>& seq, const Vec& p, double r_ball, int k,
                                                double budget, const LimitOptions& opt = {}) {
  if (seq.empty()) fail(ErrorKind::SequenceTooShort, "empty sequence");
  if (k < 2) fail(ErrorKind::OrderExhausted, "the pipeline needs k >= 2");
  LimitSubmanifoldReport rep;
  const int n = static_cast<int>(seq.size());
  for (int i = 0; i < n; ++i) {
    const Immersion& im = seq[static_cast<std::size_t>(i)];
    const FundamentalForms ff = higher_forms(im, k);
    double a = 0.0;
    for (int f = 0; f < im.grid.size(); ++f)
      if (ff.evaluated(f) && detail::segment_length(im, p, im.grid.point(f)) <= r_ball) a = std::max(a, ff.script_a[f]);
    rep.measured_a.push_back(a);
    if (a > budget * (1 + 1e-9))
      throw SequenceFailure(ErrorKind::BudgetViolation,
                            "term " + std::to_string(i) + ": measured A_k = " + std::to_string(a) +
                                " exceeds the budget " + std::to_string(budget),
                            i, a);
    rep.spacing = std::max(rep.spacing, im.grid.max_spacing());
  }
  auto wrap = [](int i, const LabError& e) {
    return SequenceFailure(e.kind(), "term " + std::to_string(i) + ": " + e.what(), i, 0.0);
  };
  std::vector<BoundBudget> budgets;
  for (int i = 0; i < n; ++i) {
    try {
      budgets.push_back(certified_radius(seq[static_cast<std::size_t>(i)], p, opt.eps, opt.r, budget));
    } catch (const LabError& e) {
      throw wrap(i, e);
    }
    rep.deltas.push_back(budgets.back().Delta);
  }
  rep.Delta = *std::min_element(rep.deltas.begin(), rep.deltas.end());
  if (rep.Delta < 3 * rep.spacing)
    fail(ErrorKind::RadiusStarvation, "shared radius " + std::to_string(rep.Delta) + " is below three grid cells");

  double bm = 0.0;
  for (int i = 0; i < n; ++i) {
    const Immersion& im = seq[static_cast<std::size_t>(i)];
    try {
      rep.patches.push_back(extract_graph(im, p, rep.Delta, certified_options(budgets[static_cast<std::size_t>(i)],
                                                                              opt.eps, opt.r, opt.per_axis)));
    } catch (const LabError& e) {
      throw wrap(i, e);
    }
    rep.graphs.push_back(rep.patches.back().graph_function());
    // C^{k-1,1} budget: |f| <= eps/2, |Df| <= B, and the derivative-control
    // bound for each order 2..k (Frobenius sups gain sqrt(m) per slot).
    const int m = im.dim();
    double b = opt.eps / 2 + std::sqrt(double(m * (im.ambient.dim() - m))) * budgets[static_cast<std::size_t>(i)].B;
    const MetricField pm = patch_metric(rep.patches.back(), im.ambient, opt.eps / std::sqrt(double(im.ambient.dim())));
    for (int order = 2; order <= k; ++order) {
      try {
        b += std::pow(std::sqrt(double(m)), order) * derivative_control(rep.graphs.back(), pm, order, budget * 1.01).rhs_max;
      } catch (const LabError& e) {
        throw wrap(i, e);
      }
    }
    bm = std::max(bm, b);
  }
  rep.holder_budget = opt.holder_budget ? *opt.holder_budget : bm;
  rep.extraction = arzela_ascoli_extract(rep.graphs, k - 1, rep.holder_budget, opt.tol);
  std::vector<SampledFunction> sub;
  for (int i : rep.extraction.indices) sub.push_back(rep.graphs[static_cast<std::size_t>(i)]);
  const SampledFunction& lim = rep.extraction.limit;
  rep.limit_sup = c0_norm(lim);
  if (sub.size() >= 8) {
    rep.weak = weak_converges(sub, lim, k - 1, opt.alpha, opt.tol);
    rep.converged = rep.weak.converges;
  }
  {
    const GraphPatch& gp = rep.patches[static_cast<std::size_t>(rep.extraction.indices.back())];
    const Immersion& im = seq[static_cast<std::size_t>(rep.extraction.indices.back())];
    const MetricField pm = patch_metric(gp, im.ambient, opt.eps / std::sqrt(double(im.ambient.dim())));
    const Immersion gi = graph_immersion(lim, pm);
    rep.limit_a = higher_forms(gi, k).max_script_a();
    rep.limit_within_budget = rep.limit_a <= budget * (1 + 1e-2);
  }
  return rep;
}

// Strong convergence mappings

struct ChartPairTrace {
  int q = 0, q2 = 0;                 // charts of the limit atlas
  std::vector<int> matched;          // q'_n per term (for q2)
  int first_defined = 0;             // N of clause (a)
  WeakConvergenceReport weak;
  bool converges = false;
};

struct StrongConvergenceReport {
  std::vector<std::vector<int>> matches;  // matches[n][q]
  std::vector<ChartPairTrace> pairs;
  bool all_pass = false;
};

/// Chart of `atlas` nearest to x (in the base metric at x); UnmatchedChart
/// if none lies within the isometric radius.
inline int match_chart(const OptimalAtlas& atlas, const Vec& x) {
  int best = -1;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < atlas.charts.size(); ++c) {
    const Vec d = atlas.charts[c].center - x;
    double v = std::numeric_limits<double>::infinity();
    try {
      v = std::sqrt(std::max(0.0, d.dot(atlas.charts[c].base(x) * d)));
    } catch (const LabError&) {
    }
    if (v < bd) {
      bd = v;
      best = static_cast<int>(c);
    }
  }
  if (best < 0 || bd > atlas.rho_prime)
    fail(ErrorKind::UnmatchedChart, "no chart centre within rho' of the mapped centre (nearest " + std::to_string(bd) + ")");
  return best;
}

/// For each neighbouring chart pair (q, q') of the limit atlas, the maps
/// x_{q'_n} o phi_n o x_q^{-1} on the transition ball of (q, q') must converge
/// weakly in C^{k, alpha} to x_{q'} o x_q^{-1}; q'_n is matched by nearest centre.
inline StrongConvergenceReport strong_convergence_check(const std::vector<OptimalAtlas>& atlases,
                                                        const OptimalAtlas& limit,
                                                        const std::vector<std::function<Vec(const Vec&)>>& maps, int k,
                                                        double alpha, int per_axis = 7,
                                                        double tol = kConvergenceTol) {
  if (atlases.size() != maps.size()) fail(ErrorKind::Domain, "one comparison map per atlas");
  StrongConvergenceReport rep;
  const int terms = static_cast<int>(atlases.size());
  const int nc = static_cast<int>(limit.charts.size());
  for (int t = 0; t < terms; ++t) {
    std::vector<int> row;
    for (const auto& c : limit.charts) row.push_back(match_chart(atlases[static_cast<std::size_t>(t)], maps[static_cast<std::size_t>(t)](c.center)));
    rep.matches.push_back(row);
  }
  rep.all_pass = true;
  for (int q = 0; q < nc; ++q)
    for (int q2 = 0; q2 < nc; ++q2) {
      if (!std::isfinite(limit.transition_bounds(q, q2))) continue;
      const NormalizedChart& cq = limit.charts[static_cast<std::size_t>(q)];
      const NormalizedChart& cq2 = limit.charts[static_cast<std::size_t>(q2)];
      const TransitionReport tr = transition_bound_check(cq, cq2, alpha, per_axis);
      const int d = cq.dim();
      const Grid sub(Box::around(tr.ball_center, tr.ball_radius / std::sqrt(double(d))),
                     std::vector<int>(static_cast<std::size_t>(d), per_axis));
      Mat target(d, sub.size());
      std::vector<Vec> xs;
      for (int f = 0; f < sub.size(); ++f) {
        xs.push_back(cq.inverse(sub.point(f)));
        auto z = cq2.chart_of(xs.back());
        if (!z) fail(ErrorKind::EmptyOverlap, "limit transition undefined on its own ball");
        target.col(f) = *z;
      }
      ChartPairTrace pt;
      pt.q = q;
      pt.q2 = q2;
      std::vector<SampledFunction> seq;
      for (int t = 0; t < terms; ++t) {
        const int m2 = rep.matches[static_cast<std::size_t>(t)][static_cast<std::size_t>(q2)];
        pt.matched.push_back(m2);
        const NormalizedChart& cn = atlases[static_cast<std::size_t>(t)].charts[static_cast<std::size_t>(m2)];
        Mat vals(d, sub.size());
        bool defined = true;
        for (int f = 0; f < sub.size() && defined; ++f) {
          std::optional<Vec> z;
          try {
            z = cn.chart_of(maps[static_cast<std::size_t>(t)](xs[static_cast<std::size_t>(f)]));
          } catch (const LabError&) {
          }
          if (!z) defined = false;
          else vals.col(f) = *z;
        }
        // Clause (a): terms before the last undefined one are dropped.
        if (!defined) {
          seq.clear();
          pt.first_defined = t + 1;
          continue;
        }
        seq.emplace_back(sub, vals);
      }
      if (seq.size() >= 8) {
        pt.weak = weak_converges(seq, SampledFunction(sub, target), k, alpha, tol);
        pt.converges = pt.weak.converges;
      }
      rep.all_pass = rep.all_pass && pt.converges;
      rep.pairs.push_back(std::move(pt));
    }
  return rep;
}

}  // namespace aalab
