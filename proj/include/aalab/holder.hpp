#pragma once

// Lipschitz / Hoelder norms of functions sampled on uniform grids.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aalab/grid.hpp"

namespace aalab {

/// Values of f : box in R^m -> R^d at the nodes of a grid (one column per
/// node). `source`, when present, evaluates f off the grid; otherwise
/// off-grid values are multilinear interpolants.
struct SampledFunction {
  Grid grid;
  Mat values;
  std::function<Vec(const Vec&)> source;

  SampledFunction() = default;
  SampledFunction(Grid g, Mat v, std::function<Vec(const Vec&)> src = {})
      : grid(std::move(g)), values(std::move(v)), source(std::move(src)) {
    if (values.cols() != grid.size()) fail(ErrorKind::Domain, "sample count does not match the grid");
    if (!values.allFinite()) fail(ErrorKind::Domain, "non-finite samples");
  }

  static SampledFunction sample(const Grid& g, std::function<Vec(const Vec&)> fn) {
    const Vec first = fn(g.point(0));
    Mat v(first.size(), g.size());
    v.col(0) = first;
    for (int i = 1; i < g.size(); ++i) v.col(i) = fn(g.point(i));
    return SampledFunction(g, std::move(v), std::move(fn));
  }

  static SampledFunction scalar(const Grid& g, std::function<double(const Vec&)> fn) {
    return sample(g, [fn](const Vec& x) {
      Vec r(1);
      r[0] = fn(x);
      return r;
    });
  }

  int in_dim() const { return grid.dim(); }
  int out_dim() const { return static_cast<int>(values.rows()); }

  Vec at(const Vec& p) const { return source ? source(p) : grid_interpolate(grid, values, p); }

  /// D^k f, flattened: row r * m^k + (a_1 ... a_k in base m).
  Mat derivative(int k) const {
    Mat d = values;
    for (int i = 0; i < k; ++i) d = grid_gradient(grid, d);
    return d;
  }

  bool same_grid(const SampledFunction& o) const {
    return grid.counts == o.grid.counts && grid.box.lo == o.grid.box.lo && grid.box.hi == o.grid.box.hi;
  }
};

namespace detail {

inline void require_same_grid(const SampledFunction& a, const SampledFunction& b) {
  if (!a.same_grid(b)) fail(ErrorKind::IncompatibleRange, "functions live on different grids");
}

}  // namespace detail

inline SampledFunction operator+(const SampledFunction& a, const SampledFunction& b) {
  detail::require_same_grid(a, b);
  std::function<Vec(const Vec&)> src;
  if (a.source && b.source) src = [fa = a.source, fb = b.source](const Vec& x) { return Vec(fa(x) + fb(x)); };
  return SampledFunction(a.grid, a.values + b.values, src);
}

inline SampledFunction operator*(double s, const SampledFunction& a) {
  std::function<Vec(const Vec&)> src;
  if (a.source) src = [fa = a.source, s](const Vec& x) { return Vec(s * fa(x)); };
  return SampledFunction(a.grid, s * a.values, src);
}

inline SampledFunction operator-(const SampledFunction& a, const SampledFunction& b) { return a + (-1.0) * b; }

/// Pointwise product; a scalar factor multiplies every component, otherwise
/// components are multiplied entrywise.
inline SampledFunction product(const SampledFunction& a, const SampledFunction& b) {
  detail::require_same_grid(a, b);
  auto mul = [](const Vec& x, const Vec& y) -> Vec {
    if (x.size() == 1) return x[0] * y;
    if (y.size() == 1) return y[0] * x;
    if (x.size() != y.size()) fail(ErrorKind::IncompatibleRange, "product of incompatible value dimensions");
    return x.cwiseProduct(y);
  };
  const int d = std::max(a.out_dim(), b.out_dim());
  Mat v(d, a.grid.size());
  for (int i = 0; i < a.grid.size(); ++i) v.col(i) = mul(a.values.col(i), b.values.col(i));
  std::function<Vec(const Vec&)> src;
  if (a.source && b.source) src = [fa = a.source, fb = b.source, mul](const Vec& x) { return mul(fa(x), fb(x)); };
  return SampledFunction(a.grid, std::move(v), src);
}

/// f o g sampled on g's grid. Throws when g leaves f's domain.
inline SampledFunction compose(const SampledFunction& f, const SampledFunction& g) {
  if (g.out_dim() != f.in_dim()) fail(ErrorKind::IncompatibleRange, "g does not map into the domain of f");
  Mat v(f.out_dim(), g.grid.size());
  for (int i = 0; i < g.grid.size(); ++i) {
    const Vec y = g.values.col(i);
    if (!f.grid.box.contains(y, -1e-12)) fail(ErrorKind::IncompatibleRange, "g(Omega) is not contained in Omega'");
    v.col(i) = f.at(y);
  }
  return SampledFunction(g.grid, std::move(v));
}

/// Nodes entering pairwise suprema. Each axis keeps at most
/// min(512, 4096^(1/m)) evenly strided indices, endpoints included.
inline std::vector<int> pair_nodes(const Grid& g) {
  const int m = g.dim();
  const int cap = std::min(512, std::max(2, static_cast<int>(std::floor(std::pow(4096.0, 1.0 / m) + 1e-9))));
  std::vector<std::vector<int>> axes(static_cast<std::size_t>(m));
  for (int a = 0; a < m; ++a) {
    const int c = g.counts[static_cast<std::size_t>(a)];
    auto& ax = axes[static_cast<std::size_t>(a)];
    if (c <= cap) {
      for (int i = 0; i < c; ++i) ax.push_back(i);
    } else {
      for (int i = 0; i < cap; ++i) {
        const int idx = static_cast<int>(std::lround(static_cast<double>(i) * (c - 1) / (cap - 1)));
        if (ax.empty() || ax.back() != idx) ax.push_back(idx);
      }
    }
  }
  std::vector<int> out;
  std::vector<int> pos(static_cast<std::size_t>(m), 0);
  std::vector<int> idx(static_cast<std::size_t>(m));
  for (;;) {
    for (int a = 0; a < m; ++a) idx[static_cast<std::size_t>(a)] = axes[static_cast<std::size_t>(a)][static_cast<std::size_t>(pos[static_cast<std::size_t>(a)])];
    out.push_back(g.flat_index(idx));
    int a = m - 1;
    while (a >= 0) {
      auto& p = pos[static_cast<std::size_t>(a)];
      if (++p < static_cast<int>(axes[static_cast<std::size_t>(a)].size())) break;
      p = 0;
      --a;
    }
    if (a < 0) break;
  }
  return out;
}

/// sup_{x != y} |v(x) - v(y)| / |x - y|^alpha over a point cloud (columns).
inline double lip_seminorm(const Mat& points, const Mat& values, double alpha) {
  const int n = static_cast<int>(points.cols());
  double best = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double dx = (points.col(i) - points.col(j)).norm();
      if (dx == 0.0) continue;
      const double dv = (values.col(i) - values.col(j)).norm();
      if (dv == 0.0) continue;
      best = std::max(best, dv / std::pow(dx, alpha));
    }
  }
  return best;
}

namespace detail {

inline double lip_on_nodes(const Grid& g, const Mat& values, const std::vector<int>& nodes, double alpha) {
  Mat pts(g.dim(), static_cast<Eigen::Index>(nodes.size()));
  Mat vals(values.rows(), static_cast<Eigen::Index>(nodes.size()));
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    pts.col(static_cast<Eigen::Index>(i)) = g.point(nodes[i]);
    vals.col(static_cast<Eigen::Index>(i)) = values.col(nodes[i]);
  }
  return lip_seminorm(pts, vals, alpha);
}

inline std::vector<int> restrict_nodes(const Grid& g, const std::vector<int>& nodes, const std::optional<Box>& box) {
  if (!box) return nodes;
  std::vector<int> out;
  for (int f : nodes)
    if (box->contains(g.point(f), -1e-12)) out.push_back(f);
  return out;
}

inline double sup_norm(const Mat& values, const std::vector<int>& nodes) {
  double s = 0.0;
  for (int f : nodes) s = std::max(s, values.col(f).norm());
  return s;
}

inline std::vector<int> all_nodes(const Grid& g) {
  std::vector<int> v(static_cast<std::size_t>(g.size()));
  for (int i = 0; i < g.size(); ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) fail(ErrorKind::Domain, "Hoelder exponent must lie in (0, 1]");
}

}  // namespace detail

/// Lip^alpha seminorm of f over grid pairs (a lower bound for the continuum
/// supremum when the pair cap subsamples the grid).
inline double lip_norm(const SampledFunction& f, double alpha) {
  detail::check_alpha(alpha);
  if (f.grid.size() < 2) fail(ErrorKind::EmptyDomain, "need at least two grid points");
  return detail::lip_on_nodes(f.grid, f.values, pair_nodes(f.grid), alpha);
}

struct HolderReport {
  int k = 0;
  std::vector<double> c0_norms;
  double lip_alpha = 0.0;
  double total = 0.0;
  double alpha = 1.0;
  double diam = 0.0;
  double dil = 1.0;
  double delta_omega = 0.0;
  std::optional<Box> restricted_to;
};

/// C^{k,alpha} norm: sum_i sup|D^i f| + Lip^alpha(D^k f). Derivatives are
/// taken on the full grid; `restrict` limits the nodes entering the sups.
inline HolderReport ck_alpha_norm(const SampledFunction& f, int k, double alpha,
                                  const std::optional<Box>& restrict = std::nullopt) {
  detail::check_alpha(alpha);
  if (k < 0) fail(ErrorKind::Domain, "negative order");
  HolderReport r;
  r.k = k;
  r.alpha = alpha;
  r.restricted_to = restrict;
  const auto nodes = detail::restrict_nodes(f.grid, detail::all_nodes(f.grid), restrict);
  const auto pairs = detail::restrict_nodes(f.grid, pair_nodes(f.grid), restrict);
  if (nodes.empty()) fail(ErrorKind::EmptyDomain, "restriction contains no grid node");
  Mat d = f.values;
  for (int i = 0; i <= k; ++i) {
    if (i > 0) d = grid_gradient(f.grid, d);
    r.c0_norms.push_back(detail::sup_norm(d, nodes));
  }
  r.lip_alpha = detail::lip_on_nodes(f.grid, d, pairs, alpha);
  r.total = r.lip_alpha;
  for (double c : r.c0_norms) r.total += c;
  const Box& b = restrict ? *restrict : f.grid.box;
  Vec lo = b.lo.cwiseMax(f.grid.box.lo);
  Vec hi = b.hi.cwiseMin(f.grid.box.hi);
  r.diam = (hi - lo).norm();
  r.dil = 1.0;  // boxes are convex
  r.delta_omega = std::max(r.dil, r.diam);
  return r;
}

inline double c0_norm(const SampledFunction& f) { return detail::sup_norm(f.values, detail::all_nodes(f.grid)); }

struct InequalityRow {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
};

struct InequalityReport {
  std::vector<InequalityRow> rows;
  int violations = 0;
  double beta_continuity = 0.0;
};

/// Slack above this relative level counts as a violation; below it is
/// floating-point noise in the evaluation of equal quantities.
inline constexpr double kInequalityTol = 1e-12;

/// Checks on (f, g): sum of C^{k,alpha} norms, product rule for Lip^alpha,
/// composition Lip^{alpha beta}, and both composition continuity estimates
/// against g' = (1 - t) g + t mean(g) and f' = (1 - t) f with t = 1/4.
/// Norms of f are taken over f's nodes together with the images of g and
/// g' so that every estimate is evaluated over the same point set.
inline InequalityReport verify_holder_inequalities(const SampledFunction& f, const SampledFunction& g, int k,
                                                   double alpha, double beta) {
  detail::check_alpha(alpha);
  detail::check_alpha(beta);
  InequalityReport rep;
  auto add = [&rep](std::string name, double lhs, double rhs) {
    InequalityRow row{std::move(name), lhs, rhs, lhs - rhs};
    if (row.slack > kInequalityTol * std::max(1.0, std::abs(rhs))) ++rep.violations;
    rep.rows.push_back(std::move(row));
  };

  if (f.same_grid(g) && f.out_dim() == g.out_dim()) {
    const double s = ck_alpha_norm(f + g, k, alpha).total;
    add("sum", s, ck_alpha_norm(f, k, alpha).total + ck_alpha_norm(g, k, alpha).total);
    add("product", lip_norm(product(f, g), alpha), c0_norm(f) * lip_norm(g, alpha) + lip_norm(f, alpha) * c0_norm(g));
  }

  const double tau = 0.25;
  const Vec mean = g.values.rowwise().mean();
  const SampledFunction g2(g.grid, ((1.0 - tau) * g.values).colwise() + tau * mean);
  const SampledFunction fg = compose(f, g);
  const SampledFunction fg2 = compose(f, g2);

  // f and f' = (1 - t) f on the joint cloud.
  const auto gnodes = pair_nodes(g.grid);
  const auto fnodes = pair_nodes(f.grid);
  Mat cloud(f.in_dim(), static_cast<Eigen::Index>(fnodes.size() + 2 * gnodes.size()));
  Eigen::Index c = 0;
  for (int n : fnodes) cloud.col(c++) = f.grid.point(n);
  for (int n : gnodes) cloud.col(c++) = g.values.col(n);
  for (int n : gnodes) cloud.col(c++) = g2.values.col(n);
  Mat fvals(f.out_dim(), cloud.cols());
  for (Eigen::Index i = 0; i < cloud.cols(); ++i) fvals.col(i) = f.at(cloud.col(i));
  const double lip_f = lip_seminorm(cloud, fvals, alpha);
  const double lip_f2 = (1.0 - tau) * lip_f;
  const double sup_f_minus_f2 = tau * fvals.colwise().norm().maxCoeff();

  const double lip_g_beta = detail::lip_on_nodes(g.grid, g.values, gnodes, beta);
  add("composition", detail::lip_on_nodes(g.grid, fg.values, gnodes, alpha * beta),
      lip_f * std::pow(lip_g_beta, alpha));

  const double bc = beta < alpha ? beta : 0.5 * alpha;
  rep.beta_continuity = bc;
  const double lam = bc / alpha;
  const double lip1_g = detail::lip_on_nodes(g.grid, g.values, gnodes, 1.0);
  const double lip1_g2 = detail::lip_on_nodes(g.grid, g2.values, gnodes, 1.0);
  double sup_gg = 0.0;
  for (int n : gnodes) sup_gg = std::max(sup_gg, (g.values.col(n) - g2.values.col(n)).norm());
  add("continuity-inner", detail::lip_on_nodes(g.grid, fg.values - fg2.values, gnodes, bc),
      std::pow(2.0, 1.0 - lam) * lip_f * std::pow(sup_gg, alpha - bc) *
          std::pow(std::pow(lip1_g, alpha) + std::pow(lip1_g2, alpha), lam));
  add("continuity-outer", detail::lip_on_nodes(g.grid, tau * fg.values, gnodes, bc),
      std::pow(2.0, 1.0 - lam) * std::pow(sup_f_minus_f2, 1.0 - lam) * std::pow(lip_f + lip_f2, lam) *
          std::pow(lip1_g, bc));
  return rep;
}

inline std::vector<double> weak_beta_grid(double alpha) {
  return {alpha / 8, alpha / 4, alpha / 2, 3 * alpha / 4, 7 * alpha / 8};
}

inline constexpr double kConvergenceTol = 1e-3;

struct WeakConvergenceReport {
  bool converges = false;
  std::vector<double> betas;
  std::vector<std::vector<double>> trace;  // trace[b][n] = |f_n - f|_{C^{k, beta_b}}
  std::vector<double> tail_max;
};

/// Largest value in the last quarter (rounded up) of a sequence.
inline double tail_max(const std::vector<double>& v) {
  const std::size_t q = std::max<std::size_t>(1, (v.size() + 3) / 4);
  double m = 0.0;
  for (std::size_t i = v.size() - q; i < v.size(); ++i) m = std::max(m, v[i]);
  return m;
}

inline WeakConvergenceReport weak_converges(const std::vector<SampledFunction>& seq, const SampledFunction& f, int k,
                                            double alpha, double tol = kConvergenceTol) {
  if (seq.size() < 8) fail(ErrorKind::SequenceTooShort, "need at least 8 terms to assess a tail");
  WeakConvergenceReport r;
  r.betas = weak_beta_grid(alpha);
  r.converges = true;
  std::vector<SampledFunction> diffs;
  diffs.reserve(seq.size());
  for (const auto& s : seq) diffs.push_back(s - f);
  for (double b : r.betas) {
    std::vector<double> t;
    for (const auto& d : diffs) t.push_back(ck_alpha_norm(d, k, b).total);
    r.tail_max.push_back(tail_max(t));
    if (r.tail_max.back() >= tol) r.converges = false;
    r.trace.push_back(std::move(t));
  }
  return r;
}

struct ExtractionResult {
  std::vector<int> indices;
  SampledFunction limit;
  double scale = 0.0;
  std::vector<double> trace;  // |f_i - limit|_{C^{k,1/2}} along the subsequence
  bool converges = false;
};

namespace detail {

inline double ck_distance(const std::vector<Mat>& a, const std::vector<Mat>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]).colwise().norm().maxCoeff();
  return s;
}

}  // namespace detail

/// Convergent subsequence of a C^{k,1}-bounded sequence. Terms are grouped
/// by leader clustering in the C^k distance at scale eps; the largest group
/// (earliest leader on ties) is kept and re-clustered at eps/2 until it would
/// fall below 8 terms or eps < tol/4. The limit is the group's last term.
inline ExtractionResult arzela_ascoli_extract(const std::vector<SampledFunction>& seq, int k, double bound,
                                              double tol = kConvergenceTol) {
  if (seq.empty()) fail(ErrorKind::SequenceTooShort, "empty sequence");
  std::vector<std::vector<Mat>> jets(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const double n = ck_alpha_norm(seq[i], k, 1.0).total;
    if (n > bound * (1.0 + 1e-12))
      fail(ErrorKind::BudgetViolation, "term " + std::to_string(i) + " exceeds the C^{k,1} budget");
    Mat d = seq[i].values;
    for (int o = 0; o <= k; ++o) {
      if (o > 0) d = grid_gradient(seq[i].grid, d);
      jets[i].push_back(d);
    }
    if (i > 0) detail::require_same_grid(seq[0], seq[i]);
  }

  std::vector<int> current(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) current[i] = static_cast<int>(i);
  double eps = 0.0;
  for (int i : current) eps = std::max(eps, detail::ck_distance(jets[0], jets[static_cast<std::size_t>(i)]));
  eps = std::max(eps, tol);
  for (;;) {
    std::vector<int> leaders;
    std::vector<std::vector<int>> groups;
    for (int i : current) {
      bool placed = false;
      for (std::size_t l = 0; l < leaders.size(); ++l) {
        if (detail::ck_distance(jets[static_cast<std::size_t>(leaders[l])], jets[static_cast<std::size_t>(i)]) <= eps) {
          groups[l].push_back(i);
          placed = true;
          break;
        }
      }
      if (!placed) {
        leaders.push_back(i);
        groups.push_back({i});
      }
    }
    std::size_t best = 0;
    for (std::size_t l = 1; l < groups.size(); ++l)
      if (groups[l].size() > groups[best].size()) best = l;
    if (groups[best].size() < 8 && current.size() >= 8) break;
    current = groups[best];
    if (eps < tol / 4) break;
    eps *= 0.5;
  }

  ExtractionResult r;
  r.indices = current;
  r.scale = eps;
  r.limit = seq[static_cast<std::size_t>(current.back())];
  for (int i : current) r.trace.push_back(ck_alpha_norm(seq[static_cast<std::size_t>(i)] - r.limit, k, 0.5).total);
  r.converges = tail_max(r.trace) < tol;
  return r;
}

}  // namespace aalab
