#pragma once

// Local graph extraction with explicit radius bounds, the moving graph
// frame, and derivative control of the graph function.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "aalab/ambient.hpp"
#include "aalab/holder.hpp"
#include "aalab/submanifold.hpp"
#include "aalab/tensor.hpp"

namespace aalab {

inline constexpr double kReconTol = 1e-8;
inline constexpr double kNewtonTol = 1e-12;
inline constexpr double kFrameCond = 1e12;

/// sqrt(4 r^2 / eps^2 - 1), the slope cap of the disaster trichotomy.
inline double mu_graph(double eps, double r) {
  if (!(eps > 0.0) || !(r > eps)) fail(ErrorKind::Domain, "mu_graph needs r > eps > 0");
  return std::sqrt(4.0 * r * r / (eps * eps) - 1.0);
}

/// Closed-form comparison solution of u' = K'(1 + u^2)^{3/2}, u(0) = 0.
inline double comparison_solution(double kp, double t) {
  const double s = kp * t;
  if (s >= 1.0) return std::numeric_limits<double>::infinity();
  return s / std::sqrt(1.0 - s * s);
}

struct ComparisonTrace {
  std::vector<double> t;
  std::vector<double> u;
};

/// RK4 on the comparison ODE from 0 to t_end.
inline ComparisonTrace integrate_comparison(double kp, double t_end, int steps) {
  ComparisonTrace tr;
  auto rhs = [kp](double u) { return kp * std::pow(1.0 + u * u, 1.5); };
  const double h = t_end / steps;
  double u = 0.0;
  tr.t.push_back(0.0);
  tr.u.push_back(0.0);
  for (int i = 0; i < steps; ++i) {
    const double k1 = rhs(u);
    const double k2 = rhs(u + 0.5 * h * k1);
    const double k3 = rhs(u + 0.5 * h * k2);
    const double k4 = rhs(u + h * k3);
    u += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    tr.t.push_back((i + 1) * h);
    tr.u.push_back(u);
  }
  return tr;
}

namespace detail {

// Time for the comparison solution to reach slope b: dt/ds = cos(s)/K' with
// u = tan s, integrated by RK4 in s.
inline double comparison_hitting_time(double kp, double b, int steps = 400) {
  const double s_end = std::atan(b);
  const double h = s_end / steps;
  double t = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double s = i * h;
    t += h / 6.0 * (std::cos(s) + 4 * std::cos(s + 0.5 * h) + std::cos(s + h)) / kp;
  }
  return t;
}

}  // namespace detail

/// Largest t with comparison_solution(K', t) <= B, cross-checked against the
/// integrated hitting time.
inline double ode_radius(double kp, double b) {
  if (!(kp > 0.0) || !(b > 0.0)) fail(ErrorKind::Domain, "ode_radius needs K' > 0 and B > 0");
  const double t = b / (kp * std::sqrt(1.0 + b * b));
  const double check = detail::comparison_hitting_time(kp, b);
  if (std::abs(check - t) > 1e-8 * std::max(1.0, t))
    fail(ErrorKind::NonConvergence, "comparison integration disagrees with the closed form");
  return t;
}

/// Euclidean II bound from a g-bound K, through the exponential chart:
/// |M| |M^-1|^{1/2} K from the chart's first derivative, and
/// (3/2) |M| |M^-1|^2 |DM| from its second derivative (Christoffel size).
inline double comparison_bound_KL(double k, const MetricStats& s) {
  return s.norm * (std::sqrt(s.inv_norm) * k + 1.5 * s.inv_norm * s.inv_norm * s.deriv_norm);
}

struct BoundBudget {
  double mu_graph = 0.0;
  double K = 0.0;
  double K_prime = 0.0;
  double t_star = 0.0;  // raw ODE radius before the eps/2 cap
  double mu_II = 0.0;
  double Delta = 0.0;
  double B = 0.0;
  std::vector<double> B_m;
  MetricStats stats;
  double measured_II = 0.0;
};

/// Failure of extract_graph; `witness` is the chart point x where it happened.
class ExtractionFailure : public LabError {
 public:
  ExtractionFailure(ErrorKind kind, const std::string& what, Vec witness, double reached)
      : LabError(kind, what), witness(std::move(witness)), reached(reached) {}
  Vec witness;
  double reached;  // largest radius fully solved before the failure
};

struct ExtractOptions {
  double eps = std::numeric_limits<double>::infinity();
  double r = std::numeric_limits<double>::infinity();
  std::optional<double> slope_cap;  // default mu_graph(eps, r) when finite
  int per_axis = 41;
  int newton_iters = 20;
};

/// Graph of f over B_delta(0) after recentering i(p) -> 0 and rotating by A.
struct GraphPatch {
  Mat rotation;
  Vec origin;      // i(p)
  Vec center;      // p
  double radius = 0.0;
  Grid grid;       // [-delta, delta]^m
  std::vector<char> inside;
  Mat f;           // codim x nodes, zero outside the ball
  Mat df;          // codim * m x nodes, row r * m + a
  Mat reparam;     // m x nodes, alpha(x)
  double eta0 = 0.0;
  double max_f = 0.0;
  double max_df = 0.0;

  int dim() const { return grid.dim(); }
  int codim() const { return static_cast<int>(f.rows()); }

  int center_node() const {
    std::vector<int> idx(static_cast<std::size_t>(dim()));
    for (int a = 0; a < dim(); ++a) idx[static_cast<std::size_t>(a)] = grid.counts[static_cast<std::size_t>(a)] / 2;
    return grid.flat_index(idx);
  }

  Mat df_at(int node) const {
    const int m = dim();
    Mat d(codim(), m);
    for (int r = 0; r < codim(); ++r)
      for (int a = 0; a < m; ++a) d(r, a) = df(r * m + a, node);
    return d;
  }

  /// f on the largest grid-aligned cube inside the ball.
  SampledFunction graph_function() const {
    const int m = dim();
    const double h = grid.spacing(0);
    const int c = grid.counts[0] / 2;
    const int k = static_cast<int>(std::floor(radius / std::sqrt(double(m)) / h + 1e-9));
    if (k < 1) fail(ErrorKind::StencilOverflow, "patch too coarse for a cube subgrid");
    Grid sub(Box::cube(m, k * h), std::vector<int>(static_cast<std::size_t>(m), 2 * k + 1));
    Mat v(codim(), sub.size());
    for (int f2 = 0; f2 < sub.size(); ++f2) {
      auto idx = sub.multi_index(f2);
      for (auto& i : idx) i += c - k;
      v.col(f2) = f.col(grid.flat_index(idx));
    }
    return SampledFunction(sub, v);
  }

  /// max |i(alpha(x)) - (origin + A (x, f(x)))| over ball nodes.
  double recon_residual(const Immersion& im) const {
    double r = 0.0;
    for (int node = 0; node < grid.size(); ++node) {
      if (!inside[static_cast<std::size_t>(node)]) continue;
      Vec z(rotation.rows());
      z << grid.point(node), f.col(node);
      r = std::max(r, (im(reparam.col(node)) - origin - rotation * z).norm());
    }
    return r;
  }

  /// max |pi(A^T (i(alpha(x)) - origin)) - x|.
  double inverse_residual(const Immersion& im) const {
    double r = 0.0;
    const int m = dim();
    for (int node = 0; node < grid.size(); ++node) {
      if (!inside[static_cast<std::size_t>(node)]) continue;
      const Vec z = rotation.transpose() * (im(reparam.col(node)) - origin);
      r = std::max(r, (z.head(m) - grid.point(node)).norm());
    }
    return r;
  }
};

namespace detail {

// g-length of i along the straight parameter segment p -> u (16 midpoints).
inline double segment_length(const Immersion& im, const Vec& p, const Vec& u) {
  const Vec d = u - p;
  if (d.norm() == 0.0) return 0.0;
  double len = 0.0;
  for (int s = 0; s < 16; ++s) {
    const Vec q = p + (s + 0.5) / 16.0 * d;
    const Vec x = im(q);
    const Vec v = im.jacobian_at(q) * d;
    const Mat mm = im.ambient.domain().contains(x) ? im.ambient(x) : Mat::Identity(v.size(), v.size());
    len += std::sqrt(v.dot(mm * v)) / 16.0;
  }
  return len;
}

}  // namespace detail

/// Solve (pi o A^T o (i - i(p)))(alpha(x)) = x outward from 0 by Newton
/// continuation; failures are classified as ambient exit, parameter exit or
/// vertical tangent.
inline GraphPatch extract_graph(const Immersion& im, const Vec& p, double delta, const ExtractOptions& opt = {}) {
  const int m = im.dim();
  const int n = im.ambient.dim();
  if (!(delta > 0.0)) fail(ErrorKind::Domain, "extraction radius must be positive");
  if (!im.grid.box.contains(p)) fail(ErrorKind::ParameterExit, "basepoint outside the parameter box");
  const double cap = opt.slope_cap ? *opt.slope_cap
                     : (std::isfinite(opt.eps) && std::isfinite(opt.r) && opt.r > opt.eps) ? mu_graph(opt.eps, opt.r)
                                                                                            : std::numeric_limits<double>::infinity();
  GraphPatch gp;
  gp.center = p;
  gp.origin = im(p);
  gp.radius = delta;
  const Mat d0 = im.jacobian_at(p);
  detail::check_rank(d0, -1);
  gp.rotation = aligned_rotation(d0);
  const Mat at = gp.rotation.transpose();
  const int per = opt.per_axis % 2 == 1 ? opt.per_axis : opt.per_axis + 1;
  gp.grid = Grid(Box::cube(m, delta), std::vector<int>(static_cast<std::size_t>(m), per));
  const int nodes = gp.grid.size();
  gp.inside.assign(static_cast<std::size_t>(nodes), 0);
  gp.f = Mat::Zero(n - m, nodes);
  gp.df = Mat::Zero((n - m) * m, nodes);
  gp.reparam = Mat::Zero(m, nodes);

  std::vector<int> order;
  for (int f = 0; f < nodes; ++f)
    if (gp.grid.point(f).norm() <= delta * (1 + 1e-12)) {
      gp.inside[static_cast<std::size_t>(f)] = 1;
      order.push_back(f);
    }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return gp.grid.point(a).norm() < gp.grid.point(b).norm(); });

  std::vector<char> solved(static_cast<std::size_t>(nodes), 0);
  const Box& pbox = im.grid.box;
  auto raise = [&](ErrorKind kind, const std::string& why, const Vec& x) {
    throw ExtractionFailure(kind, why + " at |x| = " + std::to_string(x.norm()), x, gp.eta0);
  };

  for (int node : order) {
    const Vec x = gp.grid.point(node);
    // Warm start from the solved neighbour closest to the origin.
    Vec u = p;
    if (node != order.front()) {
      int best = -1;
      const auto idx = gp.grid.multi_index(node);
      const int combos = ipow(3, m);
      for (int c = 0; c < combos; ++c) {
        auto off = slot_digits(c, 3, m);
        auto j = idx;
        bool ok = true;
        for (int a = 0; a < m; ++a) {
          j[static_cast<std::size_t>(a)] += off[static_cast<std::size_t>(a)] - 1;
          if (j[static_cast<std::size_t>(a)] < 0 || j[static_cast<std::size_t>(a)] >= per) ok = false;
        }
        if (!ok) continue;
        const int nb = gp.grid.flat_index(j);
        if (!solved[static_cast<std::size_t>(nb)]) continue;
        if (best < 0 || gp.grid.point(nb).norm() < gp.grid.point(best).norm()) best = nb;
      }
      if (best < 0) raise(ErrorKind::VerticalTangent, "continuation lost its ring", x);
      const Vec ub = gp.reparam.col(best);
      const Mat jb = (at * im.jacobian_at(ub)).topRows(m);
      u = ub + jb.fullPivLu().solve(x - gp.grid.point(best));
    } else {
      u = p + (at * d0).topRows(m).fullPivLu().solve(x);
    }
    // Newton corrector with backtracking; must contract every step.
    auto residual = [&](const Vec& q) { return Vec((at * (im(q) - gp.origin)).head(m) - x); };
    if (!pbox.contains(u)) raise(ErrorKind::ParameterExit, "continuation left the parameter domain", x);
    Vec res = residual(u);
    bool converged = res.norm() <= kNewtonTol * std::max(1.0, delta);
    for (int it = 0; it < opt.newton_iters && !converged; ++it) {
      const Mat j = (at * im.jacobian_at(u)).topRows(m);
      if (smallest_singular_value(j) < 1e-12) raise(ErrorKind::VerticalTangent, "projection is singular", x);
      const Vec step = j.fullPivLu().solve(res);
      double lam = 1.0;
      bool accepted = false;
      for (int bt = 0; bt < 12; ++bt, lam *= 0.5) {
        const Vec trial = u - lam * step;
        if (!pbox.contains(trial)) continue;
        const Vec rt = residual(trial);
        if (rt.norm() < res.norm()) {
          u = trial;
          res = rt;
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        if (!pbox.contains(u - step)) raise(ErrorKind::ParameterExit, "corrector left the parameter domain", x);
        raise(ErrorKind::VerticalTangent, "corrector failed to contract", x);
      }
      converged = res.norm() <= kNewtonTol * std::max(1.0, delta);
    }
    if (!converged) raise(ErrorKind::VerticalTangent, "corrector did not converge in the iteration budget", x);

    const Vec xi = im(u);
    if (!im.ambient.domain().contains(xi)) raise(ErrorKind::AmbientExit, "image left the ambient domain", x);
    const Vec z = at * (xi - gp.origin);
    if (z.norm() >= opt.eps) raise(ErrorKind::AmbientExit, "graph left B_eps(0)", x);
    if (std::isfinite(opt.r) && detail::segment_length(im, p, u) > opt.r)
      raise(ErrorKind::ParameterExit, "preimage left the parameter ball", x);
    const Mat zj = at * im.jacobian_at(u);
    const Mat dfx = zj.bottomRows(n - m) * zj.topRows(m).inverse();
    const double slope = spectral_norm(dfx);
    if (slope > cap) raise(ErrorKind::VerticalTangent, "slope exceeds mu_graph", x);

    gp.reparam.col(node) = u;
    gp.f.col(node) = z.tail(n - m);
    for (int r = 0; r < n - m; ++r)
      for (int a = 0; a < m; ++a) gp.df(r * m + a, node) = dfx(r, a);
    solved[static_cast<std::size_t>(node)] = 1;
    gp.eta0 = std::max(gp.eta0, x.norm());
    gp.max_f = std::max(gp.max_f, gp.f.col(node).norm());
    gp.max_df = std::max(gp.max_df, slope);
  }
  return gp;
}

/// Largest solvable radius, bracketed by bisection on delta.
inline std::pair<double, double> bracket_eta0(const Immersion& im, const Vec& p, double hi,
                                              const ExtractOptions& opt = {}, int rounds = 10) {
  double lo = 0.0;
  for (int i = 0; i < rounds; ++i) {
    const double mid = 0.5 * (lo + hi);
    try {
      extract_graph(im, p, mid, opt);
      lo = mid;
    } catch (const LabError&) {
      hi = mid;
    }
  }
  return {lo, hi};
}

/// Delta and B for graph extraction, with the hypotheses checked on samples.
inline BoundBudget certified_radius(const Immersion& im, const Vec& p, double eps, double r, double k) {
  const int n = im.ambient.dim();
  const Vec x0 = im(p);
  const Grid& g = im.grid;
  const Box ball_box = Box::around(x0, eps);
  if (!im.ambient.domain().contains(ball_box.lo) || !im.ambient.domain().contains(ball_box.hi))
    fail(ErrorKind::HypothesisViolation, "B_eps(i(p)) is not inside the ambient domain");

  // Intrinsic r-ball about p, measured along straight parameter segments.
  Immersion ball = im;
  ball.present.assign(static_cast<std::size_t>(g.size()), 0);
  for (int f = 0; f < g.size(); ++f)
    ball.present[static_cast<std::size_t>(f)] =
        im.is_present(f) && detail::segment_length(im, p, g.point(f)) <= r ? 1 : 0;
  const auto comp = completeness_check(ball, ball_box, g.box);
  if (!comp.complete) fail(ErrorKind::HypothesisViolation, "ball of radius r is not complete in B_eps");

  const FundamentalForms ff = second_fundamental_form(im);
  BoundBudget b;
  b.K = k;
  std::vector<Vec> pts;
  for (int f = 0; f < g.size(); ++f) {
    if (!ball.is_present(f)) continue;
    const Vec xf = im(g.point(f));
    if ((xf - x0).norm() >= eps) continue;
    pts.push_back(xf);
    if (ff.evaluated(f)) b.measured_II = std::max(b.measured_II, ff.norms[0][f]);
  }
  if (b.measured_II > k * (1 + 1e-3) + 1e-12)
    fail(ErrorKind::HypothesisViolation,
         "measured |II| = " + std::to_string(b.measured_II) + " exceeds K = " + std::to_string(k));
  const Grid lattice(ball_box, std::vector<int>(static_cast<std::size_t>(n), 5));
  for (int f = 0; f < lattice.size(); ++f) pts.push_back(lattice.point(f));
  b.stats = metric_stats(im.ambient, pts);
  b.B = mu_graph(eps, std::sqrt(b.stats.inv_norm) * r);
  b.mu_graph = mu_graph(eps, r);
  b.K_prime = comparison_bound_KL(k, b.stats);
  b.t_star = b.K_prime > 0.0 ? ode_radius(b.K_prime, b.B) : std::numeric_limits<double>::infinity();
  b.mu_II = std::min(b.t_star, eps / 2);
  b.Delta = b.mu_II;
  return b;
}

/// Extraction options matching a budget (slope cap B, same radii).
inline ExtractOptions certified_options(const BoundBudget& b, double eps, double r, int per_axis = 41) {
  ExtractOptions o;
  o.eps = eps;
  o.r = r;
  o.slope_cap = b.B;
  o.per_axis = per_axis;
  return o;
}

// Graph frames

struct GraphFrame {
  Vec point;    // (x, f(x))
  Mat tangent;  // columns d^_i = (e_i, d_i f)
  Mat conormal; // columns E^_j = (-grad f^j, e_j)
  Mat normal;   // N^_j = M^-1 E^_j
  Mat basis;    // [tangent | normal]
};

inline GraphFrame graph_frame(const Vec& x, const Vec& fx, const Mat& df, const Mat& metric) {
  const int m = static_cast<int>(x.size());
  const int c = static_cast<int>(fx.size());
  GraphFrame fr;
  fr.point.resize(m + c);
  fr.point << x, fx;
  fr.tangent.resize(m + c, m);
  fr.tangent << Mat::Identity(m, m), df;
  fr.conormal.resize(m + c, c);
  fr.conormal << -df.transpose(), Mat::Identity(c, c);
  fr.normal = metric.ldlt().solve(fr.conormal);
  fr.basis.resize(m + c, m + c);
  fr.basis << fr.tangent, fr.normal;
  Eigen::JacobiSVD<Mat> svd(fr.basis);
  const Vec s = svd.singularValues();
  if (!(s[s.size() - 1] > 0.0) || s[0] / s[s.size() - 1] > kFrameCond)
    fail(ErrorKind::SingularFrame, "graph frame is numerically singular");
  return fr;
}

struct FrameBundle {
  std::vector<GraphFrame> frames;
  double orthogonality_residual = 0.0;  // max |g(d^_i, N^_j)|
};

/// Frames at every node of f's grid; Df from grid differences.
inline FrameBundle frames(const SampledFunction& f, const MetricField& metric) {
  const int m = f.in_dim();
  const int c = f.out_dim();
  const Mat d = f.derivative(1);
  FrameBundle out;
  for (int node = 0; node < f.grid.size(); ++node) {
    Mat df(c, m);
    for (int r = 0; r < c; ++r)
      for (int a = 0; a < m; ++a) df(r, a) = d(r * m + a, node);
    const Vec x = f.grid.point(node);
    Vec pt(m + c);
    pt << x, f.values.col(node);
    if (!metric.domain().contains(pt)) fail(ErrorKind::DomainExit, "graph leaves the metric domain");
    const Mat mm = metric(pt);
    GraphFrame fr = graph_frame(x, f.values.col(node), df, mm);
    const Mat cross = fr.tangent.transpose() * mm * fr.normal;
    out.orthogonality_residual = std::max(out.orthogonality_residual, cross.cwiseAbs().maxCoeff());
    out.frames.push_back(std::move(fr));
  }
  return out;
}

/// Tangential part of V in the frame B = [d^ | N^] (first m columns tangent).
inline Vec projection(const Mat& b, const Vec& v, int m) {
  Eigen::JacobiSVD<Mat> svd(b);
  const Vec s = svd.singularValues();
  if (!(s[s.size() - 1] > 0.0) || s[0] / s[s.size() - 1] > kFrameCond)
    fail(ErrorKind::SingularFrame, "frame matrix is singular");
  return b.leftCols(m) * b.fullPivLu().solve(v).head(m);
}

// Derivative control

struct DerivativeControlReport {
  int order = 2;
  double measured_a = 0.0;      // sup of the summed form norms up to `order`
  double lhs_max = 0.0;         // sup |D^m f|
  double leading_max = 0.0;     // sup |<A_m(d^, ..., d^), E^>|
  double remainder_max = 0.0;   // sup |D^m f - leading|
  double rhs_max = 0.0;         // sup of the pointwise right side (B_m)
  double min_slack = std::numeric_limits<double>::infinity();
  int violations = 0;
  int nodes = 0;
  double identity_residual = 0.0;  // |D^m f - leading| at the centre node
  double gamma_residual = 0.0;     // m = 2: |D^2 f - leading + <Gamma(d^, d^), E^>|
};

/// x -> (x, f(x)) over f's grid. Sampled f (no source) gets its Jacobian
/// from grid derivatives; probing the interpolant would clamp at the edges.
inline Immersion graph_immersion(const SampledFunction& f, const MetricField& metric) {
  const int m = f.in_dim();
  const int c = f.out_dim();
  Immersion im;
  im.grid = f.grid;
  im.ambient = metric;
  im.map = [f, m](const Vec& x) {
    const Vec y = f.at(x);
    Vec out(m + y.size());
    out << x, y;
    return out;
  };
  if (!f.source) {
    const Mat d1 = f.derivative(1);
    const Grid g = f.grid;
    im.jacobian = [d1, g, m, c](const Vec& x) {
      const Vec v = grid_interpolate(g, d1, x);
      Mat j = Mat::Zero(m + c, m);
      j.topRows(m).setIdentity();
      for (int r = 0; r < c; ++r)
        for (int a = 0; a < m; ++a) j(m + r, a) = v[r * m + a];
      return j;
    };
  }
  im.basepoint = 0.5 * (f.grid.box.lo + f.grid.box.hi);
  im.label = "graph of f";
  return im;
}

/// |D^m f| <= |M|^{m/2} |M^-1|^{1/2} (1 + |Df|)^{m+1} K + |remainder| at every
/// evaluated node of f's grid; the leading term is <A_m(d^_i..), E^_k>.
inline DerivativeControlReport derivative_control(const SampledFunction& f, const MetricField& metric, int order,
                                                  double k) {
  if (order < 2) fail(ErrorKind::OrderExhausted, "derivative control starts at order 2");
  const int m = f.in_dim();
  const int c = f.out_dim();
  const int n = m + c;
  const Immersion im = graph_immersion(f, metric);
  const FundamentalForms ff = higher_forms(im, order);

  DerivativeControlReport rep;
  rep.order = order;
  rep.measured_a = ff.max_script_a();
  if (rep.measured_a > k * (1 + 1e-9) + 1e-12)
    fail(ErrorKind::HypothesisViolation, "measured form norm " + std::to_string(rep.measured_a) + " exceeds K");

  const Mat dm = f.derivative(order);
  const Mat d1 = f.derivative(1);
  const int slots = ipow(m, order);
  int centre = -1;
  {
    std::vector<int> idx(static_cast<std::size_t>(m));
    for (int a = 0; a < m; ++a) idx[static_cast<std::size_t>(a)] = f.grid.counts[static_cast<std::size_t>(a)] / 2;
    centre = f.grid.flat_index(idx);
  }
  for (int node = 0; node < f.grid.size(); ++node) {
    if (!ff.evaluated(node)) continue;
    Mat df(c, m);
    for (int r = 0; r < c; ++r)
      for (int a = 0; a < m; ++a) df(r, a) = d1(r * m + a, node);
    const Vec x = f.grid.point(node);
    Vec pt(n);
    pt << x, f.values.col(node);
    const Mat mm = metric(pt);
    Mat conormal(n, c);
    conormal << -df.transpose(), Mat::Identity(c, c);
    const Vec lead = transform_tensor(ff.tensors[static_cast<std::size_t>(order - 2)].col(node), n, m, order,
                                      conormal.transpose(), Mat::Identity(m, m));
    const Vec dfm = dm.col(node);
    const Vec rem = dfm - lead;
    const double lhs = tensor_operator_norm(dfm, c, m, order);
    const double lnorm = tensor_operator_norm(lead, c, m, order);
    const double rnorm = tensor_operator_norm(rem, c, m, order);
    const double sdf = spectral_norm(df);
    const double rhs = std::pow(spectral_norm(mm), 0.5 * order) * std::sqrt(spectral_norm(mm.inverse())) *
                           std::pow(1.0 + sdf, order + 1) * k +
                       rnorm;
    rep.lhs_max = std::max(rep.lhs_max, lhs);
    rep.leading_max = std::max(rep.leading_max, lnorm);
    rep.remainder_max = std::max(rep.remainder_max, rnorm);
    rep.rhs_max = std::max(rep.rhs_max, rhs);
    rep.min_slack = std::min(rep.min_slack, rhs - lhs);
    if (lhs > rhs * (1 + 1e-12) + 1e-14) ++rep.violations;
    ++rep.nodes;
    if (node == centre) rep.identity_residual = rem.cwiseAbs().maxCoeff();
    if (order == 2 && metric.admits_derivative(pt)) {
      Mat tangent(n, m);
      tangent << Mat::Identity(m, m), df;
      const Christoffel gam = christoffel(metric, pt);
      double worst = 0.0;
      for (int a = 0; a < m; ++a)
        for (int b2 = 0; b2 < m; ++b2) {
          const Vec gv = gam.contract(tangent.col(a), tangent.col(b2));
          for (int r = 0; r < c; ++r) {
            const double pred = lead[r * slots + a * m + b2] - gv.dot(conormal.col(r));
            worst = std::max(worst, std::abs(dfm[r * slots + a * m + b2] - pred));
          }
        }
      rep.gamma_residual = std::max(rep.gamma_residual, worst);
    }
  }
  return rep;
}

}  // namespace aalab
