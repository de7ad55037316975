#pragma once

#include <algorithm>
#include <deque>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "aalab/ambient.hpp"
#include "aalab/charts.hpp"
#include "aalab/error.hpp"
#include "aalab/fixtures.hpp"
#include "aalab/ghlimit.hpp"
#include "aalab/graphrep.hpp"
#include "aalab/holder.hpp"
#include "aalab/io.hpp"
#include "aalab/metrics.hpp"
#include "aalab/parallel.hpp"
#include "aalab/submanifold.hpp"

namespace aalab::lab {

using io::Cell;
using io::json;
using io::Series;
using io::Table;

struct Scenario {
  std::string name;
  std::string kind;  // sff | graph | holder | atlas | gh | converge
  std::vector<std::string> fixtures;
  std::map<std::string, double> params;
  std::uint64_t seed = 0;
};

/// `table`/`row` point at the row the verdict was read from.
struct Verdict {
  std::string check;
  bool pass = false;
  std::string detail;
  std::string table;
  int row = -1;
};

struct RunReport {
  std::string scenario;
  std::deque<Table> tables;  // stable references while a run appends
  std::vector<Verdict> verdicts;
  std::vector<std::pair<std::string, std::string>> plots;  // file name, svg
  std::vector<std::string> artifacts;

  bool all_pass() const {
    return !verdicts.empty() && std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
  }

  const Table& table(const std::string& name) const {
    for (const auto& t : tables)
      if (t.name == name) return t;
    fail(ErrorKind::Domain, "report has no table '" + name + "'");
  }
};

struct ParamSpec {
  std::string name;
  double value;
  double lo;
  double hi;
  std::string doc;
};

class Context {
 public:
  Context(const Scenario& sc, const io::Manifest& m, RunReport& r) : sc_(sc), manifest_(m), report_(r) {}

  double p(const std::string& name) const { return sc_.params.at(name); }
  int pi(const std::string& name) const { return static_cast<int>(std::lround(p(name))); }
  std::uint64_t seed() const { return sc_.seed; }
  const io::Manifest& manifest() const { return manifest_; }

  Table& table(const std::string& name, std::vector<std::string> columns) {
    report_.tables.push_back(Table{name, std::move(columns), {}});
    return report_.tables.back();
  }

  Table& table(const std::string& name) {
    for (auto& t : report_.tables)
      if (t.name == name) return t;
    fail(ErrorKind::Domain, "no table '" + name + "'");
  }

  void verdict(std::string check, bool pass, std::string detail, const std::string& table, int row) {
    report_.verdicts.push_back({std::move(check), pass, std::move(detail), table, row});
  }

  /// Records an error as a failure row; returns its index.
  int failure(const std::string& stage, const LabError& e) {
    Table* t = nullptr;
    for (auto& x : report_.tables)
      if (x.name == "failures") t = &x;
    if (!t) t = &table("failures", {"stage", "kind", "message"});
    return t->add({stage, std::string(to_string(e.kind())), e.what()});
  }

  void plot(std::string file, std::string svg) { report_.plots.emplace_back(std::move(file), std::move(svg)); }

  MetricField metric(const std::string& name) const { return manifest_.metric(name); }

  /// Immersion fixture with payload fields and resolution overridden.
  Immersion immersion(const std::string& name, const json& payload = json::object(), int resolution = 0) const {
    json j = manifest_.entry("immersions", name);
    if (!j.contains("payload")) j["payload"] = json::object();
    for (auto it = payload.begin(); it != payload.end(); ++it) j["payload"][it.key()] = it.value();
    if (resolution > 0) j["resolution"] = resolution;
    const std::string amb = j.at("ambient_ref").get<std::string>();
    return io::immersion_from_json(j, manifest_.metric(amb), name);
  }

 private:
  const Scenario& sc_;
  const io::Manifest& manifest_;
  RunReport& report_;
};

struct ScenarioDef {
  std::string name;
  std::string kind;
  std::string summary;
  std::vector<std::string> fixtures;
  std::vector<ParamSpec> params;
  std::function<void(Context&)> body;
};

// ------------------------------------------------------------ fixtures

inline const char* kBuiltinManifest = R"({
  "metrics": {
    "euclid3": {"dimension": 3, "box": {"lo": [-3, -3, -3], "hi": [3, 3, 3]}, "resolution": 0.001, "kind": "identity"},
    "sphere-graph": {"dimension": 2, "box": {"lo": [-0.95, -0.95], "hi": [0.95, 0.95]}, "resolution": 0.001,
                     "kind": "analytic:sphere_graph", "payload": {"radius": 1}}
  },
  "immersions": {
    "cylinder": {"param_box": {"lo": [0, 0], "hi": [1.5707963267948966, 1]}, "resolution": 64, "kind": "cylinder",
                 "payload": {"radius": 1}, "ambient_ref": "euclid3", "basepoint": [0.7853981633974483, 0.5]},
    "sphere": {"param_box": {"lo": [-1.6, -1.6], "hi": [1.6, 1.6]}, "resolution": 64, "kind": "sphere",
               "payload": {"radius": 1}, "ambient_ref": "euclid3", "basepoint": [0, 0]},
    "sphere-patch": {"param_box": {"lo": [-0.4, -0.4], "hi": [0.4, 0.4]}, "resolution": 64, "kind": "sphere",
                     "payload": {"radius": 1}, "ambient_ref": "euclid3", "basepoint": [0, 0]},
    "plane": {"param_box": {"lo": [-1, -1], "hi": [1, 1]}, "resolution": 21, "kind": "graph",
              "payload": {"terms": []}, "ambient_ref": "euclid3", "basepoint": [0, 0]},
    "sine-graph": {"param_box": {"lo": [-1, -1], "hi": [1, 1]}, "resolution": 64, "kind": "graph",
                   "payload": {"terms": [{"amplitude": 1, "wave": [1, 0], "phase": 0}]}, "ambient_ref": "euclid3",
                   "basepoint": [0, 0]}
  }
})";

inline io::Manifest builtin_manifest() { return io::Manifest::parse(kBuiltinManifest); }

namespace detail {

inline double sup_ii_error(const FundamentalForms& f, double expected) {
  return std::max(std::abs(f.max_norm(2) - expected), std::abs(f.min_norm(2) - expected));
}

inline std::string pass_word(bool ok) { return ok ? "pass" : "fail"; }

inline std::vector<double> iota_d(std::size_t n, double start = 1.0) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = start + static_cast<double>(i);
  return v;
}

// ------------------------------------------------------------- scenarios

inline void cylinder_audit(Context& c) {
  const double radius = c.p("radius");
  const int res = c.pi("resolution");
  auto& t = c.table("curvature", {"radius", "resolution", "max_II", "min_II", "expected", "error"});
  double err[2] = {0, 0};
  int rows[2] = {0, 0};
  for (int i = 0; i < 2; ++i) {
    const int r = i == 0 ? res : std::max(4, res / 2);
    const auto f = second_fundamental_form(c.immersion("cylinder", {{"radius", radius}}, r));
    err[i] = sup_ii_error(f, 1 / radius);
    rows[i] = t.add({radius, r, f.max_norm(2), f.min_norm(2), 1 / radius, err[i]});
  }
  c.verdict("II = 1/R within 1e-3", err[0] < 1e-3, "error " + io::fmt(err[0]), "curvature", rows[0]);
  c.verdict("error ratio under refinement >= 3.5", err[1] >= 3.5 * err[0], "ratio " + io::fmt(err[1] / err[0]),
            "curvature", rows[1]);
}

inline void sphere_forms(Context& c) {
  const double radius = c.p("radius");
  const auto im = c.immersion("sphere-patch", {{"radius", radius}}, c.pi("resolution"));
  const auto f = higher_forms(im, 3);
  auto& t = c.table("forms", {"radius", "max_II", "min_II", "max_A3", "max_script_a", "expected_II"});
  const int row = t.add({radius, f.max_norm(2), f.min_norm(2), f.max_norm(3), f.max_script_a(), 1 / radius});
  const double e = sup_ii_error(f, 1 / radius);
  c.verdict("II = 1/R within 1e-3", e < 1e-3, "error " + io::fmt(e), "forms", row);
  c.verdict("A_3 = 0 within 1e-3 (parallel form)", f.max_norm(3) < 1e-3, "max " + io::fmt(f.max_norm(3)), "forms",
            row);
  Mat heat(im.grid.counts[0], im.grid.counts[1]);
  for (int node = 0; node < im.grid.size(); ++node) {
    const auto idx = im.grid.multi_index(node);
    heat(idx[0], idx[1]) = f.evaluated(node) ? f.norms[0][node] : NAN;
  }
  c.plot("forms_II.svg", io::heatmap("|II| on the parameter grid", heat));
}

inline void sphere_cap_cert(Context& c) {
  const double eps = c.p("eps"), r = c.p("r"), k = c.p("K");
  const auto im = c.immersion("sphere", {{"radius", c.p("radius")}}, c.pi("resolution"));
  auto& t = c.table("certificate", {"eps", "r", "K", "mu_graph", "K_prime", "mu_II", "Delta", "B", "max_f",
                                    "max_df", "eta0", "status"});
  try {
    const BoundBudget b = certified_radius(im, im.basepoint, eps, r, k);
    const GraphPatch gp = extract_graph(im, im.basepoint, b.Delta, certified_options(b, eps, r));
    const int row = t.add({eps, r, k, b.mu_graph, b.K_prime, b.mu_II, b.Delta, b.B, gp.max_f, gp.max_df, gp.eta0,
                           "ok"});
    c.verdict("|f| <= eps/2", gp.max_f <= eps / 2, io::fmt(gp.max_f), "certificate", row);
    c.verdict("|Df| <= B", gp.max_df <= b.B, io::fmt(gp.max_df), "certificate", row);
    c.verdict("Delta <= 0.4", b.Delta <= 0.4 + 1e-12, io::fmt(b.Delta), "certificate", row);
    const int n = gp.grid.counts[0];
    Mat heat(n, n);
    for (int node = 0; node < gp.grid.size(); ++node) {
      const auto idx = gp.grid.multi_index(node);
      heat(idx[0], idx[1]) = gp.inside[static_cast<std::size_t>(node)] ? gp.f(0, node) : NAN;
    }
    c.plot("cap_f.svg", io::heatmap("graph function over the tangent ball", heat));
  } catch (const LabError& e) {
    const int row = t.add({eps, r, k, NAN, NAN, NAN, NAN, NAN, NAN, NAN, NAN, std::string(to_string(e.kind()))});
    c.verdict("extraction at Delta succeeds", false, e.what(), "certificate", row);
  }
}

inline void graph_soundness(Context& c) {
  const int count = c.pi("count");
  const int res = c.pi("resolution");
  auto& t = c.table("fixtures", {"seed", "K", "Delta", "B", "max_f", "eps_half", "max_df", "status"});
  int ok = 0, last = -1;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = c.seed() * 1000 + static_cast<std::uint64_t>(i);
    const auto fx = fixtures::random_graph_fixture(seed, 33);
    try {
      const BoundBudget b = certified_radius(fx.im, fx.p, fx.eps, fx.r, fx.K);
      const GraphPatch gp = extract_graph(fx.im, fx.p, b.Delta, certified_options(b, fx.eps, fx.r, res));
      const bool good = gp.max_f <= fx.eps / 2 && gp.max_df <= b.B;
      ok += good ? 1 : 0;
      last = t.add({static_cast<int>(seed), fx.K, b.Delta, b.B, gp.max_f, fx.eps / 2, gp.max_df, good ? "ok" : "bound"});
    } catch (const LabError& e) {
      last = t.add({static_cast<int>(seed), fx.K, NAN, NAN, NAN, fx.eps / 2, NAN, std::string(to_string(e.kind()))});
    }
  }
  c.verdict("certified extraction sound on every fixture", ok == count,
            std::to_string(ok) + "/" + std::to_string(count), "fixtures", last);
}

inline void disaster_modes(Context& c) {
  auto& t = c.table("modes", {"fixture", "delta", "expected", "observed", "witness_norm", "reached"});
  const auto sphere = c.immersion("sphere", {{"radius", 1.0}}, 33);
  const auto plane = c.immersion("plane");
  struct Case {
    std::string name;
    const Immersion* im;
    double delta;
    ExtractOptions opt;
    ErrorKind expected;
  };
  ExtractOptions vert, amb, par;
  vert.eps = 1.5;
  vert.r = 3.0;
  amb.eps = 0.3;
  par.r = 0.2;
  const std::vector<Case> cases{{"sphere", &sphere, 1.2, vert, ErrorKind::VerticalTangent},
                                {"plane", &plane, 0.5, amb, ErrorKind::AmbientExit},
                                {"plane", &plane, 0.5, par, ErrorKind::ParameterExit}};
  for (const auto& k : cases) {
    std::string observed = "none";
    double wn = NAN, reached = NAN;
    try {
      extract_graph(*k.im, k.im->basepoint, k.delta, k.opt);
    } catch (const ExtractionFailure& e) {
      observed = std::string(to_string(e.kind()));
      wn = e.witness.norm();
      reached = e.reached;
    }
    const std::string expected(to_string(k.expected));
    const int row = t.add({k.name, k.delta, expected, observed, wn, reached});
    c.verdict(expected + " classified", observed == expected, observed, "modes", row);
  }
}

inline Grid unit_line(int n) {
  Vec lo(1), hi(1);
  lo << 0;
  hi << 1;
  return Grid::uniform(Box{lo, hi}, n);
}

inline void holder_suite(Context& c) {
  const int pairs = c.pi("pairs");
  std::mt19937_64 rng(c.seed());
  std::uniform_real_distribution<double> u(-1, 1);
  const Grid g = unit_line(121);
  auto trig = [&] {
    std::vector<double> a, w, ph;
    for (int j = 0; j < 3; ++j) {
      a.push_back(u(rng));
      w.push_back(1 + 5 * std::abs(u(rng)));
      ph.push_back(3 * u(rng));
    }
    return [=](double x) {
      double s = 0.0;
      for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * std::sin(w[j] * x + ph[j]);
      return s;
    };
  };
  auto& t = c.table("inequalities", {"pair", "alpha", "name", "lhs", "rhs", "slack"});
  const double alphas[] = {1.0, 0.75, 0.5};
  int violations = 0, last = -1;
  for (int i = 0; i < pairs; ++i) {
    auto pf = trig();
    auto pg = trig();
    double mg = 0.0;
    for (int s = 0; s <= 200; ++s) mg = std::max(mg, std::abs(pg(s / 200.0)));
    const auto f = SampledFunction::scalar(g, [=](const Vec& x) { return pf(x[0]); });
    const auto gg = SampledFunction::scalar(g, [=](const Vec& x) { return 0.5 + 0.45 * pg(x[0]) / (mg + 1e-9); });
    const double alpha = alphas[i % 3];
    const auto r = verify_holder_inequalities(f, gg, 1, alpha, 0.5 * alpha);
    violations += r.violations;
    for (const auto& row : r.rows) last = t.add({i, alpha, row.name, row.lhs, row.rhs, row.slack});
  }
  c.verdict("no inequality violations", violations == 0, std::to_string(violations) + " violations", "inequalities",
            last);
  const auto sq = SampledFunction::scalar(unit_line(10001), [](const Vec& x) { return std::sqrt(x[0]); });
  const double lip = lip_norm(sq, 0.5);
  auto& s = c.table("sqrt", {"alpha", "lip", "expected"});
  const int row = s.add({0.5, lip, 1.0});
  c.verdict("Lip^1/2(sqrt) = 1 within 1e-3", std::abs(lip - 1) < 1e-3, io::fmt(lip), "sqrt", row);
}

inline void isometry_bound(Context& c) {
  const int count = c.pi("triples");
  std::mt19937_64 rng(c.seed());
  auto& t = c.table("triples", {"trial", "dim", "dphi", "bound", "slack", "equality"});
  int violations = 0, equalities = 0, last = -1;
  for (int i = 0; i < count; ++i) {
    const int n = 2 + i % 3;
    const Mat mm = (i % 10 == 0) ? Mat(2.5 * Mat::Identity(n, n)) : metrics::random_spd(n, rng);
    const Mat a = metrics::random_invertible(n, rng);
    const Mat ainv = a.inverse();
    const Mat nn = ainv.transpose() * mm * ainv;
    const auto src = metrics::constant(mm, Box::cube(n, 1.0));
    const auto dst = metrics::constant(nn, Box::cube(n, 100.0));
    const SampledMap phi{[a](const Vec& x) { return Vec(a * x); }, [a](const Vec&) { return a; }, {Vec::Zero(n)}};
    const auto r = isometry_derivative_bound(src, dst, phi);
    violations += r.violations;
    equalities += r.equality_cases;
    last = t.add({i, n, r.max_dphi, r.max_bound, r.min_slack, r.equality_cases});
  }
  c.verdict("|D phi| bound holds", violations == 0, std::to_string(violations) + " violations", "triples", last);
  c.verdict("bound attained at least once", equalities > 0, std::to_string(equalities) + " equality cases", "triples",
            last);
}

inline void sphere_atlas(Context& c) {
  const MetricField g = c.metric("sphere-graph");
  AtlasOptions o;
  o.per_axis = c.pi("per_axis");
  const double R = c.p("R"), rho = c.p("rho"), K = c.p("K");
  const OptimalAtlas at = build_optimal_atlas(g, Vec::Zero(g.dim()), R, rho, K, 0.5, o);
  auto& t = c.table("charts", {"chart", "cx", "cy", "gamma", "iso_pairs", "iso_gap", "iso_tol", "iso_pass"});
  int iso_fail = 0, last = -1;
  for (std::size_t q = 0; q < at.charts.size(); ++q) {
    const auto& ch = at.charts[q];
    const auto& iso = at.isometry[q];
    iso_fail += iso.passed ? 0 : 1;
    last = t.add({static_cast<int>(q), ch.center[0], ch.center[1], ch.gamma, iso.pairs, iso.max_gap, iso.tolerance,
                  pass_word(iso.passed)});
  }
  auto& tr = c.table("transitions", {"chart", "other", "norm"});
  int tlast = -1;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < at.transition_bounds.rows(); ++i)
    for (Eigen::Index j = 0; j < at.transition_bounds.cols(); ++j)
      if (std::isfinite(at.transition_bounds(i, j))) {
        worst = std::max(worst, at.transition_bounds(i, j));
        tlast = tr.add({static_cast<int>(i), static_cast<int>(j), at.transition_bounds(i, j)});
      }
  auto& s = c.table("atlas", {"charts", "K", "rho", "rho_prime", "max_transition", "violations", "coverage_gap"});
  const int row = s.add({static_cast<int>(at.charts.size()), K, rho, at.rho_prime, worst, at.transition_violations,
                         at.coverage_gap});
  c.verdict("distance isometry within 2h on every chart", iso_fail == 0 && !at.charts.empty(),
            std::to_string(iso_fail) + " charts failed", "charts", last);
  c.verdict("transitions bounded by K", at.transition_violations == 0 && worst <= K, "max " + io::fmt(worst),
            tlast >= 0 ? "transitions" : "atlas", tlast >= 0 ? tlast : row);
}

inline void gh_examples(Context& c) {
  auto& t = c.table("distances", {"example", "value", "expected", "exact", "nodes"});
  const PointedSample pt = euclidean_sample(Mat::Zero(1, 1), 0);
  const double L = c.p("length");
  const int n = c.pi("points");
  auto add = [&](const std::string& name, const GHResult& r, double expected) {
    return t.add({name, r.value, expected, r.exact ? "yes" : "no", static_cast<int>(r.nodes)});
  };
  const auto self = gh_distance(samples::circle(n), samples::circle(n));
  int row = add("circle self", self, 0.0);
  c.verdict("d(X,X) = 0", self.value == 0.0, io::fmt(self.value), "distances", row);
  const auto seg = gh_distance(pt, samples::interval(n, L));
  row = add("point vs segment", seg, L / 2);
  c.verdict("point vs segment = L/2", seg.exact && std::abs(seg.value - L / 2) <= 1e-12 * L, io::fmt(seg.value),
            "distances", row);
  const auto ci = gh_distance(samples::circle(n), samples::circle(2 * n));
  const double h = 2 * std::numbers::pi / n;
  row = add("circle two resolutions", ci, h);
  c.verdict("circle resolutions within max h", ci.value <= h, io::fmt(ci.value), "distances", row);
  const auto iv = gh_distance(samples::interval(n, L), samples::interval(2 * n, L));
  const double hi = L / n;
  row = add("interval two resolutions", iv, hi);
  c.verdict("interval resolutions within max h", iv.value <= hi, io::fmt(iv.value), "distances", row);
}

inline void genus_growth(Context& c) {
  const int top = c.pi("max_genus");
  std::vector<PointedSample> seq;
  for (int g = 1; g <= top; ++g) seq.push_back(samples::torus_wedge(g, c.pi("side_points")));
  auto& t = c.table("covering", {"genus", "points", "cov_R/2", "cov_R/4", "cov_R/8"});
  const double R = c.p("R");
  std::vector<double> cov;
  for (int g = 0; g < top; ++g) {
    const auto ball = restrict_ball(seq[static_cast<std::size_t>(g)], R);
    std::vector<Cell> row{g + 1, ball.size()};
    for (double d : {R / 2, R / 4, R / 8}) row.emplace_back(covering_number(ball, d).count);
    cov.push_back(std::strtod(row.back().text.c_str(), nullptr));
    t.add(row);
  }
  c.plot("covering.svg", io::line_plot("covering number at R/8 by genus", {{"Cov", iota_d(cov.size()), cov}}));
  try {
    pointed_limit(seq, R);
    c.verdict("not-totally-bounded (expected)", false, "pointed limit was accepted", "covering",
              static_cast<int>(t.rows.size()) - 1);
  } catch (const LabError& e) {
    const int row = c.failure("pointed_limit", e);
    c.verdict("not-totally-bounded (expected)", e.kind() == ErrorKind::NotTotallyBounded, e.what(), "failures", row);
  }
}

inline void pointed_flatten(Context& c) {
  const int terms = c.pi("terms");
  std::vector<PointedSample> seq;
  for (int n = 1; n <= terms; ++n)
    seq.push_back(samples::graph_disc(
        [n](const Vec& x) {
          Vec g(2);
          g << -std::sin(n * x[0]), 0;
          return g;
        },
        c.p("R"), 7, 31));
  const auto r = pointed_limit(seq, c.p("R"));
  auto& t = c.table("trace", {"n", "gh_distance", "exact"});
  for (std::size_t i = 0; i < r.trace.size(); ++i)
    t.add({static_cast<int>(i + 1), r.trace[i], r.trace_exact[i] ? "yes" : "no"});
  auto& s = c.table("summary", {"resolution", "tolerance", "monotone_tail", "converged"});
  const int row = s.add({r.resolution, r.tolerance, pass_word(r.monotone_tail), pass_word(r.converged)});
  c.plot("gh_trace.svg", io::line_plot("GH distance to the limit", {{"d_GH", iota_d(r.trace.size()), r.trace}}));
  c.verdict("pointed GH limit reached", r.converged, "tail below " + io::fmt(r.tolerance), "summary", row);
}

inline Immersion sine_term(const Context& c, int n, int res) {
  const double a = 1.0 / (static_cast<double>(n) * n);
  json term = json::object();
  term["amplitude"] = a;
  term["wave"] = json::array({n, 0});
  term["phase"] = 0.0;
  json payload = json::object();
  payload["terms"] = json::array({term});
  return c.immersion("sine-graph", payload, res);
}

inline void sine_converge(Context& c) {
  const int terms = c.pi("terms");
  const int res = c.pi("resolution");
  std::vector<Immersion> seq;
  for (int n = 1; n <= terms; ++n) seq.push_back(sine_term(c, n, res));
  LimitOptions o;
  o.alpha = c.p("alpha");
  o.tol = c.p("tol");
  const auto r = limit_submanifold(seq, Vec::Zero(2), c.p("r_ball"), 2, c.p("budget"), o);
  auto& t = c.table("extraction", {"step", "index", "trace"});
  for (std::size_t i = 0; i < r.extraction.trace.size(); ++i)
    t.add({static_cast<int>(i), r.extraction.indices[i] + 1, r.extraction.trace[i]});
  auto& w = c.table("weak", {"beta", "tail_max", "tol"});
  int wrow = -1;
  std::vector<Series> series;
  for (std::size_t b = 0; b < r.weak.betas.size(); ++b) {
    wrow = w.add({r.weak.betas[b], r.weak.tail_max[b], o.tol});
    series.push_back({"beta " + io::fmt(r.weak.betas[b]), iota_d(r.weak.trace[b].size()), r.weak.trace[b]});
  }
  auto& s = c.table("summary", {"terms", "Delta", "holder_budget", "limit_sup", "limit_a", "within_budget", "converged"});
  const int row = s.add({terms, r.Delta, r.holder_budget, r.limit_sup, r.limit_a, pass_word(r.limit_within_budget),
                         pass_word(r.converged)});
  c.plot("weak_trace.svg", io::line_plot("weak Hoelder distance to the limit", series, true));
  c.verdict("limit inside the curvature budget", r.limit_within_budget, io::fmt(r.limit_a), "summary", row);
  c.verdict("weak Hoelder trace below tol by the tail", r.converged && wrow >= 0,
            wrow >= 0 ? "max tail " + io::fmt(*std::max_element(r.weak.tail_max.begin(), r.weak.tail_max.end()))
                      : "too few terms",
            wrow >= 0 ? "weak" : "summary", wrow >= 0 ? wrow : row);
}

inline void cylinder_pinch(Context& c) {
  const double budget = c.p("budget");
  const int terms = c.pi("terms");
  std::vector<Immersion> seq;
  for (int n = 1; n <= terms; ++n)
    seq.push_back(c.immersion("cylinder", {{"radius", 1.0 / n}}, c.pi("resolution")));
  auto& t = c.table("sequence", {"n", "radius", "II"});
  for (int n = 1; n <= terms; ++n) t.add({n, 1.0 / n, static_cast<double>(n)});
  const int predicted = static_cast<int>(std::floor(budget)) + 1;
  try {
    // the R-ball is the whole sheet; the base point sits mid-cylinder
    limit_submanifold(seq, seq.front().basepoint, 0.5, 2, budget);
    c.verdict("hypothesis-violation (expected)", false, "sequence accepted", "sequence", terms - 1);
  } catch (const SequenceFailure& e) {
    const int row = c.failure("term " + std::to_string(e.index + 1) + " measured " + io::fmt(e.measured), e);
    c.verdict("hypothesis-violation (expected)",
              e.kind() == ErrorKind::BudgetViolation && e.index + 1 == predicted,
              "first violation at n = " + std::to_string(e.index + 1) + ", predicted " + std::to_string(predicted),
              "failures", row);
  }
}

inline void atlas_convergence(Context& c) {
  auto atlas = [&](double radius) {
    AtlasOptions o;
    o.per_axis = 7;
    o.check_distances = false;
    return build_optimal_atlas(metrics::sphere_graph(2, radius, Box::cube(2, 0.95)), Vec::Zero(2), 0.03, 0.3, 4.0,
                               0.5, o);
  };
  const auto lim = atlas(1.0);
  std::vector<OptimalAtlas> seq;
  std::vector<std::function<Vec(const Vec&)>> maps;
  for (int n = 1; n <= c.pi("terms"); ++n) {
    const double rn = 1.0 + std::pow(4.0, -n);
    seq.push_back(atlas(rn));
    maps.push_back([rn](const Vec& x) { return Vec(rn * x); });
  }
  const auto r = strong_convergence_check(seq, lim, maps, 2, 0.5);
  auto& t = c.table("pairs", {"chart", "other", "first_defined", "tail_max", "converges"});
  int last = -1;
  for (const auto& p : r.pairs) {
    const double tail = p.weak.tail_max.empty() ? NAN : *std::max_element(p.weak.tail_max.begin(), p.weak.tail_max.end());
    last = t.add({p.q, p.q2, p.first_defined, tail, pass_word(p.converges)});
  }
  c.verdict("transitions converge weakly on every pair", r.all_pass && last >= 0,
            std::to_string(r.pairs.size()) + " pairs", "pairs", last);
}

}  // namespace detail

/// Built-in catalog; names are build constants.
inline const std::vector<ScenarioDef>& catalog() {
  static const std::vector<ScenarioDef> defs = {
      {"cylinder-audit", "sff", "second fundamental form of a round cylinder against 1/R", {"cylinder"},
       {{"radius", 1.0, 0.05, 20.0, "cylinder radius"}, {"resolution", 64, 8, 256, "samples per axis"}},
       detail::cylinder_audit},
      {"sphere-forms", "sff", "|II| and the parallel third form of a round sphere", {"sphere-patch"},
       {{"radius", 1.0, 0.1, 20.0, "sphere radius"}, {"resolution", 64, 8, 256, "samples per axis"}},
       detail::sphere_forms},
      {"sphere-cap-cert", "graph", "certified graph radius of a spherical cap", {"sphere"},
       {{"radius", 1.0, 0.1, 20.0, "sphere radius"},
        {"eps", 0.8, 0.01, 10.0, "ambient ball radius"},
        {"r", 2.0, 0.01, 10.0, "intrinsic ball radius"},
        {"K", 1.0, 0.01, 100.0, "curvature bound"},
        {"resolution", 64, 8, 256, "samples per axis"}},
       detail::sphere_cap_cert},
      {"graph-soundness", "graph", "certified extraction on random analytic fixtures", {},
       {{"count", 20, 1, 200, "number of random fixtures"}, {"resolution", 21, 9, 81, "patch samples per axis"}},
       detail::graph_soundness},
      {"disaster-modes", "graph", "vertical tangent, ambient exit and parameter exit", {"sphere", "plane"}, {},
       detail::disaster_modes},
      {"holder-suite", "holder", "Hoelder product, sum and composition inequalities", {},
       {{"pairs", 200, 1, 2000, "random function pairs"}}, detail::holder_suite},
      {"isometry-bound", "holder", "derivative bound for linear isometries of constant metrics", {},
       {{"triples", 100, 1, 5000, "random metric/isometry triples"}}, detail::isometry_bound},
      {"sphere-atlas", "atlas", "(K, rho)-optimal atlas of the round sphere graph metric", {"sphere-graph"},
       {{"R", 0.05, 0.0, 0.5, "covered ball radius"},
        {"rho", 0.3, 0.05, 0.6, "chart radius"},
        {"K", 3.0, 1.0, 20.0, "atlas bound"},
        {"per_axis", 13, 5, 41, "chart samples per axis"}},
       detail::sphere_atlas},
      {"gh-examples", "gh", "pointed GH distances with known values", {},
       {{"length", 1.0, 0.01, 100.0, "segment length"}, {"points", 6, 2, 12, "points per sample"}},
       detail::gh_examples},
      {"genus-growth", "gh", "wedges of flat tori: covering numbers grow without bound", {},
       {{"max_genus", 12, 4, 40, "number of tori in the last term"},
        {"side_points", 6, 3, 12, "lattice points per torus side"},
        {"R", 1.0, 0.1, 5.0, "ball radius"}},
       detail::genus_growth},
      {"pointed-flatten", "gh", "pointed GH limit of flattening graph discs", {},
       {{"terms", 12, 8, 40, "sequence length"}, {"R", 0.8, 0.1, 1.0, "ball radius"}}, detail::pointed_flatten},
      {"sine-flatten", "converge", "sin(n x)/n^2 graphs converging to the flat sheet", {"sine-graph"},
       {{"terms", 32, 8, 64, "sequence length"},
        {"resolution", 64, 17, 128, "samples per axis"},
        {"r_ball", 0.9, 0.1, 1.0, "intrinsic ball radius"},
        {"budget", 1.1, 0.5, 100.0, "curvature budget"},
        {"alpha", 1.0, 0.01, 1.0, "Hoelder exponent"},
        {"tol", 1e-3, 1e-9, 1.0, "tail tolerance"}},
       detail::sine_converge},
      {"cylinder-pinch", "converge", "cylinders of radius 1/n exceed the curvature budget", {"cylinder"},
       {{"budget", 4.5, 0.5, 50.0, "curvature budget"},
        {"terms", 8, 2, 64, "sequence length"},
        {"resolution", 33, 9, 128, "samples per axis"}},
       detail::cylinder_pinch},
      {"atlas-convergence", "converge", "atlases of spheres of radius 1 + 4^-n converge to the unit sphere", {},
       {{"terms", 8, 8, 16, "sequence length"}}, detail::atlas_convergence},
  };
  return defs;
}

inline const ScenarioDef& find_scenario(const std::string& name) {
  for (const auto& d : catalog())
    if (d.name == name) return d;
  fail(ErrorKind::FixtureNotFound, "no scenario named '" + name + "'");
}

/// Scenario with defaults filled in and `overrides` applied.
inline Scenario make_scenario(const std::string& name, const std::map<std::string, double>& overrides = {},
                              std::uint64_t seed = 0) {
  const ScenarioDef& d = find_scenario(name);
  Scenario s{d.name, d.kind, d.fixtures, {}, seed};
  for (const auto& p : d.params) s.params[p.name] = p.value;
  for (const auto& [k, v] : overrides) {
    auto it = std::find_if(d.params.begin(), d.params.end(), [&](const ParamSpec& p) { return p.name == k; });
    if (it == d.params.end()) fail(ErrorKind::ParamOutOfRange, "scenario '" + name + "' has no parameter '" + k + "'");
    s.params[k] = v;
  }
  return s;
}

inline void validate(const Scenario& s, const io::Manifest& m) {
  const ScenarioDef& d = find_scenario(s.name);
  for (const auto& p : d.params) {
    auto it = s.params.find(p.name);
    if (it == s.params.end()) fail(ErrorKind::ParamOutOfRange, "missing parameter '" + p.name + "'");
    if (!(it->second >= p.lo && it->second <= p.hi))
      fail(ErrorKind::ParamOutOfRange, "parameter '" + p.name + "' = " + io::fmt(it->second) + " outside [" +
                                           io::fmt(p.lo) + ", " + io::fmt(p.hi) + "]");
  }
  for (const auto& f : s.fixtures)
    if (!m.has("metrics", f) && !m.has("immersions", f)) fail(ErrorKind::FixtureNotFound, "fixture '" + f + "' not found");
}

/// Deterministic given (scenario, seed). Invalid scenarios throw
/// (fixture-not-found, param-out-of-range); module errors become rows.
inline RunReport run(const Scenario& s, const io::Manifest& manifest) {
  validate(s, manifest);
  RunReport rep;
  rep.scenario = s.name;
  Context ctx(s, manifest, rep);
  try {
    find_scenario(s.name).body(ctx);
  } catch (const LabError& e) {
    const int row = ctx.failure(s.name, e);
    ctx.verdict("completed without module errors", false, e.what(), "failures", row);
  }
  return rep;
}

inline RunReport run(const Scenario& s) { return run(s, builtin_manifest()); }

/// Independent scenarios on up to LAB_THREADS workers; reports come back in
/// input order.
inline std::vector<RunReport> run_all(const std::vector<Scenario>& list, const io::Manifest& manifest) {
  std::vector<RunReport> out(list.size());
  parallel_for(static_cast<int>(list.size()),
               [&](int i) { out[static_cast<std::size_t>(i)] = run(list[static_cast<std::size_t>(i)], manifest); });
  return out;
}

}  // namespace aalab::lab
