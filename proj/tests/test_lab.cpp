#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "aalab/io.hpp"
#include "aalab/parallel.hpp"
#include "aalab/scenarios.hpp"

namespace aalab {
namespace {

namespace fs = std::filesystem;
using io::json;

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const LabError& e) {
    return e.kind();
  }
  return ErrorKind::Domain;
}

TEST(Manifest, MetricKinds) {
  const auto m = io::Manifest::parse(R"({"metrics": {
    "id": {"dimension": 2, "box": {"lo": [-1, -1], "hi": [1, 1]}, "resolution": 0.001, "kind": "identity"},
    "dg": {"dimension": 2, "box": {"lo": [-1, -1], "hi": [1, 1]}, "kind": "diag", "payload": [4, 1]},
    "sg": {"dimension": 2, "box": {"lo": [-0.5, -0.5], "hi": [0.5, 0.5]}, "kind": "analytic:sphere_graph",
           "payload": {"radius": 2}},
    "gr": {"dimension": 1, "box": {"lo": [0], "hi": [1]}, "resolution": 0.5, "kind": "grid", "payload": [1, 2, 3]}
  }})");
  Vec p(2);
  p << 0.3, -0.2;
  EXPECT_EQ(m.metric("id")(p), Mat::Identity(2, 2));
  EXPECT_EQ(m.metric("dg")(p)(0, 0), 4.0);
  EXPECT_EQ(m.metric("sg")(p), metrics::sphere_graph(2, 2.0, Box::cube(2, 0.5))(p));
  Vec q(1);
  q << 0.25;
  EXPECT_NEAR(m.metric("gr")(q)(0, 0), 1.5, 1e-15);  // linear between nodes
  EXPECT_TRUE(io::check_manifest(m).empty());
}

TEST(Manifest, Errors) {
  const auto m = io::Manifest::parse(R"({"metrics": {
    "short": {"dimension": 1, "box": {"lo": [0], "hi": [1]}, "resolution": 0.5, "kind": "grid", "payload": [1, 2]},
    "neg": {"dimension": 1, "box": {"lo": [0], "hi": [1]}, "resolution": 0.5, "kind": "grid", "payload": [1, -2, 3]},
    "odd": {"dimension": 2, "box": {"lo": [0], "hi": [1]}, "kind": "identity"},
    "what": {"dimension": 1, "box": {"lo": [0], "hi": [1]}, "kind": "analytic:nope"}
  }, "immersions": {
    "dangling": {"param_box": {"lo": [0, 0], "hi": [1, 1]}, "kind": "sphere", "ambient_ref": "missing"}
  }})");
  EXPECT_EQ(kind_of([&] { m.metric("nothere"); }), ErrorKind::FixtureNotFound);
  for (const char* n : {"short", "neg", "odd", "what"})
    EXPECT_EQ(kind_of([&] { m.metric(n); }), ErrorKind::InvalidFixture) << n;
  EXPECT_EQ(kind_of([&] { m.immersion("dangling"); }), ErrorKind::FixtureNotFound);
  const auto issues = io::check_manifest(m);
  EXPECT_EQ(issues.size(), 5u);
  EXPECT_EQ(kind_of([] { io::Manifest::parse("{not json"); }), ErrorKind::InvalidFixture);
  EXPECT_EQ(kind_of([] { io::Manifest::load("/nonexistent/manifest.json"); }), ErrorKind::FixtureNotFound);
}

TEST(Manifest, ImmersionKindsMatchBuilders) {
  const auto m = lab::builtin_manifest();
  const auto flat = m.metric("euclid3");
  json j = m.entry("immersions", "cylinder");
  j["payload"]["radius"] = 0.5;
  j["resolution"] = 9;
  const Immersion a = io::immersion_from_json(j, flat);
  const Immersion b = immersions::cylinder(flat, 0.5, a.grid);
  EXPECT_EQ(a.image(), b.image());

  // a grid immersion sampled from the cylinder reproduces its nodes
  json g = j;
  g["kind"] = "grid";
  g["payload"] = io::flat_values(b.image());
  const Immersion c = io::immersion_from_json(g, flat);
  EXPECT_NEAR((c.image() - b.image()).cwiseAbs().maxCoeff(), 0.0, 1e-15);
  EXPECT_NEAR((c.jacobian_at(a.grid.point(40)) - b.jacobian_at(a.grid.point(40))).norm(), 0.0, 0.05);

  json s = m.entry("immersions", "sine-graph");
  s["resolution"] = 9;
  const Immersion d = io::immersion_from_json(s, flat);
  const Vec x = d.grid.point(17);
  EXPECT_NEAR(d(x)[2], std::sin(x[0]), 1e-15);
  EXPECT_NEAR(d.jacobian_at(x)(2, 0), std::cos(x[0]), 1e-15);
}

TEST(Serialisation, FunctionAndPatchRoundTrip) {
  const Grid g = Grid::uniform(Box::cube(2, 1.0), 7);
  const auto f = SampledFunction::sample(g, [](const Vec& x) {
    Vec y(2);
    y << x[0] * x[1] + 0.1, std::exp(x[0]) / 3;
    return y;
  });
  const auto back = io::function_from_json(json::parse(io::to_json(f).dump()));
  EXPECT_TRUE(back.same_grid(f));
  EXPECT_EQ(back.values, f.values);  // dump keeps round-trip precision

  const auto sp = immersions::sphere(metrics::identity(3, Box::cube(3, 3.0)), 1.0, Grid::uniform(Box::cube(2, 1.0), 21));
  const GraphPatch gp = extract_graph(sp, Vec::Zero(2), 0.3);
  const GraphPatch rt = io::patch_from_json(json::parse(io::to_json(gp).dump()));
  EXPECT_EQ(rt.rotation, gp.rotation);
  EXPECT_EQ(rt.f, gp.f);
  EXPECT_EQ(rt.reparam, gp.reparam);
  EXPECT_EQ(rt.inside, gp.inside);
  EXPECT_EQ(rt.radius, gp.radius);
  EXPECT_LT(rt.recon_residual(sp), 1e-8);
}

TEST(Csv, FormattingAndQuoting) {
  io::Table t{"t", {"a", "b"}, {}};
  t.add({0.1, "x,y"});
  t.add({1e-300, "say \"hi\""});
  t.add({std::numbers::pi, std::nan("")});
  EXPECT_EQ(io::to_csv(t), "a,b\n0.1,\"x,y\"\n1e-300,\"say \"\"hi\"\"\"\n3.14159265359,nan\n");
  EXPECT_THROW(t.add({1.0}), LabError);
  EXPECT_EQ(t.numbers("a")[0], 0.1);
  Mat d(2, 2);
  d << 0, 1, 1, 0;
  EXPECT_EQ(io::distance_csv(d, 1), "0,1\n1,0\nbasepoint,1\n");
}

TEST(Svg, WellFormed) {
  const std::string s = io::line_plot("a<b", {{"s", {1, 2, 3}, {1, 0.1, 0.01}}}, true);
  EXPECT_EQ(s.rfind("<svg", 0), 0u);
  EXPECT_NE(s.find("a&lt;b"), std::string::npos);
  EXPECT_NE(s.find("<polyline"), std::string::npos);
  EXPECT_NE(s.find("</svg>"), std::string::npos);
  Mat v(2, 2);
  v << 0, 1, NAN, 0.5;
  const std::string h = io::heatmap("h", v);
  EXPECT_NE(h.find("#ff0000"), std::string::npos);
  EXPECT_NE(h.find("#ffffff"), std::string::npos);
}

TEST(Parallel, CoversEveryIndexAndRethrows) {
  for (int w : {1, 3}) {
    std::vector<int> hits(50, 0);
    parallel_for(50, [&](int i) { hits[static_cast<std::size_t>(i)] += 1; }, w);
    EXPECT_EQ(std::count(hits.begin(), hits.end(), 1), 50);
    EXPECT_THROW(parallel_for(10, [](int i) { if (i == 7) fail(ErrorKind::Domain, "x"); }, w), LabError);
  }
  setenv("LAB_THREADS", "2", 1);
  EXPECT_EQ(worker_count(), 2);
  setenv("LAB_THREADS", "zero", 1);
  EXPECT_GE(worker_count(), 1);
  unsetenv("LAB_THREADS");
}

TEST(Scenarios, CatalogCoversEveryKind) {
  std::set<std::string> names, kinds;
  for (const auto& d : lab::catalog()) {
    EXPECT_TRUE(names.insert(d.name).second) << d.name;
    kinds.insert(d.kind);
    for (const auto& p : d.params) EXPECT_TRUE(p.value >= p.lo && p.value <= p.hi) << d.name << "." << p.name;
  }
  EXPECT_GE(names.size(), 8u);
  for (const char* n : {"cylinder-pinch", "sphere-cap-cert", "genus-growth"}) EXPECT_TRUE(names.count(n)) << n;
  EXPECT_EQ(kinds, (std::set<std::string>{"sff", "graph", "holder", "atlas", "gh", "converge"}));
}

TEST(Scenarios, InvalidScenarios) {
  EXPECT_EQ(kind_of([] { lab::make_scenario("no-such"); }), ErrorKind::FixtureNotFound);
  EXPECT_EQ(kind_of([] { lab::make_scenario("cylinder-audit", {{"bogus", 1}}); }), ErrorKind::ParamOutOfRange);
  EXPECT_EQ(kind_of([] { lab::run(lab::make_scenario("cylinder-audit", {{"radius", 100}})); }),
            ErrorKind::ParamOutOfRange);
  io::Manifest empty = io::Manifest::parse("{}");
  EXPECT_EQ(kind_of([&] { lab::run(lab::make_scenario("cylinder-audit"), empty); }), ErrorKind::FixtureNotFound);
}

TEST(Scenarios, CylinderAuditMatchesOneOverR) {
  for (double r : {1.0, 0.5, 0.25}) {
    const auto rep = lab::run(lab::make_scenario("cylinder-audit", {{"radius", r}}));
    EXPECT_TRUE(rep.all_pass()) << r;
    const auto& t = rep.table("curvature");
    EXPECT_NEAR(t.numbers("max_II")[0], 1 / r, 1e-3);
    for (const auto& v : rep.verdicts) {
      ASSERT_GE(v.row, 0);
      EXPECT_LT(v.row, static_cast<int>(rep.table(v.table).rows.size()));
    }
  }
}

TEST(Scenarios, ModuleErrorsBecomeRows) {
  // an intrinsic radius this small starves the pinch sequence of grid cells
  const auto rep = lab::run(lab::make_scenario("cylinder-pinch", {{"resolution", 9}, {"budget", 30}}));
  EXPECT_FALSE(rep.all_pass());
  const auto& f = rep.table("failures");
  ASSERT_FALSE(f.rows.empty());
  EXPECT_EQ(rep.verdicts.back().table, "failures");
}

TEST(Scenarios, ExpectedFailuresAreVerdicts) {
  const auto pinch = lab::run(lab::make_scenario("cylinder-pinch"));
  EXPECT_TRUE(pinch.all_pass());
  EXPECT_EQ(pinch.verdicts[0].check, "hypothesis-violation (expected)");
  EXPECT_EQ(pinch.table("failures").rows[0][1], "budget-violation");
  const auto genus = lab::run(lab::make_scenario("genus-growth"));
  EXPECT_TRUE(genus.all_pass());
  EXPECT_EQ(genus.table("failures").rows[0][1], "not-totally-bounded");
}

TEST(Scenarios, ReplayIsByteIdentical) {
  for (const char* n : {"graph-soundness", "holder-suite", "isometry-bound", "gh-examples"}) {
    const auto s = lab::make_scenario(n, {}, 7);
    const auto a = lab::run(s), b = lab::run(s);
    ASSERT_EQ(a.tables.size(), b.tables.size());
    for (std::size_t i = 0; i < a.tables.size(); ++i) EXPECT_EQ(io::to_csv(a.tables[i]), io::to_csv(b.tables[i])) << n;
  }
  const auto a = lab::run(lab::make_scenario("holder-suite", {{"pairs", 5}}, 1));
  const auto b = lab::run(lab::make_scenario("holder-suite", {{"pairs", 5}}, 2));
  EXPECT_NE(io::to_csv(a.tables[0]), io::to_csv(b.tables[0]));
}

TEST(Scenarios, ParallelRunMatchesSerial) {
  std::vector<lab::Scenario> list{lab::make_scenario("gh-examples"), lab::make_scenario("disaster-modes"),
                                  lab::make_scenario("isometry-bound", {{"triples", 20}})};
  setenv("LAB_THREADS", "3", 1);
  const auto par = lab::run_all(list, lab::builtin_manifest());
  unsetenv("LAB_THREADS");
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto ser = lab::run(list[i]);
    ASSERT_EQ(par[i].tables.size(), ser.tables.size());
    for (std::size_t k = 0; k < ser.tables.size(); ++k)
      EXPECT_EQ(io::to_csv(par[i].tables[k]), io::to_csv(ser.tables[k]));
  }
}

// ------------------------------------------------------------------ binary

int lab_exit(const std::string& args, std::string* out = nullptr) {
  const fs::path log = fs::temp_directory_path() / "aalab_cli_test.log";
  const int st = std::system((std::string(AALAB_LAB_BINARY) + " " + args + " > " + log.string() + " 2>&1").c_str());
  if (out) {
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    *out = ss.str();
  }
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Cli, ExitCodes) {
  std::string out;
  EXPECT_EQ(lab_exit("list", &out), 0);
  EXPECT_NE(out.find("cylinder-pinch"), std::string::npos);
  EXPECT_EQ(lab_exit(""), 1);
  EXPECT_EQ(lab_exit("frobnicate"), 1);
  EXPECT_EQ(lab_exit("run no-such-scenario"), 1);
  EXPECT_EQ(lab_exit("run cylinder-audit --param radius=1000"), 1);
  EXPECT_EQ(lab_exit("run cylinder-audit --param radius"), 1);
  EXPECT_EQ(lab_exit("run cylinder-audit --param radius=0.5", &out), 0);
  EXPECT_NE(out.find("PASS"), std::string::npos);
  // a failed verdict: tolerance far below the sine family's tail
  EXPECT_EQ(lab_exit("run sine-flatten --param terms=8 --param resolution=33"), 2);
}

TEST(Cli, OutputDirectoryIsDeterministic) {
  const fs::path base = fs::temp_directory_path() / "aalab_cli_out";
  fs::remove_all(base);
  ASSERT_EQ(lab_exit("run gh-examples --seed 3 --out " + (base / "a").string()), 0);
  ASSERT_EQ(lab_exit("run gh-examples --seed 3 --out " + (base / "b").string()), 0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(base / "a" / "gh-examples")) {
    const auto other = base / "b" / "gh-examples" / e.path().filename();
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(slurp(e.path()), slurp(other)) << e.path();
    ++files;
  }
  EXPECT_GE(files, 2);
  EXPECT_NE(slurp(base / "a" / "gh-examples" / "verdicts.csv").find("point vs segment"), std::string::npos);
}

TEST(Cli, CheckManifest) {
  const fs::path dir = fs::temp_directory_path();
  {
    std::ofstream o(dir / "aalab_good.json");
    o << lab::kBuiltinManifest;
  }
  {
    std::ofstream o(dir / "aalab_bad.json");
    o << R"({"metrics": {"m": {"dimension": 2, "box": {"lo": [0, 0], "hi": [1, 1]}, "kind": "diag", "payload": [1]}}})";
  }
  std::string out;
  EXPECT_EQ(lab_exit("check " + (dir / "aalab_good.json").string(), &out), 0);
  EXPECT_NE(out.find("ok"), std::string::npos);
  EXPECT_EQ(lab_exit("check " + (dir / "aalab_bad.json").string(), &out), 2);
  EXPECT_NE(out.find("metrics/m"), std::string::npos);
  EXPECT_EQ(lab_exit("check /nonexistent.json"), 1);
  // a user manifest can replace built-in fixtures
  {
    std::ofstream o(dir / "aalab_override.json");
    o << R"({"immersions": {"cylinder": {"param_box": {"lo": [0, 0], "hi": [1, 1]}, "kind": "cylinder",
            "ambient_ref": "gone"}}})";
  }
  EXPECT_EQ(lab_exit("run cylinder-audit --manifest " + (dir / "aalab_override.json").string(), &out), 2);
  EXPECT_NE(out.find("fixture-not-found"), std::string::npos);
}

}  // namespace
}  // namespace aalab
