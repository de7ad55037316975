#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "aalab/ghlimit.hpp"
#include "aalab/metrics.hpp"

namespace aalab {
namespace {

constexpr double kPiD = std::numbers::pi;

PointedSample random_plane_sample(int n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat pts(2, n);
  for (int i = 0; i < n; ++i) pts.col(i) << u(rng), u(rng);
  return euclidean_sample(pts, 0);
}

// Minimal cover of sorted reals by closed delta-balls centred at sample
// points: sweep, centring each ball on the farthest point that still covers
// the leftmost uncovered one.
int interval_cover_oracle(const std::vector<double>& xs, double delta) {
  int count = 0;
  std::size_t i = 0;
  while (i < xs.size()) {
    std::size_t c = i;
    while (c + 1 < xs.size() && xs[c + 1] - xs[i] <= delta) ++c;
    ++count;
    while (i < xs.size() && xs[i] - xs[c] <= delta) ++i;
  }
  return count;
}

// Circle of n equal arcs: an optimal cover may be cut open at the first
// point of one of its balls, and by symmetry every cut is alike, so a line
// sweep over the unrolled circle is exact.
int circle_cover_oracle(int n, double r, double delta) {
  std::vector<double> xs;
  for (int i = 0; i < n; ++i) xs.push_back(2 * kPiD * r * i / n);
  return interval_cover_oracle(xs, delta);
}

// Brute force pointed GH over every relation (tiny spaces only).
double gh_oracle(const PointedSample& x, const PointedSample& y) {
  const int nx = x.size(), ny = y.size(), cells = nx * ny;
  double best = std::numeric_limits<double>::infinity();
  for (long long mask = 1; mask < (1LL << cells); ++mask) {
    std::vector<std::pair<int, int>> r;
    for (int c = 0; c < cells; ++c)
      if ((mask >> c) & 1) r.push_back({c / ny, c % ny});
    Correspondence cr{r, 0.0};
    if (!is_correspondence(x, y, cr)) continue;
    best = std::min(best, distortion(x, y, r));
  }
  return best / 2;
}

TEST(PointedSample, Validation) {
  Mat d(3, 3);
  d << 0, 1, 2, 1, 0, 1, 2, 1, 0;
  EXPECT_NO_THROW(make_sample(d, 0));
  PointedSample bad;
  bad.dist = d;
  bad.dist(0, 1) = 1.5;
  try {
    bad.validate();
    FAIL();
  } catch (const LabError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidFixture);
  }
  Mat tri = d;
  tri(0, 2) = tri(2, 0) = 2.5;
  EXPECT_THROW(make_sample(tri, 0), LabError);
  EXPECT_THROW(make_sample(d, 3), LabError);
  Mat neg = d;
  neg(0, 1) = neg(1, 0) = -1;
  EXPECT_THROW(make_sample(neg, 0), LabError);
  // Randomised triangle checks above 200 points.
  EXPECT_NO_THROW(samples::circle(301).validate());
  Mat big = samples::circle(301).dist;
  big(5, 7) = big(7, 5) = 100.0;
  PointedSample b2;
  b2.dist = big;
  EXPECT_THROW(b2.validate(), LabError);
}

TEST(PointedSample, RestrictBall) {
  const auto s = restrict_ball(samples::interval(10), 0.35);
  EXPECT_EQ(s.size(), 4);
  EXPECT_EQ(s.basepoint, 0);
  EXPECT_NEAR(s.diameter(), 0.3, 1e-12);
}

TEST(Covering, Examples) {
  Mat one = Mat::Zero(1, 1);
  EXPECT_EQ(covering_number(make_sample(one, 0), 0.1).count, 1);
  const auto iv = covering_number(samples::interval(100), 0.25);
  EXPECT_EQ(iv.count, 2);
  std::vector<double> xs;
  for (int i = 0; i <= 100; ++i) xs.push_back(i / 100.0);
  EXPECT_EQ(interval_cover_oracle(xs, 0.25), 2);
  const auto ci = covering_number(samples::circle(100), kPiD / 4);
  EXPECT_EQ(ci.count, 4);
  EXPECT_EQ(circle_cover_oracle(100, 1.0, kPiD / 4), 4);
}

TEST(Covering, MatchesOneDimensionalOracle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 40; ++t) {
    const int n = 5 + static_cast<int>(rng() % 30);
    std::vector<double> xs;
    for (int i = 0; i < n; ++i) xs.push_back(u(rng));
    std::sort(xs.begin(), xs.end());
    Mat pts(1, n);
    for (int i = 0; i < n; ++i) pts(0, i) = xs[static_cast<std::size_t>(i)];
    const double delta = 0.02 + 0.2 * u(rng);
    const auto c = covering_number(euclidean_sample(pts, 0), delta);
    EXPECT_TRUE(c.exact);
    EXPECT_EQ(c.count, interval_cover_oracle(xs, delta)) << t;
  }
}

TEST(Covering, CertificateAndBounds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = random_plane_sample(40, seed);
    for (double delta : {0.2, 0.5, 1.0}) {
      const auto c = covering_number(x, delta);
      for (int i = 0; i < x.size(); ++i) {
        ASSERT_GE(c.owner[static_cast<std::size_t>(i)], 0);
        EXPECT_LE(x.dist(i, c.owner[static_cast<std::size_t>(i)]), delta);
      }
      EXPECT_LE(c.lower_bound, c.count);
      EXPECT_LE(c.count, c.packing);
    }
  }
}

TEST(Covering, Monotone) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = random_plane_sample(30, 100 + seed);
    int prev = x.size() + 1;
    for (double delta = 0.05; delta < 3.0; delta *= 1.3) {
      const auto c = covering_number(x, delta);
      ASSERT_TRUE(c.exact);
      EXPECT_LE(c.count, prev) << seed << " " << delta;
      prev = c.count;
    }
  }
}

TEST(GHDistance, Examples) {
  const auto x = samples::circle(9);
  const auto self = gh_distance(x, x);
  EXPECT_EQ(self.value, 0.0);
  EXPECT_TRUE(self.exact);
  Mat one = Mat::Zero(1, 1);
  for (double len : {0.3, 1.0, 2.5}) {
    Mat two(2, 2);
    two << 0, len, len, 0;
    const auto g = gh_distance(make_sample(one, 0), make_sample(two, 0));
    EXPECT_EQ(g.value, len / 2);
    EXPECT_TRUE(g.exact);
  }
  for (int n : {4, 10, 20}) {
    const auto g = gh_distance(samples::interval(n), samples::interval(2 * n));
    EXPECT_LE(g.value, 0.5 / n + 1e-12) << n;
    EXPECT_TRUE(is_correspondence(samples::interval(n), samples::interval(2 * n), g.correspondence));
  }
}

TEST(GHDistance, MatchesBruteForce) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 60; ++t) {
    const int a = 1 + static_cast<int>(rng() % 3), b = 1 + static_cast<int>(rng() % 3);
    const auto x = random_plane_sample(a, rng()), y = random_plane_sample(b, rng());
    const auto g = gh_distance(x, y);
    EXPECT_TRUE(g.exact);
    EXPECT_NEAR(g.value, gh_oracle(x, y), 1e-12) << t;
    EXPECT_NEAR(distortion(x, y, g.correspondence.pairs) / 2, g.value, 1e-12);
    EXPECT_TRUE(is_correspondence(x, y, g.correspondence));
  }
}

TEST(GHDistance, PseudoMetric) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 40; ++t) {
    const auto x = random_plane_sample(2 + static_cast<int>(rng() % 5), rng());
    const auto y = random_plane_sample(2 + static_cast<int>(rng() % 5), rng());
    const auto z = random_plane_sample(2 + static_cast<int>(rng() % 5), rng());
    const auto xy = gh_distance(x, y), yx = gh_distance(y, x), yz = gh_distance(y, z), xz = gh_distance(x, z);
    ASSERT_TRUE(xy.exact && yz.exact && xz.exact);
    EXPECT_EQ(xy.value, yx.value);
    EXPECT_EQ(gh_distance(x, x).value, 0.0);
    EXPECT_LE(xz.value, xy.value + yz.value + 1e-12);
  }
}

TEST(GHDistance, ResolutionConsistency) {
  for (int n : {8, 16, 32}) {
    const auto a = samples::circle(n), b = samples::circle(2 * n);
    const double h = std::max(a.resolution(), b.resolution());
    EXPECT_LE(gh_distance(a, b).value, h);
  }
  auto grad = [](const Vec& x) {
    Vec g(2);
    g << 0.3 * std::cos(x[0]), 0.0;
    return g;
  };
  const auto c = samples::graph_disc(grad, 1.0, 5), d = samples::graph_disc(grad, 1.0, 9);
  const double h = std::max(c.resolution(), d.resolution());
  EXPECT_LE(gh_distance(c, d).value, h);
}

TEST(GHDistance, BudgetFlag) {
  const auto a = random_plane_sample(12, 1), b = random_plane_sample(12, 2);
  GHOptions o;
  o.budget = 5;
  const auto g = gh_distance(a, b, o);
  EXPECT_TRUE(g.budget_exhausted);
  EXPECT_FALSE(g.exact);
  EXPECT_GE(g.value, gh_distance(a, b).value);
}

std::vector<PointedSample> graph_family(int terms, int per_axis) {
  std::vector<PointedSample> seq;
  for (int n = 1; n <= terms; ++n) {
    auto grad = [n](const Vec& x) {
      Vec g(2);
      g << std::cos(n * x[0]) / n, 0.0;
      return g;
    };
    seq.push_back(samples::graph_disc(grad, 1.0, per_axis, 31));
  }
  return seq;
}

TEST(PointedLimit, ConstantSequence) {
  const std::vector<PointedSample> seq(6, samples::circle(12));
  const auto r = pointed_limit(seq, 10.0);
  EXPECT_EQ((r.limit.dist - seq[0].dist).cwiseAbs().maxCoeff(), 0.0);
  for (double v : r.trace) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(r.converged);
}

TEST(PointedLimit, GraphsFlatten) {
  const auto seq = graph_family(12, 7);
  const auto r = pointed_limit(seq, 0.8);
  const auto flat = samples::graph_disc([](const Vec&) { return Vec(Vec::Zero(2)); }, 1.0, 7, 31);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.trace.back(), r.tolerance);
  EXPECT_LE(gh_distance(r.limit, restrict_ball(flat, 0.8)).value, r.tolerance);
  // The first term (slope up to 1) is farther from the limit than the tail.
  EXPECT_GT(r.trace.front(), r.trace.back());
}

TEST(PointedLimit, WedgeOfToriIsNotTotallyBounded) {
  std::vector<PointedSample> seq;
  for (int g = 1; g <= 12; ++g) seq.push_back(samples::torus_wedge(g, 6));
  try {
    pointed_limit(seq, 1.0);
    FAIL();
  } catch (const LabError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotTotallyBounded);
    EXPECT_NE(std::string(e.what()).find("delta"), std::string::npos);
  }
  PointedLimitOptions o;
  o.growth = 1e9;
  o.cover_bound = [](double) { return 50; };
  EXPECT_THROW(pointed_limit(seq, 1.0, o), LabError);
}

Immersion sin_graph(int n, int per_axis) {
  const MetricField flat = metrics::identity(3, Box::cube(3, 3.0));
  return immersions::graph(
      flat, Grid::uniform(Box::cube(2, 1.0), per_axis),
      [n](const Vec& x) {
        Vec y(1);
        y[0] = std::sin(n * x[0]) / (n * n);
        return y;
      },
      [n](const Vec& x) {
        Mat d(1, 2);
        d << std::cos(n * x[0]) / n, 0;
        return d;
      });
}

TEST(LimitSubmanifold, ConstantSphere) {
  const MetricField flat = metrics::identity(3, Box::cube(3, 3.0));
  const Immersion sp = immersions::sphere(flat, 1.0, Grid::uniform(Box::cube(2, 1.2), 33));
  const std::vector<Immersion> seq(8, sp);
  LimitOptions o;
  o.r = 0.8;
  const auto r = limit_submanifold(seq, Vec::Zero(2), 0.8, 2, 1.01, o);
  EXPECT_TRUE(r.converged);
  for (double v : r.extraction.trace) EXPECT_EQ(v, 0.0);
  for (const auto& t : r.weak.tail_max) EXPECT_EQ(t, 0.0);
  EXPECT_TRUE(r.limit_within_budget);
}

TEST(LimitSubmanifold, SineGraphs) {
  std::vector<Immersion> seq;
  for (int n = 1; n <= 16; ++n) seq.push_back(sin_graph(n, 33));
  const auto r = limit_submanifold(seq, Vec::Zero(2), 0.9, 2, 1.1);
  for (double a : r.measured_a) EXPECT_LE(a, 1.0 + 1e-2);
  EXPECT_TRUE(r.limit_within_budget);
  const double n_last = r.extraction.indices.back() + 1.0;
  // height over the tangent plane at the basepoint: tilt 1/n over Delta plus amplitude
  EXPECT_LT(r.limit_sup, r.Delta / n_last + 1.0 / (n_last * n_last)) << n_last;
  EXPECT_GE(r.extraction.indices.size(), 8u);
  // |f_n - f_inf| in C^{1,beta} is at least |Df_n - Df_inf| ~ 1/n, so with 16
  // terms the tail is far above 1e-3; the trace must still decay.
  EXPECT_FALSE(r.converged);
  const auto& tr = r.extraction.trace;
  EXPECT_LT(tr[tr.size() - 2], tr.front());
}

TEST(LimitSubmanifold, ShrinkingCylinders) {
  const MetricField flat = metrics::identity(3, Box::cube(3, 3.0));
  std::vector<Immersion> seq;
  for (int n = 1; n <= 8; ++n)
    seq.push_back(immersions::cylinder(flat, 1.0 / n, Grid(immersions::box2(-kPiD, kPiD, -1, 1), {33, 33})));
  for (double budget : {2.5, 4.5, 6.5}) {
    try {
      limit_submanifold(seq, Vec::Zero(2), 0.5, 2, budget);
      FAIL();
    } catch (const SequenceFailure& e) {
      EXPECT_EQ(e.kind(), ErrorKind::BudgetViolation);
      EXPECT_EQ(e.index + 1, static_cast<int>(std::floor(budget)) + 1);
      EXPECT_NEAR(e.measured, e.index + 1, 1e-2 * (e.index + 1));
    }
  }
}

TEST(LimitSubmanifold, RadiusStarvation) {
  std::vector<Immersion> seq;
  for (int n = 1; n <= 8; ++n) seq.push_back(sin_graph(n, 9));
  try {
    limit_submanifold(seq, Vec::Zero(2), 0.9, 2, 1.1);
    FAIL();
  } catch (const LabError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RadiusStarvation);
  }
}

OptimalAtlas small_sphere_atlas(double radius) {
  AtlasOptions o;
  o.per_axis = 7;
  o.check_distances = false;
  return build_optimal_atlas(metrics::sphere_graph(2, radius, Box::cube(2, 0.95)), Vec::Zero(2), 0.03, 0.3, 4.0, 0.5,
                             o);
}

TEST(StrongConvergence, IdenticalAtlases) {
  const auto a = small_sphere_atlas(1.0);
  const std::vector<OptimalAtlas> seq(8, a);
  const std::vector<std::function<Vec(const Vec&)>> maps(8, [](const Vec& x) { return x; });
  const auto r = strong_convergence_check(seq, a, maps, 2, 0.5);
  EXPECT_TRUE(r.all_pass);
  EXPECT_FALSE(r.pairs.empty());
  for (const auto& p : r.pairs)
    for (double t : p.weak.tail_max) EXPECT_LT(t, 1e-9);
}

TEST(StrongConvergence, SphereSequence) {
  const auto lim = small_sphere_atlas(1.0);
  std::vector<OptimalAtlas> seq;
  std::vector<std::function<Vec(const Vec&)>> maps;
  for (int n = 1; n <= 8; ++n) {
    const double rn = 1.0 + std::pow(4.0, -n);
    seq.push_back(small_sphere_atlas(rn));
    maps.push_back([rn](const Vec& x) { return Vec(rn * x); });
  }
  const auto r = strong_convergence_check(seq, lim, maps, 2, 0.5);
  EXPECT_TRUE(r.all_pass);
  for (const auto& p : r.pairs) {
    const auto& t = p.weak.trace[2];
    EXPECT_LT(t.back(), t.front());
  }
  // Shifted maps send every centre far from any chart.
  std::vector<std::function<Vec(const Vec&)>> shifted(8, [](const Vec& x) { return Vec(x + Vec::Constant(2, 0.4)); });
  try {
    strong_convergence_check(seq, lim, shifted, 2, 0.5);
    FAIL();
  } catch (const LabError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnmatchedChart);
  }
}

}  // namespace
}  // namespace aalab
