#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "aalab/fixtures.hpp"
#include "aalab/graphrep.hpp"
#include "aalab/metrics.hpp"

namespace aalab {
namespace {

using immersions::box2;

MetricField flat3(double half = 3.0) { return metrics::identity(3, Box::cube(3, half)); }

Immersion plane(double half = 1.0, int n = 21) {
  Mat a = Mat::Zero(3, 2);
  a(0, 0) = a(1, 1) = 1.0;
  return immersions::affine(flat3(), Grid::uniform(Box::cube(2, half), n), a, Vec::Zero(3));
}

Immersion unit_sphere(double half = 1.6, int n = 33) {
  return immersions::sphere(flat3(), 1.0, Grid::uniform(Box::cube(2, half), n));
}

// Forward RK4 on u' = K'(1 + u^2)^{3/2} until u crosses B; the crossing step
// is then bisected with single RK4 sub-steps.
double oracle_hitting_time(double kp, double b) {
  auto rhs = [kp](double u) { return kp * std::pow(1.0 + u * u, 1.5); };
  auto step = [&](double u, double h) {
    const double k1 = rhs(u), k2 = rhs(u + 0.5 * h * k1), k3 = rhs(u + 0.5 * h * k2), k4 = rhs(u + h * k3);
    return u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  };
  const double h = 1e-4 / kp;
  double t = 0.0, u = 0.0;
  while (true) {
    const double un = step(u, h);
    if (un >= b) break;
    u = un;
    t += h;
  }
  double lo = 0.0, hi = h;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (step(u, mid) < b ? lo : hi) = mid;
  }
  return t + lo;
}

TEST(MuGraph, ClosedForm) {
  EXPECT_NEAR(mu_graph(1.0, 2.0), std::sqrt(15.0), 1e-12);
  EXPECT_NEAR(mu_graph(1.0, 1.0 + 1e-9), std::sqrt(3.0), 1e-6);
  double prev = 0.0;
  for (double eps = 1.0; eps > 1e-6; eps /= 3) {
    const double v = mu_graph(eps, 2.0);
    EXPECT_GT(v, prev);
    prev = v;
  }
  EXPECT_THROW(mu_graph(2.0, 2.0), LabError);
  EXPECT_THROW(mu_graph(0.0, 2.0), LabError);
}

TEST(MuGraph, MonotoneSweep) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (int i = 0; i < 100; ++i) {
    const double eps = u(rng), r = eps * (1.0 + u(rng));
    EXPECT_GT(mu_graph(0.9 * eps, r), mu_graph(eps, r));
    EXPECT_GT(mu_graph(eps, 1.1 * r), mu_graph(eps, r));
  }
}

TEST(OdeRadius, MatchesOracle) {
  EXPECT_NEAR(ode_radius(1.0, 1.0), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(ode_radius(1.0, 1.0), oracle_hitting_time(1.0, 1.0), 1e-8);
  for (double kp : {0.5, 2.0, 7.0})
    for (double b : {0.3, 1.0, 4.0}) EXPECT_NEAR(ode_radius(kp, b), oracle_hitting_time(kp, b), 1e-8);
}

TEST(OdeRadius, Asymptotes) {
  double prev = 0.0;
  for (double b : {1.0, 10.0, 100.0, 1e3, 1e4}) {
    const double t = ode_radius(1.0, b);
    EXPECT_GT(t, prev);
    EXPECT_LT(1.0 - t, 1.0 / (b * b));
    prev = t;
  }
  prev = 1e9;
  for (double kp : {1.0, 10.0, 100.0, 1e3}) {
    const double t = ode_radius(kp, 1.0);
    EXPECT_LT(t, prev);
    prev = t;
  }
  EXPECT_THROW(ode_radius(0.0, 1.0), LabError);
}

TEST(OdeRadius, ComparisonTraceMatchesClosedForm) {
  for (double kp : {0.5, 1.0, 3.0}) {
    const auto tr = integrate_comparison(kp, 0.95 / kp, 20000);
    double worst = 0.0;
    for (std::size_t i = 0; i < tr.t.size(); ++i)
      worst = std::max(worst, std::abs(tr.u[i] - comparison_solution(kp, tr.t[i])));
    EXPECT_LT(worst, 1e-8) << kp;
  }
}

TEST(ComparisonBound, IdentityAndLinear) {
  EXPECT_DOUBLE_EQ(comparison_bound_KL(1.7, MetricStats{1.0, 1.0, 0.0}), 1.7);
  // diag(4, 1): L = diag(2, 1) is an isometry to Euclidean R^2, so the curve
  // L^-1 (circle of radius 1/K) has g-curvature K; its Euclidean curvature
  // (closed form for the ellipse) peaks at 4K.
  const double k = 0.8, rho = 1.0 / k, a = rho / 2, b = rho;
  const auto stats = metric_stats(metrics::diagonal((Vec(2) << 4, 1).finished(), Box::cube(2, 5.0)),
                                  {Vec::Zero(2)});
  const double kp = comparison_bound_KL(k, stats);
  double peak = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const double t = 2 * std::numbers::pi * i / 2000;
    const double s = std::sin(t), c = std::cos(t);
    peak = std::max(peak, a * b / std::pow(a * a * s * s + b * b * c * c, 1.5));
  }
  EXPECT_LE(peak, kp * (1 + 1e-12));
  EXPECT_NEAR(peak, 4 * k, 1e-9);
  // The g-curvature of that ellipse, measured by the submanifold module.
  const MetricField m = metrics::diagonal((Vec(2) << 4, 1).finished(), Box::cube(2, 5.0));
  Immersion ell;
  ell.grid = Grid::uniform(Box::cube(1, 3.0), 201);
  ell.ambient = m;
  ell.map = [a, b](const Vec& t) { return Vec((Vec(2) << a * std::cos(t[0]), b * std::sin(t[0])).finished()); };
  ell.jacobian = [a, b](const Vec& t) { return Mat((Mat(2, 1) << -a * std::sin(t[0]), b * std::cos(t[0])).finished()); };
  ell.basepoint = Vec::Zero(1);
  const auto ff = second_fundamental_form(ell);
  EXPECT_NEAR(ff.max_norm(2), k, 1e-3);
}

TEST(ComparisonBound, Monotone) {
  for (double k : {0.0, 0.5, 2.0})
    for (double n : {1.0, 2.0})
      for (double i : {1.0, 3.0})
        for (double d : {0.0, 0.4}) {
          const double base = comparison_bound_KL(k, {n, i, d});
          EXPECT_LE(base, comparison_bound_KL(k * 1.5 + 0.1, {n, i, d}));
          EXPECT_LE(base, comparison_bound_KL(k, {n * 1.5, i, d}));
          EXPECT_LE(base, comparison_bound_KL(k, {n, i * 1.5, d}));
          EXPECT_LE(base, comparison_bound_KL(k, {n, i, d + 0.2}));
        }
}

TEST(ComparisonBound, RandomMetricsBoundEuclideanII) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto fx = fixtures::random_graph_fixture(seed, 17);
    const auto ffg = second_fundamental_form(fx.im);
    std::vector<Vec> pts;
    for (int f = 0; f < fx.im.grid.size(); ++f) pts.push_back(fx.im(fx.im.grid.point(f)));
    const auto stats = metric_stats(fx.im.ambient, pts);
    const double kp = comparison_bound_KL(ffg.max_norm(2), stats);
    Immersion eu = fx.im;
    eu.ambient = metrics::identity(3, Box::cube(3, 2.0));
    const double euclid = second_fundamental_form(eu).max_norm(2);
    EXPECT_LE(euclid, kp) << seed;
  }
}

TEST(ExtractGraph, PlaneIsFlat) {
  const Immersion pl = plane();
  ExtractOptions o;
  o.eps = 0.8;
  for (double d : {0.2, 0.5, 0.79}) {
    const GraphPatch gp = extract_graph(pl, Vec::Zero(2), d, o);
    EXPECT_LT(gp.max_f, 1e-12);
    EXPECT_LT(gp.max_df, 1e-12);
    EXPECT_NEAR(gp.eta0, d, 1e-9);
  }
}

TEST(ExtractGraph, SphereCapAndInvariants) {
  const Immersion sp = unit_sphere();
  const GraphPatch gp = extract_graph(sp, Vec::Zero(2), 0.5);
  const int c = gp.center_node();
  EXPECT_LE(gp.f.col(c).norm(), 1e-10);
  EXPECT_LE(gp.df_at(c).norm(), 1e-8);
  EXPECT_LE(gp.recon_residual(sp), kReconTol);
  EXPECT_LE(gp.inverse_residual(sp), 1e-8);
  EXPECT_LE(std::abs(gp.rotation.determinant() - 1.0), 1e-12);
  double worst = 0.0;
  for (int node = 0; node < gp.grid.size(); ++node) {
    if (!gp.inside[static_cast<std::size_t>(node)]) continue;
    const double r2 = gp.grid.point(node).squaredNorm();
    // Sign of f follows the orientation of the rotation's last column.
    worst = std::max(worst, std::abs(std::abs(gp.f(0, node)) - (1.0 - std::sqrt(1.0 - r2))));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(ExtractGraph, LocalUniqueness) {
  const Immersion sp = unit_sphere();
  ExtractOptions a, b;
  a.per_axis = 31;  // both grids have spacing 0.02
  b.per_axis = 51;
  const GraphPatch small = extract_graph(sp, Vec::Zero(2), 0.3, a);
  const GraphPatch big = extract_graph(sp, Vec::Zero(2), 0.5, b);
  double worst = 0.0;
  for (int node = 0; node < small.grid.size(); ++node) {
    if (!small.inside[static_cast<std::size_t>(node)]) continue;
    auto idx = small.grid.multi_index(node);
    for (auto& i : idx) i += 10;
    const int nb = big.grid.flat_index(idx);
    ASSERT_NEAR((big.grid.point(nb) - small.grid.point(node)).norm(), 0.0, 1e-12);
    worst = std::max(worst, (big.f.col(nb) - small.f.col(node)).norm());
  }
  EXPECT_LT(worst, 1e-8);
}

ErrorKind failure_kind(const Immersion& im, double delta, const ExtractOptions& o, Vec* witness = nullptr) {
  try {
    extract_graph(im, Vec::Zero(im.dim()), delta, o);
  } catch (const ExtractionFailure& e) {
    if (witness) *witness = e.witness;
    return e.kind();
  }
  return ErrorKind::InvalidFixture;
}

TEST(ExtractGraph, FailureTrichotomy) {
  Vec w;
  ExtractOptions o;
  o.eps = 1.5;
  o.r = 3.0;
  EXPECT_EQ(failure_kind(unit_sphere(), 1.2, o, &w), ErrorKind::VerticalTangent);
  EXPECT_GT(w.norm(), 0.9);
  EXPECT_LT(w.norm(), 1.0);

  ExtractOptions amb;
  amb.eps = 0.3;
  EXPECT_EQ(failure_kind(plane(), 0.5, amb, &w), ErrorKind::AmbientExit);
  EXPECT_NEAR(w.norm(), 0.3, 0.06);

  ExtractOptions par;
  par.r = 0.2;
  EXPECT_EQ(failure_kind(plane(), 0.5, par, &w), ErrorKind::ParameterExit);
  EXPECT_NEAR(w.norm(), 0.2, 0.06);
  EXPECT_EQ(failure_kind(plane(0.3), 0.5, ExtractOptions{}), ErrorKind::ParameterExit);
}

TEST(CertifiedRadius, PlaneAndSphere) {
  {
    const Immersion pl = plane(2.0, 41);
    const BoundBudget b = certified_radius(pl, Vec::Zero(2), 0.5, 1.0, 1.0);
    EXPECT_LE(b.Delta, 0.25 + 1e-15);
    const GraphPatch gp = extract_graph(pl, Vec::Zero(2), b.Delta, certified_options(b, 0.5, 1.0));
    EXPECT_LT(gp.max_f, 1e-12);
    EXPECT_LE(gp.max_df, b.B);
  }
  const Immersion sp = unit_sphere(1.6, 41);
  const BoundBudget b = certified_radius(sp, Vec::Zero(2), 0.8, 2.0, 1.0);
  EXPECT_NEAR(b.mu_graph, std::sqrt(24.0), 1e-12);
  EXPECT_NEAR(b.K_prime, 1.0, 1e-12);
  EXPECT_LE(b.Delta, 0.4);
  EXPECT_LE(b.mu_II, 0.4);
  EXPECT_GT(b.B, 0.0);
  const GraphPatch gp = extract_graph(sp, Vec::Zero(2), b.Delta, certified_options(b, 0.8, 2.0));
  EXPECT_LE(gp.max_df, b.B);
  EXPECT_LE(gp.max_f, 0.4);
}

TEST(CertifiedRadius, CurvatureAboveK) {
  const Grid g(box2(-0.5, 0.5, -0.5, 0.5), {41, 41});
  const Immersion cyl = immersions::cylinder(flat3(), 0.25, g);
  try {
    certified_radius(cyl, Vec::Zero(2), 0.2, 1.0, 2.0);
    FAIL() << "expected a hypothesis violation";
  } catch (const LabError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::HypothesisViolation);
  }
}

TEST(CertifiedRadius, IncompleteBall) {
  Immersion pl = plane(2.0, 41);
  pl.present.assign(static_cast<std::size_t>(pl.grid.size()), 1);
  pl.present[static_cast<std::size_t>(pl.grid.size() / 2 + 3)] = 0;
  EXPECT_THROW(certified_radius(pl, Vec::Zero(2), 0.5, 1.0, 1.0), LabError);
}

TEST(CertifiedRadius, Soundness) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto fx = fixtures::random_graph_fixture(seed);
    const BoundBudget b = certified_radius(fx.im, fx.p, fx.eps, fx.r, fx.K);
    ASSERT_GT(b.Delta, 0.0);
    const GraphPatch gp = extract_graph(fx.im, fx.p, b.Delta, certified_options(b, fx.eps, fx.r, 21));
    EXPECT_LE(gp.max_f, fx.eps / 2) << seed;
    EXPECT_LE(gp.max_df, b.B) << seed;
  }
}

TEST(Frames, FlatAndParabola) {
  const Grid g1 = Grid::uniform(Box::cube(2, 1.0), 5);
  const auto zero = SampledFunction::sample(g1, [](const Vec&) { return Vec::Zero(1); });
  const auto fb = frames(zero, flat3());
  for (const auto& fr : fb.frames) EXPECT_LT((fr.basis - Mat::Identity(3, 3)).norm(), 1e-14);

  const Grid g(Box{Vec::Constant(1, 0.0), Vec::Constant(1, 2.0)}, {21});
  const auto par = SampledFunction::scalar(g, [](const Vec& x) { return 0.5 * x[0] * x[0]; });
  const auto pb = frames(par, metrics::identity(2, Box::cube(2, 3.0)));
  const auto& fr = pb.frames[10];
  ASSERT_NEAR(fr.point[0], 1.0, 1e-14);
  EXPECT_NEAR((fr.tangent.col(0) - (Vec(2) << 1, 1).finished()).norm(), 0.0, 1e-12);
  EXPECT_NEAR((fr.normal.col(0) - (Vec(2) << -1, 1).finished()).norm(), 0.0, 1e-12);
  EXPECT_NEAR(fr.tangent.col(0).dot(fr.normal.col(0)), 0.0, 1e-12);
}

TEST(Frames, RandomOrthogonality) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat m = metrics::random_spd(4, rng);
    const Grid g = Grid::uniform(Box::cube(2, 1.0), 9);
    const double a = 0.5 * trial / 20.0;
    const auto f = SampledFunction::sample(g, [a](const Vec& x) {
      Vec y(2);
      y << std::sin(x[0] + a * x[1]), a * x[0] * x[1] - std::cos(x[1]);
      return y;
    });
    const auto fb = frames(f, metrics::constant(m, Box::cube(4, 4.0)));
    EXPECT_LE(fb.orthogonality_residual, 1e-10);
  }
}

TEST(Frames, SingularWhenSteep) {
  // cond(B) grows like |Df| when m = 2, n = 3.
  const Grid g = Grid::uniform(Box::cube(2, 1.0), 5);
  const auto steep = SampledFunction::scalar(g, [](const Vec& x) { return 1e13 * x[0]; });
  EXPECT_THROW(frames(steep, metrics::identity(3, Box::cube(3, 1e14))), LabError);
  const auto mild = SampledFunction::scalar(g, [](const Vec& x) { return 1e3 * x[0]; });
  EXPECT_NO_THROW(frames(mild, metrics::identity(3, Box::cube(3, 1e4))));
}

TEST(Projection, Identities) {
  EXPECT_NEAR((projection(Mat::Identity(3, 3), Vec::Unit(3, 0), 2) - Vec::Unit(3, 0)).norm(), 0.0, 1e-15);
  const Grid g(Box{Vec::Constant(1, 0.0), Vec::Constant(1, 2.0)}, {21});
  const auto par = SampledFunction::scalar(g, [](const Vec& x) { return 0.5 * x[0] * x[0]; });
  const GraphFrame fr = frames(par, metrics::identity(2, Box::cube(2, 3.0))).frames[10];
  EXPECT_LT(projection(fr.basis, fr.normal.col(0), 1).norm(), 1e-12);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 50; ++trial) {
    const Mat m = metrics::random_spd(3, rng);
    Mat df(1, 2);
    df << nd(rng), nd(rng);
    const GraphFrame gf = graph_frame(Vec::Zero(2), Vec::Zero(1), df, m);
    Vec v(3);
    v << nd(rng), nd(rng), nd(rng);
    const Vec t = projection(gf.basis, v, 2);
    const Vec nrm = v - t;
    EXPECT_LT((projection(gf.basis, t, 2) - t).norm(), 1e-10);
    EXPECT_LT(std::abs(t.dot(m * nrm)) / (1 + v.squaredNorm() * m.norm()), 1e-10);
    for (int i = 0; i < 2; ++i)
      EXPECT_LT((projection(gf.basis, gf.tangent.col(i), 2) - gf.tangent.col(i)).norm(), 1e-10);
    EXPECT_LT(projection(gf.basis, gf.normal.col(0), 2).norm(), 1e-10);
  }
  Mat sing = Mat::Identity(3, 3);
  sing(2, 2) = 0.0;
  EXPECT_THROW(projection(sing, Vec::Unit(3, 0), 2), LabError);
}

SampledFunction cap(double half, int n) {
  return SampledFunction::scalar(Grid::uniform(Box::cube(2, half), n),
                                 [](const Vec& x) { return 1.0 - std::sqrt(1.0 - x.squaredNorm()); });
}

TEST(DerivativeControl, ZeroFunction) {
  const auto zero = SampledFunction::sample(Grid::uniform(Box::cube(2, 0.5), 11), [](const Vec&) { return Vec::Zero(1); });
  const auto rep = derivative_control(zero, flat3(), 2, 0.0);
  EXPECT_EQ(rep.violations, 0);
  EXPECT_EQ(rep.lhs_max, 0.0);
  EXPECT_EQ(rep.measured_a, 0.0);
}

TEST(DerivativeControl, SphereCap) {
  const auto f = cap(0.4, 41);
  const auto rep = derivative_control(f, flat3(), 2, 1.0 + 1e-3);
  EXPECT_EQ(rep.violations, 0);
  EXPECT_GT(rep.min_slack, 0.0);
  EXPECT_NEAR(rep.measured_a, 1.0, 1e-3);
  // Euclidean ambient: D^2 f equals the leading term up to grid error.
  EXPECT_LT(rep.identity_residual, 1e-3);
  // The remainder is pure grid error here: second order at the centre; its
  // sup sits on the outer evaluated layer, which moves with the grid.
  const auto coarse = derivative_control(cap(0.4, 21), flat3(), 2, 1.01);
  EXPECT_GT(coarse.identity_residual / rep.identity_residual, 3.5);
  EXPECT_LT(rep.remainder_max, 1e-2 * rep.lhs_max);
  const auto rep3 = derivative_control(f, flat3(), 3, 1.0 + 0.2);
  EXPECT_EQ(rep3.violations, 0);
  EXPECT_THROW(derivative_control(f, flat3(), 2, 0.5), LabError);
}

TEST(DerivativeControl, QuadraticIdentityExact) {
  const auto q = SampledFunction::scalar(Grid::uniform(Box::cube(2, 0.5), 21),
                                         [](const Vec& x) { return 0.3 * x[0] * x[0] - 0.2 * x[0] * x[1] + 0.1 * x[1] * x[1]; });
  const auto rep = derivative_control(q, flat3(), 2, 10.0);
  EXPECT_LT(rep.identity_residual, 1e-8);
  // Curved ambient: D^2 f = <II(d^, d^), E^> - <Gamma(d^, d^), E^> exactly.
  const MetricField g = metrics::random_analytic(3, 4, Box::cube(3, 2.0), 1e-3, 0.15);
  const auto rg = derivative_control(q, g, 2, 100.0);
  EXPECT_LT(rg.gamma_residual, 1e-8);
  EXPECT_EQ(rg.violations, 0);
}

TEST(DerivativeControl, ScalingByConstantMetric) {
  const auto f = cap(0.4, 21);
  const auto base = derivative_control(f, flat3(), 2, 2.0);
  for (double c : {0.25, 4.0}) {
    const auto rep = derivative_control(f, metrics::constant(c * Mat::Identity(3, 3), Box::cube(3, 3.0)), 2, 2.0 / std::sqrt(c));
    EXPECT_NEAR(rep.measured_a / base.measured_a, 1.0 / std::sqrt(c), 1e-6);
    EXPECT_NEAR(rep.leading_max / base.leading_max, 1.0, 1e-6);
    EXPECT_EQ(rep.violations, 0);
  }
}

}  // namespace
}  // namespace aalab
