#pragma once

// Seeded fixtures shared by the tests, the acceptance binary and `lab`.

#include <cstdint>
#include <random>

#include "aalab/metrics.hpp"
#include "aalab/submanifold.hpp"

namespace aalab::fixtures {

/// A graph sheet in a random analytic metric on R^3 with radii chosen so the
/// certified-radius hypotheses hold; K is the sheet's own measured |II| plus 5%.
struct GraphFixture {
  Immersion im;
  Vec p;
  double eps = 0.5;
  double r = 4.0;
  double K = 0.0;
  std::uint64_t seed = 0;
};

inline GraphFixture random_graph_fixture(std::uint64_t seed, int per_axis = 33) {
  std::mt19937_64 rng(seed * 7919 + 17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double a = 0.25 * u(rng), b = 0.25 * u(rng), c = 0.25 * u(rng);
  const double amp = 0.2 * u(rng), ph = 3.0 * u(rng);
  Vec w(2);
  w << 1.5 * u(rng), 1.5 * u(rng);
  auto h = [=](const Vec& x) {
    Vec y(1);
    y[0] = a * x[0] * x[0] + b * x[0] * x[1] + c * x[1] * x[1] + amp * std::sin(w.dot(x) + ph);
    return y;
  };
  auto dh = [=](const Vec& x) {
    Mat d(1, 2);
    const double cs = amp * std::cos(w.dot(x) + ph);
    d << 2 * a * x[0] + b * x[1] + cs * w[0], b * x[0] + 2 * c * x[1] + cs * w[1];
    return d;
  };
  GraphFixture fx;
  fx.seed = seed;
  const MetricField metric = metrics::random_analytic(3, seed, Box::cube(3, 2.0), 1e-3, 0.15);
  fx.im = immersions::graph(metric, Grid::uniform(Box::cube(2, 1.0), per_axis), h, dh);
  fx.im.label = "random-graph-" + std::to_string(seed);
  fx.p = Vec::Zero(2);
  fx.K = 1.05 * second_fundamental_form(fx.im).max_norm(2);
  return fx;
}

}  // namespace aalab::fixtures
