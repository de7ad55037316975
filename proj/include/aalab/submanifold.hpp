#pragma once

// Immersed submanifolds sampled over a parameter grid.

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "aalab/ambient.hpp"
#include "aalab/grid.hpp"
#include "aalab/holder.hpp"
#include "aalab/tensor.hpp"

namespace aalab {

inline constexpr double kRankTol = 1e-8;
inline constexpr double kProjTol = 1e-8;

/// i : parameter box -> Omega, sampled on `grid`. `present` masks out
/// deleted samples (empty = all present); forms ignore the mask.
struct Immersion {
  Grid grid;
  PointFn map;
  MatrixFn jacobian;
  MetricField ambient;
  Vec basepoint;
  std::vector<char> present;
  std::string label = "immersion";

  int dim() const { return grid.dim(); }
  int codim() const { return ambient.dim() - grid.dim(); }
  bool is_present(int node) const { return present.empty() || present[static_cast<std::size_t>(node)] != 0; }

  Vec operator()(const Vec& u) const { return map(u); }

  Mat jacobian_at(const Vec& u) const {
    if (jacobian) return jacobian(u);
    const int m = dim();
    const Vec c = map(u);
    Mat j(c.size(), m);
    const double h = 1e-5;
    for (int a = 0; a < m; ++a) {
      Vec e = Vec::Zero(m);
      e[a] = h;
      j.col(a) = (map(u + e) - map(u - e)) / (2 * h);
    }
    return j;
  }

  Mat image() const {
    Mat x(ambient.dim(), grid.size());
    for (int f = 0; f < grid.size(); ++f) x.col(f) = map(grid.point(f));
    return x;
  }
};

namespace detail {

inline void check_rank(const Mat& di, int node) {
  if (smallest_singular_value(di) <= kRankTol)
    fail(ErrorKind::RankDeficiency, "Di is rank deficient at node " + std::to_string(node));
}

/// Projection onto the g-normal space: v_N = N (N^T M N)^{-1} N^T M v with
/// N = M^{-1} E and E a Euclidean complement of the tangent space.
inline Mat normal_projector(const Mat& di, const Mat& m) {
  const Mat e = orthogonal_complement(di);
  const Mat nn = m.ldlt().solve(e);
  return nn * (nn.transpose() * m * nn).ldlt().solve(nn.transpose() * m);
}

}  // namespace detail

/// i*g as a metric field on the parameter box.
inline MetricField induced_metric(const Immersion& im, int order = 2) {
  const Mat probe = im.jacobian_at(im.grid.point(0));
  detail::check_rank(probe, 0);
  auto eval = [im](const Vec& u) -> Mat {
    const Mat di = im.jacobian_at(u);
    if (smallest_singular_value(di) <= kRankTol) fail(ErrorKind::RankDeficiency, "Di is rank deficient");
    return di.transpose() * im.ambient(im.map(u)) * di;
  };
  return MetricField(im.grid.box, im.grid.max_spacing(), eval, order, {}, im.label + "*g");
}

/// A_2 .. A_k sampled on the parameter grid with pointwise operator norms.
struct FundamentalForms {
  Grid grid;
  int m = 0;
  int n = 0;
  int k = 2;
  std::vector<Mat> tensors;  // tensors[j]: A_{j+2}, rows r * m^{j+2} + slots
  std::vector<Vec> norms;    // norms[j][node], NaN off the evaluation layers
  Vec script_a;              // sum of norms[0..k-2] per node
  int eval_layer = 1;
  double symmetry_residual = 0.0;
  double tangential_residual = 0.0;

  bool evaluated(int node) const { return grid.layer(node) >= eval_layer; }

  /// sup over evaluated nodes of |A_{order}|.
  double max_norm(int order) const {
    const Vec& v = norms[static_cast<std::size_t>(order - 2)];
    double s = 0.0;
    for (int f = 0; f < v.size(); ++f)
      if (evaluated(f)) s = std::max(s, v[f]);
    return s;
  }

  double min_norm(int order) const {
    const Vec& v = norms[static_cast<std::size_t>(order - 2)];
    double s = std::numeric_limits<double>::infinity();
    for (int f = 0; f < v.size(); ++f)
      if (evaluated(f)) s = std::min(s, v[f]);
    return s;
  }

  double max_script_a() const {
    double s = 0.0;
    for (int f = 0; f < script_a.size(); ++f)
      if (evaluated(f)) s = std::max(s, script_a[f]);
    return s;
  }

  /// II at a node as a vector in R^n for tangent slots (a, b).
  Vec second_form(int node, int a, int b) const {
    Vec v(n);
    for (int r = 0; r < n; ++r) v[r] = tensors[0](r * m * m + a * m + b, node);
    return v;
  }
};

namespace detail {

struct PointFrame {
  Mat di;     // n x m
  Mat metric; // ambient M at i(u)
  Mat proj;   // g-normal projector
  Mat g;      // induced metric
  Christoffel gamma;
};

inline double form_norm(const Vec& t, const PointFrame& pf, int q) {
  const int n = static_cast<int>(pf.metric.rows());
  const int m = static_cast<int>(pf.g.rows());
  return tensor_operator_norm(transform_tensor(t, n, m, q, spd_sqrt(pf.metric), spd_inv_sqrt(pf.g)), n, m, q);
}

}  // namespace detail

/// Second fundamental form and its iterated covariant derivatives up to A_k.
/// Coordinate second derivatives come from second-order grid differences;
/// norms are reported on nodes at least k - 1 layers inside the grid.
inline FundamentalForms higher_forms(const Immersion& im, int k) {
  if (k < 2) fail(ErrorKind::OrderExhausted, "forms start at order 2");
  const Grid& g = im.grid;
  const int m = im.dim();
  const int n = im.ambient.dim();
  const int nodes = g.size();
  for (int a = 0; a < m; ++a)
    if (g.counts[static_cast<std::size_t>(a)] < 2 * (k - 1) + 1)
      fail(ErrorKind::OrderExhausted, "parameter grid too coarse for the requested order");
  if (im.ambient.order() + 1 < k)
    fail(ErrorKind::OrderExhausted, "ambient metric does not carry enough derivatives");

  FundamentalForms out;
  out.grid = g;
  out.m = m;
  out.n = n;
  out.k = k;
  out.eval_layer = std::max(1, k - 1);

  std::vector<detail::PointFrame> frames(static_cast<std::size_t>(nodes));
  Mat dis(n * m, nodes);
  Mat gflat(m * m, nodes);
  for (int f = 0; f < nodes; ++f) {
    const Vec u = g.point(f);
    auto& pf = frames[static_cast<std::size_t>(f)];
    pf.di = im.jacobian_at(u);
    detail::check_rank(pf.di, f);
    const Vec x = im.map(u);
    if (!im.ambient.domain().contains(x)) fail(ErrorKind::DomainExit, "immersion leaves the ambient domain");
    pf.metric = im.ambient(x);
    pf.gamma = christoffel(im.ambient, x);
    pf.proj = detail::normal_projector(pf.di, pf.metric);
    pf.g = pf.di.transpose() * pf.metric * pf.di;
    if (min_eigenvalue(pf.g) <= 0) fail(ErrorKind::RankDeficiency, "induced metric not positive definite");
    for (int r = 0; r < n; ++r)
      for (int a = 0; a < m; ++a) dis(r * m + a, f) = pf.di(r, a);
    gflat.col(f) = Eigen::Map<const Vec>(pf.g.data(), m * m);
  }

  // Induced Christoffel symbols gamma^e_{ca} from grid derivatives of G.
  const Mat dg = grid_gradient(g, gflat);  // row (col-major idx of G) * m + c
  std::vector<std::vector<double>> induced(static_cast<std::size_t>(nodes));
  for (int f = 0; f < nodes; ++f) {
    const auto& pf = frames[static_cast<std::size_t>(f)];
    const Mat ginv = pf.g.inverse();
    auto d = [&](int i, int j, int c) { return dg((j * m + i) * m + c, f); };
    auto& gam = induced[static_cast<std::size_t>(f)];
    gam.assign(static_cast<std::size_t>(m * m * m), 0.0);
    for (int e = 0; e < m; ++e)
      for (int c = 0; c < m; ++c)
        for (int a = 0; a < m; ++a) {
          double s = 0.0;
          for (int l = 0; l < m; ++l) s += ginv(e, l) * (d(l, a, c) + d(l, c, a) - d(c, a, l));
          gam[static_cast<std::size_t>((e * m + c) * m + a)] = 0.5 * s;
        }
  }

  // A_2: normal part of i_ab + Gamma(i_a, i_b).
  const Mat d2 = grid_gradient(g, dis);  // row (r*m + a)*m + b
  Mat a2(n * m * m, nodes);
  for (int f = 0; f < nodes; ++f) {
    const auto& pf = frames[static_cast<std::size_t>(f)];
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        Vec v(n);
        for (int r = 0; r < n; ++r) v[r] = 0.5 * (d2((r * m + a) * m + b, f) + d2((r * m + b) * m + a, f));
        v += pf.gamma.contract(pf.di.col(a), pf.di.col(b));
        const Vec w = pf.proj * v;
        out.tangential_residual = std::max(out.tangential_residual, (pf.di.transpose() * pf.metric * w).norm());
        for (int r = 0; r < n; ++r) a2(r * m * m + a * m + b, f) = w[r];
      }
  }
  out.tensors.push_back(a2);

  // A_{q+1} = nabla A_q, derivative slot last.
  for (int q = 2; q < k; ++q) {
    const Mat& t = out.tensors.back();
    const int slots = ipow(m, q);
    const Mat dt = grid_gradient(g, t);
    Mat next(n * slots * m, nodes);
    for (int f = 0; f < nodes; ++f) {
      const auto& pf = frames[static_cast<std::size_t>(f)];
      const auto& gam = induced[static_cast<std::size_t>(f)];
      for (int s = 0; s < slots; ++s) {
        const auto digits = slot_digits(s, m, q);
        Vec ts(n);
        for (int r = 0; r < n; ++r) ts[r] = t(r * slots + s, f);
        for (int c = 0; c < m; ++c) {
          Vec w(n);
          for (int r = 0; r < n; ++r) w[r] = dt((r * slots + s) * m + c, f);
          w += pf.gamma.contract(pf.di.col(c), ts);
          for (int j = 0; j < q; ++j) {
            auto dd = digits;
            for (int e = 0; e < m; ++e) {
              const double coef = gam[static_cast<std::size_t>((e * m + c) * m + digits[static_cast<std::size_t>(j)])];
              if (coef == 0.0) continue;
              dd[static_cast<std::size_t>(j)] = e;
              const int se = slot_flat(dd, m);
              for (int r = 0; r < n; ++r) w[r] -= coef * t(r * slots + se, f);
            }
          }
          const Vec pw = pf.proj * w;
          for (int r = 0; r < n; ++r) next((r * slots + s) * m + c, f) = pw[r];
        }
      }
    }
    out.tensors.push_back(std::move(next));
  }

  out.script_a = Vec::Zero(nodes);
  for (int j = 0; j < k - 1; ++j) {
    const int q = j + 2;
    Vec nv = Vec::Constant(nodes, std::numeric_limits<double>::quiet_NaN());
    for (int f = 0; f < nodes; ++f) {
      if (!out.evaluated(f)) continue;
      const Vec t = out.tensors[static_cast<std::size_t>(j)].col(f);
      if (j == 0) out.symmetry_residual = std::max(out.symmetry_residual, slot_symmetry_residual(t, n, m, 2));
      nv[f] = detail::form_norm(t, frames[static_cast<std::size_t>(f)], q);
      out.script_a[f] += nv[f];
    }
    out.norms.push_back(std::move(nv));
  }
  for (int f = 0; f < nodes; ++f)
    if (!out.evaluated(f)) out.script_a[f] = std::numeric_limits<double>::quiet_NaN();
  return out;
}

inline FundamentalForms second_fundamental_form(const Immersion& im) { return higher_forms(im, 2); }

struct CompletenessResult {
  bool complete = true;
  int witness_node = -1;
  Vec witness;          // parameter point
  int missing_node = -1;
  double image_step = 0.0;
};

/// Sampled-sheet proxy: every present node of the parameter sub-box K whose
/// image lies in Omega farther than one image step from its boundary must
/// have all in-range grid neighbours present.
inline CompletenessResult completeness_check(const Immersion& im, const Box& omega, const Box& k) {
  CompletenessResult r;
  const Grid& g = im.grid;
  const Mat x = im.image();
  const int m = g.dim();
  for (int f = 0; f < g.size(); ++f) {
    const auto idx = g.multi_index(f);
    for (int a = 0; a < m; ++a) {
      if (idx[static_cast<std::size_t>(a)] + 1 >= g.counts[static_cast<std::size_t>(a)]) continue;
      r.image_step = std::max(r.image_step, (x.col(f + g.stride(a)) - x.col(f)).norm());
    }
  }
  for (int f = 0; f < g.size(); ++f) {
    if (!im.is_present(f) || !k.contains(g.point(f), -1e-12)) continue;
    const Vec p = x.col(f);
    if (!omega.contains(p) || omega.boundary_distance(p) <= r.image_step) continue;
    const auto idx = g.multi_index(f);
    for (int a = 0; a < m; ++a) {
      for (int s : {-1, 1}) {
        const int j = idx[static_cast<std::size_t>(a)] + s;
        if (j < 0 || j >= g.counts[static_cast<std::size_t>(a)]) continue;
        const int nb = f + s * g.stride(a);
        if (!im.is_present(nb)) {
          r.complete = false;
          r.witness_node = f;
          r.witness = g.point(f);
          r.missing_node = nb;
          return r;
        }
      }
    }
  }
  return r;
}

/// Euclidean motion x -> Q x + b applied to the image (ambient unchanged).
inline Immersion moved(const Immersion& im, const Mat& q, const Vec& b) {
  Immersion out = im;
  out.map = [f = im.map, q, b](const Vec& u) { return Vec(q * f(u) + b); };
  if (im.jacobian) out.jacobian = [j = im.jacobian, q](const Vec& u) { return Mat(q * j(u)); };
  return out;
}

/// Reparametrisation i o phi over a new parameter grid.
inline Immersion reparametrized(const Immersion& im, Grid grid, PointFn phi, MatrixFn dphi) {
  Immersion out = im;
  out.grid = std::move(grid);
  out.map = [f = im.map, phi](const Vec& u) { return f(phi(u)); };
  out.jacobian = [im, phi, dphi](const Vec& u) { return Mat(im.jacobian_at(phi(u)) * dphi(u)); };
  out.present.clear();
  return out;
}

namespace immersions {

inline Box box2(double a0, double a1, double b0, double b1) {
  Vec lo(2), hi(2);
  lo << a0, b0;
  hi << a1, b1;
  return Box{lo, hi};
}

/// x -> (x, f(x)) over a box in R^m, n = m + codim.
inline Immersion graph(const MetricField& ambient, const Grid& grid, std::function<Vec(const Vec&)> f,
                       std::function<Mat(const Vec&)> df = {}) {
  const int m = grid.dim();
  Immersion im;
  im.grid = grid;
  im.ambient = ambient;
  im.map = [f, m](const Vec& x) {
    const Vec y = f(x);
    Vec out(m + y.size());
    out << x, y;
    return out;
  };
  if (df) {
    im.jacobian = [df, m](const Vec& x) {
      const Mat d = df(x);
      Mat j(m + d.rows(), m);
      j << Mat::Identity(m, m), d;
      return j;
    };
  }
  im.basepoint = Vec::Zero(m);
  im.label = "graph";
  return im;
}

/// Affine x -> A x + b.
inline Immersion affine(const MetricField& ambient, const Grid& grid, const Mat& a, const Vec& b) {
  Immersion im;
  im.grid = grid;
  im.ambient = ambient;
  im.map = [a, b](const Vec& x) { return Vec(a * x + b); };
  im.jacobian = [a](const Vec&) { return a; };
  im.basepoint = grid.box.lo + 0.5 * (grid.box.hi - grid.box.lo);
  im.label = "affine";
  return im;
}

/// (theta, z) -> (R cos theta, R sin theta, z).
inline Immersion cylinder(const MetricField& ambient, double radius, const Grid& grid) {
  Immersion im;
  im.grid = grid;
  im.ambient = ambient;
  im.map = [radius](const Vec& u) {
    Vec x(3);
    x << radius * std::cos(u[0]), radius * std::sin(u[0]), u[1];
    return x;
  };
  im.jacobian = [radius](const Vec& u) {
    Mat j(3, 2);
    j << -radius * std::sin(u[0]), 0, radius * std::cos(u[0]), 0, 0, 1;
    return j;
  };
  im.basepoint = Vec::Zero(2);
  im.label = "cylinder";
  return im;
}

/// Inverse stereographic projection from the south pole, scaled to radius R:
/// u -> R (2u, 1 - |u|^2) / (1 + |u|^2).
inline Immersion sphere(const MetricField& ambient, double radius, const Grid& grid) {
  Immersion im;
  im.grid = grid;
  im.ambient = ambient;
  im.map = [radius](const Vec& u) {
    const double s = 1.0 + u.squaredNorm();
    Vec x(3);
    x << 2 * u[0] / s, 2 * u[1] / s, (2.0 - s) / s;
    return Vec(radius * x);
  };
  im.jacobian = [radius](const Vec& u) {
    const double s = 1.0 + u.squaredNorm();
    Mat j(3, 2);
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) j(b, a) = (a == b ? 2.0 / s : 0.0) - 4.0 * u[b] * u[a] / (s * s);
      j(2, a) = -4.0 * u[a] / (s * s);
    }
    return Mat(radius * j);
  };
  im.basepoint = Vec::Zero(2);
  im.label = "sphere";
  return im;
}

/// (theta, phi) -> ((R + r cos phi) cos theta, (R + r cos phi) sin theta, r sin phi).
inline Immersion torus(const MetricField& ambient, double big, double small, const Grid& grid) {
  Immersion im;
  im.grid = grid;
  im.ambient = ambient;
  im.map = [big, small](const Vec& u) {
    const double w = big + small * std::cos(u[1]);
    Vec x(3);
    x << w * std::cos(u[0]), w * std::sin(u[0]), small * std::sin(u[1]);
    return x;
  };
  im.jacobian = [big, small](const Vec& u) {
    const double w = big + small * std::cos(u[1]);
    Mat j(3, 2);
    j << -w * std::sin(u[0]), -small * std::sin(u[1]) * std::cos(u[0]), w * std::cos(u[0]),
        -small * std::sin(u[1]) * std::sin(u[0]), 0, small * std::cos(u[1]);
    return j;
  };
  im.basepoint = Vec::Zero(2);
  im.label = "torus";
  return im;
}

/// Unit-speed circle arc t -> (R cos t, R sin t) in the plane.
inline Immersion circle(const MetricField& ambient, double radius, const Grid& grid) {
  Immersion im;
  im.grid = grid;
  im.ambient = ambient;
  im.map = [radius](const Vec& t) {
    Vec x(2);
    x << radius * std::cos(t[0]), radius * std::sin(t[0]);
    return x;
  };
  im.jacobian = [radius](const Vec& t) {
    Mat j(2, 1);
    j << -radius * std::sin(t[0]), radius * std::cos(t[0]);
    return j;
  };
  im.basepoint = Vec::Zero(1);
  im.label = "circle";
  return im;
}

}  // namespace immersions

}  // namespace aalab
