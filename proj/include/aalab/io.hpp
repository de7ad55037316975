#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "aalab/ambient.hpp"
#include "aalab/error.hpp"
#include "aalab/graphrep.hpp"
#include "aalab/grid.hpp"
#include "aalab/holder.hpp"
#include "aalab/metrics.hpp"
#include "aalab/submanifold.hpp"

namespace aalab::io {

using json = nlohmann::json;

// ---------------------------------------------------------------- json basics

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::InvalidFixture, what);
}

inline Vec vec_of(const json& j, const std::string& what) {
  require(j.is_array(), what + " must be an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    require(j[i].is_number(), what + " must hold numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline json json_of(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline double number(const json& j, const std::string& key, double fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  detail::require(j[key].is_number(), "'" + key + "' must be a number");
  return j[key].get<double>();
}

inline double number(const json& j, const std::string& key) {
  require(j.is_object() && j.contains(key), "missing '" + key + "'");
  return number(j, key, 0.0);
}

}  // namespace detail

/// {"lo": [...], "hi": [...]}
inline Box box_from_json(const json& j) {
  detail::require(j.is_object() && j.contains("lo") && j.contains("hi"), "box needs lo and hi");
  Box b{detail::vec_of(j["lo"], "box.lo"), detail::vec_of(j["hi"], "box.hi")};
  detail::require(b.lo.size() == b.hi.size() && b.lo.size() > 0, "box.lo and box.hi differ in length");
  for (int a = 0; a < b.dim(); ++a) detail::require(b.lo[a] < b.hi[a], "empty box");
  return b;
}

inline json to_json(const Box& b) { return {{"lo", detail::json_of(b.lo)}, {"hi", detail::json_of(b.hi)}}; }

inline json to_json(const Grid& g) { return {{"box", to_json(g.box)}, {"counts", g.counts}}; }

inline Grid grid_from_json(const json& j) {
  detail::require(j.contains("box") && j.contains("counts"), "grid needs box and counts");
  Grid g(box_from_json(j["box"]), j["counts"].get<std::vector<int>>());
  detail::require(static_cast<int>(g.counts.size()) == g.dim(), "grid counts do not match the box");
  for (int c : g.counts) detail::require(c >= 2, "grid needs two nodes per axis");
  return g;
}

// Row-major: node after node, each column of `m` in turn.
inline json flat_values(const Mat& m) {
  json a = json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(m(r, c));
  return a;
}

inline Mat values_from_flat(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  const Vec v = detail::vec_of(j, what);
  detail::require(v.size() == rows * cols, what + ": expected " + std::to_string(rows * cols) + " values, got " +
                                               std::to_string(v.size()));
  Mat m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = v[c * rows + r];
  return m;
}

// ------------------------------------------------------- sampled functions

inline json to_json(const SampledFunction& f) {
  return {{"grid", to_json(f.grid)}, {"out_dim", f.out_dim()}, {"values", flat_values(f.values)}};
}

/// Loaded functions interpolate their samples (no analytic source).
inline SampledFunction function_from_json(const json& j) {
  const Grid g = grid_from_json(j.at("grid"));
  const int out = j.value("out_dim", 1);
  return SampledFunction(g, values_from_flat(j.at("values"), out, g.size(), "function values"));
}

inline json to_json(const GraphPatch& p) {
  json j;
  j["rotation"] = flat_values(p.rotation.transpose());  // row-major matrix
  j["dimension"] = p.rotation.rows();
  j["origin"] = detail::json_of(p.origin);
  j["center"] = detail::json_of(p.center);
  j["radius"] = p.radius;
  j["eta0"] = p.eta0;
  j["f"] = to_json(SampledFunction(p.grid, p.f));
  j["reparam"] = flat_values(p.reparam);
  j["inside"] = std::vector<int>(p.inside.begin(), p.inside.end());
  return j;
}

inline GraphPatch patch_from_json(const json& j) {
  GraphPatch p;
  const int n = j.at("dimension").get<int>();
  p.rotation = values_from_flat(j.at("rotation"), n, n, "rotation").transpose();
  p.origin = detail::vec_of(j.at("origin"), "origin");
  p.center = detail::vec_of(j.at("center"), "center");
  p.radius = j.at("radius").get<double>();
  p.eta0 = j.value("eta0", 0.0);
  const SampledFunction f = function_from_json(j.at("f"));
  p.grid = f.grid;
  p.f = f.values;
  p.reparam = values_from_flat(j.at("reparam"), p.grid.dim(), p.grid.size(), "reparam");
  const auto in = j.at("inside").get<std::vector<int>>();
  detail::require(static_cast<int>(in.size()) == p.grid.size(), "inside mask size");
  p.inside.assign(in.begin(), in.end());
  return p;
}

// ------------------------------------------------------------ metric fixtures

/// {dimension, box, resolution, kind, payload}. `resolution` is the
/// finite-difference step; for kind "grid" it is also the node spacing and
/// payload holds the n x n matrices node after node, each row-major.
inline MetricField metric_from_json(const json& j, const std::string& name = "metric") {
  detail::require(j.is_object(), "metric fixture '" + name + "' must be an object");
  const int n = j.at("dimension").get<int>();
  const Box box = box_from_json(j.at("box"));
  detail::require(box.dim() == n, "metric '" + name + "': box dimension differs from 'dimension'");
  const double h = detail::number(j, "resolution", 1e-3);
  detail::require(h > 0, "metric '" + name + "': resolution must be positive");
  const std::string kind = j.at("kind").get<std::string>();
  const json payload = j.value("payload", json::object());
  if (kind == "identity") return metrics::identity(n, box, h);
  if (kind == "diag") {
    const Vec d = detail::vec_of(payload, "diag payload");
    detail::require(d.size() == n && d.minCoeff() > 0, "metric '" + name + "': diag payload needs n positive entries");
    return metrics::diagonal(d, box, h);
  }
  if (kind.rfind("analytic:", 0) == 0) {
    const std::string which = kind.substr(9);
    if (which == "polar") return metrics::polar(box, h);
    if (which == "sphere_graph") return metrics::sphere_graph(n, detail::number(payload, "radius", 1.0), box, h);
    if (which == "conformal_wave")
      return metrics::conformal_wave(n, detail::number(payload, "amplitude", 0.2), detail::number(payload, "freq", 1.0),
                                     box, h);
    if (which == "random")
      return metrics::random_analytic(n, static_cast<std::uint64_t>(detail::number(payload, "seed", 0)), box, h,
                                      detail::number(payload, "amplitude", 0.3));
    fail(ErrorKind::InvalidFixture, "metric '" + name + "': unknown analytic metric '" + which + "'");
  }
  if (kind == "grid") {
    const Grid g = Grid::with_spacing(box, h);
    const Mat flat = values_from_flat(payload, n * n, g.size(), "metric '" + name + "' grid payload");
    for (int f = 0; f < g.size(); ++f) {
      const Mat m = flat.col(f).reshaped(n, n).transpose();
      detail::require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff()),
                      "metric '" + name + "': grid matrix not symmetric at node " + std::to_string(f));
      Eigen::SelfAdjointEigenSolver<Mat> es(m);
      detail::require(es.eigenvalues().minCoeff() > 0,
                      "metric '" + name + "': grid matrix not positive definite at node " + std::to_string(f));
    }
    return MetricField(
        box, h,
        [g, flat, n](const Vec& p) {
          const Vec v = grid_interpolate(g, flat, p);
          Mat m = v.reshaped(n, n).transpose();
          return Mat(0.5 * (m + m.transpose()));
        },
        2, {}, name);
  }
  fail(ErrorKind::InvalidFixture, "metric '" + name + "': unknown kind '" + kind + "'");
}

// ---------------------------------------------------------- immersion fixtures

/// {param_box, resolution, kind, payload, ambient_ref, basepoint};
/// `resolution` is samples per axis. Graph payload: {"terms": [{"amplitude",
/// "wave", "phase", "component"}]} with f_c(x) = sum a sin(w . x + phase).
inline Immersion immersion_from_json(const json& j, const MetricField& ambient, const std::string& name = "immersion") {
  detail::require(j.is_object(), "immersion fixture '" + name + "' must be an object");
  const Box pbox = box_from_json(j.at("param_box"));
  const int m = pbox.dim();
  const int per_axis = j.value("resolution", 64);
  detail::require(per_axis >= 3, "immersion '" + name + "': resolution must be at least 3 samples per axis");
  const Grid grid = Grid::uniform(pbox, per_axis);
  const std::string kind = j.at("kind").get<std::string>();
  const json payload = j.value("payload", json::object());
  const int n = ambient.dim();
  Immersion im;
  if (kind == "graph") {
    detail::require(n > m, "immersion '" + name + "': ambient too small for a graph");
    struct Term {
      double a;
      Vec w;
      double phase;
      int comp;
    };
    std::vector<Term> terms;
    for (const auto& t : payload.value("terms", json::array())) {
      Term term{detail::number(t, "amplitude"), detail::vec_of(t.at("wave"), "wave"), detail::number(t, "phase", 0.0),
                t.value("component", 0)};
      detail::require(term.w.size() == m && term.comp >= 0 && term.comp < n - m,
                      "immersion '" + name + "': malformed graph term");
      terms.push_back(term);
    }
    const int c = n - m;
    im = immersions::graph(
        ambient, grid,
        [terms, c](const Vec& x) {
          Vec y = Vec::Zero(c);
          for (const auto& t : terms) y[t.comp] += t.a * std::sin(t.w.dot(x) + t.phase);
          return y;
        },
        [terms, c, m](const Vec& x) {
          Mat d = Mat::Zero(c, m);
          for (const auto& t : terms) d.row(t.comp) += t.a * std::cos(t.w.dot(x) + t.phase) * t.w.transpose();
          return d;
        });
  } else if (kind == "cylinder") {
    im = immersions::cylinder(ambient, detail::number(payload, "radius", 1.0), grid);
  } else if (kind == "sphere") {
    im = immersions::sphere(ambient, detail::number(payload, "radius", 1.0), grid);
  } else if (kind == "torus") {
    im = immersions::torus(ambient, detail::number(payload, "big", 2.0), detail::number(payload, "small", 1.0), grid);
  } else if (kind == "grid") {
    const Mat pts = values_from_flat(payload, n, grid.size(), "immersion '" + name + "' grid payload");
    const Mat grad = grid_gradient(grid, pts);
    im.grid = grid;
    im.ambient = ambient;
    im.map = [grid, pts](const Vec& u) { return grid_interpolate(grid, pts, u); };
    im.jacobian = [grid, grad, n, m](const Vec& u) {
      const Vec v = grid_interpolate(grid, grad, u);
      Mat d(n, m);
      for (int r = 0; r < n; ++r)
        for (int a = 0; a < m; ++a) d(r, a) = v[r * m + a];
      return d;
    };
  } else {
    fail(ErrorKind::InvalidFixture, "immersion '" + name + "': unknown kind '" + kind + "'");
  }
  im.label = name;
  im.basepoint = j.contains("basepoint") ? detail::vec_of(j["basepoint"], "basepoint") : Vec(pbox.lo + pbox.hi) / 2;
  detail::require(im.basepoint.size() == m && pbox.contains(im.basepoint),
                  "immersion '" + name + "': basepoint outside the parameter box");
  return im;
}

// ----------------------------------------------------------------- manifests

/// {"metrics": {name: ...}, "immersions": {name: ...}, "functions": {...},
/// "patches": {...}}; lookups fail with FixtureNotFound.
struct Manifest {
  json doc = json::object();

  static Manifest parse(const std::string& text) {
    Manifest m;
    try {
      m.doc = json::parse(text);
    } catch (const json::exception& e) {
      fail(ErrorKind::InvalidFixture, std::string("manifest is not valid JSON: ") + e.what());
    }
    detail::require(m.doc.is_object(), "manifest must be a JSON object");
    return m;
  }

  static Manifest load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::FixtureNotFound, "cannot open manifest '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  bool has(const std::string& section, const std::string& name) const {
    return doc.contains(section) && doc[section].contains(name);
  }

  const json& entry(const std::string& section, const std::string& name) const {
    if (!has(section, name)) fail(ErrorKind::FixtureNotFound, section + " fixture '" + name + "' not found");
    return doc[section][name];
  }

  MetricField metric(const std::string& name) const {
    try {
      return metric_from_json(entry("metrics", name), name);
    } catch (const json::exception& e) {
      fail(ErrorKind::InvalidFixture, "metric '" + name + "': " + e.what());
    }
  }

  Immersion immersion(const std::string& name) const {
    const json& j = entry("immersions", name);
    try {
      return immersion_from_json(j, metric(j.at("ambient_ref").get<std::string>()), name);
    } catch (const json::exception& e) {
      fail(ErrorKind::InvalidFixture, "immersion '" + name + "': " + e.what());
    }
  }

  SampledFunction function(const std::string& name) const {
    try {
      return function_from_json(entry("functions", name));
    } catch (const json::exception& e) {
      fail(ErrorKind::InvalidFixture, "function '" + name + "': " + e.what());
    }
  }

  std::vector<std::string> names(const std::string& section) const {
    std::vector<std::string> out;
    if (doc.contains(section))
      for (auto it = doc[section].begin(); it != doc[section].end(); ++it) out.push_back(it.key());
    return out;
  }

  /// Entries of `other` replace same-named entries here.
  void merge(const Manifest& other) {
    for (auto it = other.doc.begin(); it != other.doc.end(); ++it) {
      if (!doc.contains(it.key())) doc[it.key()] = json::object();
      for (auto e = it.value().begin(); e != it.value().end(); ++e) doc[it.key()][e.key()] = e.value();
    }
  }
};

struct CheckIssue {
  std::string section;
  std::string name;
  std::string kind;
  std::string message;
};

/// Loads every fixture once; an empty result means the manifest is usable.
inline std::vector<CheckIssue> check_manifest(const Manifest& m) {
  std::vector<CheckIssue> issues;
  auto attempt = [&issues](const std::string& section, const std::string& name, auto&& fn) {
    try {
      fn();
    } catch (const LabError& e) {
      issues.push_back({section, name, std::string(to_string(e.kind())), e.what()});
    } catch (const std::exception& e) {
      issues.push_back({section, name, "invalid-fixture", e.what()});
    }
  };
  for (auto it = m.doc.begin(); it != m.doc.end(); ++it) {
    const std::string& s = it.key();
    if (s != "metrics" && s != "immersions" && s != "functions" && s != "patches")
      issues.push_back({s, "", "invalid-fixture", "unknown manifest section"});
  }
  for (const auto& n : m.names("metrics"))
    attempt("metrics", n, [&] {
      const MetricField g = m.metric(n);
      const Vec c = (g.domain().lo + g.domain().hi) / 2;
      Eigen::SelfAdjointEigenSolver<Mat> es(g(c));
      detail::require(es.eigenvalues().minCoeff() > 0, "metric not positive definite at the box centre");
    });
  for (const auto& n : m.names("immersions"))
    attempt("immersions", n, [&] {
      const Immersion im = m.immersion(n);
      detail::require(im.image().allFinite(), "immersion has non-finite samples");
    });
  for (const auto& n : m.names("functions")) attempt("functions", n, [&] { m.function(n); });
  for (const auto& n : m.names("patches"))
    attempt("patches", n, [&] {
      try {
        patch_from_json(m.entry("patches", n));
      } catch (const json::exception& e) {
        fail(ErrorKind::InvalidFixture, e.what());
      }
    });
  return issues;
}

// ---------------------------------------------------------------- csv tables

/// Fixed 12 significant digits so replays compare byte for byte.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

struct Cell {
  std::string text;
  Cell(double v) : text(fmt(v)) {}
  Cell(int v) : text(std::to_string(v)) {}
  Cell(std::size_t v) : text(std::to_string(v)) {}
  Cell(const char* s) : text(s) {}
  Cell(std::string s) : text(std::move(s)) {}
};

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  /// Index of the appended row.
  int add(std::vector<Cell> cells) {
    if (cells.size() != columns.size())
      fail(ErrorKind::Domain, "table '" + name + "': row has " + std::to_string(cells.size()) + " cells, expected " +
                                  std::to_string(columns.size()));
    std::vector<std::string> r;
    for (auto& c : cells) r.push_back(std::move(c.text));
    rows.push_back(std::move(r));
    return static_cast<int>(rows.size()) - 1;
  }

  int column(const std::string& c) const {
    auto it = std::find(columns.begin(), columns.end(), c);
    if (it == columns.end()) fail(ErrorKind::Domain, "table '" + name + "' has no column '" + c + "'");
    return static_cast<int>(it - columns.begin());
  }

  std::vector<double> numbers(const std::string& c) const {
    const int k = column(c);
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(std::strtod(r[static_cast<std::size_t>(k)].c_str(), nullptr));
    return out;
  }
};

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

inline std::string to_csv(const Table& t) {
  std::string out;
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += csv_field(cells[i]);
    }
    out += '\n';
  };
  line(t.columns);
  for (const auto& r : t.rows) line(r);
  return out;
}

/// Distance matrix rows then a final "basepoint,<index>" row.
inline std::string distance_csv(const Mat& d, int basepoint) {
  std::string out;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      if (j) out += ',';
      out += fmt(d(i, j));
    }
    out += '\n';
  }
  return out + "basepoint," + std::to_string(basepoint) + "\n";
}

// ----------------------------------------------------------------------- svg

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline const char* colour(std::size_t i) {
  static const char* c[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};
  return c[i % 6];
}

inline std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

}  // namespace detail

/// Static line plot; `log_y` plots log10 of positive values.
inline std::string line_plot(const std::string& title, const std::vector<Series>& series, bool log_y = false) {
  const double w = 640, h = 400, l = 70, r = 20, t = 40, b = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  auto ty = [log_y](double v) { return log_y ? std::log10(std::max(v, 1e-300)) : v; };
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (log_y && s.y[i] <= 0)) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double x) { return l + (x - x0) / (x1 - x0) * (w - l - r); };
  auto py = [&](double y) { return h - b - (ty(y) - y0) / (y1 - y0) * (h - t - b); };
  std::string o = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" font-family=\"sans-serif\" "
                  "font-size=\"12\">\n<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  o += "<text x=\"" + fmt(w / 2) + "\" y=\"24\" text-anchor=\"middle\">" + detail::esc(title) + "</text>\n";
  o += "<rect x=\"" + fmt(l) + "\" y=\"" + fmt(t) + "\" width=\"" + fmt(w - l - r) + "\" height=\"" + fmt(h - t - b) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  o += "<text x=\"" + fmt(l) + "\" y=\"" + fmt(h - b + 16) + "\">" + fmt(x0) + "</text>\n";
  o += "<text x=\"" + fmt(w - r) + "\" y=\"" + fmt(h - b + 16) + "\" text-anchor=\"end\">" + fmt(x1) + "</text>\n";
  const std::string pre = log_y ? "1e" : "";
  o += "<text x=\"" + fmt(l - 4) + "\" y=\"" + fmt(h - b) + "\" text-anchor=\"end\">" + pre + fmt(y0) + "</text>\n";
  o += "<text x=\"" + fmt(l - 4) + "\" y=\"" + fmt(t + 10) + "\" text-anchor=\"end\">" + pre + fmt(y1) + "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (log_y && s.y[i] <= 0)) continue;
      pts += fmt(px(s.x[i])) + "," + fmt(py(s.y[i])) + " ";
    }
    o += "<polyline fill=\"none\" stroke=\"" + std::string(detail::colour(k)) + "\" stroke-width=\"1.5\" points=\"" +
         pts + "\"/>\n";
    o += "<text x=\"" + fmt(w - r - 4) + "\" y=\"" + fmt(t + 16 + 14.0 * static_cast<double>(k)) +
         "\" text-anchor=\"end\" fill=\"" + detail::colour(k) + "\">" + detail::esc(s.label) + "</text>\n";
  }
  return o + "</svg>\n";
}

/// Heatmap of a rows x cols array (grey scale, NaN drawn red).
inline std::string heatmap(const std::string& title, const Mat& v) {
  const double side = 360, t = 40, l = 20;
  double lo = INFINITY, hi = -INFINITY;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::isfinite(v.data()[i])) lo = std::min(lo, v.data()[i]), hi = std::max(hi, v.data()[i]);
  if (!(lo <= hi)) lo = 0, hi = 1;
  if (hi == lo) hi = lo + 1;
  const double cw = side / static_cast<double>(std::max<Eigen::Index>(1, v.cols()));
  const double ch = side / static_cast<double>(std::max<Eigen::Index>(1, v.rows()));
  std::string o = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"420\" font-family=\"sans-serif\" "
                  "font-size=\"12\">\n<rect width=\"400\" height=\"420\" fill=\"white\"/>\n";
  o += "<text x=\"200\" y=\"24\" text-anchor=\"middle\">" + detail::esc(title) + " [" + fmt(lo) + ", " + fmt(hi) +
       "]</text>\n";
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      std::string fill = "#ff0000";
      if (std::isfinite(v(i, j))) {
        const int g = static_cast<int>(std::lround(255 * (v(i, j) - lo) / (hi - lo)));
        char buf[16];
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", g, g, g);
        fill = buf;
      }
      o += "<rect x=\"" + fmt(l + cw * static_cast<double>(j)) + "\" y=\"" + fmt(t + ch * static_cast<double>(i)) +
           "\" width=\"" + fmt(cw) + "\" height=\"" + fmt(ch) + "\" fill=\"" + fill + "\"/>\n";
    }
  return o + "</svg>\n";
}

}  // namespace aalab::io
