// lab: scenario runner. Exit 0 when every verdict passes, 2 on a failed
// verdict, 1 on usage errors (bad arguments, unknown scenario or fixture,
// parameter out of range, unreadable manifest).
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "aalab/io.hpp"
#include "aalab/scenarios.hpp"

namespace fs = std::filesystem;
using namespace aalab;

namespace {

std::map<std::string, double> parse_params(const std::vector<std::string>& kv) {
  std::map<std::string, double> out;
  for (const auto& s : kv) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--param", "expected k=v, got '" + s + "'");
    const std::string v = s.substr(eq + 1);
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0') throw CLI::ValidationError("--param", "value of '" + s + "' is not a number");
    out[s.substr(0, eq)] = d;
  }
  return out;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream o(p, std::ios::binary);
  if (!o) fail(ErrorKind::FixtureNotFound, "cannot write '" + p.string() + "'");
  o << text;
}

void emit(lab::RunReport& r, const std::string& out) {
  std::cout << "scenario " << r.scenario << "\n";
  if (!out.empty()) {
    const fs::path dir = fs::path(out) / r.scenario;
    fs::create_directories(dir);
    for (const auto& t : r.tables) {
      write_file(dir / (t.name + ".csv"), io::to_csv(t));
      r.artifacts.push_back((dir / (t.name + ".csv")).string());
    }
    for (const auto& [name, svg] : r.plots) {
      write_file(dir / name, svg);
      r.artifacts.push_back((dir / name).string());
    }
    io::Table v{"verdicts", {"check", "verdict", "detail", "table", "row"}, {}};
    for (const auto& x : r.verdicts) v.add({x.check, x.pass ? "pass" : "fail", x.detail, x.table, x.row});
    write_file(dir / "verdicts.csv", io::to_csv(v));
    r.artifacts.push_back((dir / "verdicts.csv").string());
  } else {
    for (const auto& t : r.tables) std::cout << "# " << t.name << "\n" << io::to_csv(t);
  }
  for (const auto& x : r.verdicts)
    std::cout << (x.pass ? "PASS " : "FAIL ") << x.check << " (" << x.detail << ") [" << x.table << ":" << x.row
              << "]\n";
  for (const auto& a : r.artifacts) std::cout << "wrote " << a << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geometry lab scenario runner"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run a built-in scenario (or 'all')");
  std::string scenario, out, manifest_path;
  std::vector<std::string> params;
  std::uint64_t seed = 0;
  run->add_option("scenario", scenario, "scenario name")->required();
  run->add_option("--param", params, "parameter override k=v")->take_all();
  run->add_option("--seed", seed, "seed for randomized sweeps");
  run->add_option("--out", out, "directory for CSV and SVG output");
  run->add_option("--manifest", manifest_path, "JSON manifest whose fixtures replace the built-in ones");

  auto* list = app.add_subcommand("list", "print the scenario catalog");

  auto* check = app.add_subcommand("check", "load and validate every fixture of a manifest");
  std::string check_path;
  check->add_option("manifest", check_path, "JSON manifest")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*list) {
      for (const auto& d : lab::catalog()) {
        std::cout << d.name << "  [" << d.kind << "]  " << d.summary << "\n";
        for (const auto& p : d.params)
          std::cout << "    " << p.name << " = " << io::fmt(p.value) << "  in [" << io::fmt(p.lo) << ", "
                    << io::fmt(p.hi) << "]  " << p.doc << "\n";
      }
      return 0;
    }
    if (*check) {
      const auto issues = io::check_manifest(io::Manifest::load(check_path));
      for (const auto& i : issues) std::cout << i.section << "/" << i.name << ": " << i.kind << ": " << i.message << "\n";
      if (issues.empty()) std::cout << "ok\n";
      return issues.empty() ? 0 : 2;
    }
    io::Manifest manifest = lab::builtin_manifest();
    if (!manifest_path.empty()) manifest.merge(io::Manifest::load(manifest_path));
    const auto overrides = parse_params(params);
    std::vector<lab::Scenario> list_run;
    if (scenario == "all") {
      if (!overrides.empty()) throw CLI::ValidationError("--param", "parameters need a single scenario");
      for (const auto& d : lab::catalog()) list_run.push_back(lab::make_scenario(d.name, {}, seed));
    } else {
      list_run.push_back(lab::make_scenario(scenario, overrides, seed));
    }
    for (const auto& s : list_run) lab::validate(s, manifest);
    auto reports = lab::run_all(list_run, manifest);
    bool ok = true;
    for (auto& r : reports) {
      emit(r, out);
      ok = ok && r.all_pass();
    }
    return ok ? 0 : 2;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return 1;
  } catch (const LabError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
