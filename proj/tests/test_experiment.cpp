// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "qedft/error.hpp"
#include "qedft/experiment.hpp"
#include "qedft/units.hpp"

using namespace qedft;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using nlohmann::json;

namespace {

json small_doc() {
  return json::parse(R"({
    "schema": 1,
    "name": "h2-small",
    "method": "oracle-only",
    "cell": {
      "lengths": "6 bohr",
      "qubits": [3, 3, 3],
      "dimer": {"species": ["H", "H"], "bond": "1.4 bohr"}
    },
    "oracle": {"bands": 2}
  })");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string config_error(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("qedft-test-" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("quantities convert to atomic units", "[experiment]") {
  CHECK_THAT(parse_quantity("1 angstrom", "length"), WithinRel(1.0 / 0.529177210903, 1e-14));
  CHECK_THAT(parse_quantity("2.5 bohr", "length"), WithinAbs(2.5, 0));
  CHECK_THAT(parse_quantity("1 nm", "length"), WithinRel(10.0 / 0.529177210903, 1e-14));
  CHECK_THAT(parse_quantity("27.211386245988 eV", "energy"), WithinRel(1.0, 1e-14));
  CHECK_THAT(parse_quantity("1 Ry", "energy"), WithinRel(0.5, 1e-14));
  CHECK_THAT(parse_quantity("1 fs", "time"), WithinRel(1.0 / 0.024188843265857, 1e-12));
  CHECK_THAT(parse_quantity("0.5 A^-1", "inverse-length"), WithinRel(0.5 * 0.529177210903, 1e-14));
  CHECK_THAT(parse_quantity("180 deg", "angle"), WithinRel(units::kPi, 1e-14));
  CHECK_THROWS_AS(parse_quantity("3 parsec", "length"), ConfigError);
  CHECK_THROWS_AS(parse_quantity("3", "length"), ConfigError);
  CHECK_THROWS_AS(parse_quantity("3 eV", "length"), ConfigError);
  CHECK_THROWS_AS(parse_quantity("bohr 3", "length"), ConfigError);
  CHECK_THROWS_AS(parse_quantity("1 bohr extra", "length"), ConfigError);
}

TEST_CASE("config parsing fills the documented fields", "[experiment]") {
  json doc = small_doc();
  doc["method"] = "harris-ate";
  doc["n_band"] = 1;
  doc["initial"] = {{"kind", "slater"}, {"q", "0.5 bohr^-1"}, {"center", "H"}};
  doc["schedule"] = {{"t_f", "0.5 fs"}, {"steps", 40}};
  doc["readout"] = {{"mode", "qpe"}, {"qpe_qubits", 8}, {"dt", "0.2 au"}};
  const ExperimentConfig c = parse_config(doc);
  CHECK(c.method == Method::kHarrisAte);
  CHECK(c.name == "h2-small");
  CHECK(c.cell.atoms.size() == 2);
  CHECK_THAT((c.cell.atoms[0].position - c.cell.atoms[1].position).norm(), WithinAbs(1.4, 1e-12));
  CHECK_THAT(c.cell.atoms[0].position.x(), WithinAbs(3.0, 1e-12));
  CHECK_THAT(c.schedule.t_f, WithinRel(0.5 / 0.024188843265857, 1e-12));
  CHECK(c.schedule.steps == 40);
  CHECK(c.readout.mode == ReadoutMode::kQpe);
  CHECK(c.readout.n_qpe == 256);
  CHECK_FALSE(c.cell.periodic);
}

TEST_CASE("config errors name the offending key", "[experiment]") {
  json doc = small_doc();
  doc["cell"]["lengths"] = "6 parsec";
  CHECK_THAT(config_error(doc), ContainsSubstring("cell.lengths"));

  doc = small_doc();
  doc["cell"]["qubits"] = {3, 3};
  CHECK_THAT(config_error(doc), ContainsSubstring("cell.qubits"));

  doc = small_doc();
  doc["method"] = "magic";
  CHECK_THAT(config_error(doc), ContainsSubstring("method"));

  doc = small_doc();
  doc["colour"] = "blue";
  CHECK_THAT(config_error(doc), ContainsSubstring("colour"));

  doc = small_doc();
  doc["method"] = "scf-copies-pite";
  doc["n_band"] = 2;
  CHECK_THAT(config_error(doc), ContainsSubstring("n_band"));

  doc = small_doc();
  doc["method"] = "kpoint-dos";
  CHECK_THAT(config_error(doc), ContainsSubstring("periodic"));

  doc = small_doc();
  doc["schedule"] = {{"steps", 0}};
  CHECK_FALSE(config_error(doc).empty());
}

TEST_CASE("config hash is stable and content-sensitive", "[experiment]") {
  const json a = small_doc();
  json b = json::parse(a.dump());
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  b["name"] = "other";
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("bond length replacement keeps the midpoint", "[experiment]") {
  const ExperimentConfig c = parse_config(small_doc());
  const Vec3 mid = 0.5 * (c.cell.atoms[0].position + c.cell.atoms[1].position);
  const Cell moved = with_bond_length(c.cell, 2.0);
  CHECK_THAT((moved.atoms[0].position - moved.atoms[1].position).norm(), WithinAbs(2.0, 1e-12));
  CHECK(((0.5 * (moved.atoms[0].position + moved.atoms[1].position)) - mid).norm() < 1e-12);
}

TEST_CASE("config files load with comments", "[experiment]") {
  const auto dir = scratch("load");
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "c.json");
    out << "// leading comment\n" << small_doc().dump(2) << "\n";
  }
  const ExperimentConfig c = load_config(dir / "c.json");
  CHECK(c.method == Method::kOracleOnly);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("small oracle run is reproducible", "[experiment]") {
  const ExperimentConfig c = parse_config(small_doc());
  RunOptions opt;
  opt.output = scratch("run-a");
  const json s1 = run_experiment(c, opt);
  const auto first = slurp(*opt.output / "summary.json");
  opt.output = scratch("run-b");
  const json s2 = run_experiment(c, opt);
  CHECK(first == slurp(*opt.output / "summary.json"));
  CHECK(std::filesystem::exists(*opt.output / "oracle_eigenvalues.csv"));
  CHECK(s1["method"] == "oracle-only");
  CHECK(s1["result"]["converged"].get<bool>());
  CHECK(s1["electrons"].get<double>() == 2.0);
  CHECK(s1["result"]["e_ks_total_ha"].get<double>() < 0.0);
  std::filesystem::remove_all(scratch("run-a"));
  std::filesystem::remove_all(scratch("run-b"));
}

TEST_CASE("scan records failed points and keeps going", "[experiment]") {
  json doc = small_doc();
  doc["scan"] = {{"parameter", "bond-length"}, {"values", {"1.4 bohr", "0 bohr"}}};
  const ExperimentConfig c = parse_config(doc);
  RunOptions opt;
  opt.output = scratch("scan");
  const json s = run_scan(c, opt);
  CHECK(std::filesystem::exists(*opt.output / "scan.csv"));
  CHECK(std::filesystem::exists(*opt.output / "point-000" / "summary.json"));
  CHECK(s["failed_points"].get<int>() == 1);
  std::filesystem::remove_all(*opt.output);
}
