// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#include "qedft/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "qedft/dft.hpp"
#include "qedft/error.hpp"
#include "qedft/nonlinear.hpp"
#include "qedft/oracle.hpp"
#include "qedft/readout.hpp"
#include "qedft/units.hpp"

namespace qedft {

using nlohmann::json;

const char* method_name(Method m) {
  switch (m) {
    case Method::kHarrisAte: return "harris-ate";
    case Method::kHarrisVariational: return "harris-variational";
    case Method::kKpointDos: return "kpoint-dos";
    case Method::kBandStructure: return "band-structure";
    case Method::kScfCopiesAte: return "scf-copies-ate";
    case Method::kScfCopiesPite: return "scf-copies-pite";
    case Method::kOracleOnly: return "oracle-only";
  }
  return "unknown";
}

namespace {

constexpr double kAuTimeInFs = 0.024188843265857;

Method parse_method(const std::string& s) {
  for (Method m : {Method::kHarrisAte, Method::kHarrisVariational, Method::kKpointDos,
                   Method::kBandStructure, Method::kScfCopiesAte, Method::kScfCopiesPite,
                   Method::kOracleOnly}) {
    if (s == method_name(m)) return m;
  }
  throw ConfigError("method: unknown value '" + s + "'");
}

// Unit name -> factor into internal units, per dimension.
const std::map<std::string, std::map<std::string, double>>& unit_table() {
  static const std::map<std::string, std::map<std::string, double>> t{
      {"length", {{"bohr", 1.0}, {"angstrom", 1.0 / units::kBohrInAngstrom},
                  {"A", 1.0 / units::kBohrInAngstrom}, {"nm", 10.0 / units::kBohrInAngstrom}}},
      {"inverse-length", {{"bohr^-1", 1.0}, {"1/bohr", 1.0},
                          {"angstrom^-1", units::kBohrInAngstrom}, {"A^-1", units::kBohrInAngstrom},
                          {"1/angstrom", units::kBohrInAngstrom}}},
      {"time", {{"au", 1.0}, {"fs", 1.0 / kAuTimeInFs}}},
      {"energy", {{"hartree", 1.0}, {"Ha", 1.0}, {"au", 1.0}, {"eV", 1.0 / units::kHartreeInEv},
                  {"Ry", 0.5}, {"meV", 1e-3 / units::kHartreeInEv}}},
      {"density", {{"bohr^-3", 1.0}, {"1/bohr^3", 1.0}}},
      {"angle", {{"rad", 1.0}, {"deg", units::kPi / 180.0}}},
  };
  return t;
}

// Context carried through the parser so errors name the key.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  bool has(const char* key) const { return j_.is_object() && j_.contains(key) && !j_.at(key).is_null(); }
  Reader sub(const char* key) const {
    if (!has(key)) fail(key, "missing");
    return Reader(j_.at(key), join(key));
  }
  const json& raw() const { return j_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(join(key) + ": " + what);
  }

  double quantity(const char* key, const char* dim) const {
    const json& v = at(key);
    if (!v.is_string()) fail(key, std::string("expected a string \"<value> <unit>\" (") + dim + ")");
    try {
      return parse_quantity(v.get<std::string>(), dim);
    } catch (const ConfigError& e) {
      fail(key, e.what());
    }
  }
  double quantity_or(const char* key, const char* dim, double fallback) const {
    return has(key) ? quantity(key, dim) : fallback;
  }
  std::optional<double> quantity_opt(const char* key, const char* dim) const {
    if (!has(key)) return std::nullopt;
    return quantity(key, dim);
  }
  double number(const char* key) const {
    const json& v = at(key);
    if (!v.is_number()) fail(key, "expected a number");
    return v.get<double>();
  }
  double number_or(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }
  int integer(const char* key) const {
    const json& v = at(key);
    if (!v.is_number_integer()) fail(key, "expected an integer");
    return v.get<int>();
  }
  int integer_or(const char* key, int fallback) const { return has(key) ? integer(key) : fallback; }
  std::string string(const char* key) const {
    const json& v = at(key);
    if (!v.is_string()) fail(key, "expected a string");
    return v.get<std::string>();
  }
  std::string string_or(const char* key, const std::string& fallback) const {
    return has(key) ? string(key) : fallback;
  }
  bool boolean_or(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_boolean()) fail(key, "expected true or false");
    return v.get<bool>();
  }
  template <std::size_t N>
  std::array<int, N> ints(const char* key) const {
    const json& v = at(key);
    if (!v.is_array() || v.size() != N) fail(key, "expected " + std::to_string(N) + " integers");
    std::array<int, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
      if (!v[i].is_number_integer()) fail(key, "expected integers");
      out[i] = v[i].get<int>();
    }
    return out;
  }
  Vec3 vec3_numbers(const char* key) const {
    const json& v = at(key);
    if (!v.is_array() || v.size() != 3) fail(key, "expected 3 numbers");
    Vec3 out;
    for (int i = 0; i < 3; ++i) {
      if (!v[static_cast<std::size_t>(i)].is_number()) fail(key, "expected numbers");
      out[i] = v[static_cast<std::size_t>(i)].get<double>();
    }
    return out;
  }
  // Either three quantities or one quantity applied to every axis.
  std::array<double, 3> lengths3(const char* key) const {
    const json& v = at(key);
    if (v.is_string()) {
      const double x = quantity(key, "length");
      return {x, x, x};
    }
    if (!v.is_array() || v.size() != 3) fail(key, "expected a length or 3 lengths");
    std::array<double, 3> out{};
    for (std::size_t i = 0; i < 3; ++i) {
      if (!v[i].is_string()) fail(key, "expected \"<value> <unit>\" strings");
      try {
        out[i] = parse_quantity(v[i].get<std::string>(), "length");
      } catch (const ConfigError& e) {
        fail(key, e.what());
      }
    }
    return out;
  }
  void only(std::initializer_list<const char*> keys) const {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (const char* k : keys) known = known || it.key() == k;
      if (!known) fail(it.key(), "unknown key");
    }
  }

 private:
  const json& at(const char* key) const {
    if (!has(key)) fail(key, "missing");
    return j_.at(key);
  }
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
};

Cell parse_cell(const Reader& r) {
  r.only({"lengths", "qubits", "periodic", "atoms", "lattice", "dimer"});
  Cell c;
  c.periodic = r.boolean_or("periodic", false);
  if (r.has("lattice")) {
    const Reader l = r.sub("lattice");
    l.only({"type", "a", "species"});
    const std::string type = l.string("type");
    const double a = l.quantity("a", "length");
    const std::string sp = l.string("species");
    c.lengths = {a, a, a};
    c.periodic = true;
    c.atoms.push_back({sp, Vec3::Zero(), 0.0});
    if (type == "bcc") c.atoms.push_back({sp, Vec3::Constant(0.5 * a), 0.0});
    else if (type != "sc") l.fail("type", "expected sc or bcc");
  } else {
    c.lengths = r.lengths3("lengths");
  }
  c.qubits = r.ints<3>("qubits");
  if (r.has("dimer")) {
    const Reader d = r.sub("dimer");
    d.only({"species", "bond"});
    const json& sp = d.raw().at("species");
    if (!sp.is_array() || sp.size() != 2 || !sp[0].is_string() || !sp[1].is_string()) {
      d.fail("species", "expected two species names");
    }
    const double bond = d.quantity("bond", "length");
    const Vec3 mid(0.5 * c.lengths[0], 0.5 * c.lengths[1], 0.5 * c.lengths[2]);
    c.atoms.push_back({sp[0].get<std::string>(), mid - Vec3(0, 0, 0.5 * bond), 0.0});
    c.atoms.push_back({sp[1].get<std::string>(), mid + Vec3(0, 0, 0.5 * bond), 0.0});
  }
  if (r.has("atoms")) {
    const json& atoms = r.raw().at("atoms");
    if (!atoms.is_array()) r.fail("atoms", "expected a list");
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      const Reader a(atoms[i], r.path() + ".atoms[" + std::to_string(i) + "]");
      a.only({"species", "position", "fractional"});
      Atom atom;
      atom.species = a.string("species");
      if (a.has("fractional")) {
        const Vec3 f = a.vec3_numbers("fractional");
        for (int k = 0; k < 3; ++k) atom.position[k] = f[k] * c.lengths[static_cast<std::size_t>(k)];
      } else {
        const auto p = a.lengths3("position");
        atom.position = Vec3(p[0], p[1], p[2]);
      }
      c.atoms.push_back(atom);
    }
  }
  if (c.atoms.empty()) r.fail("atoms", "no atoms given");
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(r.path() + ": " + e.what());
  }
  return c;
}

CenterRule parse_center_rule(const Reader& r, const char* key) {
  const std::string s = r.string(key);
  if (s == "atom") return CenterRule::kAtom;
  if (s == "shift") return CenterRule::kShiftPrinted;
  if (s == "shift-toward") return CenterRule::kShiftToward;
  r.fail(key, "expected atom, shift or shift-toward");
}

const char* center_rule_name(CenterRule c) {
  switch (c) {
    case CenterRule::kAtom: return "atom";
    case CenterRule::kShiftPrinted: return "shift";
    case CenterRule::kShiftToward: return "shift-toward";
  }
  return "atom";
}

}  // namespace

double parse_quantity(const std::string& text, const std::string& dimension) {
  const auto& table = unit_table();
  auto dim = table.find(dimension);
  if (dim == table.end()) throw ConfigError("unknown dimension " + dimension);
  std::istringstream in(text);
  double value = 0.0;
  std::string unit, extra;
  if (!(in >> value)) throw ConfigError("cannot read a number from '" + text + "'");
  if (!(in >> unit)) throw ConfigError("'" + text + "' has no unit (" + dimension + ")");
  if (in >> extra) throw ConfigError("trailing text in '" + text + "'");
  auto u = dim->second.find(unit);
  if (u == dim->second.end()) {
    std::string known;
    for (const auto& [name, f] : dim->second) known += (known.empty() ? "" : ", ") + name;
    throw ConfigError("unit '" + unit + "' is not a " + dimension + " unit (use " + known + ")");
  }
  return value * u->second;
}

std::string config_hash(const json& doc) {
  const std::string s = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentConfig parse_config(const json& doc) {
  const Reader r(doc, "");
  r.only({"schema", "name", "method", "cell", "n_band", "initial", "schedule", "readout", "lambda",
          "lambdas", "acceptor", "kpoints", "kpath", "copies", "shots", "seed", "oracle",
          "atom_cache", "output", "scan"});
  ExperimentConfig c;
  const int schema = r.integer_or("schema", kConfigSchema);
  if (schema != kConfigSchema) r.fail("schema", "unsupported version " + std::to_string(schema));
  c.name = r.string_or("name", c.name);
  c.method = parse_method(r.string("method"));
  c.cell = parse_cell(r.sub("cell"));
  c.n_band = r.integer_or("n_band", 1);
  if (c.n_band < 1) r.fail("n_band", "must be at least 1");

  if (r.has("initial")) {
    const Reader i = r.sub("initial");
    i.only({"kind", "q", "center", "center_rule", "k2_max"});
    c.initial.kind = i.string_or("kind", c.initial.kind);
    if (c.initial.kind != "slater" && c.initial.kind != "planewave" && c.initial.kind != "harris") {
      i.fail("kind", "expected slater, planewave or harris");
    }
    c.initial.q = i.quantity_or("q", "inverse-length", c.initial.q);
    c.initial.center_species = i.string_or("center", c.initial.center_species);
    if (i.has("center_rule")) c.initial.center_rule = parse_center_rule(i, "center_rule");
    else if (c.method == Method::kHarrisVariational) c.initial.center_rule = CenterRule::kShiftPrinted;
    c.initial.planewave_k2_max = i.integer_or("k2_max", c.initial.planewave_k2_max);
  } else if (c.method == Method::kHarrisVariational) {
    c.initial.center_rule = CenterRule::kShiftPrinted;
  }

  if (r.has("schedule")) {
    const Reader s = r.sub("schedule");
    s.only({"t_f", "steps", "dt", "e0", "splitting"});
    c.schedule.steps = s.integer_or("steps", c.schedule.steps);
    if (s.has("t_f") && s.has("dt")) s.fail("dt", "give t_f or dt, not both");
    if (s.has("dt")) c.schedule.t_f = s.quantity("dt", "time") * c.schedule.steps;
    else c.schedule.t_f = s.quantity_or("t_f", "time", c.schedule.t_f);
    c.schedule.e0 = s.quantity_or("e0", "energy", c.schedule.e0);
    const std::string sp = s.string_or("splitting", "general");
    if (sp == "general") c.schedule.splitting = Splitting::kGeneral;
    else if (sp == "kinetic-potential") c.schedule.splitting = Splitting::kKineticPotential;
    else s.fail("splitting", "expected general or kinetic-potential");
    try {
      c.schedule.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("schedule: ") + e.what());
    }
  }

  if (r.has("readout")) {
    const Reader o = r.sub("readout");
    o.only({"mode", "tau", "qpe_qubits", "dt", "sigma", "e_shift", "substeps"});
    const std::string mode = o.string_or("mode", "hadamard");
    if (mode == "none") c.readout.mode = ReadoutMode::kNone;
    else if (mode == "hadamard") c.readout.mode = ReadoutMode::kHadamard;
    else if (mode == "qpe") c.readout.mode = ReadoutMode::kQpe;
    else o.fail("mode", "expected none, hadamard or qpe");
    c.readout.tau = o.quantity_opt("tau", "time");
    if (c.readout.tau && !(*c.readout.tau > 0.0)) o.fail("tau", "must be positive");
    if (o.has("qpe_qubits")) {
      const int q = o.integer("qpe_qubits");
      if (q < 1 || q > 20) o.fail("qpe_qubits", "expected 1..20");
      c.readout.n_qpe = 1 << q;
    }
    c.readout.dt = o.quantity_or("dt", "time", c.readout.dt);
    c.readout.sigma = o.quantity_or("sigma", "energy", c.readout.sigma);
    c.readout.e_shift = o.quantity_opt("e_shift", "energy");
    c.readout.substeps = o.integer_or("substeps", 1);
    if (c.readout.substeps < 1) o.fail("substeps", "must be at least 1");
  }

  c.lambda = r.number_or("lambda", 0.0);
  if (r.has("lambdas")) {
    const json& l = doc.at("lambdas");
    if (!l.is_array() || l.empty()) r.fail("lambdas", "expected a non-empty list of numbers");
    for (const auto& v : l) {
      if (!v.is_number()) r.fail("lambdas", "expected numbers");
      c.lambdas.push_back(v.get<double>());
    }
  }
  c.acceptor = r.string_or("acceptor", c.acceptor);

  if (r.has("kpoints")) {
    const Reader k = r.sub("kpoints");
    k.only({"mesh", "reduce"});
    c.kmesh = k.ints<3>("mesh");
    c.kmesh_reduce = k.boolean_or("reduce", true);
  }
  if (r.has("kpath")) {
    const Reader k = r.sub("kpath");
    k.only({"waypoints", "points_per_segment"});
    c.kpath_points = k.integer_or("points_per_segment", c.kpath_points);
    if (k.has("waypoints")) {
      const json& w = k.raw().at("waypoints");
      if (!w.is_array()) k.fail("waypoints", "expected a list");
      for (std::size_t i = 0; i < w.size(); ++i) {
        const Reader p(w[i], k.path() + ".waypoints[" + std::to_string(i) + "]");
        p.only({"label", "frac"});
        c.kpath.push_back({p.string("label"), p.vec3_numbers("frac")});
      }
    }
  }

  if (r.has("copies")) {
    const Reader p = r.sub("copies");
    p.only({"r_c", "n_max", "xc_degree", "fit_range", "ramp", "exact_reference", "steps", "dt",
            "pite_dt", "pite_x0", "pite_e_high", "log_every", "density_every", "c2_scale"});
    auto& cp = c.copies;
    cp.r_c = p.quantity_or("r_c", "length", cp.r_c);
    cp.n_max = p.integer_or("n_max", cp.n_max);
    cp.xc_degree = p.integer_or("xc_degree", std::max(cp.n_max, 2));
    if (cp.n_max < 2) p.fail("n_max", "must be at least 2");
    if (cp.xc_degree < 2) p.fail("xc_degree", "must be at least 2");
    if (p.has("fit_range")) {
      const json& f = p.raw().at("fit_range");
      if (!f.is_array() || f.size() != 2 || !f[0].is_string() || !f[1].is_string()) {
        p.fail("fit_range", "expected two densities");
      }
      cp.fit_range = std::array<double, 2>{parse_quantity(f[0].get<std::string>(), "density"),
                                           parse_quantity(f[1].get<std::string>(), "density")};
    }
    const std::string ramp = p.string_or("ramp", "ramped");
    if (ramp != "ramped" && ramp != "full") p.fail("ramp", "expected ramped or full");
    cp.ramp = ramp == "ramped";
    cp.exact_reference = p.boolean_or("exact_reference", cp.exact_reference);
    cp.steps = p.integer_or("steps", cp.steps);
    cp.dt = p.quantity_or("dt", "time", cp.dt);
    cp.pite_dt = p.quantity_or("pite_dt", "time", cp.pite_dt);
    cp.pite_x0 = p.quantity_or("pite_x0", "angle", cp.pite_x0);
    cp.pite_e_high = p.quantity_opt("pite_e_high", "energy");
    cp.log_every = p.integer_or("log_every", cp.log_every);
    cp.density_every = p.integer_or("density_every", cp.density_every);
    cp.c2_scale = p.number_or("c2_scale", cp.c2_scale);
    if (cp.steps < 1) p.fail("steps", "must be positive");
    if (!(cp.dt > 0.0) || !(cp.pite_dt > 0.0)) p.fail("dt", "time steps must be positive");
  }

  if (r.has("shots")) {
    const json& s = doc.at("shots");
    if (!s.is_number_integer() || s.get<std::int64_t>() < 1) r.fail("shots", "expected a positive integer");
    c.shots = s.get<std::int64_t>();
  }
  if (r.has("seed")) {
    const json& s = doc.at("seed");
    if (!s.is_number_unsigned()) r.fail("seed", "expected a non-negative integer");
    c.seed = s.get<std::uint64_t>();
  }
  if (r.has("oracle")) {
    const Reader o = r.sub("oracle");
    o.only({"sigma", "bands", "density"});
    c.oracle_sigma = o.quantity_or("sigma", "energy", c.oracle_sigma);
    c.oracle_bands = o.integer_or("bands", 0);
    c.density = o.string_or("density", c.density);
    if (c.density != "superposition" && c.density != "scf") o.fail("density", "expected superposition or scf");
  }
  if (r.has("atom_cache")) c.atom_cache = std::filesystem::path(r.string("atom_cache"));
  c.output = r.string_or("output", c.output.string());

  if (r.has("scan")) {
    const Reader s = r.sub("scan");
    s.only({"parameter", "values"});
    ScanSpec scan;
    scan.parameter = s.string("parameter");
    const char* dim = nullptr;
    if (scan.parameter == "bond-length") dim = "length";
    else if (scan.parameter == "t_f") dim = "time";
    else if (scan.parameter != "lambda" && scan.parameter != "n_band") {
      s.fail("parameter", "expected bond-length, lambda, n_band or t_f");
    }
    const json& v = s.raw().at("values");
    if (!v.is_array() || v.empty()) s.fail("values", "expected a non-empty list");
    for (const auto& x : v) {
      if (dim) {
        if (!x.is_string()) s.fail("values", std::string("expected \"<value> <unit>\" (") + dim + ")");
        scan.values.push_back(parse_quantity(x.get<std::string>(), dim));
      } else {
        if (!x.is_number()) s.fail("values", "expected numbers");
        scan.values.push_back(x.get<double>());
      }
    }
    if (scan.parameter == "bond-length" && c.cell.atoms.size() != 2) {
      s.fail("parameter", "bond-length scans need exactly two atoms");
    }
    c.scan = scan;
  }

  // Combinations that cannot run.
  if (c.method == Method::kScfCopiesPite && c.n_band != 1) {
    throw ConfigError("n_band: scf-copies-pite supports a single band only");
  }
  if (c.method == Method::kScfCopiesAte) {
    double electrons = 0.0;
    const GthTable& table = default_gth_table();
    for (const auto& a : c.cell.atoms) {
      auto it = table.find(a.species);
      if (it == table.end()) throw ConfigError("cell.atoms: no pseudopotential for species " + a.species);
      electrons += it->second.z_ion;
    }
    if (2 * c.n_band != static_cast<int>(std::lround(electrons))) {
      throw ConfigError("n_band: scf-copies-ate needs n_band = N_elec / 2 (no unoccupied bands)");
    }
  }
  if (c.method == Method::kHarrisVariational && c.lambdas.empty()) {
    r.fail("lambdas", "harris-variational needs a lambda list");
  }
  if (c.initial.kind == "slater" && c.n_band != 1) {
    throw ConfigError("initial.kind: slater start supports n_band = 1; use planewave or harris");
  }
  if ((c.method == Method::kKpointDos || c.method == Method::kBandStructure) && !c.cell.periodic) {
    throw ConfigError("cell.periodic: k-point methods need a periodic cell");
  }
  c.source = doc;
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

Cell with_bond_length(const Cell& cell, double bond) {
  if (cell.atoms.size() != 2) throw InvalidArgument("with_bond_length needs exactly two atoms");
  if (!(bond > 0.0)) throw InvalidArgument("bond length must be positive");
  Cell out = cell;
  const Vec3 a = cell.atoms[0].position, b = cell.atoms[1].position;
  const Vec3 mid = 0.5 * (a + b);
  Vec3 u = b - a;
  if (u.norm() == 0.0) u = Vec3::UnitZ();
  u.normalize();
  out.atoms[0].position = mid - 0.5 * bond * u;
  out.atoms[1].position = mid + 0.5 * bond * u;
  return out;
}

// ---------------------------------------------------------------------------
// Runner

namespace {

// Runs body(i) for i in [0, n) on up to `workers` threads. Results are
// written by index so the output order never depends on scheduling.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body) {
  const auto w = static_cast<std::size_t>(std::clamp(workers, 1, 64));
  if (w == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first) first = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(w, n); ++t) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << std::setprecision(12);
  return out;
}

void write_json(const json& doc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

json conventions() {
  return {
      {"units", "hartree atomic units (bohr, hartree, au time); eV and angstrom in *_ev / *_angstrom keys"},
      {"codata", {{"bohr_angstrom", units::kBohrInAngstrom}, {"hartree_ev", units::kHartreeInEv}}},
      {"xc", kLdaName},
      {"pseudopotential", "GTH local part only"},
      {"grid_order", "flat index (i*Ny + j)*Nz + k, z fastest"},
      {"qe_amplitude", "sqrt(dV / N_band) psi_i(r)"},
      {"hartree_g0", "G = 0 component removed"},
      {"hadamard_band_energy", "2 sum eps = -(2 N_band / tau) arg <exp(-i tau H)>"},
      {"qpe_energy", "E_k = 2 pi k / (N_QPE dt) - E_shift"},
      {"smearing", "f(x) = erfc(x / sigma) / 2, two electrons per band"},
      {"ion_ion", "added to total energies of isolated cells in *_total keys"},
  };
}

json cell_json(const Cell& c) {
  json atoms = json::array();
  for (const auto& a : c.atoms) {
    atoms.push_back({{"species", a.species},
                     {"position_bohr", {a.position[0], a.position[1], a.position[2]}},
                     {"z_ion", a.z_ion}});
  }
  return {{"lengths_bohr", c.lengths}, {"qubits", c.qubits}, {"periodic", c.periodic}, {"atoms", atoms}};
}

struct System {
  KsModel model;
  std::vector<DensityField> atom_rho;
  double ion_ion = 0.0;
  double n_elec = 0.0;
};

System prepare(const Cell& cell, const ExperimentConfig& cfg) {
  System s;
  const GthTable& table = default_gth_table();
  s.model = KsModel(cell, table);
  s.n_elec = s.model.electron_count();
  s.ion_ion = ion_ion_energy(s.model.cell);
  AtomDensityOptions ao;
  ao.cache_dir = cfg.atom_cache;
  for (const auto& a : s.model.cell.atoms) s.atom_rho.push_back(isolated_atom_density(a, s.model.cell, table, ao));
  return s;
}

// rho_in(lambda) with the acceptor species against all other atoms.
DensityField input_rho(const System& sys, const std::string& acceptor, double lambda,
                       std::vector<std::string>* warnings) {
  DensityField acc = DensityField::zeros(sys.model.grid), don = DensityField::zeros(sys.model.grid);
  bool found = false;
  for (std::size_t i = 0; i < sys.atom_rho.size(); ++i) {
    if (sys.model.cell.atoms[i].species == acceptor) {
      acc.values += sys.atom_rho[i].values;
      found = true;
    } else {
      don.values += sys.atom_rho[i].values;
    }
  }
  if (lambda != 0.0 && !found) throw ConfigError("acceptor: species " + acceptor + " not in the cell");
  return input_density(lambda, acc, don, warnings);
}

const Atom& find_atom(const Cell& cell, const std::string& species) {
  for (const auto& a : cell.atoms) {
    if (a.species == species) return a;
  }
  throw ConfigError("initial.center: species " + species + " not in the cell");
}

Vec3 slater_center(const ExperimentConfig& cfg, const Cell& cell, double lambda) {
  if (cfg.initial.center_rule == CenterRule::kAtom) return find_atom(cell, cfg.initial.center_species).position;
  if (cell.atoms.size() != 2) throw ConfigError("initial.center_rule: shifted centres need two atoms");
  const Atom& acc = find_atom(cell, cfg.acceptor);
  const Atom& don = &acc == &cell.atoms[0] ? cell.atoms[1] : cell.atoms[0];
  const double a = cfg.initial.center_rule == CenterRule::kShiftPrinted ? 0.5 * lambda : 1.0 - 0.5 * lambda;
  return a * acc.position + (1.0 - a) * don.position;
}

OrbitalSet initial_orbitals(const ExperimentConfig& cfg, const System& sys, double lambda,
                            const OracleResult* harris) {
  const Grid& grid = sys.model.grid;
  OrbitalSet o;
  o.grid = grid;
  if (cfg.initial.kind == "slater") {
    o.psi = slater_orbital(slater_center(cfg, sys.model.cell, lambda), cfg.initial.q, grid);
  } else if (cfg.initial.kind == "planewave") {
    auto ks = integer_vectors_within(cfg.initial.planewave_k2_max);
    if (static_cast<int>(ks.size()) < cfg.n_band) {
      throw ConfigError("initial.k2_max: only " + std::to_string(ks.size()) + " plane waves for " +
                        std::to_string(cfg.n_band) + " bands");
    }
    ks.resize(static_cast<std::size_t>(cfg.n_band));
    o = planewave_orbitals(ks, grid);
  } else {
    if (!harris) throw ConfigError("initial.kind: harris start needs the fixed-potential oracle");
    o.psi = harris->orbitals.front().psi.leftCols(cfg.n_band);
  }
  return o;
}

// Default tau keeps tau |eps| well below pi for any level under the
// potential maximum plus the first few kinetic shells.
double auto_tau(const PotentialField& v) {
  const double scale = std::max({1.0, std::abs(v.values.minCoeff()), std::abs(v.values.maxCoeff())});
  return std::min(0.1, 0.5 / scale);
}

double auto_shift(const PotentialField& v) { return -v.values.minCoeff() + 0.25; }

struct BandReadout {
  double band_energy = 0.0;
  json info;
};

BandReadout read_band_energy(const ExperimentConfig& cfg, const QeState& state, const PotentialField& v,
                             double n_elec, std::uint64_t seed) {
  BandReadout out;
  if (cfg.readout.mode == ReadoutMode::kHadamard) {
    const double tau = cfg.readout.tau.value_or(auto_tau(v));
    const HadamardResult h = hadamard_test(state, v, tau, cfg.readout.substeps, cfg.shots, seed);
    out.band_energy = band_energy_from_phase(h.z, tau, state.n_band());
    out.info = {{"mode", "hadamard"},  {"tau_au", tau},          {"z_re", h.z.real()},
                {"z_im", h.z.imag()},  {"p0_real", h.p0_real},   {"p0_imag", h.p0_imag},
                {"substeps", cfg.readout.substeps}};
    if (h.shots) out.info["shots"] = *h.shots;
  } else if (cfg.readout.mode == ReadoutMode::kQpe) {
    const double shift = cfg.readout.e_shift.value_or(auto_shift(v));
    const SpectralHistogram hist =
        qpe_distribution(state, v, cfg.readout.dt, cfg.readout.n_qpe, shift, cfg.readout.substeps);
    const FermiSolution f = fermi_level({hist}, n_elec, cfg.readout.sigma);
    out.band_energy = band_energy_from_dos({hist}, f);
    out.info = {{"mode", "qpe"},          {"n_qpe", cfg.readout.n_qpe},
                {"dt_au", cfg.readout.dt}, {"e_shift_ha", shift},
                {"sigma_ha", cfg.readout.sigma}, {"bin_width_ha", hist.bin_width()},
                {"e_fermi_ha", f.e_fermi}};
  } else {
    throw ConfigError("readout.mode: this method needs a band-energy readout");
  }
  return out;
}

OracleResult fixed_potential_oracle(const System& sys, const DensityField& rho, int n_bands) {
  OracleOptions o;
  o.non_self_consistent = true;
  o.n_bands = n_bands;
  return scf_loop(sys.model, rho, o);
}

OracleResult scf_oracle(const System& sys, const DensityField& rho0) {
  OracleOptions o;
  return scf_loop(sys.model, rho0, o);
}

// One Harris evaluation through ATE and readout at a given lambda.
struct HarrisPoint {
  double lambda = 0.0;
  HarrisResult harris;
  HarrisResult harris_exact;  // with the oracle's band energy at rho_in
  double fidelity_initial = 0.0;
  double fidelity = 0.0;
  std::vector<AteLogRow> log;
  json readout;
  std::vector<std::string> warnings;
};

HarrisPoint harris_point(const ExperimentConfig& cfg, const System& sys, double lambda, std::uint64_t seed) {
  HarrisPoint p;
  p.lambda = lambda;
  const DensityField rho = input_rho(sys, cfg.acceptor, lambda, &p.warnings);
  const OracleResult fixed = fixed_potential_oracle(sys, rho, cfg.n_band);
  const PotentialField& v = fixed.potential;
  const OrbitalSet init = initial_orbitals(cfg, sys, lambda, &fixed);
  QeState state = encode(init);
  OrbitalSet ref;
  ref.grid = sys.model.grid;
  ref.psi = fixed.orbitals.front().psi.leftCols(cfg.n_band);
  H0Spec h0;
  h0.prep = init;
  h0.e0 = cfg.schedule.e0;
  h0.v0 = PotentialField::zeros(sys.model.grid);
  AteOptions ao;
  ao.reference = &ref;
  ao.log_every = std::max(1, cfg.schedule.steps / 100);
  AteRun run = run_ate(std::move(state), cfg.schedule, v, h0, ao);
  p.fidelity_initial = run.log.front().fidelity;
  p.fidelity = run.log.back().fidelity;
  p.log = std::move(run.log);
  const BandReadout b = read_band_energy(cfg, run.state, v, 2.0 * cfg.n_band, seed);
  p.readout = b.info;
  p.harris = harris_energy(b.band_energy, rho, sys.model.grid, lambda);
  double exact_band = 0.0;
  for (int i = 0; i < cfg.n_band; ++i) exact_band += 2.0 * fixed.eigenvalues.front()[i];
  p.harris_exact = harris_energy(exact_band, rho, sys.model.grid, lambda);
  return p;
}

json harris_json(const HarrisResult& h, double ion_ion) {
  return {{"band_energy_ha", h.band_energy},
          {"hartree_ha", h.hartree},
          {"vxc_rho_ha", h.vxc_rho},
          {"xc_ha", h.xc},
          {"electronic_ha", h.total},
          {"total_ha", h.total + ion_ion},
          {"total_ev", units::hartree_to_ev(h.total + ion_ion)},
          {"lambda", h.lambda}};
}

json run_harris_ate(const ExperimentConfig& cfg, const RunOptions& opt, const std::filesystem::path& out) {
  const System sys = prepare(cfg.cell, cfg);
  const std::uint64_t seed = opt.seed.value_or(cfg.seed);
  HarrisPoint p = harris_point(cfg, sys, cfg.lambda, seed);
  const OracleResult scf = scf_oracle(sys, input_rho(sys, cfg.acceptor, 0.0, nullptr));
  write_trajectory_csv(p.log, out / "trajectory.csv");
  const double eks = scf.total_energy + sys.ion_ion;
  return {{"harris", harris_json(p.harris, sys.ion_ion)},
          {"harris_exact_band", harris_json(p.harris_exact, sys.ion_ion)},
          {"readout", p.readout},
          {"fidelity_initial", p.fidelity_initial},
          {"fidelity_final", p.fidelity},
          {"oracle", {{"e_ks_total_ha", eks}, {"e_ks_total_ev", units::hartree_to_ev(eks)},
                      {"ion_ion_ha", sys.ion_ion}, {"iterations", scf.iterations},
                      {"eigenvalues_ha", std::vector<double>(scf.eigenvalues.front().data(),
                                                              scf.eigenvalues.front().data() + scf.eigenvalues.front().size())}}},
          {"harris_minus_ks_ev", units::hartree_to_ev(p.harris.total - scf.total_energy)},
          {"warnings", p.warnings}};
}

json run_variational(const ExperimentConfig& cfg, const RunOptions& opt, const std::filesystem::path& out) {
  const System sys = prepare(cfg.cell, cfg);
  const std::uint64_t seed = opt.seed.value_or(cfg.seed);
  std::vector<HarrisPoint> points(cfg.lambdas.size());
  parallel_for(points.size(), opt.workers,
               [&](std::size_t i) { points[i] = harris_point(cfg, sys, cfg.lambdas[i], seed + i); });
  std::size_t k = 0;
  const HarrisScan scan = variational_harris_scan(cfg.lambdas, [&](double) { return points[k++].harris; });
  const OracleResult scf = scf_oracle(sys, input_rho(sys, cfg.acceptor, 0.0, nullptr));
  auto csv = open_csv(out / "variational.csv");
  csv << "lambda,e_harris_ha,e_harris_exact_band_ha,fidelity_initial,fidelity_final\n";
  json rows = json::array(), warnings = json::array();
  for (const auto& p : points) {
    csv << p.lambda << ',' << p.harris.total + sys.ion_ion << ',' << p.harris_exact.total + sys.ion_ion << ','
        << p.fidelity_initial << ',' << p.fidelity << '\n';
    rows.push_back({{"lambda", p.lambda}, {"e_harris_total_ha", p.harris.total + sys.ion_ion},
                    {"fidelity_final", p.fidelity}});
    for (const auto& w : p.warnings) warnings.push_back(w);
  }
  const double eks = scf.total_energy + sys.ion_ion;
  const double e_star = scan.points[scan.best_index].total + sys.ion_ion;
  double e_zero = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].lambda == 0.0) e_zero = points[i].harris.total + sys.ion_ion;
  }
  return {{"lambda_star", scan.lambda_star},
          {"boundary_maximum", scan.boundary},
          {"e_harris_star_total_ha", e_star},
          {"e_harris_lambda0_total_ha", e_zero},
          {"center_rule", center_rule_name(cfg.initial.center_rule)},
          {"points", rows},
          {"oracle", {{"e_ks_total_ha", eks}, {"ion_ion_ha", sys.ion_ion}}},
          {"warnings", warnings}};
}

json run_kpoints(const ExperimentConfig& cfg, const RunOptions& opt, const std::filesystem::path& out,
                 bool path_mode) {
  const System sys = prepare(cfg.cell, cfg);
  const Grid& grid = sys.model.grid;
  std::vector<KPoint> kpts;
  if (path_mode) {
    kpts = kpath(sys.model.cell, cfg.kpath.empty() ? cubic_path() : cfg.kpath, cfg.kpath_points);
  } else {
    kpts = kpoint_mesh(sys.model.cell, cfg.kmesh[0], cfg.kmesh[1], cfg.kmesh[2], cfg.kmesh_reduce);
  }

  DensityField rho = input_rho(sys, cfg.acceptor, 0.0, nullptr);
  int scf_iterations = 0;
  if (cfg.density == "scf") {
    OracleOptions o;
    o.occupation = cfg.oracle_sigma > 0.0 ? Occupation::kSmeared : Occupation::kAufbau;
    o.sigma = cfg.oracle_sigma;
    o.kpoints = kpoint_mesh(sys.model.cell, cfg.kmesh[0], cfg.kmesh[1], cfg.kmesh[2], cfg.kmesh_reduce);
    const OracleResult r = scf_loop(sys.model, rho, o);
    rho = r.density;
    scf_iterations = r.iterations;
  }
  const PotentialField v = ks_potential(rho, sys.model);
  const double shift = cfg.readout.e_shift.value_or(auto_shift(v));

  // Oracle on the same potential and k set.
  OracleOptions oo;
  oo.non_self_consistent = true;
  oo.kpoints = kpts;
  oo.n_bands = cfg.oracle_bands > 0 ? cfg.oracle_bands : cfg.n_band;
  oo.occupation = Occupation::kSmeared;
  oo.sigma = cfg.readout.sigma;
  const OracleResult oracle = scf_loop(sys.model, rho, oo);

  std::vector<SpectralHistogram> hists(kpts.size());
  std::vector<double> fidelity(kpts.size());
  parallel_for(kpts.size(), opt.workers, [&](std::size_t i) {
    OrbitalSet init = initial_orbitals(cfg, sys, 0.0, nullptr);
    QeState state = encode(init, kpts[i]);
    H0Spec h0;
    h0.prep = init;
    h0.e0 = cfg.schedule.e0;
    h0.v0 = PotentialField::zeros(grid);
    OrbitalSet ref;
    ref.grid = grid;
    ref.psi = oracle.orbitals[i].psi.leftCols(std::min<Eigen::Index>(cfg.n_band, oracle.orbitals[i].psi.cols()));
    AteOptions ao;
    ao.reference = &ref;
    ao.log_overlap = false;
    ao.log_every = cfg.schedule.steps;
    AteRun run = run_ate(std::move(state), cfg.schedule, v, h0, ao);
    fidelity[i] = run.log.back().fidelity;
    hists[i] = qpe_distribution(run.state, v, cfg.readout.dt, cfg.readout.n_qpe, shift, cfg.readout.substeps);
    hists[i].weight = kpts[i].weight;
  });

  json k_rows = json::array();
  {
    auto csv = open_csv(out / "kpoints.csv");
    csv << "index,kx_frac,ky_frac,kz_frac,weight,path_coord_bohr^-1,label,fidelity\n";
    for (std::size_t i = 0; i < kpts.size(); ++i) {
      csv << i << ',' << kpts[i].frac[0] << ',' << kpts[i].frac[1] << ',' << kpts[i].frac[2] << ','
          << kpts[i].weight << ',' << kpts[i].path_coord << ',' << kpts[i].label << ',' << fidelity[i] << '\n';
    }
    auto eig = open_csv(out / "oracle_eigenvalues.csv");
    eig << "k_index,band,energy_ha,energy_ev,occupation\n";
    for (std::size_t i = 0; i < kpts.size(); ++i) {
      for (Eigen::Index b = 0; b < oracle.eigenvalues[i].size(); ++b) {
        eig << i << ',' << b << ',' << oracle.eigenvalues[i][b] << ','
            << units::hartree_to_ev(oracle.eigenvalues[i][b]) << ',' << oracle.occupations[i][b] << '\n';
      }
    }
  }
  double min_fid = 1.0;
  for (double f : fidelity) min_fid = std::min(min_fid, f);

  json result{{"n_kpoints", kpts.size()},
              {"n_band", cfg.n_band},
              {"e_shift_ha", shift},
              {"bin_width_ha", hists.empty() ? 0.0 : hists.front().bin_width()},
              {"density", cfg.density},
              {"scf_iterations", scf_iterations},
              {"min_fidelity", min_fid},
              {"oracle", {{"band_energy_ha", oracle.band_energy}, {"fermi_level_ha", oracle.fermi_level},
                          {"sigma_ha", oo.sigma}}}};

  if (path_mode) {
    auto csv = open_csv(out / "bands.csv");
    csv << "path_coord_bohr^-1,energy_ha,energy_ev,probability\n";
    for (const auto& r : band_structure(kpts, hists)) {
      csv << r.path_coord << ',' << r.energy << ',' << units::hartree_to_ev(r.energy) << ',' << r.probability
          << '\n';
    }
    return result;
  }

  const FermiSolution f = fermi_level(hists, sys.n_elec, cfg.readout.sigma);
  const double band = band_energy_from_dos(hists, f);
  auto csv = open_csv(out / "dos.csv");
  csv << "energy_ev,probability,occupation\n";
  // One row per energy bin, summed over k with the k weights.
  std::map<double, std::pair<double, double>> merged;
  for (const auto& r : dos_rows(hists, f)) {
    auto& m = merged[r.energy];
    m.first += r.probability;
    m.second = r.occupation;
  }
  for (const auto& [e, po] : merged) {
    csv << units::hartree_to_ev(e) << ',' << po.first << ',' << po.second << '\n';
  }
  const double atoms = static_cast<double>(sys.model.cell.atoms.size());
  result["fermi_level_ha"] = f.e_fermi;
  result["fermi_level_ev"] = units::hartree_to_ev(f.e_fermi);
  result["band_energy_ha"] = band;
  result["band_energy_per_atom_ev"] = units::hartree_to_ev(band / atoms);
  result["band_energy_error_per_atom_ev"] = units::hartree_to_ev((band - oracle.band_energy) / atoms);
  result["electrons"] = f.electrons;
  return result;
}

struct CopiesSetup {
  System sys;
  DensityField rho_in;
  OracleResult harris;
  OracleResult scf;
  XcFit fit;
  InteractionKernel kernel;
  OrbitalSet ref;
};

CopiesSetup copies_setup(const ExperimentConfig& cfg) {
  CopiesSetup s{prepare(cfg.cell, cfg), {}, {}, {}, {}, {}, {}};
  if (2 * cfg.n_band != static_cast<int>(std::lround(s.sys.n_elec))) {
    throw Unsupported("copies methods need n_band = N_elec / 2");
  }
  s.rho_in = input_rho(s.sys, cfg.acceptor, cfg.lambda, nullptr);
  s.harris = fixed_potential_oracle(s.sys, s.rho_in, cfg.n_band);
  s.scf = scf_oracle(s.sys, s.rho_in);
  double lo = std::max(1e-6, s.rho_in.values.minCoeff()), hi = s.rho_in.values.maxCoeff();
  if (cfg.copies.fit_range) {
    lo = (*cfg.copies.fit_range)[0];
    hi = (*cfg.copies.fit_range)[1];
  }
  s.fit = xc_poly_fit(lo, hi, cfg.copies.xc_degree, 1.0);
  s.fit.coeffs[2] *= cfg.copies.c2_scale;
  s.kernel = build_kernel(s.sys.model, s.rho_in, cfg.copies.r_c, s.fit, cfg.copies.n_max);
  s.ref.grid = s.sys.model.grid;
  s.ref.psi = s.scf.orbitals.front().psi.leftCols(cfg.n_band);
  return s;
}

QeState copies_initial(const ExperimentConfig& cfg, const CopiesSetup& s) {
  return encode(initial_orbitals(cfg, s.sys, cfg.lambda, &s.harris));
}

json copies_common(const CopiesSetup& s, const QeState& init) {
  const double dv = s.sys.model.grid.dv();
  std::map<std::string, double> coeffs;
  for (const auto& [a, c] : s.fit.coeffs) coeffs[std::to_string(a)] = c;
  return {{"initial_fidelity", subspace_fidelity(init, s.ref)},
          {"input_density_error", (s.rho_in.values - s.scf.density.values).cwiseAbs().sum() * dv},
          {"harris_output_density_error", (s.harris.density.values - s.scf.density.values).cwiseAbs().sum() * dv},
          {"xc_fit", {{"coeffs", coeffs}, {"residual", s.fit.residual},
                      {"rho_min_bohr^-3", s.fit.rho_min}, {"rho_max_bohr^-3", s.fit.rho_max}}},
          {"contact_term_ha", 2.0 * s.kernel.c2 / dv},
          {"oracle", {{"e_ks_total_ha", s.scf.total_energy + s.sys.ion_ion}, {"iterations", s.scf.iterations}}}};
}

double final_metric(const std::vector<AteLogRow>& log, double AteLogRow::*field) {
  for (auto it = log.rbegin(); it != log.rend(); ++it) {
    if (!std::isnan((*it).*field)) return (*it).*field;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

json run_copies_ate(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  const CopiesSetup s = copies_setup(cfg);
  const QeState init = copies_initial(cfg, s);
  AteSchedule sched;
  sched.steps = cfg.copies.steps;
  sched.t_f = cfg.copies.steps * cfg.copies.dt;
  ScfAteOptions o;
  o.ramp = cfg.copies.ramp ? RampMode::kRamped : RampMode::kFullStrength;
  o.reference = &s.ref;
  o.reference_density = &s.scf.density;
  o.log_every = cfg.copies.log_every;
  o.density_every = cfg.copies.density_every;
  const ScfRun run = run_scf_ate(init, sched, s.kernel, s.harris.potential, s.sys.n_elec, o);
  write_trajectory_csv(run.log, out / "trajectory.csv");
  json r = copies_common(s, init);
  r["ramp"] = cfg.copies.ramp ? "ramped" : "full";
  r["steps"] = sched.steps;
  r["dt_au"] = cfg.copies.dt;
  r["final_fidelity"] = final_metric(run.log, &AteLogRow::fidelity);
  r["final_purity"] = final_metric(run.log, &AteLogRow::purity);
  r["final_density_error"] = final_metric(run.log, &AteLogRow::density_error);
  bool bounded = true;
  for (const auto& row : run.log) {
    if (!std::isnan(row.purity) && !std::isnan(row.fidelity)) bounded = bounded && row.fidelity <= row.purity + 1e-10;
  }
  r["fidelity_le_purity"] = bounded;

  if (cfg.copies.exact_reference) {
    ExactNonlinearOptions eo;
    eo.reference = &s.ref;
    eo.model = &s.sys.model;
    eo.reference_density = &s.scf.density;
    eo.log_every = cfg.copies.log_every;
    const ExactNonlinearRun ex =
        run_exact_nonlinear_rte(init, sched, s.harris.potential, NonlinearFlavor::kAte, eo);
    write_trajectory_csv(ex.log, out / "trajectory_exact.csv");
    r["exact_reference"] = {{"final_fidelity", final_metric(ex.log, &AteLogRow::fidelity)},
                            {"final_density_error", final_metric(ex.log, &AteLogRow::density_error)}};
  }
  return r;
}

json run_copies_pite(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  const CopiesSetup s = copies_setup(cfg);
  const QeState init = copies_initial(cfg, s);
  // Spectrum bounds from the potential extremes and the kinetic cutoff.
  const KineticPropagator kin(s.sys.model.grid, Vec3::Zero());
  const PotentialField v0 = vks_expansion(s.rho_in, s.kernel);
  const double e_low = s.harris.eigenvalues.front()[0];
  const double e_high = cfg.copies.pite_e_high.value_or(kin.half_g2().maxCoeff() + v0.values.maxCoeff() + 1.0);
  const PiteConfig pc = pite_config_for(cfg.copies.pite_dt, cfg.copies.steps, e_low, e_high, cfg.copies.pite_x0);
  ScfPiteOptions o;
  o.reference = &s.ref;
  o.reference_density = &s.scf.density;
  o.log_every = cfg.copies.log_every;
  const ScfRun run = run_scf_pite(init, s.kernel, s.sys.n_elec, pc, o);
  write_trajectory_csv(run.log, out / "trajectory.csv");
  json r = copies_common(s, init);
  r["steps"] = pc.steps;
  r["dt_au"] = pc.dt;
  r["theta_rad"] = pc.theta;
  r["e_shift_ha"] = pc.e_shift;
  r["imaginary_step_au"] = pc.imaginary_step();
  r["final_fidelity"] = final_metric(run.log, &AteLogRow::fidelity);
  r["final_purity"] = final_metric(run.log, &AteLogRow::purity);
  r["final_density_error"] = final_metric(run.log, &AteLogRow::density_error);
  return r;
}

json run_oracle_only(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  const System sys = prepare(cfg.cell, cfg);
  OracleOptions o;
  o.n_bands = cfg.oracle_bands;
  if (cfg.oracle_sigma > 0.0) {
    o.occupation = Occupation::kSmeared;
    o.sigma = cfg.oracle_sigma;
  }
  if (sys.model.cell.periodic) {
    o.kpoints = kpoint_mesh(sys.model.cell, cfg.kmesh[0], cfg.kmesh[1], cfg.kmesh[2], cfg.kmesh_reduce);
  }
  const OracleResult r = scf_loop(sys.model, input_rho(sys, cfg.acceptor, cfg.lambda, nullptr), o);
  auto csv = open_csv(out / "oracle_eigenvalues.csv");
  csv << "k_index,weight,band,energy_ha,energy_ev,occupation\n";
  for (std::size_t k = 0; k < r.kpoints.size(); ++k) {
    for (Eigen::Index b = 0; b < r.eigenvalues[k].size(); ++b) {
      csv << k << ',' << r.kpoints[k].weight << ',' << b << ',' << r.eigenvalues[k][b] << ','
          << units::hartree_to_ev(r.eigenvalues[k][b]) << ',' << r.occupations[k][b] << '\n';
    }
  }
  {
    std::ofstream bin(out / "density.bin", std::ios::binary);
    bin.write(reinterpret_cast<const char*>(r.density.values.data()),
              static_cast<std::streamsize>(r.density.values.size() * sizeof(double)));
  }
  return {{"e_ks_total_ha", r.total_energy + sys.ion_ion},
          {"e_ks_electronic_ha", r.total_energy},
          {"ion_ion_ha", sys.ion_ion},
          {"band_energy_ha", r.band_energy},
          {"fermi_level_ha", r.fermi_level},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"n_kpoints", r.kpoints.size()}};
}

std::filesystem::path output_dir(const ExperimentConfig& cfg, const RunOptions& opt) {
  return opt.output.value_or(cfg.output);
}

}  // namespace

json run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  const std::filesystem::path out = output_dir(config, options);
  std::filesystem::create_directories(out);
  json summary{{"software", {{"name", "qedft"}, {"version", kVersion}}},
               {"config_hash", config_hash(config.source)},
               {"config_schema", kConfigSchema},
               {"name", config.name},
               {"method", method_name(config.method)},
               {"seed", options.seed.value_or(config.seed)},
               {"conventions", conventions()},
               {"n_band", config.n_band}};
  Cell cell = config.cell;
  {
    KsModel probe(cell, default_gth_table());
    summary["cell"] = cell_json(probe.cell);
    summary["electrons"] = probe.electron_count();
  }
  summary["schedule"] = {{"t_f_au", config.schedule.t_f}, {"steps", config.schedule.steps},
                         {"dt_au", config.schedule.dt()}, {"e0_ha", config.schedule.e0},
                         {"splitting", config.schedule.splitting == Splitting::kGeneral ? "general"
                                                                                       : "kinetic-potential"}};
  json result;
  switch (config.method) {
    case Method::kHarrisAte: result = run_harris_ate(config, options, out); break;
    case Method::kHarrisVariational: result = run_variational(config, options, out); break;
    case Method::kKpointDos: result = run_kpoints(config, options, out, false); break;
    case Method::kBandStructure: result = run_kpoints(config, options, out, true); break;
    case Method::kScfCopiesAte: result = run_copies_ate(config, out); break;
    case Method::kScfCopiesPite: result = run_copies_pite(config, out); break;
    case Method::kOracleOnly: result = run_oracle_only(config, out); break;
  }
  summary["result"] = std::move(result);
  write_json(summary, out / "summary.json");
  return summary;
}

json run_scan(const ExperimentConfig& config, const RunOptions& options) {
  if (!config.scan) throw ConfigError("scan: no scan section in the config");
  const ScanSpec& scan = *config.scan;
  const std::filesystem::path out = output_dir(config, options);
  std::filesystem::create_directories(out);

  std::vector<json> results(scan.values.size());
  std::vector<std::string> errors(scan.values.size());
  // Points run one after another; each point may use the worker pool itself.
  for (std::size_t i = 0; i < scan.values.size(); ++i) {
    ExperimentConfig c = config;
    c.scan.reset();
    const double v = scan.values[i];
    c.source["scan_point"] = {{"parameter", scan.parameter}, {"value", v}};
    RunOptions o = options;
    std::ostringstream dir;
    dir << "point-" << std::setw(3) << std::setfill('0') << i;
    o.output = out / dir.str();
    try {
      if (scan.parameter == "bond-length") c.cell = with_bond_length(config.cell, v);
      else if (scan.parameter == "lambda") c.lambda = v;
      else if (scan.parameter == "n_band") c.n_band = static_cast<int>(std::lround(v));
      else if (scan.parameter == "t_f") c.schedule.t_f = v;
      results[i] = run_experiment(c, o);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }

  const char* unit = scan.parameter == "bond-length" ? "_angstrom" : scan.parameter == "t_f" ? "_au" : "";
  auto csv = open_csv(out / "scan.csv");
  csv << scan.parameter << unit << ",e_harris_ha,e_ks_oracle_ha,fidelity,lambda_star,status\n";
  json points = json::array();
  int failed = 0;
  for (std::size_t i = 0; i < scan.values.size(); ++i) {
    const double shown = scan.parameter == "bond-length" ? units::bohr_to_angstrom(scan.values[i]) : scan.values[i];
    double eh = std::numeric_limits<double>::quiet_NaN(), eks = eh, fid = eh, ls = eh;
    if (errors[i].empty()) {
      const json& r = results[i]["result"];
      if (r.contains("harris")) eh = r["harris"]["total_ha"].get<double>();
      if (r.contains("e_harris_star_total_ha")) eh = r["e_harris_star_total_ha"].get<double>();
      if (r.contains("oracle") && r["oracle"].contains("e_ks_total_ha")) eks = r["oracle"]["e_ks_total_ha"].get<double>();
      if (r.contains("e_ks_total_ha")) eks = r["e_ks_total_ha"].get<double>();
      if (r.contains("fidelity_final")) fid = r["fidelity_final"].get<double>();
      if (r.contains("final_fidelity")) fid = r["final_fidelity"].get<double>();
      if (r.contains("lambda_star")) ls = r["lambda_star"].get<double>();
    } else {
      ++failed;
    }
    csv << shown << ',' << eh << ',' << eks << ',' << fid << ',' << ls << ','
        << (errors[i].empty() ? "ok" : "failed") << '\n';
    json p{{"value", shown}, {"status", errors[i].empty() ? "ok" : "failed"}};
    if (!errors[i].empty()) p["error"] = errors[i];
    else p["summary"] = results[i]["result"];
    points.push_back(p);
  }
  json summary{{"software", {{"name", "qedft"}, {"version", kVersion}}},
               {"config_hash", config_hash(config.source)},
               {"config_schema", kConfigSchema},
               {"name", config.name},
               {"method", method_name(config.method)},
               {"scan_parameter", scan.parameter},
               {"conventions", conventions()},
               {"failed_points", failed},
               {"points", points}};
  write_json(summary, out / "summary.json");
  return summary;
}

}  // namespace qedft
