// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "qedft/evolution.hpp"
#include "qedft/lattice.hpp"

namespace qedft {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kConfigSchema = 1;

enum class Method {
  kHarrisAte,
  kHarrisVariational,
  kKpointDos,
  kBandStructure,
  kScfCopiesAte,
  kScfCopiesPite,
  kOracleOnly,
};

const char* method_name(Method m);

enum class ReadoutMode { kNone, kHadamard, kQpe };

/// Slater centre of variational runs. kShiftPrinted puts it at
/// (lambda/2) R_acceptor + (1 - lambda/2) R_donor; kShiftToward mirrors it,
/// (1 - lambda/2) R_acceptor + (lambda/2) R_donor.
enum class CenterRule { kAtom, kShiftPrinted, kShiftToward };

struct InitialSpec {
  std::string kind = "slater";  // slater | planewave | harris
  double q = 0.5;               // bohr^-1
  std::string center_species = "H";
  CenterRule center_rule = CenterRule::kAtom;
  int planewave_k2_max = 2;
};

struct ReadoutSpec {
  ReadoutMode mode = ReadoutMode::kHadamard;
  std::optional<double> tau;       // au; auto when absent
  int n_qpe = 2048;
  double dt = 0.15;                // au, QPE step
  double sigma = 0.05 / 27.211386245988;  // hartree
  std::optional<double> e_shift;   // hartree; auto when absent
  int substeps = 1;
};

struct CopiesSpec {
  double r_c = 0.3;  // bohr
  int n_max = 2;
  int xc_degree = 2;
  std::optional<std::array<double, 2>> fit_range;  // bohr^-3; rho_in range when absent
  bool ramp = true;
  bool exact_reference = true;
  int steps = 200;
  double dt = 0.1;      // au (ATE)
  double pite_dt = 0.025;
  double pite_x0 = 0.3;  // radians, phase of the lowest level
  std::optional<double> pite_e_high;  // hartree
  int log_every = 1;
  int density_every = 0;
  double c2_scale = 1.0;  // sensitivity knob on the contact term
};

struct ScanSpec {
  std::string parameter;  // bond-length | lambda | n_band | t_f
  std::vector<double> values;
};

struct ExperimentConfig {
  std::string name = "run";
  Method method = Method::kHarrisAte;
  Cell cell;
  int n_band = 1;
  InitialSpec initial;
  AteSchedule schedule;
  ReadoutSpec readout;
  double lambda = 0.0;
  std::vector<double> lambdas;
  std::string acceptor = "H";
  std::array<int, 3> kmesh{1, 1, 1};
  bool kmesh_reduce = true;
  std::vector<PathWaypoint> kpath;
  int kpath_points = 5;
  CopiesSpec copies;
  std::optional<std::int64_t> shots;
  std::uint64_t seed = 0;
  std::string density = "superposition";  // superposition | scf, for k-point runs
  double oracle_sigma = 0.0;  // hartree; 0 means aufbau
  int oracle_bands = 0;       // 0 picks a default
  std::optional<std::filesystem::path> atom_cache;
  std::filesystem::path output = "out";
  std::optional<ScanSpec> scan;

  nlohmann::json source;  // parsed document, for hashing
};

/// Reads "<number> <unit>" quantities and the documented schema. Throws
/// ConfigError with the offending key.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a 64 of the canonical JSON dump, hex.
std::string config_hash(const nlohmann::json& doc);

/// Converts "<value> <unit>" into internal units for the given dimension
/// (length, inverse-length, time, energy, density, angle).
double parse_quantity(const std::string& text, const std::string& dimension);

struct RunOptions {
  int workers = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output;
  bool quiet = true;
};

/// Runs one experiment, writes summary.json and CSVs under the output
/// directory and returns the summary document.
nlohmann::json run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// One run per scan value; per-point directories plus scan.csv. Failed
/// points are recorded and the remaining points still run.
nlohmann::json run_scan(const ExperimentConfig& config, const RunOptions& options = {});

/// Replaces the Li-H style two-atom distance, keeping the midpoint.
Cell with_bond_length(const Cell& cell, double bond);

}  // namespace qedft
