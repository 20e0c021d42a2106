// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qedft/lattice.hpp"

namespace qedft {

/// Electron density on the grid, electrons / bohr^3.
struct DensityField {
  Eigen::VectorXd values;

  DensityField() = default;
  explicit DensityField(Eigen::VectorXd v) : values(std::move(v)) {}
  static DensityField zeros(const Grid& grid) {
    return DensityField(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size())));
  }
  double integral(const Grid& grid) const { return values.sum() * grid.dv(); }
};

/// Local (grid-diagonal) potential, hartree.
struct PotentialField {
  Eigen::VectorXd values;

  PotentialField() = default;
  explicit PotentialField(Eigen::VectorXd v) : values(std::move(v)) {}
  static PotentialField zeros(const Grid& grid) {
    return PotentialField(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size())));
  }
};

// ---------------------------------------------------------------------------
// Pseudopotentials

/// Local part of a Goedecker-Teter-Hutter pseudopotential.
struct GthParams {
  std::string species;
  double z_ion = 0.0;
  double r_loc = 1.0;                 // bohr
  std::array<double, 4> c{0, 0, 0, 0};  // hartree
};

using GthTable = std::map<std::string, GthParams>;

/// Parses the plain-text table: one `species z_ion r_loc C1 C2 C3 C4` row per
/// line, `#` starts a comment.
GthTable parse_gth_table(const std::string& text);
GthTable load_gth_table(const std::filesystem::path& path);
/// Table shipped in data/gth_lda.txt (QEDFT_DATA overrides the directory).
const GthTable& default_gth_table();

/// Radial local potential of one GTH centre at distance r.
double gth_local_radial(const GthParams& p, double r);

/// External potential of all atoms, assembled in reciprocal space on the
/// grid's G vectors. Periodic cells drop G = 0; isolated cells keep its
/// non-Coulomb part.
PotentialField gth_local_potential(const Grid& grid, const std::vector<Atom>& atoms,
                                   const GthTable& table);

/// Sum of Z_a Z_b / R_ab over atom pairs of an isolated cell (0 for periodic
/// cells, whose absolute energies carry an arbitrary constant).
double ion_ion_energy(const Cell& cell);

// ---------------------------------------------------------------------------
// Hartree and exchange-correlation

/// Periodic Poisson solve, V(G) = 4 pi rho(G) / G^2 and V(0) = 0.
PotentialField hartree_potential(const DensityField& rho, const Grid& grid);
/// (1/2) sum V_H rho dV.
double hartree_energy(const DensityField& rho, const Grid& grid);

struct XcPoint {
  double eps = 0.0;  // energy per electron
  double v = 0.0;    // d(rho eps)/d rho
};

/// Spin-unpolarised Slater exchange plus Perdew-Wang 1992 correlation.
XcPoint lda_point(double rho);
inline constexpr const char* kLdaName = "LDA: Slater exchange + PW92 correlation (unpolarised)";

struct XcResult {
  double energy = 0.0;
  PotentialField potential;
  Eigen::VectorXd eps;
};

XcResult lda_xc(const DensityField& rho, const Grid& grid);

// ---------------------------------------------------------------------------
// Kohn-Sham model

/// Everything that defines H_KS[rho] apart from the density.
struct KsModel {
  Cell cell;
  Grid grid;
  PotentialField v_ext;

  KsModel() = default;
  KsModel(Cell c, const GthTable& table);
  double electron_count() const { return cell.electron_count(); }
};

PotentialField ks_potential(const DensityField& rho, const Grid& grid, const PotentialField& v_ext);
PotentialField ks_potential(const DensityField& rho, const KsModel& model);

struct DoubleCounting {
  double hartree = 0.0;  // E_H[rho]
  double vxc_rho = 0.0;  // sum V_XC rho dV
  double xc = 0.0;       // E_XC[rho]
};

DoubleCounting double_counting(const DensityField& rho, const Grid& grid);

struct HarrisResult {
  double band_energy = 0.0;
  double hartree = 0.0;
  double vxc_rho = 0.0;
  double xc = 0.0;
  double total = 0.0;  // band - hartree - vxc_rho + xc
  double lambda = 0.0;
};

HarrisResult harris_energy(double band_energy, const DensityField& rho_in, const Grid& grid,
                           double lambda = 0.0);
double ks_total_energy(double band_energy, const DensityField& rho_out, const Grid& grid);

// ---------------------------------------------------------------------------
// Input densities

/// rho_in(lambda) = (1 + lambda) acceptor + (1 - lambda) donor. Values of
/// lambda outside [0, 1] are allowed and reported through `warnings`.
DensityField input_density(double lambda, const DensityField& acceptor, const DensityField& donor,
                           std::vector<std::string>* warnings = nullptr);

/// Per-atom superposition sum_a factor_a rho_a.
DensityField superpose(const std::vector<DensityField>& atom_densities,
                       const std::vector<double>& factors);

struct AtomDensityOptions {
  std::optional<std::filesystem::path> cache_dir;
  double scf_tol = 1e-9;
  int max_iter = 300;
};

/// Self-consistent pseudo-atom density of `atom` alone in `cell` (same box
/// and grid, atom at its own position), solved by the oracle. Results are
/// cached on disk when a cache directory is given.
DensityField isolated_atom_density(const Atom& atom, const Cell& cell, const GthTable& table,
                                   const AtomDensityOptions& options = {});

// ---------------------------------------------------------------------------
// Polynomial fit of the LDA energy density

struct XcFit {
  std::map<int, double> coeffs;  // alpha -> c_alpha, alpha >= 2
  double rho_min = 0.0;
  double rho_max = 0.0;
  double residual = 0.0;   // ||fit - f||_2 / ||f||_2 over the samples
  double tolerance = 0.0;

  double c(int alpha) const {
    auto it = coeffs.find(alpha);
    return it == coeffs.end() ? 0.0 : it->second;
  }
  double energy_density(double rho) const;
};

/// Least-squares fit of rho*eps_xc(rho) by sum_{alpha=2..degree} c_alpha
/// rho^alpha on log-spaced samples. Throws SolverError when the fit is
/// ill-conditioned or the residual exceeds `tolerance`.
XcFit xc_poly_fit(double rho_min, double rho_max, int degree, double tolerance = 0.1,
                  const std::function<double(double)>& energy_density = {});

// ---------------------------------------------------------------------------
// Variational Harris

struct HarrisScan {
  double lambda_star = 0.0;
  std::size_t best_index = 0;
  bool boundary = false;
  std::vector<HarrisResult> points;
};

/// Maximises E_Harris over the given lambda values; ties go to the smaller
/// lambda.
HarrisScan variational_harris_scan(const std::vector<double>& lambdas,
                                   const std::function<HarrisResult(double)>& experiment);

}  // namespace qedft
