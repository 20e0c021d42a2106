// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qedft/dft.hpp"
#include "qedft/lattice.hpp"
#include "qedft/qstate.hpp"

namespace qedft {

/// H = -(1/2)(nabla + ik)^2 + V on the grid, applied matrix-free: the kinetic
/// part is diagonal in the FFT basis with |G+k|^2/2.
class KsHamiltonian {
 public:
  KsHamiltonian(const Grid& grid, const PotentialField& v, const Vec3& k_cart = Vec3::Zero());

  const Grid& grid() const { return grid_; }
  const Eigen::VectorXd& potential() const { return v_; }
  const Eigen::VectorXd& kinetic_diagonal() const { return kin_; }
  Eigen::Index dimension() const { return v_.size(); }

  /// out = H in, column by column.
  void apply(const Eigen::MatrixXcd& in, Eigen::MatrixXcd& out) const;
  Eigen::MatrixXcd apply(const Eigen::MatrixXcd& in) const;
  /// Dense matrix; only for dimension <= 4096.
  Eigen::MatrixXcd dense() const;

 private:
  Grid grid_;
  Eigen::VectorXd v_;
  Eigen::VectorXd kin_;
};

struct Eigenpairs {
  Eigen::VectorXd values;
  Eigen::MatrixXcd vectors;  // unit 2-norm columns
  Eigen::VectorXd residuals;
  int iterations = 0;
};

struct EigenOptions {
  double tol = 1e-8;
  int max_iter = 400;
  Eigen::Index dense_limit = 1024;
  /// Optional starting block (columns are orthonormalised internally).
  std::optional<Eigen::MatrixXcd> guess;
};

/// Lowest m eigenpairs. Dense diagonalisation when the dimension does not
/// exceed `dense_limit`, LOBPCG with a kinetic preconditioner otherwise.
Eigenpairs lowest_eigenpairs(const KsHamiltonian& h, int m, const EigenOptions& options = {});

/// Dense exp(-i tau H) (imaginary = false) or exp(-tau H) via the spectral
/// decomposition of a Hermitian matrix.
Eigen::MatrixXcd exact_propagator(const Eigen::MatrixXcd& h, double tau, bool imaginary = false);

enum class Occupation { kAufbau, kSmeared };

struct OracleOptions {
  double mixing = 0.3;
  double tol = 1e-8;         // sum |rho_new - rho| dV
  int max_iter = 300;
  int n_bands = 0;           // 0 picks ceil(N_elec / 2) (+ extra when smeared)
  Occupation occupation = Occupation::kAufbau;
  double sigma = 0.0;        // hartree, erfc smearing width
  std::vector<KPoint> kpoints;  // empty means Gamma only
  double eig_tol = 1e-9;
  Eigen::Index dense_limit = 1024;
  /// Fixed-potential mode: one diagonalisation of H[rho0] and no density
  /// update.
  bool non_self_consistent = false;
};

struct OracleResult {
  std::vector<KPoint> kpoints;
  std::vector<Eigen::VectorXd> eigenvalues;  // per k
  std::vector<OrbitalSet> orbitals;          // per k, dV-normalised
  std::vector<Eigen::VectorXd> occupations;  // per k, in [0, 1] per spin orbital pair
  DensityField density;                      // output density of the last diagonalisation
  PotentialField potential;                  // V_KS of the last input density
  double fermi_level = 0.0;
  double band_energy = 0.0;                  // sum_k w_k sum_i 2 f_i eps_i
  double total_energy = 0.0;                 // E_KS at the output density, excluding ion-ion
  double ion_ion = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;               // density change per iteration
};

/// Self-consistent (or fixed-density) KS solve with linear density mixing.
OracleResult scf_loop(const KsModel& model, const DensityField& rho0, const OracleOptions& options = {});

/// Fermi level solving sum_k w_k sum_i 2 f((eps - E_F)/sigma) = N_elec with
/// f(x) = erfc(x)/2 by bisection.
double smeared_fermi_level(const std::vector<Eigen::VectorXd>& eigenvalues,
                           const std::vector<double>& weights, double n_elec, double sigma);

/// erfc(x / sigma) / 2; a step function when sigma is zero.
double smearing(double x, double sigma);

}  // namespace qedft
