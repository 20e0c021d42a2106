// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "qedft/fft.hpp"
#include "qedft/lattice.hpp"

namespace qedft {

/// Orbitals psi_i(r) on the grid, one per column, normalised so that
/// sum_r |psi_i(r)|^2 dV = 1.
struct OrbitalSet {
  Grid grid;
  Eigen::MatrixXcd psi;

  int count() const { return static_cast<int>(psi.cols()); }
  /// dV * psi^H psi.
  Eigen::MatrixXcd gram() const;
};

/// Number of label qubits needed for n_band orbitals, ceil(log2 n_band).
int label_qubits_for(int n_band);

/// Multi-orbital state in the qubit-efficient encoding: amplitude (i, r) =
/// sqrt(dV / N_band) psi_i(r) with one column per band label. Columns with
/// label >= N_band exist (the label register has 2^n_label values) and stay
/// identically zero.
class QeState {
 public:
  QeState() = default;
  QeState(Grid grid, int n_band, KPoint k = {});

  const Grid& grid() const { return grid_; }
  int n_band() const { return n_band_; }
  int label_qubits() const { return label_qubits_; }
  int label_slots() const { return static_cast<int>(amps_.cols()); }
  const KPoint& kpoint() const { return kpoint_; }
  void set_kpoint(const KPoint& k) { kpoint_ = k; }

  Eigen::MatrixXcd& amps() { return amps_; }
  const Eigen::MatrixXcd& amps() const { return amps_; }
  /// Active columns only (N_grid x N_band).
  auto active() { return amps_.leftCols(n_band_); }
  auto active() const { return amps_.leftCols(n_band_); }

  double norm() const { return amps_.norm(); }
  std::size_t dimension() const { return static_cast<std::size_t>(amps_.size()); }

 private:
  Grid grid_;
  int n_band_ = 0;
  int label_qubits_ = 0;
  KPoint kpoint_;
  Eigen::MatrixXcd amps_;
};

/// Density matrix over the label (x) grid register, row/column index
/// label * N_grid + r.
class MixedState {
 public:
  MixedState() = default;
  MixedState(Grid grid, int n_band, Eigen::MatrixXcd rho);
  static MixedState from_pure(const QeState& state);

  const Grid& grid() const { return grid_; }
  int n_band() const { return n_band_; }
  Eigen::MatrixXcd& matrix() { return rho_; }
  const Eigen::MatrixXcd& matrix() const { return rho_; }
  Eigen::Index dimension() const { return rho_.rows(); }

  double trace() const { return rho_.trace().real(); }
  void normalize();
  double hermiticity_error() const;
  /// p(r) = sum_label rho(label r, label r), the grid marginal.
  Eigen::VectorXd grid_marginal() const;

 private:
  Grid grid_;
  int n_band_ = 1;
  Eigen::MatrixXcd rho_;
};

/// Throws InvalidArgument (with the Gram matrix) unless the orbitals are
/// orthonormal within `tol`.
QeState encode(const OrbitalSet& orbitals, const KPoint& k = {}, double tol = 1e-8);
OrbitalSet decode(const QeState& state);

/// N exp[-q (|x - x0| + |y - y0| + |z - z0|)] with minimum-image differences.
Eigen::VectorXcd slater_orbital(const Vec3& center, double q, const Grid& grid);

/// V^-1/2 exp(2 pi i K.r / L) for integer vectors K.
OrbitalSet planewave_orbitals(const std::vector<Eigen::Vector3i>& ks, const Grid& grid);
/// All integer K with |K|^2 <= k2_max, ordered by |K|^2 then lexicographically.
std::vector<Eigen::Vector3i> integer_vectors_within(int k2_max);

/// Centred QFT on the grid register of each label block. The momentum basis
/// slot j along an axis of N points holds frequency m = j - N/2; the forward
/// transform uses exp(-i G.r) and is unitary.
void cqft(QeState& state, FftDirection dir);
/// Same transform on a single grid vector.
void cqft(Eigen::Ref<Eigen::VectorXcd> v, const Grid& grid, FftDirection dir);

/// S_ij = N_band sum_r conj(a(i, r)) b(j, r), i.e. <psi_i|psi_j>.
Eigen::MatrixXcd overlap_matrix(const QeState& a, const QeState& b);

/// Projector overlap (1/N_band) sum_ij |<ref_i|psi_j>|^2; for a single band
/// this is |<ref|psi>|^2.
double subspace_fidelity(const QeState& state, const OrbitalSet& reference);
/// sum_i sum_j <ref_i| rho_jj |ref_i> / tr rho, which is <ref|rho|ref> for a
/// single band.
double subspace_fidelity(const MixedState& rho, const OrbitalSet& reference);

/// Largest eigenvalue of the trace-normalised density matrix.
double purity(const MixedState& rho);

/// Largest eigenvalue of a Hermitian positive semidefinite matrix (dense for
/// small sizes, Lanczos otherwise).
double largest_eigenvalue(const Eigen::MatrixXcd& m);
/// Same, warm-started from `vec` when it has the right size; the top
/// eigenvector is written back to `vec`.
double largest_eigenpair(const Eigen::MatrixXcd& m, Eigen::VectorXcd& vec);

/// Electron density 2 sum_i |psi_i|^2 (times the band occupations when given).
Eigen::VectorXd band_density(const QeState& state, const std::vector<double>& occupations = {});

void save_state(const QeState& state, const std::filesystem::path& path);
QeState load_state(const std::filesystem::path& path);

}  // namespace qedft
