// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "qedft/dft.hpp"
#include "qedft/qstate.hpp"

namespace qedft {

struct HadamardResult {
  std::complex<double> z;  // (1/N_band) sum_i <psi_i| exp(-i tau H) |psi_i>
  double p0_real = 0.0;    // probability of ancilla 0, real-part circuit
  double p0_imag = 0.0;    // same for the imaginary-part circuit
  std::optional<std::int64_t> shots;
};

/// Hadamard test on the Trotterised propagator (substeps symmetric splits
/// per tau). With `shots`, p0 values are binomially sampled with `seed` and
/// z is rebuilt from the samples.
HadamardResult hadamard_test(const QeState& state, const PotentialField& v, double tau,
                             int substeps = 1, std::optional<std::int64_t> shots = std::nullopt,
                             std::uint64_t seed = 0);

/// 2 sum_i eps_i = -(2 N_band / tau) arg z.
double band_energy_from_phase(std::complex<double> z, double tau, int n_band);

/// Outcome distribution of an N_QPE-point phase register.
struct SpectralHistogram {
  Eigen::VectorXd prob;
  double dt = 0.0;
  int n_qpe = 0;
  double e_shift = 0.0;
  int n_band = 1;
  double weight = 1.0;  // k-point weight

  /// 2 pi k / (N_QPE dt) - E_shift.
  double energy(int k) const;
  double bin_width() const;
};

/// QPE histogram of exp(+i dt (H + E_shift)) acting on `state` from the
/// autocorrelation C(m) = <psi| R^m |psi>, R = exp(-i dt (H + E_shift)).
SpectralHistogram qpe_distribution(const QeState& state, const PotentialField& v, double dt,
                                   int n_qpe, double e_shift, int substeps = 1);

/// Histogram from autocorrelations C(0..N-1) (exposed for testing).
Eigen::VectorXd qpe_from_autocorrelation(const Eigen::VectorXcd& c);

struct FermiSolution {
  double e_fermi = 0.0;
  double sigma = 0.0;
  double electrons = 0.0;  // count reproduced at e_fermi
};

/// Solves sum_h w_h sum_k 2 N_band Pr_h(k) f(eps_k - E_F) = N_elec with
/// f(x) = erfc(x / sigma) / 2. Weights are normalised internally.
FermiSolution fermi_level(const std::vector<SpectralHistogram>& hists, double n_elec, double sigma);

double band_energy_from_dos(const std::vector<SpectralHistogram>& hists, const FermiSolution& fermi);

/// Weighted, smeared DOS samples for output: one row per bin of each
/// histogram, energies in hartree.
struct DosRow {
  double energy = 0.0;
  double probability = 0.0;
  double occupation = 0.0;
};
std::vector<DosRow> dos_rows(const std::vector<SpectralHistogram>& hists, const FermiSolution& fermi);

struct BandMapRow {
  double path_coord = 0.0;  // bohr^-1
  double energy = 0.0;      // hartree
  double probability = 0.0;
};

/// Stacks per-k histograms along a path; bins below `min_probability` are
/// dropped.
std::vector<BandMapRow> band_structure(const std::vector<KPoint>& path,
                                       const std::vector<SpectralHistogram>& hists,
                                       double min_probability = 1e-6);

/// 1 - sum_{i <= N_band} |<phi_j|psi_i>|^2 for each reference orbital j,
/// i.e. the weight of occupied orbital j outside the evolved subspace.
Eigen::VectorXd leakage(const QeState& evolved, const OrbitalSet& occupied);

struct NbandPoint {
  int n_band = 0;
  double band_energy = 0.0;
  double delta = 0.0;         // change from the previous N_band
  double max_leakage = 0.0;
};

struct NbandReport {
  std::vector<NbandPoint> points;
  bool converged = false;
};

/// Runs `experiment(n_band)` (returning the band energy and final state) for
/// each N_band and reports energy deltas and leakage against the occupied
/// reference orbitals. Converged when the last delta is below `tol`.
NbandReport nband_convergence_check(
    const std::vector<int>& n_bands,
    const std::function<std::pair<double, QeState>(int)>& experiment,
    const OrbitalSet& occupied, double tol);

}  // namespace qedft
