// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "qedft/dft.hpp"
#include "qedft/evolution.hpp"
#include "qedft/qstate.hpp"

namespace qedft {

/// Density expansion V(r1) = v1(r1) + sum_r2 v2(r1, r2) rho(r2) dV
///                         + sum_{alpha >= 3} alpha c_alpha rho(r1)^(alpha-1).
/// v2 depends on the minimum-image displacement only, so it is stored as one
/// row w(d) over displacement indices d (flat grid index of r1 - r2 mod N).
struct InteractionKernel {
  Grid grid;
  Eigen::VectorXd v1;
  Eigen::VectorXd w;
  double r_c = 0.3;
  int n_max = 2;
  double c2 = 0.0;
  std::map<int, double> high_order;  // alpha -> c_alpha for alpha >= 3
  DensityField rho_in;

  /// v2(r1, r2).
  double v2(std::size_t r1, std::size_t r2) const;
  /// Dense v2 matrix (N_grid <= 4096).
  Eigen::MatrixXd v2_dense() const;
};

/// Flat index of the displacement r1 - r2 wrapped onto the grid.
std::size_t displacement_index(const Grid& grid, std::size_t r1, std::size_t r2);

/// Smoothed Coulomb plus Gaussian-regularised XC contact term; v1 is fixed so
/// the expansion reproduces V_KS[rho_in] exactly at rho_in.
InteractionKernel build_kernel(const KsModel& model, const DensityField& rho_in, double r_c,
                               const XcFit& fit, int n_max = 2);

PotentialField vks_expansion(const DensityField& rho, const InteractionKernel& kernel);

/// chi(r1, r1') = sum_r2 p(r2) a_l(r1 - r2) conj(a_r(r1' - r2)) with
/// a_sigma(d) = exp(-i sigma phi w(d)) and phi = dt N_elec, built by one
/// circular convolution per column. The pointwise alpha >= 3 contact
/// channels are folded in.
Eigen::MatrixXcd channel_factor(const InteractionKernel& kernel, const Eigen::VectorXd& p, double dt,
                                double n_elec, int sigma_left = 1, int sigma_right = 1);

/// Same factor as a dense N x N matrix chi(r1, r1') through
/// A_l diag(p) A_r^dagger; works for any symmetric v2.
Eigen::MatrixXcd channel_factor_dense(const Eigen::MatrixXd& v2, const Eigen::VectorXd& p, double phi,
                                      int sigma_left = 1, int sigma_right = 1);

/// Multiplies every label block of `m` element-wise by chi.
void apply_channel_factor(Eigen::MatrixXcd& m, const Eigen::MatrixXcd& chi);

enum class ChannelPath { kCirculant, kDense };

/// Exact single-copy channel of exp(-i dt V_2) on two copies (plus the
/// pointwise alpha >= 3 contact channels when present), preceded by the
/// one-body phase exp(-i dt v1) when `one_body` is set. `strength` scales
/// the interaction (s of the SCF ramp).
void reduced_channel_step(MixedState& rho, const InteractionKernel& kernel, double dt, double n_elec,
                          bool one_body = true, double strength = 1.0,
                          ChannelPath path = ChannelPath::kCirculant);

/// Brute-force reference: explicit two-copy register, exp(-i dt N_elec v2)
/// on it, partial trace over the second copy. Tiny grids only.
MixedState two_copy_channel(const MixedState& rho, const Eigen::MatrixXd& v2, double dt, double n_elec);

enum class RampMode { kRamped, kFullStrength };

struct ScfAteOptions {
  RampMode ramp = RampMode::kRamped;
  const OrbitalSet* reference = nullptr;
  const DensityField* reference_density = nullptr;
  bool log_purity = true;
  int log_every = 1;
  /// Density error is logged every this many steps and at the end (0: end
  /// only).
  int density_every = 0;
};

struct ScfRun {
  MixedState rho;
  std::vector<AteLogRow> log;
  DensityField density;  // final diagonal density
};

/// SCF within ATE through the copies channel: per step T/2, one-body phase
/// (1 - s) V0 + s v1, interaction channel of strength s, T/2.
ScfRun run_scf_ate(const QeState& initial, const AteSchedule& schedule, const InteractionKernel& kernel,
                   const PotentialField& v0, double n_elec, const ScfAteOptions& options = {});

enum class NonlinearFlavor { kAte, kIte };

struct ExactNonlinearOptions {
  const OrbitalSet* reference = nullptr;
  const KsModel* model = nullptr;  // required
  const DensityField* reference_density = nullptr;
  int log_every = 1;
};

struct ExactNonlinearRun {
  QeState state;
  std::vector<AteLogRow> log;
  DensityField density;
};

/// Reference propagation that reads the density every step and rebuilds
/// V_KS[rho(t)] exactly. ATE ramps from v0 with s = t_i / t_f; ITE applies
/// normalised exp(-dt H[rho]) steps.
ExactNonlinearRun run_exact_nonlinear_rte(const QeState& initial, const AteSchedule& schedule,
                                          const PotentialField& v0, NonlinearFlavor flavor,
                                          const ExactNonlinearOptions& options);

/// Kohn-Sham energy functional of the orbitals held by `state` (no ion-ion).
double ks_energy_of_state(const QeState& state, const KsModel& model);

// ---------------------------------------------------------------------------
// Probabilistic imaginary-time evolution

struct PiteConfig {
  double dt = 0.025;     // au time
  double theta = 0.0;    // radians
  int steps = 100;
  double e_shift = 0.0;  // hartree, added to H inside R

  void validate() const;
  /// dt tan(theta + pi/4).
  double imaginary_step() const;
};

/// Picks theta and the energy shift so that the spectrum [e_low, e_high]
/// maps into (0, pi/2) with the lowest level at `x0` (or as close to it as
/// the range allows).
PiteConfig pite_config_for(double dt, int steps, double e_low, double e_high, double x0);

/// Hamiltonian seen by PITE: one-body potential plus an optional copies
/// kernel (nonlinear case).
struct PiteHamiltonian {
  PotentialField v;
  const InteractionKernel* kernel = nullptr;
  double n_elec = 2.0;
};

/// Measurement-0 branch M(rho)/tr M(rho); returns the success probability.
double pite_step(MixedState& rho, const KineticPropagator& kin, const PiteHamiltonian& h,
                 const PiteConfig& config);
/// Kraus form K rho K^dagger with K = (R + i e^{2 i theta} R^dagger)/2 (linear
/// Hamiltonians only).
double pite_step_kraus(MixedState& rho, const KineticPropagator& kin, const PotentialField& v,
                       const PiteConfig& config);
/// Pure-state Kraus step, normalised; returns the success probability.
double pite_step(QeState& state, const PotentialField& v, const PiteConfig& config);

struct ScfPiteOptions {
  const OrbitalSet* reference = nullptr;
  const DensityField* reference_density = nullptr;
  bool log_purity = true;
  int log_every = 1;
};

/// Single-band PITE with the copies channel embedded in every R.
ScfRun run_scf_pite(const QeState& initial, const InteractionKernel& kernel, double n_elec,
                    const PiteConfig& config, const ScfPiteOptions& options = {});

}  // namespace qedft
