// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "qedft/dft.hpp"
#include "qedft/qstate.hpp"

namespace qedft {

enum class Splitting {
  kGeneral,           // T/2 V/2 H0 V/2 T/2 with the projector H0
  kKineticPotential,  // T/2 [(1-s) V0 + s V] T/2 with H0 = T + V0
};

struct AteSchedule {
  double t_f = 20.0;  // au time
  int steps = 100;
  double e0 = 1.0;    // hartree
  Splitting splitting = Splitting::kGeneral;

  void validate() const;
  double dt() const { return t_f / steps; }
  /// Midpoint time of step i = 1..steps.
  double t_mid(int i) const { return (i - 0.5) * dt(); }
};

/// Initial Hamiltonian: -E0 P onto `prep` (general splitting) or T + V0.
struct H0Spec {
  OrbitalSet prep;
  PotentialField v0;
  double e0 = 1.0;
};

/// Diagonal-in-momentum kinetic propagator exp(-i tau |G+k|^2 / 2) for one
/// grid and k-point. Applies to every column of an N_grid x m block.
class KineticPropagator {
 public:
  KineticPropagator() = default;
  KineticPropagator(const Grid& grid, const Vec3& k_cart);

  void apply(Eigen::Ref<Eigen::MatrixXcd> block, double tau) const;
  /// Same, with an imaginary time: exp(-tau |G+k|^2 / 2).
  void apply_imaginary(Eigen::Ref<Eigen::MatrixXcd> block, double tau) const;
  /// Density-matrix forms on an N_label N_grid square matrix: m -> K m,
  /// m -> m K^dagger and m -> K_l m K_r^dagger with K = exp(-i tau T).
  void left(Eigen::MatrixXcd& m, double tau) const;
  void right(Eigen::MatrixXcd& m, double tau) const;
  void two_sided(Eigen::MatrixXcd& m, double tau_left, double tau_right) const;
  const Eigen::VectorXd& half_g2() const { return half_g2_; }
  const Grid& grid() const { return grid_; }

 private:
  Grid grid_;
  Eigen::VectorXd half_g2_;
};

void potential_phase(Eigen::Ref<Eigen::MatrixXcd> block, double tau, const Eigen::VectorXd& v);

void kinetic_phase(QeState& state, double tau);
void potential_phase(QeState& state, double tau, const PotentialField& v);
/// exp(+i tau E0 P) with P the projector onto span(prep).
void h0_projector_phase(QeState& state, double tau, double e0, const OrbitalSet& prep);

void trotter_step_general(QeState& state, double t_mid, double dt, double t_f,
                          const PotentialField& v_ks, const H0Spec& h0);
void trotter_step_tv(QeState& state, double t_mid, double dt, double t_f, const PotentialField& v0,
                     const PotentialField& v_ks);
/// Symmetric split step T/2 V T/2 of exp(-i dt (T + V)), repeated `substeps`
/// times with dt / substeps each.
void ks_step(QeState& state, double dt, const PotentialField& v, int substeps = 1);

struct AteLogRow {
  int step = 0;
  double time = 0.0;
  double fidelity = std::numeric_limits<double>::quiet_NaN();
  double purity = std::numeric_limits<double>::quiet_NaN();
  double overlap_drift = 0.0;
  double energy = std::numeric_limits<double>::quiet_NaN();
  double success = std::numeric_limits<double>::quiet_NaN();
  double density_error = std::numeric_limits<double>::quiet_NaN();  // sum |rho - rho_ref| dV
};

struct AteOptions {
  const OrbitalSet* reference = nullptr;  // fidelity logging when set
  bool log_overlap = true;
  int log_every = 1;
};

struct AteRun {
  QeState state;
  std::vector<AteLogRow> log;
};

AteRun run_ate(QeState state, const AteSchedule& schedule, const PotentialField& v_ks,
               const H0Spec& h0, const AteOptions& options = {});

// ---------------------------------------------------------------------------
// Density-matrix variants: rho -> U rho U^dagger with U acting identically on
// every label block.

/// rho -> A rho A^dagger where `op` applies A to an N_grid x m block.
void apply_two_sided(MixedState& rho, const std::function<void(Eigen::Ref<Eigen::MatrixXcd>)>& op);

void kinetic_phase(MixedState& rho, const KineticPropagator& kin, double tau);
void potential_phase(MixedState& rho, double tau, const PotentialField& v);
void h0_projector_phase(MixedState& rho, double tau, double e0, const OrbitalSet& prep);

/// Writes step,time_au,fidelity,purity,overlap_drift,energy_ha,success_probability,density_error.
void write_trajectory_csv(const std::vector<AteLogRow>& log, const std::filesystem::path& path);

}  // namespace qedft
