// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#include "qedft/evolution.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "qedft/error.hpp"
#include "qedft/fft.hpp"

namespace qedft {

void AteSchedule::validate() const {
  if (!(t_f > 0.0)) throw InvalidArgument("ATE schedule needs t_f > 0");
  if (steps < 1) throw InvalidArgument("ATE schedule needs at least one step");
  if (splitting == Splitting::kGeneral && !(e0 > 0.0)) {
    throw InvalidArgument("the projector H0 needs E0 > 0");
  }
}

KineticPropagator::KineticPropagator(const Grid& grid, const Vec3& k_cart) : grid_(grid) {
  const auto g2 = grid.g_plus_k_squared(k_cart);
  half_g2_.resize(static_cast<Eigen::Index>(g2.size()));
  for (std::size_t i = 0; i < g2.size(); ++i) half_g2_[static_cast<Eigen::Index>(i)] = 0.5 * g2[i];
}

namespace {

void diagonal_in_momentum(const Grid& grid, Eigen::Ref<Eigen::MatrixXcd> block,
                          const Eigen::VectorXcd& factor) {
  if (block.cols() == 0 || block.rows() == 0) return;
  const auto stride = static_cast<std::size_t>(block.outerStride());
  const std::size_t len = stride * static_cast<std::size_t>(block.cols() - 1) +
                          static_cast<std::size_t>(block.rows());
  std::span<cplx> data(block.data(), len);
  const auto howmany = static_cast<std::size_t>(block.cols());
  fft3d(data, grid.dims(), FftDirection::kForward, howmany, 1, stride);
  const Eigen::VectorXcd scaled = factor / static_cast<double>(grid.size());
  for (Eigen::Index c = 0; c < block.cols(); ++c) block.col(c).array() *= scaled.array();
  fft3d(data, grid.dims(), FftDirection::kInverse, howmany, 1, stride);
}

}  // namespace

void KineticPropagator::apply(Eigen::Ref<Eigen::MatrixXcd> block, double tau) const {
  if (tau == 0.0) return;
  Eigen::VectorXcd f(half_g2_.size());
  for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = std::exp(cplx(0.0, -tau * half_g2_[i]));
  diagonal_in_momentum(grid_, block, f);
}

void KineticPropagator::apply_imaginary(Eigen::Ref<Eigen::MatrixXcd> block, double tau) const {
  if (tau == 0.0) return;
  const Eigen::VectorXcd f = (-tau * half_g2_).array().exp().cast<cplx>();
  diagonal_in_momentum(grid_, block, f);
}

namespace {

// Transforms every column-label block of m along the column grid index.
void column_fft(Eigen::MatrixXcd& m, const Grid& grid, FftDirection dir) {
  const auto n = static_cast<std::size_t>(grid.size());
  const auto d = static_cast<std::size_t>(m.rows());
  for (std::size_t lb = 0; lb < d / n; ++lb) {
    std::span<cplx> data(m.data() + lb * n * d, n * d);
    fft3d(data, grid.dims(), dir, d, d, 1);
  }
}

void row_fft(Eigen::MatrixXcd& m, const Grid& grid, FftDirection dir) {
  const auto n = static_cast<std::size_t>(grid.size());
  std::span<cplx> data(m.data(), static_cast<std::size_t>(m.size()));
  fft3d(data, grid.dims(), dir, data.size() / n);
}

Eigen::VectorXcd phases(const Eigen::VectorXd& half_g2, double tau, Eigen::Index d) {
  const Eigen::Index n = half_g2.size();
  Eigen::VectorXcd f(d);
  for (Eigen::Index i = 0; i < d; ++i) f[i] = std::exp(cplx(0.0, -tau * half_g2[i % n]));
  return f;
}

}  // namespace

void KineticPropagator::left(Eigen::MatrixXcd& m, double tau) const {
  if (tau == 0.0) return;
  Eigen::Map<Eigen::MatrixXcd> blocks(m.data(), static_cast<Eigen::Index>(grid_.size()),
                                      m.size() / static_cast<Eigen::Index>(grid_.size()));
  apply(blocks, tau);
}

void KineticPropagator::right(Eigen::MatrixXcd& m, double tau) const {
  if (tau == 0.0) return;
  // m K^dagger = (conj(K) m^T)^T and conj(K) = F diag(conj f) F^-1.
  column_fft(m, grid_, FftDirection::kInverse);
  const Eigen::VectorXcd f = phases(half_g2_, tau, m.cols()).conjugate() / static_cast<double>(grid_.size());
  for (Eigen::Index c = 0; c < m.cols(); ++c) m.col(c) *= f[c];
  column_fft(m, grid_, FftDirection::kForward);
}

void KineticPropagator::two_sided(Eigen::MatrixXcd& m, double tau_left, double tau_right) const {
  if (tau_left == 0.0 && tau_right == 0.0) return;
  const double inv = 1.0 / static_cast<double>(grid_.size());
  row_fft(m, grid_, FftDirection::kForward);
  column_fft(m, grid_, FftDirection::kInverse);
  const Eigen::VectorXcd fl = phases(half_g2_, tau_left, m.rows()) * inv;
  const Eigen::VectorXcd fr = phases(half_g2_, tau_right, m.cols()).conjugate() * inv;
  for (Eigen::Index c = 0; c < m.cols(); ++c) m.col(c).array() *= fl.array() * fr[c];
  row_fft(m, grid_, FftDirection::kInverse);
  column_fft(m, grid_, FftDirection::kForward);
}

void potential_phase(Eigen::Ref<Eigen::MatrixXcd> block, double tau, const Eigen::VectorXd& v) {
  if (tau == 0.0) return;
  Eigen::VectorXcd f(v.size());
  for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = std::exp(cplx(0.0, -tau * v[i]));
  for (Eigen::Index c = 0; c < block.cols(); ++c) block.col(c).array() *= f.array();
}

void kinetic_phase(QeState& state, double tau) {
  const KineticPropagator kin(state.grid(), state.kpoint().cartesian(state.grid().lengths()));
  kin.apply(state.active(), tau);
}

void potential_phase(QeState& state, double tau, const PotentialField& v) {
  potential_phase(state.active(), tau, v.values);
}

namespace {

Eigen::MatrixXcd unit_prep(const OrbitalSet& prep) {
  const Eigen::MatrixXcd phi = std::sqrt(prep.grid.dv()) * prep.psi;
  const Eigen::MatrixXcd g = phi.adjoint() * phi;
  if ((g - Eigen::MatrixXcd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff() > 1e-8) {
    throw InvalidArgument("projector basis is not orthonormal");
  }
  return phi;
}

void projector_phase(Eigen::Ref<Eigen::MatrixXcd> block, const Eigen::MatrixXcd& phi, cplx factor) {
  block += (factor - 1.0) * (phi * (phi.adjoint() * block));
}

}  // namespace

void h0_projector_phase(QeState& state, double tau, double e0, const OrbitalSet& prep) {
  const Eigen::MatrixXcd phi = unit_prep(prep);
  projector_phase(state.active(), phi, std::exp(cplx(0.0, tau * e0)));
}

void trotter_step_general(QeState& state, double t_mid, double dt, double t_f,
                          const PotentialField& v_ks, const H0Spec& h0) {
  const double s = t_mid / t_f;
  const KineticPropagator kin(state.grid(), state.kpoint().cartesian(state.grid().lengths()));
  auto a = state.active();
  kin.apply(a, 0.5 * s * dt);
  potential_phase(a, 0.5 * s * dt, v_ks.values);
  if (s < 1.0) h0_projector_phase(state, (1.0 - s) * dt, h0.e0, h0.prep);
  potential_phase(a, 0.5 * s * dt, v_ks.values);
  kin.apply(a, 0.5 * s * dt);
}

void trotter_step_tv(QeState& state, double t_mid, double dt, double t_f, const PotentialField& v0,
                     const PotentialField& v_ks) {
  const double s = t_mid / t_f;
  const KineticPropagator kin(state.grid(), state.kpoint().cartesian(state.grid().lengths()));
  auto a = state.active();
  kin.apply(a, 0.5 * dt);
  potential_phase(a, dt, ((1.0 - s) * v0.values + s * v_ks.values).eval());
  kin.apply(a, 0.5 * dt);
}

void ks_step(QeState& state, double dt, const PotentialField& v, int substeps) {
  if (substeps < 1) throw InvalidArgument("ks_step needs at least one substep");
  const KineticPropagator kin(state.grid(), state.kpoint().cartesian(state.grid().lengths()));
  const double h = dt / substeps;
  auto a = state.active();
  for (int i = 0; i < substeps; ++i) {
    kin.apply(a, 0.5 * h);
    potential_phase(a, h, v.values);
    kin.apply(a, 0.5 * h);
  }
}

AteRun run_ate(QeState state, const AteSchedule& schedule, const PotentialField& v_ks,
               const H0Spec& h0, const AteOptions& options) {
  schedule.validate();
  const bool general = schedule.splitting == Splitting::kGeneral;
  Eigen::MatrixXcd phi;
  if (general) phi = unit_prep(h0.prep);
  else if (h0.v0.values.size() != v_ks.values.size()) throw InvalidArgument("H0 potential missing");

  const KineticPropagator kin(state.grid(), state.kpoint().cartesian(state.grid().lengths()));
  const Eigen::MatrixXcd s0 = overlap_matrix(state, state);
  AteRun run;
  auto log = [&](int step, double time) {
    AteLogRow row;
    row.step = step;
    row.time = time;
    if (options.reference) row.fidelity = subspace_fidelity(state, *options.reference);
    if (options.log_overlap) row.overlap_drift = (overlap_matrix(state, state) - s0).cwiseAbs().maxCoeff();
    run.log.push_back(row);
  };
  log(0, 0.0);
  const double dt = schedule.dt();
  for (int i = 1; i <= schedule.steps; ++i) {
    const double s = schedule.t_mid(i) / schedule.t_f;
    auto a = state.active();
    if (general) {
      kin.apply(a, 0.5 * s * dt);
      potential_phase(a, 0.5 * s * dt, v_ks.values);
      projector_phase(a, phi, std::exp(cplx(0.0, (1.0 - s) * dt * h0.e0)));
      potential_phase(a, 0.5 * s * dt, v_ks.values);
      kin.apply(a, 0.5 * s * dt);
    } else {
      kin.apply(a, 0.5 * dt);
      potential_phase(a, dt, ((1.0 - s) * h0.v0.values + s * v_ks.values).eval());
      kin.apply(a, 0.5 * dt);
    }
    if (i % std::max(1, options.log_every) == 0 || i == schedule.steps) log(i, i * dt);
  }
  run.state = std::move(state);
  return run;
}

// ---------------------------------------------------------------------------

void apply_two_sided(MixedState& rho, const std::function<void(Eigen::Ref<Eigen::MatrixXcd>)>& op) {
  const auto n = static_cast<Eigen::Index>(rho.grid().size());
  Eigen::MatrixXcd& m = rho.matrix();
  const Eigen::Index d = m.rows();
  for (int pass = 0; pass < 2; ++pass) {
    Eigen::Map<Eigen::MatrixXcd> blocks(m.data(), n, d * d / n);
    op(blocks);
    m.adjointInPlace();
  }
}

void kinetic_phase(MixedState& rho, const KineticPropagator& kin, double tau) {
  kin.two_sided(rho.matrix(), tau, tau);
}

void potential_phase(MixedState& rho, double tau, const PotentialField& v) {
  if (tau == 0.0) return;
  const auto n = static_cast<Eigen::Index>(rho.grid().size());
  const Eigen::Index d = rho.dimension();
  Eigen::VectorXcd f(d);
  for (Eigen::Index i = 0; i < d; ++i) f[i] = std::exp(cplx(0.0, -tau * v.values[i % n]));
  rho.matrix() = f.asDiagonal() * rho.matrix() * f.conjugate().asDiagonal();
}

void h0_projector_phase(MixedState& rho, double tau, double e0, const OrbitalSet& prep) {
  const Eigen::MatrixXcd phi = unit_prep(prep);
  const cplx factor = std::exp(cplx(0.0, tau * e0));
  apply_two_sided(rho, [&](Eigen::Ref<Eigen::MatrixXcd> b) { projector_phase(b, phi, factor); });
}

void write_trajectory_csv(const std::vector<AteLogRow>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << "step,time_au,fidelity,purity,overlap_drift,energy_ha,success_probability,density_error\n";
  out << std::setprecision(12);
  auto field = [&](double v) {
    if (std::isnan(v)) out << "";
    else out << v;
  };
  for (const auto& r : log) {
    out << r.step << ',' << r.time << ',';
    field(r.fidelity);
    out << ',';
    field(r.purity);
    out << ',' << r.overlap_drift << ',';
    field(r.energy);
    out << ',';
    field(r.success);
    out << ',';
    field(r.density_error);
    out << '\n';
  }
}

}  // namespace qedft
