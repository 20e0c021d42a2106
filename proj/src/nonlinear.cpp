// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#include "qedft/nonlinear.hpp"

#include <cmath>
#include <optional>
#include <vector>

#include "qedft/error.hpp"
#include "qedft/fft.hpp"
#include "qedft/units.hpp"

namespace qedft {

using units::kPi;

std::size_t displacement_index(const Grid& grid, std::size_t r1, std::size_t r2) {
  const auto a = grid.coords(r1);
  const auto b = grid.coords(r2);
  const auto& n = grid.dims();
  return grid.index((a[0] - b[0] + n[0]) % n[0], (a[1] - b[1] + n[1]) % n[1], (a[2] - b[2] + n[2]) % n[2]);
}

double InteractionKernel::v2(std::size_t r1, std::size_t r2) const {
  return w[static_cast<Eigen::Index>(displacement_index(grid, r1, r2))];
}

Eigen::MatrixXd InteractionKernel::v2_dense() const {
  const std::size_t n = grid.size();
  if (n > 4096) throw InvalidArgument("dense v2 requested for " + std::to_string(n) + " grid points");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v2(i, j);
  return m;
}

namespace {

// sum_r2 w(r1 - r2) f(r2), circular.
Eigen::VectorXd circular_convolve(const Grid& grid, const Eigen::VectorXd& w, const Eigen::VectorXd& f) {
  const std::size_t n = grid.size();
  std::vector<cplx> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = w[static_cast<Eigen::Index>(i)];
    b[i] = f[static_cast<Eigen::Index>(i)];
  }
  fft3d(a, grid.dims(), FftDirection::kForward);
  fft3d(b, grid.dims(), FftDirection::kForward);
  for (std::size_t i = 0; i < n; ++i) a[i] *= b[i] / static_cast<double>(n);
  fft3d(a, grid.dims(), FftDirection::kInverse);
  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) out[static_cast<Eigen::Index>(i)] = a[i].real();
  return out;
}

Eigen::VectorXd high_order_potential(const InteractionKernel& k, const Eigen::VectorXd& rho) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(rho.size());
  for (const auto& [alpha, c] : k.high_order) {
    v += (alpha * c) * rho.array().max(0.0).pow(alpha - 1).matrix();
  }
  return v;
}

}  // namespace

InteractionKernel build_kernel(const KsModel& model, const DensityField& rho_in, double r_c,
                               const XcFit& fit, int n_max) {
  if (!(r_c > 0.0)) throw InvalidArgument("smoothing radius must be positive");
  if (n_max < 2) throw InvalidArgument("kernel truncation order must be at least 2");
  InteractionKernel k;
  k.grid = model.grid;
  k.r_c = r_c;
  k.n_max = n_max;
  k.c2 = fit.c(2);
  for (int alpha = 3; alpha <= n_max; ++alpha) k.high_order[alpha] = fit.c(alpha);
  k.rho_in = rho_in;

  const Grid& g = k.grid;
  const auto n = static_cast<Eigen::Index>(g.size());
  const double dv = g.dv();
  const double s2 = std::sqrt(2.0) * r_c;
  const double contact = 2.0 * k.c2 / dv;
  k.w.resize(n);
  for (Eigen::Index d = 0; d < n; ++d) {
    const auto c = g.coords(static_cast<std::size_t>(d));
    Vec3 disp;
    for (int a = 0; a < 3; ++a) disp[a] = Grid::signed_frequency(c[a], g.dims()[a]) * g.spacing(a);
    const double r = disp.norm();
    const double coulomb = r < 1e-12 ? std::sqrt(2.0 / kPi) / r_c : std::erf(r / s2) / r;
    k.w[d] = coulomb + contact * std::exp(-r * r / (2.0 * r_c * r_c));
  }
  const PotentialField vks = ks_potential(rho_in, model);
  k.v1 = vks.values - dv * circular_convolve(g, k.w, rho_in.values) - high_order_potential(k, rho_in.values);
  return k;
}

PotentialField vks_expansion(const DensityField& rho, const InteractionKernel& kernel) {
  return PotentialField(kernel.v1 + kernel.grid.dv() * circular_convolve(kernel.grid, kernel.w, rho.values) +
                        high_order_potential(kernel, rho.values));
}

namespace {

// Flat index of (a - b) mod N per axis for every pair, column b.
class DisplacementTable {
 public:
  explicit DisplacementTable(const Grid& g) : dims_(g.dims()) {
    const std::size_t n = g.size();
    coords_.resize(n);
    for (std::size_t i = 0; i < n; ++i) coords_[i] = g.coords(i);
  }
  Eigen::Index operator()(std::size_t a, std::size_t b) const {
    const auto& x = coords_[a];
    const auto& y = coords_[b];
    return static_cast<Eigen::Index>(
        ((x[0] - y[0] + dims_[0]) % dims_[0] * dims_[1] + (x[1] - y[1] + dims_[1]) % dims_[1]) * dims_[2] +
        (x[2] - y[2] + dims_[2]) % dims_[2]);
  }

 private:
  std::array<int, 3> dims_;
  std::vector<std::array<int, 3>> coords_;
};

// Multiplies chi(r1, r1') by the alpha >= 3 contact-channel factors.
void fold_high_order(const InteractionKernel& k, const Eigen::VectorXd& p, double dt, double n_elec,
                     int sl, int sr, Eigen::MatrixXcd& chi) {
  const Eigen::Index n = chi.rows();
  const double dv = k.grid.dv();
  for (const auto& [alpha, c] : k.high_order) {
    if (c == 0.0) continue;
    const double kappa = dt * std::pow(n_elec, alpha - 1) * alpha * c / std::pow(dv, alpha - 1);
    const cplx el = std::exp(cplx(0.0, -sl * kappa)) - 1.0;
    const cplx er = std::exp(cplx(0.0, sr * kappa)) - 1.0;
    const cplx ediag = std::exp(cplx(0.0, -(sl - sr) * kappa)) - 1.0;
    const Eigen::VectorXd pa = p.array().pow(alpha - 1).matrix();
    const Eigen::VectorXcd left = cplx(1.0) + (pa.cast<cplx>() * el).array();
    for (Eigen::Index col = 0; col < n; ++col) {
      const cplx diag = chi(col, col) * (1.0 + pa[col] * ediag);
      chi.col(col).array() *= left.array() + pa[col] * er;
      chi(col, col) = diag;
    }
  }
}

}  // namespace

Eigen::MatrixXcd channel_factor(const InteractionKernel& kernel, const Eigen::VectorXd& p, double dt,
                                double n_elec, int sigma_left, int sigma_right) {
  const Grid& g = kernel.grid;
  const auto n = static_cast<Eigen::Index>(g.size());
  const double phi = dt * n_elec;
  std::vector<cplx> al(static_cast<std::size_t>(n));
  Eigen::VectorXcd ar(n);
  for (Eigen::Index s = 0; s < n; ++s) {
    al[static_cast<std::size_t>(s)] = std::exp(cplx(0.0, -sigma_left * phi * kernel.w[s]));
    ar[s] = std::conj(std::exp(cplx(0.0, -sigma_right * phi * kernel.w[s])));
  }
  // chi(:, c) = a_l (*) g_c with g_c(s) = p(s) conj(a_r(c - s)).
  const DisplacementTable disp(g);
  Eigen::MatrixXcd chi(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index s = 0; s < n; ++s)
      chi(s, c) = p[s] * ar[disp(static_cast<std::size_t>(c), static_cast<std::size_t>(s))];
  }
  fft3d(al, g.dims(), FftDirection::kForward);
  std::span<cplx> data(chi.data(), static_cast<std::size_t>(chi.size()));
  fft3d(data, g.dims(), FftDirection::kForward, static_cast<std::size_t>(n));
  const Eigen::VectorXcd scaled = Eigen::Map<Eigen::VectorXcd>(al.data(), n) / static_cast<double>(n);
  for (Eigen::Index c = 0; c < n; ++c) chi.col(c).array() *= scaled.array();
  fft3d(data, g.dims(), FftDirection::kInverse, static_cast<std::size_t>(n));
  fold_high_order(kernel, p, dt, n_elec, sigma_left, sigma_right, chi);
  return chi;
}

Eigen::MatrixXcd channel_factor_dense(const Eigen::MatrixXd& v2, const Eigen::VectorXd& p, double phi,
                                      int sigma_left, int sigma_right) {
  const Eigen::MatrixXcd al = (v2.cast<cplx>() * cplx(0.0, -sigma_left * phi)).array().exp().matrix();
  const Eigen::MatrixXcd ar = (v2.cast<cplx>() * cplx(0.0, -sigma_right * phi)).array().exp().matrix();
  return al * p.cast<cplx>().asDiagonal() * ar.adjoint();
}

void apply_channel_factor(Eigen::MatrixXcd& m, const Eigen::MatrixXcd& chi) {
  const Eigen::Index n = chi.rows();
  const Eigen::Index blocks = m.rows() / n;
  for (Eigen::Index bc = 0; bc < blocks; ++bc)
    for (Eigen::Index br = 0; br < blocks; ++br) m.block(br * n, bc * n, n, n).array() *= chi.array();
}

namespace {

Eigen::VectorXd normalised_marginal(const MixedState& rho) {
  const double t = rho.trace();
  if (!(t > 0.0)) throw SolverError("density matrix has non-positive trace");
  return rho.grid_marginal() / t;
}

// chi(r1, r1') from the dense path including the contact terms.
Eigen::MatrixXcd dense_factor(const InteractionKernel& k, const Eigen::VectorXd& p, double dt, double n_elec,
                              int sl, int sr) {
  Eigen::MatrixXcd chi = channel_factor_dense(k.v2_dense(), p, dt * n_elec, sl, sr);
  fold_high_order(k, p, dt, n_elec, sl, sr, chi);
  return chi;
}

}  // namespace

void reduced_channel_step(MixedState& rho, const InteractionKernel& kernel, double dt, double n_elec,
                          bool one_body, double strength, ChannelPath path) {
  if (one_body) potential_phase(rho, dt, PotentialField(kernel.v1));
  const double dt_eff = strength * dt;
  if (dt_eff == 0.0) return;
  const Eigen::VectorXd p = normalised_marginal(rho);
  if (path == ChannelPath::kCirculant) {
    apply_channel_factor(rho.matrix(), channel_factor(kernel, p, dt_eff, n_elec));
  } else {
    apply_channel_factor(rho.matrix(), dense_factor(kernel, p, dt_eff, n_elec, 1, 1));
  }
}

MixedState two_copy_channel(const MixedState& rho, const Eigen::MatrixXd& v2, double dt, double n_elec) {
  const auto n = static_cast<Eigen::Index>(rho.grid().size());
  const Eigen::Index d = rho.dimension();
  if (d > 64) throw InvalidArgument("two-copy reference is limited to 64-dimensional registers");
  // Joint index (x1, x2) -> x1 * d + x2.
  Eigen::MatrixXcd joint(d * d, d * d);
  for (Eigen::Index a1 = 0; a1 < d; ++a1)
    for (Eigen::Index a2 = 0; a2 < d; ++a2)
      for (Eigen::Index b1 = 0; b1 < d; ++b1)
        for (Eigen::Index b2 = 0; b2 < d; ++b2)
          joint(a1 * d + a2, b1 * d + b2) = rho.matrix()(a1, b1) * rho.matrix()(a2, b2);
  Eigen::VectorXcd u(d * d);
  for (Eigen::Index x1 = 0; x1 < d; ++x1)
    for (Eigen::Index x2 = 0; x2 < d; ++x2)
      u[x1 * d + x2] = std::exp(cplx(0.0, -dt * n_elec * v2(x1 % n, x2 % n)));
  joint = u.asDiagonal() * joint * u.conjugate().asDiagonal();
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(d, d);
  for (Eigen::Index a1 = 0; a1 < d; ++a1)
    for (Eigen::Index b1 = 0; b1 < d; ++b1)
      for (Eigen::Index x2 = 0; x2 < d; ++x2) out(a1, b1) += joint(a1 * d + x2, b1 * d + x2);
  return MixedState(rho.grid(), rho.n_band(), out);
}

namespace {

double density_distance(const Eigen::VectorXd& a, const DensityField* ref, double dv) {
  if (!ref) return std::numeric_limits<double>::quiet_NaN();
  return (a - ref->values).cwiseAbs().sum() * dv;
}

Eigen::VectorXd mixed_density(const MixedState& rho, double n_elec) {
  return normalised_marginal(rho) * (n_elec / rho.grid().dv());
}

}  // namespace

ScfRun run_scf_ate(const QeState& initial, const AteSchedule& schedule, const InteractionKernel& kernel,
                   const PotentialField& v0, double n_elec, const ScfAteOptions& options) {
  schedule.validate();
  if (initial.n_band() != static_cast<int>(std::lround(n_elec / 2.0))) {
    throw Unsupported("the copies channel requires N_band = N_elec / 2 (no unoccupied bands)");
  }
  ScfRun run;
  run.rho = MixedState::from_pure(initial);
  const KineticPropagator kin(initial.grid(), initial.kpoint().cartesian(initial.grid().lengths()));
  const double dv = initial.grid().dv();
  const double dt = schedule.dt();
  // Adjacent kinetic halves are merged: the stored matrix lags the physical
  // one by exp(-i pending T). Purity is unaffected and fidelity uses a
  // reference moved back by the same amount.
  double pending = 0.0;
  std::optional<OrbitalSet> shifted;
  if (options.reference) {
    shifted = *options.reference;
    kin.apply(shifted->psi, -0.5 * dt);
  }
  auto sync = [&] {
    kinetic_phase(run.rho, kin, pending);
    pending = 0.0;
  };
  Eigen::VectorXcd top;
  auto log = [&](int step, bool with_density) {
    if (with_density) sync();
    AteLogRow row;
    row.step = step;
    row.time = step * dt;
    if (options.log_purity) row.purity = largest_eigenpair(run.rho.matrix(), top) / run.rho.trace();
    if (options.reference) {
      row.fidelity = subspace_fidelity(run.rho, pending == 0.0 ? *options.reference : *shifted);
    }
    if (with_density) {
      row.density_error = density_distance(mixed_density(run.rho, n_elec), options.reference_density, dv);
    }
    run.log.push_back(row);
  };
  log(0, true);
  const int every = std::max(1, options.log_every);
  for (int i = 1; i <= schedule.steps; ++i) {
    const double s = options.ramp == RampMode::kRamped ? schedule.t_mid(i) / schedule.t_f : 1.0;
    kinetic_phase(run.rho, kin, pending + 0.5 * dt);
    potential_phase(run.rho, dt, PotentialField((1.0 - s) * v0.values + s * kernel.v1));
    reduced_channel_step(run.rho, kernel, dt, n_elec, false, s);
    pending = 0.5 * dt;
    const bool density = i == schedule.steps || (options.density_every > 0 && i % options.density_every == 0);
    if (i % every == 0 || density) log(i, density);
  }
  sync();
  run.density = DensityField(mixed_density(run.rho, n_elec));
  return run;
}

double ks_energy_of_state(const QeState& state, const KsModel& model) {
  const Grid& g = state.grid();
  const KineticPropagator kin(g, state.kpoint().cartesian(g.lengths()));
  Eigen::MatrixXcd a = state.active();
  std::span<cplx> data(a.data(), static_cast<std::size_t>(a.size()));
  fft3d_unitary(data, g.dims(), FftDirection::kForward, static_cast<std::size_t>(a.cols()));
  // Amplitudes carry sqrt(dV / N_band); the sum over bands times 2 N_band
  // gives 2 sum_i <psi_i|T|psi_i>.
  const double kinetic = 2.0 * state.n_band() * (a.cwiseAbs2().transpose() * kin.half_g2()).sum();
  const DensityField rho(band_density(state));
  return kinetic + model.v_ext.values.dot(rho.values) * g.dv() + hartree_energy(rho, g) + lda_xc(rho, g).energy;
}

namespace {

void orthonormalise(QeState& state) {
  auto a = state.active();
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(a);
  Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(a.rows(), a.cols());
  // Keep the phase convention of the input columns.
  for (Eigen::Index c = 0; c < q.cols(); ++c) {
    const cplx ov = q.col(c).dot(a.col(c));
    if (std::abs(ov) > 0.0) q.col(c) *= ov / std::abs(ov);
  }
  a = q / std::sqrt(static_cast<double>(state.n_band()));
}

}  // namespace

ExactNonlinearRun run_exact_nonlinear_rte(const QeState& initial, const AteSchedule& schedule,
                                          const PotentialField& v0, NonlinearFlavor flavor,
                                          const ExactNonlinearOptions& options) {
  if (!options.model) throw InvalidArgument("exact nonlinear propagation needs the KS model");
  schedule.validate();
  const KsModel& model = *options.model;
  ExactNonlinearRun run;
  run.state = initial;
  const Grid& g = initial.grid();
  const KineticPropagator kin(g, initial.kpoint().cartesian(g.lengths()));
  auto log = [&](int step, double time) {
    AteLogRow row;
    row.step = step;
    row.time = time;
    if (options.reference) row.fidelity = subspace_fidelity(run.state, *options.reference);
    row.energy = ks_energy_of_state(run.state, model);
    row.density_error = density_distance(band_density(run.state), options.reference_density, g.dv());
    run.log.push_back(row);
  };
  log(0, 0.0);
  const double dt = schedule.dt();
  for (int i = 1; i <= schedule.steps; ++i) {
    const DensityField rho(band_density(run.state));
    const PotentialField v = ks_potential(rho, model);
    auto a = run.state.active();
    if (flavor == NonlinearFlavor::kAte) {
      const double s = schedule.t_mid(i) / schedule.t_f;
      kin.apply(a, 0.5 * dt);
      potential_phase(a, dt, ((1.0 - s) * v0.values + s * v.values).eval());
      kin.apply(a, 0.5 * dt);
    } else {
      kin.apply_imaginary(a, 0.5 * dt);
      for (Eigen::Index c = 0; c < a.cols(); ++c) a.col(c).array() *= (-dt * v.values).array().exp().cast<cplx>();
      kin.apply_imaginary(a, 0.5 * dt);
      orthonormalise(run.state);
    }
    if (i % std::max(1, options.log_every) == 0 || i == schedule.steps) log(i, i * dt);
  }
  run.density = DensityField(band_density(run.state));
  return run;
}

// ---------------------------------------------------------------------------

void PiteConfig::validate() const {
  if (!(dt > 0.0)) throw InvalidArgument("PITE needs dt > 0");
  if (steps < 1) throw InvalidArgument("PITE needs at least one step");
  const double x = theta + kPi / 4.0;
  if (!(x > 0.0 && x < kPi / 2.0)) throw InvalidArgument("PITE needs theta + pi/4 in (0, pi/2)");
}

double PiteConfig::imaginary_step() const { return dt * std::tan(theta + kPi / 4.0); }

PiteConfig pite_config_for(double dt, int steps, double e_low, double e_high, double x0) {
  PiteConfig c;
  c.dt = dt;
  c.steps = steps;
  c.e_shift = -e_low;
  const double span = dt * (e_high - e_low);
  if (span < kPi / 2.0) x0 = std::min(x0, 0.5 * (kPi / 2.0 - span));
  c.theta = x0 - kPi / 4.0;
  c.validate();
  return c;
}

namespace {

void diagonal_phases(Eigen::MatrixXcd& m, const Eigen::VectorXd& v, double tl, double tr) {
  const Eigen::Index n = v.size();
  const Eigen::Index d = m.rows();
  Eigen::VectorXcd fl(d), fr(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    fl[i] = std::exp(cplx(0.0, -tl * v[i % n]));
    fr[i] = std::exp(cplx(0.0, tr * v[i % n]));
  }
  m = fl.asDiagonal() * m * fr.asDiagonal();
}

}  // namespace

double pite_step(MixedState& rho, const KineticPropagator& kin, const PiteHamiltonian& h,
                 const PiteConfig& config) {
  config.validate();
  const double dt = config.dt;
  const Eigen::VectorXd v = (h.v.values.array() + config.e_shift).matrix();
  Eigen::MatrixXcd chi_pp, chi_pm;
  if (h.kernel) {
    const Eigen::VectorXd p = normalised_marginal(rho);
    chi_pp = channel_factor(*h.kernel, p, dt, h.n_elec, 1, 1);
    chi_pm = channel_factor(*h.kernel, p, dt, h.n_elec, 1, -1);
  }
  // Y_ab = U_a rho U_b^dagger with U_+ = R and U_- = R^dagger; y arrives
  // with the first left kinetic half already applied.
  auto block = [&](Eigen::MatrixXcd y, int sa, int sb) {
    kin.right(y, sb * 0.5 * dt);
    diagonal_phases(y, v, sa * dt, sb * dt);
    if (h.kernel) {
      if (sa != sb) apply_channel_factor(y, chi_pm);
      else if (sa > 0) apply_channel_factor(y, chi_pp);
      else apply_channel_factor(y, chi_pp.conjugate().eval());
    }
    kin.two_sided(y, sa * 0.5 * dt, sb * 0.5 * dt);
    return y;
  };
  Eigen::MatrixXcd lp = rho.matrix();
  kin.left(lp, 0.5 * dt);
  Eigen::MatrixXcd lm = rho.matrix();
  kin.left(lm, -0.5 * dt);
  const Eigen::MatrixXcd y01 = block(lp, 1, -1);
  Eigen::MatrixXcd m = block(std::move(lp), 1, 1);
  m += block(std::move(lm), -1, -1);
  const cplx c = cplx(0.0, -1.0) * std::exp(cplx(0.0, -2.0 * config.theta));
  m += c * y01 + std::conj(c) * y01.adjoint();
  m *= 0.25;
  const double success = m.trace().real();
  if (!(success > 1e-14)) throw SolverError("PITE success probability vanished");
  rho.matrix() = 0.5 * (m + m.adjoint()) / success;
  return success;
}

namespace {

// K x = (R x + i e^{2 i theta} R^dagger x) / 2 for every column block.
void kraus_apply(Eigen::Ref<Eigen::MatrixXcd> b, const KineticPropagator& kin, const Eigen::VectorXd& v,
                 const PiteConfig& config) {
  Eigen::MatrixXcd fwd = b;
  Eigen::MatrixXcd bwd = b;
  for (int sign : {1, -1}) {
    Eigen::MatrixXcd& x = sign > 0 ? fwd : bwd;
    kin.apply(x, sign * 0.5 * config.dt);
    potential_phase(x, sign * config.dt, v);
    kin.apply(x, sign * 0.5 * config.dt);
  }
  b = 0.5 * (fwd + cplx(0.0, 1.0) * std::exp(cplx(0.0, 2.0 * config.theta)) * bwd);
}

}  // namespace

double pite_step_kraus(MixedState& rho, const KineticPropagator& kin, const PotentialField& v,
                       const PiteConfig& config) {
  config.validate();
  const Eigen::VectorXd vs = (v.values.array() + config.e_shift).matrix();
  const double before = rho.trace();
  apply_two_sided(rho, [&](Eigen::Ref<Eigen::MatrixXcd> b) { kraus_apply(b, kin, vs, config); });
  const double success = rho.trace() / before;
  if (!(success > 1e-14)) throw SolverError("PITE success probability vanished");
  rho.matrix() /= rho.trace();
  return success;
}

double pite_step(QeState& state, const PotentialField& v, const PiteConfig& config) {
  config.validate();
  const KineticPropagator kin(state.grid(), state.kpoint().cartesian(state.grid().lengths()));
  const Eigen::VectorXd vs = (v.values.array() + config.e_shift).matrix();
  const double before = state.amps().squaredNorm();
  kraus_apply(state.active(), kin, vs, config);
  const double after = state.amps().squaredNorm();
  const double success = after / before;
  if (!(success > 1e-14)) throw SolverError("PITE success probability vanished");
  state.amps() *= std::sqrt(before / after);
  return success;
}

ScfRun run_scf_pite(const QeState& initial, const InteractionKernel& kernel, double n_elec,
                    const PiteConfig& config, const ScfPiteOptions& options) {
  config.validate();
  if (initial.n_band() != 1) throw Unsupported("PITE with copies supports a single band only");
  ScfRun run;
  run.rho = MixedState::from_pure(initial);
  const KineticPropagator kin(initial.grid(), initial.kpoint().cartesian(initial.grid().lengths()));
  PiteHamiltonian h;
  h.v = PotentialField(kernel.v1);
  h.kernel = &kernel;
  h.n_elec = n_elec;
  const double dv = initial.grid().dv();
  Eigen::VectorXcd top;
  auto log = [&](int step, double success) {
    AteLogRow row;
    row.step = step;
    row.time = step * config.imaginary_step();
    row.success = success;
    if (options.log_purity) row.purity = largest_eigenpair(run.rho.matrix(), top) / run.rho.trace();
    if (options.reference) row.fidelity = subspace_fidelity(run.rho, *options.reference);
    row.density_error = density_distance(mixed_density(run.rho, n_elec), options.reference_density, dv);
    run.log.push_back(row);
  };
  log(0, 1.0);
  for (int i = 1; i <= config.steps; ++i) {
    const double success = pite_step(run.rho, kin, h, config);
    if (i % std::max(1, options.log_every) == 0 || i == config.steps) log(i, success);
  }
  run.density = DensityField(mixed_density(run.rho, n_elec));
  return run;
}

}  // namespace qedft
