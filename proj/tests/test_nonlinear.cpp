// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "qedft/error.hpp"
#include "qedft/nonlinear.hpp"
#include "qedft/oracle.hpp"
#include "qedft/units.hpp"

using namespace qedft;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using units::kPi;
using units::kTwoPi;

namespace {

using cd = std::complex<double>;

// Two H-like centres in a small periodic box.
KsModel small_model(std::array<int, 3> q = {2, 2, 2}, double l = 4.0) {
  Cell c;
  c.lengths = {l, l, l};
  c.qubits = q;
  c.periodic = true;
  c.atoms = {Atom{"H", Vec3(0.3 * l, 0.5 * l, 0.5 * l), 1.0}, Atom{"H", Vec3(0.7 * l, 0.5 * l, 0.5 * l), 1.0}};
  return KsModel(c, default_gth_table());
}

DensityField smooth_density(const Grid& g, double n_elec) {
  Eigen::VectorXd rho(static_cast<Eigen::Index>(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3 r = g.point(i);
    rho[static_cast<Eigen::Index>(i)] = 1.0 + 0.4 * std::cos(kTwoPi * r[0] / g.lengths()[0]) +
                                        0.2 * std::sin(kTwoPi * r[2] / g.lengths()[2]);
  }
  rho *= n_elec / (rho.sum() * g.dv());
  return DensityField(rho);
}

XcFit fit_for(const DensityField& rho, int degree) {
  return xc_poly_fit(0.5 * rho.values.minCoeff(), 2.0 * rho.values.maxCoeff(), degree, 0.5);
}

Eigen::MatrixXcd random_density_matrix(Eigen::Index d, unsigned seed, int rank) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXcd a(d, rank);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = cd(nd(rng), nd(rng));
  Eigen::MatrixXcd rho = a * a.adjoint();
  return rho / rho.trace().real();
}

// rho (x) rho over label (x) grid, exp(-i phi v2(r, r')) on the grid parts,
// trace over the second copy.
Eigen::MatrixXcd brute_two_copy(const Eigen::MatrixXcd& rho, const Eigen::MatrixXd& v2, double phi) {
  const Eigen::Index d = rho.rows();
  const Eigen::Index n = v2.rows();
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(d, d);
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = 0; b < d; ++b)
      for (Eigen::Index x = 0; x < d; ++x) {
        const double ph = v2(a % n, x % n) - v2(b % n, x % n);
        out(a, b) += rho(a, b) * rho(x, x) * std::exp(cd(0.0, -phi * ph));
      }
  return out;
}

}  // namespace

TEST_CASE("kernel reproduces V_KS at the input density", "[nonlinear]") {
  const KsModel m = small_model();
  const DensityField rho_in = smooth_density(m.grid, 2.0);
  for (int n_max : {2, 3}) {
    const InteractionKernel k = build_kernel(m, rho_in, 0.3, fit_for(rho_in, n_max), n_max);
    const PotentialField want = ks_potential(rho_in, m);
    CHECK((vks_expansion(rho_in, k).values - want.values).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("kernel values", "[nonlinear]") {
  const KsModel m = small_model({2, 2, 3}, 4.0);
  const DensityField rho_in = smooth_density(m.grid, 2.0);
  const double r_c = 0.4;
  const XcFit fit = fit_for(rho_in, 2);
  const InteractionKernel k = build_kernel(m, rho_in, r_c, fit, 2);
  const double dv = m.grid.dv();
  CHECK_THAT(k.v2(5, 5), WithinRel(std::sqrt(2.0 / kPi) / r_c + 2.0 * fit.c(2) / dv, 1e-13));

  // One off-diagonal pair from the minimum-image distance.
  const std::size_t a = 0, b = 9;
  Vec3 d = m.grid.point(a) - m.grid.point(b);
  for (int x = 0; x < 3; ++x) d[x] -= m.grid.lengths()[x] * std::round(d[x] / m.grid.lengths()[x]);
  const double r = d.norm();
  const double want = std::erf(r / (std::sqrt(2.0) * r_c)) / r + 2.0 * fit.c(2) / dv * std::exp(-r * r / (2 * r_c * r_c));
  CHECK_THAT(k.v2(a, b), WithinRel(want, 1e-12));

  const Eigen::MatrixXd dense = k.v2_dense();
  CHECK((dense - dense.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(build_kernel(m, rho_in, 0.0, fit, 2), InvalidArgument);
  CHECK_THROWS_AS(build_kernel(m, rho_in, 0.3, fit, 1), InvalidArgument);
}

TEST_CASE("second-order expansion is affine in the density", "[nonlinear]") {
  const KsModel m = small_model();
  const DensityField rho_in = smooth_density(m.grid, 2.0);
  const InteractionKernel k = build_kernel(m, rho_in, 0.3, fit_for(rho_in, 2), 2);
  const DensityField a = smooth_density(m.grid, 1.0);
  DensityField b = DensityField::zeros(m.grid);
  b.values[3] = 1.0;
  DensityField ab(a.values + 2.0 * b.values);
  const Eigen::VectorXd lhs = vks_expansion(ab, k).values - k.v1;
  const Eigen::VectorXd rhs = (vks_expansion(a, k).values - k.v1) + 2.0 * (vks_expansion(b, k).values - k.v1);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("copies channel matches an explicit two-copy register", "[nonlinear]") {
  const KsModel m = small_model();
  const DensityField rho_in = smooth_density(m.grid, 2.0);
  const InteractionKernel k = build_kernel(m, rho_in, 0.3, fit_for(rho_in, 2), 2);
  const auto n = static_cast<Eigen::Index>(m.grid.size());
  const Eigen::MatrixXd v2 = k.v2_dense();
  const double dt = 0.05, n_elec = 2.0;
  for (int nb : {1, 2}) {
    const Eigen::Index d = (nb == 1 ? 1 : 2) * n;
    const Eigen::MatrixXcd r0 = random_density_matrix(d, 21 + nb, 3);
    const Eigen::MatrixXcd want = brute_two_copy(r0, v2, dt * n_elec);

    MixedState circ(m.grid, nb, r0);
    reduced_channel_step(circ, k, dt, n_elec, false, 1.0, ChannelPath::kCirculant);
    CHECK((circ.matrix() - want).cwiseAbs().maxCoeff() < 1e-12);

    MixedState dense(m.grid, nb, r0);
    reduced_channel_step(dense, k, dt, n_elec, false, 1.0, ChannelPath::kDense);
    CHECK((dense.matrix() - want).cwiseAbs().maxCoeff() < 1e-12);

    if (d <= 64) {
      const MixedState lib = two_copy_channel(MixedState(m.grid, nb, r0), v2, dt, n_elec);
      CHECK((lib.matrix() - want).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("channel leaves the diagonal and trace alone", "[nonlinear]") {
  const KsModel m = small_model();
  const DensityField rho_in = smooth_density(m.grid, 2.0);
  const InteractionKernel k = build_kernel(m, rho_in, 0.3, fit_for(rho_in, 2), 2);
  const Eigen::MatrixXcd r0 = random_density_matrix(static_cast<Eigen::Index>(m.grid.size()), 5, 2);

  MixedState still(m.grid, 1, r0);
  reduced_channel_step(still, k, 0.0, 2.0, true);
  CHECK((still.matrix() - r0).cwiseAbs().maxCoeff() == 0.0);

  MixedState rho(m.grid, 1, r0);
  reduced_channel_step(rho, k, 0.3, 2.0, false);
  CHECK((rho.matrix().diagonal() - r0.diagonal()).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(rho.hermiticity_error() < 1e-13);
  CHECK(purity(rho) <= purity(MixedState(m.grid, 1, r0)) + 1e-12);
}

TEST_CASE("channel departs from mean field at second order", "[nonlinear]") {
  const KsModel m = small_model();
  const DensityField rho_in = smooth_density(m.grid, 2.0);
  const InteractionKernel k = build_kernel(m, rho_in, 0.3, fit_for(rho_in, 2), 2);
  const Eigen::MatrixXd v2 = k.v2_dense();
  const auto n = static_cast<Eigen::Index>(m.grid.size());
  const Eigen::MatrixXcd r0 = random_density_matrix(n, 8, 1);
  const Eigen::VectorXd p = r0.diagonal().real();
  std::vector<double> errs;
  for (double dt : {0.02, 0.01, 0.005}) {
    MixedState rho(m.grid, 1, r0);
    reduced_channel_step(rho, k, dt, 2.0, false);
    const Eigen::VectorXd vh = 2.0 * v2 * p;
    Eigen::VectorXcd f(n);
    for (Eigen::Index i = 0; i < n; ++i) f[i] = std::exp(cd(0.0, -dt * vh[i]));
    const Eigen::MatrixXcd mf = f.asDiagonal() * r0 * f.conjugate().asDiagonal();
    errs.push_back((rho.matrix() - mf).norm());
  }
  CHECK_THAT(std::log2(errs[0] / errs[1]), WithinAbs(2.0, 0.05));
  CHECK_THAT(std::log2(errs[1] / errs[2]), WithinAbs(2.0, 0.05));
}

TEST_CASE("circulant and dense channel factors agree", "[nonlinear]") {
  const KsModel m = small_model({2, 2, 3}, 4.0);
  const DensityField rho_in = smooth_density(m.grid, 2.0);
  const InteractionKernel k = build_kernel(m, rho_in, 0.3, fit_for(rho_in, 2), 2);
  const Eigen::VectorXd p = rho_in.values / rho_in.values.sum();
  for (auto [sl, sr] : {std::pair{1, 1}, std::pair{1, -1}, std::pair{-1, 1}}) {
    const Eigen::MatrixXcd a = channel_factor(k, p, 0.07, 2.0, sl, sr);
    const Eigen::MatrixXcd b = channel_factor_dense(k.v2_dense(), p, 0.14, sl, sr);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("zero interaction reduces copies ATE to the linear schedule", "[nonlinear]") {
  const KsModel m = small_model({2, 2, 2}, 4.0);
  const DensityField rho_in = smooth_density(m.grid, 2.0);
  InteractionKernel k = build_kernel(m, rho_in, 0.3, fit_for(rho_in, 2), 2);
  k.w.setZero();
  k.c2 = 0.0;
  const OrbitalSet start = [&] {
    const Eigenpairs e = lowest_eigenpairs(KsHamiltonian(m.grid, PotentialField::zeros(m.grid)), 1);
    OrbitalSet o;
    o.grid = m.grid;
    o.psi = e.vectors / std::sqrt(m.grid.dv());
    return o;
  }();
  AteSchedule sched;
  sched.t_f = 3.0;
  sched.steps = 12;
  sched.splitting = Splitting::kKineticPotential;
  const PotentialField v0 = PotentialField::zeros(m.grid);
  ScfAteOptions opt;
  opt.log_every = 5;
  const ScfRun scf = run_scf_ate(encode(start), sched, k, v0, 2.0, opt);
  H0Spec h0;
  h0.v0 = v0;
  const AteRun lin = run_ate(encode(start), sched, PotentialField(k.v1), h0);
  const Eigen::MatrixXcd want = MixedState::from_pure(lin.state).matrix();
  CHECK((scf.rho.matrix() - want).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THAT(scf.log.back().purity, WithinAbs(1.0, 1e-10));
  CHECK(scf.log.back().step == 12);

  CHECK_THROWS_AS(run_scf_ate(encode(start), sched, k, v0, 4.0, opt), Unsupported);
}

TEST_CASE("PITE block form equals the Kraus form", "[nonlinear]") {
  const KsModel m = small_model({2, 2, 2}, 4.0);
  const auto n = static_cast<Eigen::Index>(m.grid.size());
  const KineticPropagator kin(m.grid, Vec3::Zero());
  const PiteConfig cfg = pite_config_for(0.05, 10, -1.0, 6.0, 0.3);
  for (int nb : {1, 2}) {
    const Eigen::MatrixXcd r0 = random_density_matrix(nb * n, 30 + nb, 2);
    MixedState a(m.grid, nb, r0), b(m.grid, nb, r0);
    PiteHamiltonian h;
    h.v = m.v_ext;
    const double pa = pite_step(a, kin, h, cfg);
    const double pb = pite_step_kraus(b, kin, m.v_ext, cfg);
    CHECK_THAT(pa, WithinAbs(pb, 1e-13));
    CHECK((a.matrix() - b.matrix()).cwiseAbs().maxCoeff() < 1e-13);
  }
  // Pure-state step agrees with the density-matrix one.
  const Eigenpairs e = lowest_eigenpairs(KsHamiltonian(m.grid, PotentialField::zeros(m.grid)), 2);
  OrbitalSet o;
  o.grid = m.grid;
  o.psi = (e.vectors.col(0) + e.vectors.col(1)) / std::sqrt(2.0 * m.grid.dv());
  QeState s = encode(o);
  MixedState rho = MixedState::from_pure(s);
  const double ps = pite_step(s, m.v_ext, cfg);
  const double pr = pite_step_kraus(rho, kin, m.v_ext, cfg);
  CHECK_THAT(ps, WithinAbs(pr, 1e-13));
  CHECK((MixedState::from_pure(s).matrix() - rho.matrix()).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("PITE success follows the cosine-squared law", "[nonlinear]") {
  Cell c;
  c.lengths = {4.0, 4.0, 4.0};
  c.qubits = {2, 2, 2};
  c.periodic = true;
  const Grid g = build_grid(c);
  const double v_const = 0.3;
  const PotentialField v(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(g.size()), v_const));
  const PiteConfig cfg = pite_config_for(0.05, 1, 0.0, 10.0, 0.4);
  for (std::size_t gi : {std::size_t{0}, std::size_t{1}, std::size_t{5}}) {
    const Vec3 gv = g.g_vector(gi);
    OrbitalSet o;
    o.grid = g;
    o.psi.resize(static_cast<Eigen::Index>(g.size()), 1);
    for (std::size_t r = 0; r < g.size(); ++r) {
      o.psi(static_cast<Eigen::Index>(r), 0) = std::polar(1.0 / std::sqrt(g.volume()), gv.dot(g.point(r)));
    }
    QeState s = encode(o);
    const double energy = 0.5 * gv.squaredNorm() + v_const;
    const double x = cfg.dt * (energy + cfg.e_shift);
    const double want = std::pow(std::cos(x + cfg.theta + kPi / 4.0), 2);
    CHECK_THAT(pite_step(s, v, cfg), WithinAbs(want, 1e-13));
  }
  CHECK_THAT(cfg.theta + kPi / 4.0, WithinAbs(0.4, 1e-15));
}

TEST_CASE("PITE configuration", "[nonlinear]") {
  const PiteConfig wide = pite_config_for(0.025, 10, -2.0, 100.0, 0.3);
  CHECK_THAT(wide.e_shift, WithinAbs(2.0, 1e-15));
  CHECK_THAT(wide.imaginary_step(), WithinRel(0.025 * std::tan(0.3), 1e-14));
  // A narrow window pulls x0 toward the middle of (0, pi/2 - span).
  const PiteConfig clamp = pite_config_for(1.0, 10, 0.0, 1.0, 0.5);
  CHECK_THAT(clamp.theta + kPi / 4.0, WithinAbs(0.5 * (kPi / 2.0 - 1.0), 1e-14));
  PiteConfig bad;
  bad.theta = kPi / 4.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("zero interaction PITE reaches the linear ground state", "[nonlinear]") {
  const KsModel m = small_model({2, 2, 2}, 4.0);
  const DensityField rho_in = smooth_density(m.grid, 2.0);
  InteractionKernel k = build_kernel(m, rho_in, 0.3, fit_for(rho_in, 2), 2);
  k.w.setZero();
  k.c2 = 0.0;
  const KsHamiltonian h(m.grid, PotentialField(k.v1));
  const Eigenpairs e = lowest_eigenpairs(h, 2);
  OrbitalSet ground;
  ground.grid = m.grid;
  ground.psi = e.vectors.col(0) / std::sqrt(m.grid.dv());
  OrbitalSet start = ground;
  start.psi = (0.6 * e.vectors.col(0) + 0.8 * e.vectors.col(1)) / std::sqrt(m.grid.dv());

  const double span = h.kinetic_diagonal().maxCoeff() + k.v1.maxCoeff() - e.values[0] + 1.0;
  const PiteConfig cfg = pite_config_for(0.05, 400, e.values[0], e.values[0] + span, 0.3);
  ScfPiteOptions opt;
  opt.reference = &ground;
  opt.log_every = 100;
  const ScfRun run = run_scf_pite(encode(start), k, 2.0, cfg, opt);
  CHECK(run.log.front().fidelity < 0.4);
  CHECK(run.log.back().fidelity > 0.999);
  CHECK_THAT(run.log.back().purity, WithinAbs(1.0, 1e-9));

  OrbitalSet two = ground;
  two.psi = e.vectors / std::sqrt(m.grid.dv());
  CHECK_THROWS_AS(run_scf_pite(encode(two), k, 2.0, cfg, opt), Unsupported);
}
