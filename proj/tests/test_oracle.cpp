// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "qedft/error.hpp"
#include "qedft/oracle.hpp"
#include "qedft/units.hpp"

using namespace qedft;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using units::kTwoPi;

namespace {

using cd = std::complex<double>;

Grid grid_of(std::array<int, 3> q, double l, bool periodic = true) {
  Cell c;
  c.lengths = {l, l, l};
  c.qubits = q;
  c.periodic = periodic;
  return build_grid(c);
}

// Explicit DFT matrices, independent of the FFT code: T = F^-1 diag F.
Eigen::MatrixXcd dense_kinetic(const Grid& g, const Vec3& k) {
  const auto& d = g.dims();
  const auto n = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXcd t = Eigen::MatrixXcd::Zero(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    const auto ra = g.coords(static_cast<std::size_t>(a));
    for (Eigen::Index b = 0; b < n; ++b) {
      const auto rb = g.coords(static_cast<std::size_t>(b));
      cd s = 0.0;
      for (int i = 0; i < d[0]; ++i)
        for (int j = 0; j < d[1]; ++j)
          for (int l = 0; l < d[2]; ++l) {
            const int m[3] = {Grid::signed_frequency(i, d[0]), Grid::signed_frequency(j, d[1]),
                              Grid::signed_frequency(l, d[2])};
            double ph = 0.0, g2 = 0.0;
            for (int x = 0; x < 3; ++x) {
              const double gx = kTwoPi * m[x] / g.lengths()[x] + k[x];
              g2 += gx * gx;
              ph += kTwoPi * m[x] * (ra[x] - rb[x]) / d[x];
            }
            s += 0.5 * g2 * std::polar(1.0, ph);
          }
      t(a, b) = s / static_cast<double>(n);
    }
  }
  return t;
}

Eigen::VectorXd smooth_well(const Grid& g, double depth) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(g.size()));
  const Vec3 c(0.5 * g.lengths()[0], 0.5 * g.lengths()[1], 0.5 * g.lengths()[2]);
  for (std::size_t i = 0; i < g.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = -depth * std::exp(-(g.point(i) - c).squaredNorm() / 2.0);
  }
  return v;
}

// Scaling and squaring with a Taylor series, a second route to exp(A).
Eigen::MatrixXcd expm_taylor(const Eigen::MatrixXcd& a) {
  const double nrm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int s = std::max(0, static_cast<int>(std::ceil(std::log2(nrm))) + 1);
  const Eigen::MatrixXcd b = a / std::pow(2.0, s);
  Eigen::MatrixXcd term = Eigen::MatrixXcd::Identity(a.rows(), a.cols()), sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * b / static_cast<double>(k);
    sum += term;
  }
  for (int i = 0; i < s; ++i) sum = sum * sum;
  return sum;
}

}  // namespace

TEST_CASE("free Hamiltonian: plane waves are eigenvectors") {
  const Grid g = grid_of({3, 3, 3}, 5.0);
  const Vec3 k(0.1, -0.2, 0.05);
  const KsHamiltonian h(g, PotentialField::zeros(g), k);
  Eigen::MatrixXcd pw(static_cast<Eigen::Index>(g.size()), 1);
  const Vec3 gv(kTwoPi * 1 / 5.0, kTwoPi * -2 / 5.0, 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) pw(static_cast<Eigen::Index>(i), 0) = std::polar(1.0, gv.dot(g.point(i)));
  const Eigen::MatrixXcd hp = h.apply(pw);
  CHECK((hp - 0.5 * (gv + k).squaredNorm() * pw).norm() < 1e-10 * pw.norm());
}

TEST_CASE("matrix-free H matches explicit dense assembly on 8^3") {
  const Grid g = grid_of({3, 3, 3}, 4.0);
  const Vec3 k(0.3, 0.0, -0.1);
  const PotentialField v(smooth_well(g, 2.0));
  const KsHamiltonian h(g, v, k);
  Eigen::MatrixXcd ref = dense_kinetic(g, k);
  ref.diagonal() += v.values.cast<cd>();
  CHECK((h.dense() - ref).cwiseAbs().maxCoeff() < 1e-12);
  std::mt19937 rng(1);
  std::normal_distribution<double> nd;
  Eigen::MatrixXcd x(512, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = {nd(rng), nd(rng)};
  CHECK((h.apply(x) - ref * x).cwiseAbs().maxCoeff() < 1e-11);
  // <a|Hb> = <Ha|b>*
  const cd ab = x.col(0).dot(h.apply(x).col(1));
  const cd ba = x.col(1).dot(h.apply(x).col(0));
  CHECK(std::abs(ab - std::conj(ba)) < 1e-12 * std::abs(ab));
}

TEST_CASE("V = 0 eigenvalues are the sorted |G+k|^2 / 2") {
  const Grid g = grid_of({3, 3, 3}, 4.0);
  const Vec3 k(0.2, 0.1, 0.0);
  const KsHamiltonian h(g, PotentialField::zeros(g), k);
  std::vector<double> expect(h.kinetic_diagonal().data(), h.kinetic_diagonal().data() + 512);
  std::sort(expect.begin(), expect.end());
  EigenOptions eo;
  eo.dense_limit = 0;
  const Eigenpairs ep = lowest_eigenpairs(h, 8, eo);
  for (int i = 0; i < 8; ++i) CHECK_THAT(ep.values[i], WithinAbs(expect[static_cast<std::size_t>(i)], 1e-9));
}

TEST_CASE("LOBPCG agrees with the dense solver on 8^3") {
  const Grid g = grid_of({3, 3, 3}, 6.0, false);
  const KsHamiltonian h(g, PotentialField(smooth_well(g, 3.0)));
  EigenOptions it, dn;
  it.dense_limit = 0;
  dn.dense_limit = 4096;
  const Eigenpairs a = lowest_eigenpairs(h, 6, it);
  const Eigenpairs b = lowest_eigenpairs(h, 6, dn);
  for (int i = 0; i < 6; ++i) {
    CHECK_THAT(a.values[i], WithinAbs(b.values[i], 1e-9));
    CHECK(a.residuals[i] < 1e-8);
  }
  const Eigen::MatrixXcd gram = a.vectors.adjoint() * a.vectors;
  CHECK((gram - Eigen::MatrixXcd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("bound-state count of a smooth well matches the dense count") {
  const Grid g = grid_of({3, 3, 3}, 8.0, false);
  const PotentialField v(smooth_well(g, 4.0));
  const KsHamiltonian h(g, v);
  const double barrier = v.values.maxCoeff();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h.dense(), Eigen::EigenvaluesOnly);
  int dense_count = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) dense_count += es.eigenvalues()[i] < barrier;
  REQUIRE(dense_count >= 1);
  EigenOptions it;
  it.dense_limit = 0;
  const Eigenpairs ep = lowest_eigenpairs(h, dense_count + 2, it);
  int count = 0;
  for (Eigen::Index i = 0; i < ep.values.size(); ++i) count += ep.values[i] < barrier;
  CHECK(count == dense_count);
}

TEST_CASE("dense propagators") {
  std::mt19937 rng(3);
  std::normal_distribution<double> nd;
  Eigen::MatrixXcd a(64, 64);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = {nd(rng), nd(rng)};
  const Eigen::MatrixXcd h = 0.1 * (a + a.adjoint());
  const Eigen::MatrixXcd u = exact_propagator(h, 0.7);
  CHECK((u * u.adjoint() - Eigen::MatrixXcd::Identity(64, 64)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((u - expm_taylor(cd(0.0, -0.7) * h)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((exact_propagator(h, 0.4, true) - expm_taylor(-0.4 * h)).cwiseAbs().maxCoeff() < 1e-10);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
  const Eigen::VectorXcd v = es.eigenvectors().col(3);
  const Eigen::VectorXcd w = exact_propagator(h, 0.9, true) * v;
  CHECK((w - std::exp(-0.9 * es.eigenvalues()[3]) * v).norm() < 1e-12);
}

TEST_CASE("smearing and the smeared Fermi level") {
  CHECK(smearing(-1.0, 0.0) == 1.0);
  CHECK(smearing(1.0, 0.0) == 0.0);
  CHECK_THAT(smearing(0.0, 0.1), WithinAbs(0.5, 1e-15));
  CHECK_THAT(smearing(0.05, 0.1), WithinAbs(0.5 * std::erfc(0.5), 1e-15));
  // Symmetric levels at half filling put E_F at zero; a wide sigma keeps
  // the count strictly increasing there.
  std::vector<Eigen::VectorXd> eps{Eigen::Vector2d(-1.0, 1.0), Eigen::Vector2d(-0.5, 0.5)};
  const double ef = smeared_fermi_level(eps, {0.5, 0.5}, 2.0, 0.5);
  CHECK_THAT(ef, WithinAbs(0.0, 1e-9));
  double n = 0.0;
  const double ef3 = smeared_fermi_level(eps, {0.25, 0.75}, 2.6, 0.2);
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 2; ++i) n += (k ? 0.75 : 0.25) * 2.0 * smearing(eps[static_cast<std::size_t>(k)][i] - ef3, 0.2);
  CHECK_THAT(n, WithinAbs(2.6, 1e-9));
}

TEST_CASE("SCF fixed point and variational consistency for a hydrogen atom") {
  Cell c;
  c.lengths = {7.0, 7.0, 7.0};
  c.qubits = {4, 4, 4};
  c.atoms = {{"H", Vec3(3.5, 3.5, 3.5), 0.0}};
  const KsModel model(c, default_gth_table());
  CHECK(model.electron_count() == 1.0);
  DensityField rho0 = DensityField::zeros(model.grid);
  for (std::size_t i = 0; i < model.grid.size(); ++i) {
    rho0.values[static_cast<Eigen::Index>(i)] = std::exp(-2.0 * (model.grid.point(i) - c.atoms[0].position).norm());
  }
  rho0.values *= 1.0 / rho0.integral(model.grid);
  OracleOptions o;
  o.tol = 1e-9;
  const OracleResult r = scf_loop(model, rho0, o);
  REQUIRE(r.converged);
  CHECK_THAT(r.density.integral(model.grid), WithinRel(1.0, 1e-10));

  // Restarting from the converged density takes one iteration.
  const OracleResult again = scf_loop(model, r.density, o);
  CHECK(again.iterations == 1);
  CHECK_THAT(again.total_energy, WithinAbs(r.total_energy, 1e-8));

  // E_KS at the SCF density is below E_KS of non-self-consistent densities.
  OracleOptions nsc;
  nsc.non_self_consistent = true;
  for (double mix : {0.0, 0.5}) {
    DensityField trial(mix * r.density.values + (1.0 - mix) * rho0.values);
    const OracleResult t = scf_loop(model, trial, nsc);
    CHECK(r.total_energy <= t.total_energy + 1e-10);
  }

  // Eigen-residual of the converged orbital.
  const KsHamiltonian h(model.grid, r.potential);
  const Eigen::MatrixXcd psi = r.orbitals[0].psi;
  const Eigen::MatrixXcd hp = h.apply(psi);
  const double res = (hp.col(0) - r.eigenvalues[0][0] * psi.col(0)).norm() / psi.col(0).norm();
  CHECK(res < 1e-6);
  CHECK_THAT(psi.col(0).squaredNorm() * model.grid.dv(), WithinAbs(1.0, 1e-10));
}

TEST_CASE("oracle argument checks") {
  Cell c;
  c.lengths = {4.0, 4.0, 4.0};
  c.qubits = {2, 2, 2};
  c.atoms = {{"H", Vec3(2, 2, 2), 0.0}};
  const KsModel model(c, default_gth_table());
  OracleOptions bad;
  bad.mixing = 0.0;
  CHECK_THROWS_AS(scf_loop(model, DensityField::zeros(model.grid), bad), InvalidArgument);
  OracleOptions smear;
  smear.occupation = Occupation::kSmeared;
  CHECK_THROWS_AS(scf_loop(model, DensityField::zeros(model.grid), smear), InvalidArgument);
}
