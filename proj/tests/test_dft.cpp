// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "qedft/dft.hpp"
#include "qedft/error.hpp"
#include "qedft/units.hpp"

using namespace qedft;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using units::kPi;

namespace {

Grid cube_grid(double l, int n, bool periodic = true) {
  Cell c;
  c.lengths = {l, l, l};
  c.qubits = {n, n, n};
  c.periodic = periodic;
  return build_grid(c);
}

// Simpson rule on [0, b] with m (even) intervals.
template <class F>
double simpson(F f, double b, int m) {
  const double h = b / m;
  double s = f(0.0) + f(b);
  for (int i = 1; i < m; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("GTH radial potential matches the closed form") {
  const GthParams p{"X", 3.0, 0.4, {-14.0, 9.5, -1.7, 0.08}};
  for (double r : {0.05, 0.3, 0.7, 1.5, 4.0}) {
    const double x = r / p.r_loc;
    const double expect = -p.z_ion / r * std::erf(x / std::sqrt(2.0)) +
                          std::exp(-x * x / 2) * (p.c[0] + p.c[1] * x * x + p.c[2] * std::pow(x, 4) +
                                                  p.c[3] * std::pow(x, 6));
    CHECK_THAT(gth_local_radial(p, r), WithinRel(expect, 1e-13));
  }
  CHECK_THAT(gth_local_radial(p, 0.0),
             WithinRel(-p.z_ion * std::sqrt(2.0 / kPi) / p.r_loc + p.c[0], 1e-13));
}

TEST_CASE("periodic local potential equals a direct Fourier sum of the radial form") {
  const GthParams p{"X", 1.0, 0.6, {-1.2, 0.4, 0.0, 0.0}};
  GthTable table{{"X", p}};
  const Grid g = cube_grid(5.0, 3);
  const Vec3 pos(1.3, 2.0, 0.7);
  const PotentialField v = gth_local_potential(g, {{"X", pos, 1.0}}, table);

  // Form factor by radial quadrature: short-range part numerically, long
  // range erf part analytically.
  auto form = [&](double gn) {
    auto sr = [&](double r) {
      const double x = r / p.r_loc;
      const double val = std::exp(-x * x / 2) * (p.c[0] + p.c[1] * x * x);
      return r * r * val * (r == 0.0 ? 1.0 : std::sin(gn * r) / (gn * r));
    };
    return 4.0 * kPi * simpson(sr, 12.0, 6000) -
           4.0 * kPi * p.z_ion / (gn * gn) * std::exp(-0.5 * gn * gn * p.r_loc * p.r_loc);
  };
  for (std::size_t r : {0u, 17u, 200u, 511u}) {
    std::complex<double> s = 0.0;
    for (std::size_t i = 1; i < g.size(); ++i) {
      const Vec3 gv = g.g_vector(i);
      s += form(gv.norm()) * std::exp(std::complex<double>(0.0, gv.dot(g.point(r) - pos)));
    }
    CHECK_THAT(v.values[static_cast<Eigen::Index>(r)], WithinAbs(s.real() / g.volume(), 1e-9));
  }
}

TEST_CASE("isolated local potential adds the regular G = 0 term") {
  const GthParams p{"X", 1.0, 0.6, {-1.2, 0.4, 0.0, 0.0}};
  GthTable table{{"X", p}};
  const std::vector<Atom> atoms{{"X", Vec3(1.3, 2.0, 0.7), 1.0}};
  const Grid gp = cube_grid(5.0, 3);
  const Grid gi = cube_grid(5.0, 3, false);
  const PotentialField vp = gth_local_potential(gp, atoms, table);
  const PotentialField vi = gth_local_potential(gi, atoms, table);
  auto sr = [&](double r) {
    const double x = r / p.r_loc;
    return r * r * std::exp(-x * x / 2) * (p.c[0] + p.c[1] * x * x);
  };
  const double g0 = 4.0 * kPi * simpson(sr, 12.0, 6000) + 2.0 * kPi * p.z_ion * p.r_loc * p.r_loc;
  const Eigen::VectorXd diff = vi.values - vp.values;
  CHECK_THAT(diff.maxCoeff(), WithinAbs(g0 / gi.volume(), 1e-10));
  CHECK_THAT(diff.minCoeff(), WithinAbs(g0 / gi.volume(), 1e-10));
}

TEST_CASE("Hartree potential of a cosine density") {
  const Grid g = cube_grid(4.0, 3);
  const Vec3 gv(2 * kPi / 4.0, 0.0, 2 * 2 * kPi / 4.0);
  DensityField rho = DensityField::zeros(g);
  for (std::size_t i = 0; i < g.size(); ++i) rho.values[static_cast<Eigen::Index>(i)] = 0.3 + std::cos(gv.dot(g.point(i)));
  const PotentialField v = hartree_potential(rho, g);
  for (std::size_t i = 0; i < g.size(); i += 37) {
    CHECK_THAT(v.values[static_cast<Eigen::Index>(i)],
               WithinAbs(4 * kPi / gv.squaredNorm() * std::cos(gv.dot(g.point(i))), 1e-12));
  }
  // E_H = (1/2) (4 pi / G^2) (1/2) V
  CHECK_THAT(hartree_energy(rho, g), WithinRel(0.25 * 4 * kPi / gv.squaredNorm() * g.volume(), 1e-12));
}

TEST_CASE("LDA exchange is the Slater form and v is d(rho eps)/d rho") {
  for (double rho : {1e-4, 0.01, 0.1, 1.0, 5.0}) {
    const XcPoint p = lda_point(rho);
    const double ex = -0.75 * std::cbrt(3 * rho / kPi);
    const double ec = p.eps - ex;
    CHECK(ec < 0.0);
    CHECK(ec > -0.2);
    const double h = 1e-6 * rho;
    const double d = ((rho + h) * lda_point(rho + h).eps - (rho - h) * lda_point(rho - h).eps) / (2 * h);
    CHECK_THAT(p.v, WithinRel(d, 1e-7));
  }
  // rs = 1: PW92 correlation is about -0.0598 hartree.
  const double rho1 = 3.0 / (4.0 * kPi);
  CHECK_THAT(lda_point(rho1).eps + 0.75 * std::cbrt(3 * rho1 / kPi), WithinAbs(-0.0598, 5e-4));
  CHECK(lda_point(0.0).eps == 0.0);
  CHECK(lda_point(-1.0).v == 0.0);
}

TEST_CASE("Harris energy is band energy minus double counting") {
  const Grid g = cube_grid(3.0, 2);
  DensityField rho = DensityField::zeros(g);
  for (std::size_t i = 0; i < g.size(); ++i) rho.values[static_cast<Eigen::Index>(i)] = 0.05 + 0.01 * std::sin(g.point(i)[0]);
  const DoubleCounting dc = double_counting(rho, g);
  const HarrisResult h = harris_energy(-1.5, rho, g, 0.25);
  CHECK_THAT(h.total, WithinAbs(-1.5 - dc.hartree - dc.vxc_rho + dc.xc, 1e-14));
  CHECK(h.lambda == 0.25);
  CHECK(ks_total_energy(-1.5, rho, g) == harris_energy(-1.5, rho, g).total);
}

TEST_CASE("input density mixes acceptor and donor and keeps the electron count") {
  const Grid g = cube_grid(2.0, 1);
  DensityField a(Eigen::VectorXd::Constant(8, 1.0 / g.volume()));
  DensityField d(Eigen::VectorXd::LinSpaced(8, 0.0, 1.0));
  d.values /= d.integral(g);
  std::vector<std::string> warn;
  const DensityField r = input_density(0.3, a, d, &warn);
  CHECK(warn.empty());
  CHECK_THAT(r.integral(g), WithinRel(2.0, 1e-14));
  CHECK_THAT(r.values[3], WithinRel(1.3 * a.values[3] + 0.7 * d.values[3], 1e-14));
  input_density(1.2, a, d, &warn);
  CHECK(warn.size() == 1);
  const DensityField s = superpose({a, d}, {2.0, 0.5});
  CHECK_THAT(s.values[5], WithinRel(2.0 * a.values[5] + 0.5 * d.values[5], 1e-14));
  CHECK_THROWS_AS(superpose({a}, {1.0, 2.0}), InvalidArgument);
}

TEST_CASE("polynomial fit recovers an exact polynomial") {
  auto f = [](double r) { return -0.7 * r * r + 0.2 * r * r * r; };
  const XcFit fit = xc_poly_fit(1e-3, 0.5, 3, 1e-6, f);
  CHECK_THAT(fit.c(2), WithinRel(-0.7, 1e-9));
  CHECK_THAT(fit.c(3), WithinRel(0.2, 1e-9));
  CHECK(fit.c(4) == 0.0);
  CHECK(fit.residual < 1e-10);
  CHECK_THAT(fit.energy_density(0.3), WithinRel(f(0.3), 1e-9));
}

TEST_CASE("polynomial fit of LDA reports its residual and refuses bad fits") {
  const XcFit fit = xc_poly_fit(1e-3, 0.3, 4, 0.5);
  CHECK(fit.residual > 0.0);
  CHECK(fit.residual < 0.5);
  CHECK_THROWS_AS(xc_poly_fit(1e-3, 0.3, 2, 1e-4), SolverError);
  CHECK_THROWS_AS(xc_poly_fit(0.3, 0.1, 2), InvalidArgument);
  CHECK_THROWS_AS(xc_poly_fit(1e-3, 0.1, 1), InvalidArgument);
}

TEST_CASE("variational scan takes the maximum and flags boundaries") {
  auto bump = [](double l) {
    HarrisResult r;
    r.total = -(l - 0.4) * (l - 0.4);
    return r;
  };
  const HarrisScan s = variational_harris_scan({0.0, 0.2, 0.4, 0.6, 0.8}, bump);
  CHECK(s.lambda_star == 0.4);
  CHECK(s.best_index == 2);
  CHECK_FALSE(s.boundary);
  const HarrisScan t = variational_harris_scan({0.0, 0.1}, bump);
  CHECK(t.boundary);
  auto flat = [](double) { return HarrisResult{}; };
  CHECK(variational_harris_scan({0.5, 0.2, 0.9}, flat).lambda_star == 0.2);
}

TEST_CASE("GTH table parsing") {
  const GthTable t = parse_gth_table("# comment\nH 1 0.2 -4.0 0.6 0 0  # trailing\n\nLi 1 0.78 0.8 0.28 0 0\n");
  REQUIRE(t.size() == 2);
  CHECK(t.at("H").c[1] == 0.6);
  CHECK_THROWS_AS(parse_gth_table("H 1 0.2 -4.0"), ConfigError);
  CHECK_THROWS_AS(parse_gth_table("H 1 -0.2 -4.0 0 0 0"), ConfigError);
  CHECK(default_gth_table().count("H") == 1);
  CHECK(default_gth_table().count("Li") == 1);
}

TEST_CASE("ion-ion energy of an isolated pair") {
  Cell c;
  c.lengths = {10, 10, 10};
  c.qubits = {1, 1, 1};
  c.atoms = {{"Li", Vec3(5, 5, 4), 1.0}, {"H", Vec3(5, 5, 7), 1.0}};
  CHECK_THAT(ion_ion_energy(c), WithinRel(1.0 / 3.0, 1e-14));
  c.periodic = true;
  CHECK(ion_ion_energy(c) == 0.0);
}
