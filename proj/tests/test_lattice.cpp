// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "qedft/error.hpp"
#include "qedft/lattice.hpp"
#include "qedft/units.hpp"

using namespace qedft;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Cell cube(double l, int n, bool periodic = true) {
  Cell c;
  c.lengths = {l, l, l};
  c.qubits = {n, n, n};
  c.periodic = periodic;
  return c;
}

}  // namespace

TEST_CASE("grid of a 10 angstrom box with 5 qubits per axis") {
  const double l = units::angstrom_to_bohr(10.0);
  const Grid g = build_grid(cube(l, 5));
  CHECK(g.dims() == std::array<int, 3>{32, 32, 32});
  CHECK(g.size() == 32768u);
  CHECK_THAT(g.dv(), WithinRel(l * l * l / 32768.0, 1e-14));
  CHECK_THAT(g.dv() * static_cast<double>(g.size()), WithinRel(g.volume(), 1e-14));
}

TEST_CASE("smallest grid has points 0 and L/2 and G in {-2pi, 0}") {
  const Grid g = build_grid(cube(1.0, 1));
  CHECK(g.size() == 8u);
  std::set<double> xs, gs;
  for (std::size_t i = 0; i < g.size(); ++i) {
    xs.insert(g.point(i)[0]);
    gs.insert(g.g_vector(i)[0]);
  }
  CHECK(xs == std::set<double>{0.0, 0.5});
  REQUIRE(gs.size() == 2);
  CHECK_THAT(*gs.begin(), WithinAbs(-units::kTwoPi, 1e-14));
  CHECK_THAT(*gs.rbegin(), WithinAbs(0.0, 1e-14));
}

TEST_CASE("flat index puts z fastest") {
  Cell c = cube(2.0, 2);
  c.qubits = {1, 2, 3};
  const Grid g = build_grid(c);
  CHECK(g.index(1, 2, 3) == (1u * 4 + 2) * 8 + 3);
  const auto ijk = g.coords(g.index(1, 3, 5));
  CHECK(ijk == std::array<int, 3>{1, 3, 5});
}

TEST_CASE("centred G set is symmetric up to the unpaired most negative index") {
  const Grid g = build_grid(cube(3.0, 3));
  std::multiset<int> ms;
  for (int j = 0; j < 8; ++j) ms.insert(Grid::signed_frequency(j, 8));
  CHECK(*ms.begin() == -4);
  CHECK(*ms.rbegin() == 3);
  for (int m = 1; m <= 3; ++m) CHECK(ms.count(m) == ms.count(-m));
  (void)g;
}

TEST_CASE("3.5 angstrom cube with 4 qubits gives a 16^3 grid") {
  const Grid g = build_grid(cube(units::angstrom_to_bohr(3.5), 4));
  CHECK(g.dims() == std::array<int, 3>{16, 16, 16});
}

TEST_CASE("9x9x9 reduced cubic mesh has 35 points") {
  const auto k = kpoint_mesh(cube(6.0, 2), 9, 9, 9, true);
  CHECK(k.size() == 35u);
  double w = 0.0;
  for (const auto& p : k) {
    CHECK(p.weight > 0.0);
    w += p.weight;
    for (int a = 0; a < 3; ++a) {
      CHECK(p.frac[a] >= -0.5);
      CHECK(p.frac[a] < 0.5);
    }
  }
  CHECK_THAT(w, WithinAbs(1.0, 1e-12));
}

TEST_CASE("reduced and full meshes give the same k average") {
  const Cell c = cube(6.0, 2);
  auto f = [](const KPoint& k) {
    // Periodic and invariant under the cubic group.
    const double cx = std::cos(units::kTwoPi * k.frac[0]), cy = std::cos(units::kTwoPi * k.frac[1]),
                 cz = std::cos(units::kTwoPi * k.frac[2]);
    return cx + cy + cz + 2.0 * cx * cy * cz + cx * cx * cy * cy + cy * cy * cz * cz + cz * cz * cx * cx;
  };
  for (int n : {2, 4, 5}) {
    double a = 0.0, b = 0.0;
    for (const auto& k : kpoint_mesh(c, n, n, n, false)) a += k.weight * f(k);
    for (const auto& k : kpoint_mesh(c, n, n, n, true)) b += k.weight * f(k);
    CHECK_THAT(a, WithinAbs(b, 1e-12));
  }
}

TEST_CASE("trivial meshes") {
  const Cell c = cube(6.0, 2);
  const auto one = kpoint_mesh(c, 1, 1, 1, true);
  REQUIRE(one.size() == 1u);
  CHECK(one[0].frac.norm() == 0.0);
  CHECK(one[0].weight == 1.0);
  const auto full = kpoint_mesh(c, 2, 2, 2, false);
  CHECK(full.size() == 8u);
  for (const auto& k : full) CHECK(k.weight == 0.125);
}

TEST_CASE("reduction of a non-cubic cell is unsupported") {
  Cell c = cube(6.0, 2);
  c.lengths[2] = 7.0;
  CHECK_THROWS_AS(kpoint_mesh(c, 2, 2, 2, true), Unsupported);
  CHECK_NOTHROW(kpoint_mesh(c, 2, 2, 2, false));
}

TEST_CASE("path from Gamma to X with three points") {
  const Cell c = cube(6.0, 2);
  const auto p = kpath(c, {{"G", Vec3::Zero()}, {"X", Vec3(0, 0, 0.5)}}, 3);
  REQUIRE(p.size() == 3u);
  CHECK_THAT(p[1].frac[2], WithinAbs(0.25, 1e-15));
  CHECK_THAT(p[2].frac[2], WithinAbs(0.5, 1e-15));
  CHECK_THAT(p[2].path_coord, WithinRel(units::kTwoPi * 0.5 / 6.0, 1e-12));
  CHECK_THROWS_AS(kpath(c, {{"G", Vec3::Zero()}}, 3), InvalidArgument);
}

TEST_CASE("cell validation") {
  Cell c = cube(1.0, 1, false);
  c.lengths[1] = -1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  Cell d = cube(2.0, 1, false);
  d.atoms = {{"H", Vec3(3.0, 0.0, 0.0), 1.0}};
  CHECK_THROWS_AS(d.validate(), InvalidArgument);
  Cell e = cube(2.0, 1, true);
  e.atoms = {{"H", Vec3(3.0, -0.5, 0.0), 1.0}};
  e.validate();
  CHECK_THAT(e.atoms[0].position[0], WithinAbs(1.0, 1e-14));
  CHECK_THAT(e.atoms[0].position[1], WithinAbs(1.5, 1e-14));
}

TEST_CASE("unit conversions use CODATA 2018") {
  CHECK(units::kBohrInAngstrom == 0.529177210903);
  CHECK(units::kHartreeInEv == 27.211386245988);
  CHECK_THAT(units::bohr_to_angstrom(units::angstrom_to_bohr(1.7)), WithinRel(1.7, 1e-15));
}
