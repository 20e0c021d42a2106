// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#include "qedft/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "qedft/error.hpp"
#include "qedft/units.hpp"

namespace qedft {

void Cell::validate() {
  for (int a = 0; a < 3; ++a) {
    if (!(lengths[a] > 0.0) || !std::isfinite(lengths[a])) {
      throw InvalidArgument("cell lengths must be positive and finite");
    }
    if (qubits[a] < 0 || qubits[a] > 12) {
      throw InvalidArgument("qubits per axis must lie in [0, 12]");
    }
  }
  for (auto& atom : atoms) {
    for (int a = 0; a < 3; ++a) {
      double& x = atom.position[a];
      if (periodic) {
        x -= lengths[a] * std::floor(x / lengths[a]);
        if (x >= lengths[a]) x = 0.0;
      } else if (x < 0.0 || x >= lengths[a]) {
        throw InvalidArgument("atom '" + atom.species + "' lies outside the non-periodic box");
      }
    }
  }
}

double Cell::electron_count() const {
  double n = 0.0;
  for (const auto& atom : atoms) n += atom.z_ion;
  return n;
}

bool Cell::is_cubic() const {
  const double l = lengths[0];
  return std::abs(lengths[1] - l) <= 1e-10 * l && std::abs(lengths[2] - l) <= 1e-10 * l;
}

Grid::Grid(const Cell& cell) : lengths_(cell.lengths), periodic_(cell.periodic) {
  size_ = 1;
  for (int a = 0; a < 3; ++a) {
    if (!(cell.lengths[a] > 0.0)) throw InvalidArgument("cell lengths must be positive");
    if (cell.qubits[a] < 0) throw InvalidArgument("qubit counts must be non-negative");
    dims_[a] = 1 << cell.qubits[a];
    size_ *= static_cast<std::size_t>(dims_[a]);
  }
  dv_ = volume() / static_cast<double>(size_);
}

std::array<int, 3> Grid::coords(std::size_t idx) const {
  const int k = static_cast<int>(idx % dims_[2]);
  idx /= dims_[2];
  const int j = static_cast<int>(idx % dims_[1]);
  const int i = static_cast<int>(idx / dims_[1]);
  return {i, j, k};
}

Vec3 Grid::point(std::size_t idx) const {
  const auto c = coords(idx);
  return {c[0] * spacing(0), c[1] * spacing(1), c[2] * spacing(2)};
}

Vec3 Grid::g_vector(std::size_t idx) const {
  const auto c = coords(idx);
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    g[a] = units::kTwoPi * signed_frequency(c[a], dims_[a]) / lengths_[a];
  }
  return g;
}

std::vector<double> Grid::g_plus_k_squared(const Vec3& k_cart) const {
  std::array<std::vector<double>, 3> axis;
  for (int a = 0; a < 3; ++a) {
    axis[a].resize(dims_[a]);
    for (int j = 0; j < dims_[a]; ++j) {
      const double g = units::kTwoPi * signed_frequency(j, dims_[a]) / lengths_[a] + k_cart[a];
      axis[a][j] = g * g;
    }
  }
  std::vector<double> out(size_);
  std::size_t idx = 0;
  for (int i = 0; i < dims_[0]; ++i)
    for (int j = 0; j < dims_[1]; ++j)
      for (int k = 0; k < dims_[2]; ++k) out[idx++] = axis[0][i] + axis[1][j] + axis[2][k];
  return out;
}

Vec3 Grid::minimum_image(const Vec3& d) const {
  Vec3 out = d;
  for (int a = 0; a < 3; ++a) out[a] -= lengths_[a] * std::round(d[a] / lengths_[a]);
  return out;
}

Vec3 Grid::displacement(const Vec3& a, const Vec3& b) const {
  return periodic_ ? minimum_image(a - b) : Vec3(a - b);
}

Grid build_grid(const Cell& cell) { return Grid(cell); }

Vec3 KPoint::cartesian(const std::array<double, 3>& lengths) const {
  return {units::kTwoPi * frac[0] / lengths[0], units::kTwoPi * frac[1] / lengths[1],
          units::kTwoPi * frac[2] / lengths[2]};
}

namespace {

int mesh_lo(int n) { return -(n / 2); }

int wrap_mesh(int m, int n) {
  const int lo = mesh_lo(n);
  int r = (m - lo) % n;
  if (r < 0) r += n;
  return r + lo;
}

}  // namespace

std::vector<KPoint> kpoint_mesh(const Cell& cell, int n1, int n2, int n3, bool reduce) {
  if (n1 < 1 || n2 < 1 || n3 < 1) throw InvalidArgument("k-mesh counts must be >= 1");
  const std::array<int, 3> n{n1, n2, n3};
  const double total = static_cast<double>(n1) * n2 * n3;

  if (reduce && (!cell.is_cubic() || n1 != n2 || n2 != n3)) {
    throw Unsupported("k-point symmetry reduction is implemented for cubic cells with equal mesh counts only");
  }

  std::map<std::array<int, 3>, double> folded;
  std::vector<std::array<int, 3>> order;
  for (int a = mesh_lo(n1); a < mesh_lo(n1) + n1; ++a) {
    for (int b = mesh_lo(n2); b < mesh_lo(n2) + n2; ++b) {
      for (int c = mesh_lo(n3); c < mesh_lo(n3) + n3; ++c) {
        std::array<int, 3> key{a, b, c};
        if (reduce) {
          // Cubic point group: every axis permutation combined with every
          // sign flip. The canonical representative is the smallest image.
          std::array<int, 3> perm{0, 1, 2};
          std::array<int, 3> best = key;
          do {
            for (int s = 0; s < 8; ++s) {
              std::array<int, 3> img;
              for (int t = 0; t < 3; ++t) {
                const int sign = (s >> t) & 1 ? -1 : 1;
                img[t] = wrap_mesh(sign * key[perm[t]], n[t]);
              }
              best = std::min(best, img);
            }
          } while (std::next_permutation(perm.begin(), perm.end()));
          key = best;
        }
        auto [it, inserted] = folded.emplace(key, 0.0);
        if (inserted) order.push_back(key);
        it->second += 1.0 / total;
      }
    }
  }

  std::vector<KPoint> out;
  out.reserve(order.size());
  for (const auto& key : order) {
    KPoint kp;
    kp.frac = Vec3(static_cast<double>(key[0]) / n1, static_cast<double>(key[1]) / n2,
                   static_cast<double>(key[2]) / n3);
    kp.weight = folded[key];
    out.push_back(kp);
  }
  return out;
}

std::vector<KPoint> kpath(const Cell& cell, const std::vector<PathWaypoint>& waypoints,
                          int points_per_segment) {
  if (waypoints.size() < 2) throw InvalidArgument("a k-path needs at least two waypoints");
  if (points_per_segment < 1) throw InvalidArgument("empty k-path segment");

  std::vector<KPoint> out;
  double coord = 0.0;
  for (std::size_t s = 0; s + 1 < waypoints.size(); ++s) {
    const Vec3& a = waypoints[s].frac;
    const Vec3& b = waypoints[s + 1].frac;
    KPoint ka, kb;
    ka.frac = a;
    kb.frac = b;
    const double seg_len = (kb.cartesian(cell.lengths) - ka.cartesian(cell.lengths)).norm();
    if (seg_len == 0.0) {
      throw InvalidArgument("empty k-path segment " + waypoints[s].label + "->" +
                            waypoints[s + 1].label);
    }
    const int n = points_per_segment;
    const int first = (n == 1 || s > 0) ? 1 : 0;
    const int last = n == 1 ? 1 : n - 1;
    for (int j = first; j <= last; ++j) {
      const double t = n == 1 ? 1.0 : static_cast<double>(j) / (n - 1);
      KPoint kp;
      kp.frac = a + t * (b - a);
      kp.path_coord = coord + t * seg_len;
      kp.weight = 1.0;
      if (t == 0.0) kp.label = waypoints[s].label;
      if (t == 1.0) kp.label = waypoints[s + 1].label;
      out.push_back(kp);
    }
    coord += seg_len;
  }
  return out;
}

std::vector<PathWaypoint> cubic_path() {
  return {{"G", Vec3(0, 0, 0)},     {"X", Vec3(0, 0, 0.5)}, {"M", Vec3(0, 0.5, 0.5)},
          {"R", Vec3(0.5, 0.5, 0.5)}, {"G", Vec3(0, 0, 0)},   {"M", Vec3(0, 0.5, 0.5)}};
}

}  // namespace qedft
