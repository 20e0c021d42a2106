// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qedft {

using Vec3 = Eigen::Vector3d;

struct Atom {
  std::string species;
  Vec3 position = Vec3::Zero();  // bohr
  double z_ion = 0.0;
};

/// Orthorhombic simulation box discretised with 2^n points per axis.
struct Cell {
  std::array<double, 3> lengths{1.0, 1.0, 1.0};  // bohr
  std::array<int, 3> qubits{1, 1, 1};
  std::vector<Atom> atoms;
  bool periodic = false;

  /// Throws InvalidArgument on non-positive lengths, negative qubit counts or
  /// atoms outside a non-periodic box. Atoms of periodic cells are wrapped.
  void validate();

  double volume() const { return lengths[0] * lengths[1] * lengths[2]; }
  int grid_qubits() const { return qubits[0] + qubits[1] + qubits[2]; }
  double electron_count() const;
  bool is_cubic() const;
};

/// Uniform real-space grid and the matching centred reciprocal vectors.
///
/// Grid index ordering is (i * Ny + j) * Nz + k, i.e. |i>|j>|k> with the z
/// register least significant. Reciprocal quantities are stored in the same
/// flat ordering using standard FFT frequency order (0, 1, ..., N/2-1, -N/2,
/// ..., -1); the centred index m in [-N/2, N/2) of a slot j is
/// `signed_frequency`.
class Grid {
 public:
  Grid() = default;
  explicit Grid(const Cell& cell);

  const std::array<int, 3>& dims() const { return dims_; }
  const std::array<double, 3>& lengths() const { return lengths_; }
  std::size_t size() const { return size_; }
  double dv() const { return dv_; }
  double volume() const { return lengths_[0] * lengths_[1] * lengths_[2]; }
  bool periodic() const { return periodic_; }

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * dims_[1] + j) * dims_[2] + k;
  }
  std::array<int, 3> coords(std::size_t idx) const;
  Vec3 point(std::size_t idx) const;
  double spacing(int axis) const { return lengths_[axis] / dims_[axis]; }

  /// Centred frequency index m for FFT slot j along an axis.
  static int signed_frequency(int j, int n) { return j < (n + 1) / 2 ? j : j - n; }
  /// Reciprocal vector G = 2 pi m / L at flat index `idx` (FFT ordering).
  Vec3 g_vector(std::size_t idx) const;
  /// |G + k|^2 for every flat index, k in Cartesian bohr^-1.
  std::vector<double> g_plus_k_squared(const Vec3& k_cart) const;

  /// Minimum-image displacement r_a - r_b for a periodic box.
  Vec3 minimum_image(const Vec3& d) const;
  /// Displacement honouring the periodic flag.
  Vec3 displacement(const Vec3& a, const Vec3& b) const;

 private:
  std::array<int, 3> dims_{1, 1, 1};
  std::array<double, 3> lengths_{1.0, 1.0, 1.0};
  std::size_t size_ = 1;
  double dv_ = 1.0;
  bool periodic_ = false;
};

Grid build_grid(const Cell& cell);

struct KPoint {
  Vec3 frac = Vec3::Zero();  // fractional coordinates in [-1/2, 1/2)
  double weight = 1.0;
  double path_coord = 0.0;   // cumulative path length, bohr^-1 (kpath only)
  std::string label;

  Vec3 cartesian(const std::array<double, 3>& lengths) const;
};

/// Uniform Gamma-centred mesh. With `reduce`, points are folded with the
/// cubic point group (which contains inversion, hence time reversal) and
/// weights accumulated; non-cubic cells raise Unsupported.
std::vector<KPoint> kpoint_mesh(const Cell& cell, int n1, int n2, int n3, bool reduce);

struct PathWaypoint {
  std::string label;
  Vec3 frac = Vec3::Zero();
};

/// Evenly spaced points along consecutive segments. Each segment contributes
/// `points_per_segment` samples including both ends; junction points are not
/// repeated. One point per segment yields the segment end points only.
std::vector<KPoint> kpath(const Cell& cell, const std::vector<PathWaypoint>& waypoints,
                          int points_per_segment);

/// The simple-cubic high-symmetry path G-X-M-R-G-M.
std::vector<PathWaypoint> cubic_path();

}  // namespace qedft
