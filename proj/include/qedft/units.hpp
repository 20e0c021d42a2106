// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <numbers>

// Internal quantities are Hartree atomic units. Conversions use CODATA 2018.
namespace qedft::units {

inline constexpr double kBohrInAngstrom = 0.529177210903;
inline constexpr double kHartreeInEv = 27.211386245988;

inline constexpr double angstrom_to_bohr(double x) { return x / kBohrInAngstrom; }
inline constexpr double bohr_to_angstrom(double x) { return x * kBohrInAngstrom; }
inline constexpr double ev_to_hartree(double x) { return x / kHartreeInEv; }
inline constexpr double hartree_to_ev(double x) { return x * kHartreeInEv; }

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace qedft::units
