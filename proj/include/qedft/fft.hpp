// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>

namespace qedft {

using cplx = std::complex<double>;

enum class FftDirection { kForward, kInverse };

/// Batched, unnormalised 3D DFTs backed by FFTW. The forward transform uses
/// exp(-i G.r). Plans are cached process-wide and may be used from several
/// threads.
///
/// `howmany` transforms are read from `data`; transform `b` starts at
/// `b * dist` and its elements are `stride` apart.
void fft3d(std::span<cplx> data, const std::array<int, 3>& dims, FftDirection dir,
           std::size_t howmany = 1, std::size_t stride = 1, std::size_t dist = 0);

/// Unitary (1/sqrt N) variant of fft3d.
void fft3d_unitary(std::span<cplx> data, const std::array<int, 3>& dims, FftDirection dir,
                   std::size_t howmany = 1, std::size_t stride = 1, std::size_t dist = 0);

}  // namespace qedft
