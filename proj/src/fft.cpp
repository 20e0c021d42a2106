// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#include "qedft/fft.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <new>
#include <tuple>
#include <vector>

#include <fftw3.h>

namespace qedft {

namespace {

using PlanKey = std::tuple<int, int, int, int, std::size_t, std::size_t, std::size_t, bool>;

class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(const std::array<int, 3>& dims, int sign, std::size_t howmany, std::size_t stride,
                std::size_t dist, bool aligned) {
    const PlanKey key{dims[0], dims[1], dims[2], sign, howmany, stride, dist, aligned};
    std::lock_guard lock(mutex_);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;

    const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    const std::size_t len = (howmany - 1) * dist + (n - 1) * stride + 1;
    auto* buf = fftw_alloc_complex(len);
    if (!buf) throw std::bad_alloc();
    const int rank = 3;
    fftw_plan plan = fftw_plan_many_dft(rank, dims.data(), static_cast<int>(howmany), buf,
                                        nullptr, static_cast<int>(stride), static_cast<int>(dist),
                                        buf, nullptr, static_cast<int>(stride),
                                        static_cast<int>(dist), sign,
                                        FFTW_ESTIMATE | (aligned ? 0u : FFTW_UNALIGNED));
    fftw_free(buf);
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<PlanKey, fftw_plan> plans_;
};

PlanCache& cache() {
  static PlanCache instance;
  return instance;
}

}  // namespace

void fft3d(std::span<cplx> data, const std::array<int, 3>& dims, FftDirection dir,
           std::size_t howmany, std::size_t stride, std::size_t dist) {
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (dist == 0) dist = n * stride;
  const int sign = dir == FftDirection::kForward ? FFTW_FORWARD : FFTW_BACKWARD;
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  const bool aligned = fftw_alignment_of(reinterpret_cast<double*>(buf)) == 0;
  fftw_plan plan = cache().get(dims, sign, howmany, stride, dist, aligned);
  fftw_execute_dft(plan, buf, buf);
}

void fft3d_unitary(std::span<cplx> data, const std::array<int, 3>& dims, FftDirection dir,
                   std::size_t howmany, std::size_t stride, std::size_t dist) {
  fft3d(data, dims, dir, howmany, stride, dist);
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (dist == 0) dist = n * stride;
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t b = 0; b < howmany; ++b) {
    for (std::size_t i = 0; i < n; ++i) data[b * dist + i * stride] *= scale;
  }
}

}  // namespace qedft
