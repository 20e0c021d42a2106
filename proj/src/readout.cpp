// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#include "qedft/readout.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "qedft/error.hpp"
#include "qedft/evolution.hpp"
#include "qedft/fft.hpp"
#include "qedft/oracle.hpp"
#include "qedft/units.hpp"

namespace qedft {

namespace {

cplx register_overlap(const QeState& a, const QeState& b) {
  return (a.active().adjoint() * b.active()).trace();
}

}  // namespace

HadamardResult hadamard_test(const QeState& state, const PotentialField& v, double tau, int substeps,
                             std::optional<std::int64_t> shots, std::uint64_t seed) {
  if (tau < 0.0) throw InvalidArgument("Hadamard test needs tau >= 0");
  QeState evolved = state;
  if (tau > 0.0) ks_step(evolved, tau, v, substeps);
  HadamardResult r;
  r.z = register_overlap(state, evolved);
  r.p0_real = std::clamp(0.5 * (1.0 + r.z.real()), 0.0, 1.0);
  r.p0_imag = std::clamp(0.5 * (1.0 - r.z.imag()), 0.0, 1.0);
  if (shots) {
    if (*shots < 1) throw InvalidArgument("shots must be positive");
    std::mt19937_64 rng(seed);
    std::binomial_distribution<std::int64_t> re(*shots, r.p0_real), im(*shots, r.p0_imag);
    r.p0_real = static_cast<double>(re(rng)) / static_cast<double>(*shots);
    r.p0_imag = static_cast<double>(im(rng)) / static_cast<double>(*shots);
    r.z = cplx(2.0 * r.p0_real - 1.0, 1.0 - 2.0 * r.p0_imag);
    r.shots = shots;
  }
  return r;
}

double band_energy_from_phase(std::complex<double> z, double tau, int n_band) {
  if (!(tau > 0.0)) throw InvalidArgument("band_energy_from_phase needs tau > 0");
  if (std::abs(z) < 1e-12) throw SolverError("Hadamard-test overlap vanished; the phase is undefined");
  return -2.0 * n_band / tau * std::arg(z);
}

double SpectralHistogram::energy(int k) const { return units::kTwoPi * k / (n_qpe * dt) - e_shift; }
double SpectralHistogram::bin_width() const { return units::kTwoPi / (n_qpe * dt); }

Eigen::VectorXd qpe_from_autocorrelation(const Eigen::VectorXcd& c) {
  const auto n = static_cast<int>(c.size());
  std::vector<cplx> a(static_cast<std::size_t>(n));
  a[0] = 0.0;
  for (int m = 1; m < n; ++m) a[static_cast<std::size_t>(m)] = static_cast<double>(n - m) * c[m];
  fft3d(a, {1, 1, n}, FftDirection::kInverse);
  Eigen::VectorXd p(n);
  const double inv = 1.0 / (static_cast<double>(n) * n);
  for (int k = 0; k < n; ++k) {
    p[k] = std::max(0.0, inv * (n * c[0].real() + 2.0 * a[static_cast<std::size_t>(k)].real()));
  }
  return p;
}

SpectralHistogram qpe_distribution(const QeState& state, const PotentialField& v, double dt,
                                   int n_qpe, double e_shift, int substeps) {
  if (n_qpe < 1) throw InvalidArgument("N_QPE must be positive");
  if (!(dt > 0.0)) throw InvalidArgument("QPE time step must be positive");
  Eigen::VectorXcd c(n_qpe);
  QeState cur = state;
  c[0] = register_overlap(state, cur);
  for (int m = 1; m < n_qpe; ++m) {
    ks_step(cur, dt, v, substeps);
    c[m] = register_overlap(state, cur) * std::exp(cplx(0.0, -dt * e_shift * m));
  }
  SpectralHistogram h;
  h.prob = qpe_from_autocorrelation(c);
  h.dt = dt;
  h.n_qpe = n_qpe;
  h.e_shift = e_shift;
  h.n_band = state.n_band();
  h.weight = state.kpoint().weight;
  return h;
}

namespace {

std::vector<double> normalised_weights(const std::vector<SpectralHistogram>& hists) {
  double total = 0.0;
  for (const auto& h : hists) total += h.weight;
  if (!(total > 0.0)) throw InvalidArgument("histogram weights must be positive");
  std::vector<double> w;
  for (const auto& h : hists) w.push_back(h.weight / total);
  return w;
}

}  // namespace

FermiSolution fermi_level(const std::vector<SpectralHistogram>& hists, double n_elec, double sigma) {
  if (hists.empty()) throw InvalidArgument("fermi_level needs at least one histogram");
  if (!(sigma > 0.0)) throw InvalidArgument("smearing width must be positive");
  const auto w = normalised_weights(hists);
  double lo = 1e300, hi = -1e300, capacity = 0.0;
  for (std::size_t h = 0; h < hists.size(); ++h) {
    lo = std::min(lo, hists[h].energy(0));
    hi = std::max(hi, hists[h].energy(hists[h].n_qpe - 1));
    capacity += 2.0 * hists[h].n_band * w[h] * hists[h].prob.sum();
  }
  auto count = [&](double ef) {
    double c = 0.0;
    for (std::size_t h = 0; h < hists.size(); ++h) {
      const auto& hist = hists[h];
      double s = 0.0;
      for (int k = 0; k < hist.n_qpe; ++k) {
        if (hist.prob[k] != 0.0) s += hist.prob[k] * smearing(hist.energy(k) - ef, sigma);
      }
      c += 2.0 * hist.n_band * w[h] * s;
    }
    return c;
  };
  lo -= 10.0 * sigma;
  hi += 10.0 * sigma;
  if (capacity < n_elec || count(hi) < n_elec) {
    throw SolverError("the spectral window holds " + std::to_string(count(hi)) + " electrons, fewer than " +
                      std::to_string(n_elec) + "; increase N_band or widen the window");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    (count(mid) < n_elec ? lo : hi) = mid;
  }
  FermiSolution f;
  f.e_fermi = 0.5 * (lo + hi);
  f.sigma = sigma;
  f.electrons = count(f.e_fermi);
  return f;
}

double band_energy_from_dos(const std::vector<SpectralHistogram>& hists, const FermiSolution& fermi) {
  const auto w = normalised_weights(hists);
  double e = 0.0;
  for (std::size_t h = 0; h < hists.size(); ++h) {
    const auto& hist = hists[h];
    double s = 0.0;
    for (int k = 0; k < hist.n_qpe; ++k) {
      if (hist.prob[k] == 0.0) continue;
      const double eps = hist.energy(k);
      s += hist.prob[k] * eps * smearing(eps - fermi.e_fermi, fermi.sigma);
    }
    e += 2.0 * hist.n_band * w[h] * s;
  }
  return e;
}

std::vector<DosRow> dos_rows(const std::vector<SpectralHistogram>& hists, const FermiSolution& fermi) {
  const auto w = normalised_weights(hists);
  std::vector<DosRow> rows;
  const auto& first = hists.front();
  const bool shared = std::all_of(hists.begin(), hists.end(), [&](const SpectralHistogram& h) {
    return h.n_qpe == first.n_qpe && h.dt == first.dt && h.e_shift == first.e_shift;
  });
  if (shared) {
    for (int k = 0; k < first.n_qpe; ++k) {
      DosRow r;
      r.energy = first.energy(k);
      for (std::size_t h = 0; h < hists.size(); ++h) r.probability += w[h] * hists[h].prob[k];
      r.occupation = smearing(r.energy - fermi.e_fermi, fermi.sigma);
      rows.push_back(r);
    }
    return rows;
  }
  for (std::size_t h = 0; h < hists.size(); ++h) {
    for (int k = 0; k < hists[h].n_qpe; ++k) {
      DosRow r;
      r.energy = hists[h].energy(k);
      r.probability = w[h] * hists[h].prob[k];
      r.occupation = smearing(r.energy - fermi.e_fermi, fermi.sigma);
      rows.push_back(r);
    }
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const DosRow& a, const DosRow& b) { return a.energy < b.energy; });
  return rows;
}

std::vector<BandMapRow> band_structure(const std::vector<KPoint>& path,
                                       const std::vector<SpectralHistogram>& hists,
                                       double min_probability) {
  if (path.size() != hists.size()) throw InvalidArgument("band_structure: one histogram per k-point");
  std::vector<BandMapRow> rows;
  for (std::size_t i = 0; i < path.size(); ++i) {
    for (int k = 0; k < hists[i].n_qpe; ++k) {
      if (hists[i].prob[k] < min_probability) continue;
      rows.push_back({path[i].path_coord, hists[i].energy(k), hists[i].prob[k]});
    }
  }
  return rows;
}

Eigen::VectorXd leakage(const QeState& evolved, const OrbitalSet& occupied) {
  const OrbitalSet psi = decode(evolved);
  const Eigen::MatrixXcd m = evolved.grid().dv() * (occupied.psi.adjoint() * psi.psi);
  return (Eigen::VectorXd::Ones(m.rows()) - m.cwiseAbs2().rowwise().sum()).cwiseMax(0.0);
}

NbandReport nband_convergence_check(
    const std::vector<int>& n_bands,
    const std::function<std::pair<double, QeState>(int)>& experiment,
    const OrbitalSet& occupied, double tol) {
  if (n_bands.size() < 2) throw InvalidArgument("N_band convergence needs at least two values");
  NbandReport report;
  for (std::size_t i = 0; i < n_bands.size(); ++i) {
    auto [energy, state] = experiment(n_bands[i]);
    NbandPoint p;
    p.n_band = n_bands[i];
    p.band_energy = energy;
    p.delta = i == 0 ? 0.0 : energy - report.points.back().band_energy;
    p.max_leakage = leakage(state, occupied).maxCoeff();
    report.points.push_back(p);
  }
  report.converged = std::abs(report.points.back().delta) < tol;
  return report;
}

}  // namespace qedft
