// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#include "qedft/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "qedft/error.hpp"
#include "qedft/fft.hpp"

namespace qedft {

KsHamiltonian::KsHamiltonian(const Grid& grid, const PotentialField& v, const Vec3& k_cart)
    : grid_(grid), v_(v.values) {
  if (static_cast<std::size_t>(v_.size()) != grid.size()) {
    throw InvalidArgument("potential does not match the grid");
  }
  const auto g2 = grid.g_plus_k_squared(k_cart);
  kin_.resize(v_.size());
  for (Eigen::Index i = 0; i < kin_.size(); ++i) kin_[i] = 0.5 * g2[static_cast<std::size_t>(i)];
}

void KsHamiltonian::apply(const Eigen::MatrixXcd& in, Eigen::MatrixXcd& out) const {
  const Eigen::Index n = dimension();
  out = in;
  std::span<cplx> data(out.data(), static_cast<std::size_t>(out.size()));
  const auto howmany = static_cast<std::size_t>(out.cols());
  fft3d(data, grid_.dims(), FftDirection::kForward, howmany);
  const double scale = 1.0 / static_cast<double>(n);
  out.array().colwise() *= (scale * kin_).array().cast<cplx>();
  fft3d(data, grid_.dims(), FftDirection::kInverse, howmany);
  out.array() += in.array().colwise() * v_.array().cast<cplx>();
}

Eigen::MatrixXcd KsHamiltonian::apply(const Eigen::MatrixXcd& in) const {
  Eigen::MatrixXcd out;
  apply(in, out);
  return out;
}

Eigen::MatrixXcd KsHamiltonian::dense() const {
  const Eigen::Index n = dimension();
  if (n > 4096) throw InvalidArgument("dense Hamiltonian requested for dimension " + std::to_string(n));
  Eigen::MatrixXcd h = apply(Eigen::MatrixXcd::Identity(n, n));
  return 0.5 * (h + h.adjoint());
}

namespace {

// Orthonormalises the columns of z against the orthonormal block x and among
// themselves, dropping numerically dependent directions.
Eigen::MatrixXcd orthonormal_complement(const Eigen::MatrixXcd& x, Eigen::MatrixXcd z) {
  for (int pass = 0; pass < 2; ++pass) {
    if (x.cols() > 0) z -= x * (x.adjoint() * z);
    const Eigen::MatrixXcd gram = z.adjoint() * z;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (gram + gram.adjoint()));
    const Eigen::VectorXd& w = es.eigenvalues();
    const double wmax = w.size() ? w.maxCoeff() : 0.0;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < w.size(); ++i)
      if (w[i] > 1e-14 * wmax && w[i] > 1e-300) keep.push_back(i);
    Eigen::MatrixXcd t(z.cols(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
      t.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(keep[j]) / std::sqrt(w[keep[j]]);
    }
    z = z * t;
  }
  return z;
}

Eigen::MatrixXcd planewave_guess(const KsHamiltonian& h, Eigen::Index nb) {
  const Eigen::Index n = h.dimension();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const auto& kin = h.kinetic_diagonal();
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return kin[a] < kin[b]; });
  Eigen::MatrixXcd x = Eigen::MatrixXcd::Zero(n, nb);
  for (Eigen::Index j = 0; j < nb; ++j) x(order[static_cast<std::size_t>(j)], j) = 1.0;
  std::span<cplx> data(x.data(), static_cast<std::size_t>(x.size()));
  fft3d_unitary(data, h.grid().dims(), FftDirection::kInverse, static_cast<std::size_t>(nb));
  // A weak deterministic perturbation by the potential breaks the planewave
  // degeneracy without biasing the block.
  Eigen::MatrixXcd hx = h.apply(x);
  return x - 1e-3 * hx;
}

}  // namespace

Eigenpairs lowest_eigenpairs(const KsHamiltonian& h, int m, const EigenOptions& options) {
  const Eigen::Index n = h.dimension();
  if (m < 1 || m > n) {
    throw InvalidArgument("lowest_eigenpairs: m = " + std::to_string(m) + " outside [1, " +
                          std::to_string(n) + "]");
  }
  Eigenpairs out;
  if (n <= options.dense_limit) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h.dense());
    out.values = es.eigenvalues().head(m);
    out.vectors = es.eigenvectors().leftCols(m);
    out.residuals = (h.apply(out.vectors) - out.vectors * out.values.asDiagonal()).colwise().norm();
    out.iterations = 1;
    return out;
  }

  const Eigen::Index guard = std::max<Eigen::Index>(3, m / 5);
  const Eigen::Index nb = std::min<Eigen::Index>(n, m + guard);
  Eigen::MatrixXcd x;
  if (options.guess && options.guess->rows() == n && options.guess->cols() > 0) {
    const Eigen::Index g = std::min(options.guess->cols(), nb);
    x.resize(n, nb);
    x.leftCols(g) = options.guess->leftCols(g);
    if (g < nb) x.rightCols(nb - g) = planewave_guess(h, nb).rightCols(nb - g);
  } else {
    x = planewave_guess(h, nb);
  }
  x = orthonormal_complement(Eigen::MatrixXcd(n, 0), x);
  if (x.cols() < nb) x = orthonormal_complement(Eigen::MatrixXcd(n, 0), planewave_guess(h, nb));

  const Eigen::ArrayXd precond = (1.0 / (0.5 + h.kinetic_diagonal().array())).eval();
  auto precondition = [&](Eigen::MatrixXcd r) {
    std::span<cplx> data(r.data(), static_cast<std::size_t>(r.size()));
    fft3d_unitary(data, h.grid().dims(), FftDirection::kForward, static_cast<std::size_t>(r.cols()));
    r.array().colwise() *= precond.cast<cplx>();
    fft3d_unitary(data, h.grid().dims(), FftDirection::kInverse, static_cast<std::size_t>(r.cols()));
    return r;
  };

  auto rayleigh_ritz = [](const Eigen::MatrixXcd& s, const Eigen::MatrixXcd& hs) {
    Eigen::MatrixXcd a = s.adjoint() * hs;
    a = 0.5 * (a + a.adjoint());
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(a);
  };

  Eigen::MatrixXcd hx = h.apply(x);
  {
    auto es = rayleigh_ritz(x, hx);
    x = x * es.eigenvectors();
    hx = hx * es.eigenvectors();
    out.values = es.eigenvalues();
  }
  Eigen::MatrixXcd p(n, 0);
  Eigen::VectorXd res;
  int it = 0;
  for (; it < options.max_iter; ++it) {
    const Eigen::MatrixXcd r = hx - x * out.values.asDiagonal();
    res = r.colwise().norm();
    if (res.head(m).maxCoeff() < options.tol) break;
    Eigen::MatrixXcd z(n, r.cols() + p.cols());
    z << precondition(r), p;
    z = orthonormal_complement(x, z);
    if (z.cols() == 0) break;
    const Eigen::MatrixXcd hz = h.apply(z);
    Eigen::MatrixXcd s(n, x.cols() + z.cols());
    s << x, z;
    Eigen::MatrixXcd hs(n, s.cols());
    hs << hx, hz;
    auto es = rayleigh_ritz(s, hs);
    const Eigen::MatrixXcd c = es.eigenvectors().leftCols(nb);
    x = s * c;
    hx = hs * c;
    p = z * c.bottomRows(z.cols());
    out.values = es.eigenvalues().head(nb);
  }
  res = (hx - x * out.values.asDiagonal()).colwise().norm();
  out.iterations = it;
  if (res.head(m).maxCoeff() >= options.tol) {
    std::ostringstream msg;
    msg << "LOBPCG did not converge in " << it << " iterations; residuals:";
    for (Eigen::Index i = 0; i < m; ++i) msg << ' ' << res[i];
    throw SolverError(msg.str());
  }
  out.values = out.values.head(m).eval();
  out.vectors = x.leftCols(m);
  out.residuals = res.head(m);
  return out;
}

Eigen::MatrixXcd exact_propagator(const Eigen::MatrixXcd& h, double tau, bool imaginary) {
  if (h.rows() != h.cols()) throw InvalidArgument("exact_propagator: matrix is not square");
  if (h.rows() > 4096) throw InvalidArgument("exact_propagator: dimension exceeds 4096");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (h + h.adjoint()));
  Eigen::VectorXcd d(h.rows());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double e = es.eigenvalues()[i];
    d[i] = imaginary ? cplx(std::exp(-tau * e), 0.0) : std::exp(cplx(0.0, -tau * e));
  }
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
}

double smearing(double x, double sigma) {
  if (sigma <= 0.0) return x < 0.0 ? 1.0 : (x > 0.0 ? 0.0 : 0.5);
  return 0.5 * std::erfc(x / sigma);
}

double smeared_fermi_level(const std::vector<Eigen::VectorXd>& eigenvalues,
                           const std::vector<double>& weights, double n_elec, double sigma) {
  double lo = 1e300, hi = -1e300, capacity = 0.0;
  for (std::size_t k = 0; k < eigenvalues.size(); ++k) {
    lo = std::min(lo, eigenvalues[k].minCoeff());
    hi = std::max(hi, eigenvalues[k].maxCoeff());
    capacity += 2.0 * weights[k] * static_cast<double>(eigenvalues[k].size());
  }
  if (capacity < n_elec) throw SolverError("not enough bands to hold the electrons");
  auto count = [&](double ef) {
    double c = 0.0;
    for (std::size_t k = 0; k < eigenvalues.size(); ++k)
      for (Eigen::Index i = 0; i < eigenvalues[k].size(); ++i)
        c += 2.0 * weights[k] * smearing(eigenvalues[k][i] - ef, sigma);
    return c;
  };
  lo -= 10.0 * sigma + 1.0;
  hi += 10.0 * sigma + 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    (count(mid) < n_elec ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

OracleResult scf_loop(const KsModel& model, const DensityField& rho0, const OracleOptions& options) {
  if (!(options.mixing > 0.0 && options.mixing <= 1.0)) {
    throw InvalidArgument("mixing must lie in (0, 1]");
  }
  if (options.occupation == Occupation::kSmeared && !(options.sigma > 0.0)) {
    throw InvalidArgument("smeared occupations need sigma > 0");
  }
  const Grid& grid = model.grid;
  const double n_elec = model.electron_count();
  OracleResult res;
  res.kpoints = options.kpoints.empty() ? std::vector<KPoint>{KPoint{}} : options.kpoints;
  const std::size_t nk = res.kpoints.size();
  std::vector<double> weights(nk);
  double wsum = 0.0;
  for (std::size_t k = 0; k < nk; ++k) wsum += res.kpoints[k].weight;
  for (std::size_t k = 0; k < nk; ++k) weights[k] = res.kpoints[k].weight / wsum;

  int nb = options.n_bands;
  if (nb <= 0) {
    nb = static_cast<int>(std::ceil(n_elec / 2.0 - 1e-9));
    if (options.occupation == Occupation::kSmeared) nb += 4;
  }
  nb = std::max(nb, 1);

  DensityField rho = rho0;
  std::vector<Eigen::MatrixXcd> guesses(nk);
  res.eigenvalues.resize(nk);
  res.orbitals.resize(nk);
  res.occupations.resize(nk);
  EigenOptions eo;
  eo.tol = options.eig_tol;
  eo.dense_limit = options.dense_limit;

  for (int it = 1; it <= options.max_iter; ++it) {
    res.iterations = it;
    res.potential = ks_potential(rho, model);
    std::vector<Eigen::MatrixXcd> vecs(nk);
    for (std::size_t k = 0; k < nk; ++k) {
      const KsHamiltonian h(grid, res.potential, res.kpoints[k].cartesian(grid.lengths()));
      if (guesses[k].size()) eo.guess = guesses[k];
      else eo.guess.reset();
      Eigenpairs ep = lowest_eigenpairs(h, nb, eo);
      res.eigenvalues[k] = ep.values;
      vecs[k] = ep.vectors;
      guesses[k] = ep.vectors;
    }
    if (options.occupation == Occupation::kSmeared) {
      res.fermi_level = smeared_fermi_level(res.eigenvalues, weights, n_elec, options.sigma);
      for (std::size_t k = 0; k < nk; ++k) {
        res.occupations[k].resize(nb);
        for (int i = 0; i < nb; ++i)
          res.occupations[k][i] = smearing(res.eigenvalues[k][i] - res.fermi_level, options.sigma);
      }
    } else {
      for (std::size_t k = 0; k < nk; ++k) {
        res.occupations[k].resize(nb);
        for (int i = 0; i < nb; ++i)
          res.occupations[k][i] = std::clamp(n_elec / 2.0 - i, 0.0, 1.0);
      }
      const int homo = std::max(0, static_cast<int>(std::ceil(n_elec / 2.0 - 1e-9)) - 1);
      res.fermi_level = res.eigenvalues[0][std::min(homo, nb - 1)];
    }
    Eigen::VectorXd rho_out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
    res.band_energy = 0.0;
    for (std::size_t k = 0; k < nk; ++k) {
      for (int i = 0; i < nb; ++i) {
        const double f = 2.0 * weights[k] * res.occupations[k][i];
        if (f == 0.0) continue;
        rho_out += (f / grid.dv()) * vecs[k].col(i).cwiseAbs2();
        res.band_energy += f * res.eigenvalues[k][i];
      }
    }
    const double delta = (rho_out - rho.values).cwiseAbs().sum() * grid.dv();
    res.history.push_back(delta);
    res.density = DensityField(rho_out);
    if (options.non_self_consistent || delta < options.tol || it == options.max_iter) {
      for (std::size_t k = 0; k < nk; ++k) {
        res.orbitals[k].grid = grid;
        res.orbitals[k].psi = vecs[k] / std::sqrt(grid.dv());
      }
      // Kohn-Sham functional at the output density: T_s from the band energy
      // minus the input-potential expectation.
      const DensityField& out = res.density;
      const double ext = model.v_ext.values.dot(out.values) * grid.dv();
      const double t_s = res.band_energy - res.potential.values.dot(out.values) * grid.dv();
      res.total_energy = t_s + ext + hartree_energy(out, grid) + lda_xc(out, grid).energy;
      res.ion_ion = ion_ion_energy(model.cell);
      res.converged = options.non_self_consistent || delta < options.tol;
      break;
    }
    rho.values = (1.0 - options.mixing) * rho.values + options.mixing * rho_out;
  }
  if (!res.converged) {
    std::ostringstream msg;
    msg << "SCF did not converge in " << options.max_iter << " iterations; last density changes:";
    const std::size_t from = res.history.size() > 5 ? res.history.size() - 5 : 0;
    for (std::size_t i = from; i < res.history.size(); ++i) msg << ' ' << res.history[i];
    throw SolverError(msg.str());
  }
  return res;
}

}  // namespace qedft
