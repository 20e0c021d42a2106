// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#include "qedft/qstate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "qedft/error.hpp"
#include "qedft/units.hpp"

namespace qedft {

Eigen::MatrixXcd OrbitalSet::gram() const { return grid.dv() * (psi.adjoint() * psi); }

int label_qubits_for(int n_band) {
  int q = 0;
  while ((1 << q) < n_band) ++q;
  return q;
}

QeState::QeState(Grid grid, int n_band, KPoint k)
    : grid_(std::move(grid)), n_band_(n_band), kpoint_(std::move(k)) {
  if (n_band < 1) throw InvalidArgument("QeState needs at least one band");
  label_qubits_ = label_qubits_for(n_band);
  amps_ = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(grid_.size()), 1 << label_qubits_);
}

MixedState::MixedState(Grid grid, int n_band, Eigen::MatrixXcd rho)
    : grid_(std::move(grid)), n_band_(n_band), rho_(std::move(rho)) {
  if (rho_.rows() != rho_.cols() ||
      rho_.rows() % static_cast<Eigen::Index>(grid_.size()) != 0) {
    throw InvalidArgument("density matrix dimension does not match the register");
  }
}

MixedState MixedState::from_pure(const QeState& state) {
  const Eigen::Map<const Eigen::VectorXcd> v(state.amps().data(), state.amps().size());
  return MixedState(state.grid(), state.n_band(), v * v.adjoint());
}

void MixedState::normalize() {
  const double t = trace();
  if (!(t > 0.0)) throw SolverError("cannot normalise a density matrix with trace " + std::to_string(t));
  rho_ /= t;
}

double MixedState::hermiticity_error() const { return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff(); }

Eigen::VectorXd MixedState::grid_marginal() const {
  const auto n = static_cast<Eigen::Index>(grid_.size());
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  const Eigen::Index blocks = rho_.rows() / n;
  for (Eigen::Index b = 0; b < blocks; ++b) {
    for (Eigen::Index r = 0; r < n; ++r) p[r] += rho_(b * n + r, b * n + r).real();
  }
  return p;
}

QeState encode(const OrbitalSet& orbitals, const KPoint& k, double tol) {
  const int nb = orbitals.count();
  if (nb < 1) throw InvalidArgument("encode: empty orbital set");
  const Eigen::MatrixXcd g = orbitals.gram();
  const double err = (g - Eigen::MatrixXcd::Identity(nb, nb)).cwiseAbs().maxCoeff();
  if (err > tol) {
    std::ostringstream msg;
    msg << "encode: orbitals are not orthonormal (max |G - I| = " << err << "), Gram matrix:\n"
        << g;
    throw InvalidArgument(msg.str());
  }
  QeState state(orbitals.grid, nb, k);
  state.active() = std::sqrt(orbitals.grid.dv() / nb) * orbitals.psi;
  return state;
}

OrbitalSet decode(const QeState& state) {
  OrbitalSet out;
  out.grid = state.grid();
  out.psi = state.active() / std::sqrt(state.grid().dv() / state.n_band());
  return out;
}

Eigen::VectorXcd slater_orbital(const Vec3& center, double q, const Grid& grid) {
  if (!(q > 0.0)) throw InvalidArgument("slater_orbital: q must be positive");
  const auto n = static_cast<Eigen::Index>(grid.size());
  Eigen::VectorXcd psi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 d = grid.minimum_image(grid.point(static_cast<std::size_t>(i)) - center);
    psi[i] = std::exp(-q * d.cwiseAbs().sum());
  }
  psi /= std::sqrt(psi.squaredNorm() * grid.dv());
  return psi;
}

std::vector<Eigen::Vector3i> integer_vectors_within(int k2_max) {
  std::vector<Eigen::Vector3i> out;
  int r = 0;
  while ((r + 1) * (r + 1) <= k2_max) ++r;
  for (int a = -r; a <= r; ++a)
    for (int b = -r; b <= r; ++b)
      for (int c = -r; c <= r; ++c)
        if (a * a + b * b + c * c <= k2_max) out.emplace_back(a, b, c);
  std::stable_sort(out.begin(), out.end(), [](const Eigen::Vector3i& x, const Eigen::Vector3i& y) {
    return x.squaredNorm() < y.squaredNorm();
  });
  return out;
}

OrbitalSet planewave_orbitals(const std::vector<Eigen::Vector3i>& ks, const Grid& grid) {
  for (std::size_t a = 0; a < ks.size(); ++a)
    for (std::size_t b = a + 1; b < ks.size(); ++b)
      if (ks[a] == ks[b]) throw InvalidArgument("planewave_orbitals: duplicate K vector");
  OrbitalSet out;
  out.grid = grid;
  const auto n = static_cast<Eigen::Index>(grid.size());
  out.psi.resize(n, static_cast<Eigen::Index>(ks.size()));
  const double norm = 1.0 / std::sqrt(grid.volume());
  const auto& dims = grid.dims();
  for (std::size_t b = 0; b < ks.size(); ++b) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto c = grid.coords(static_cast<std::size_t>(i));
      // K.r / L evaluated on integer grid coordinates keeps the phase exact.
      double frac = 0.0;
      for (int a = 0; a < 3; ++a) {
        const long long num = static_cast<long long>(ks[b][a]) * c[a];
        frac += static_cast<double>(((num % dims[a]) + dims[a]) % dims[a]) / dims[a];
      }
      const double phase = units::kTwoPi * frac;
      out.psi(i, static_cast<Eigen::Index>(b)) = norm * cplx(std::cos(phase), std::sin(phase));
    }
  }
  return out;
}

namespace {

// out[shifted(j)] = in[j] along each axis, where shifting moves frequency m
// from FFT slot (m mod N) to centred slot m + N/2.
void center_shift(Eigen::Ref<Eigen::VectorXcd> v, const Grid& grid, bool to_centred) {
  const auto& d = grid.dims();
  Eigen::VectorXcd tmp(v.size());
  for (int i = 0; i < d[0]; ++i) {
    for (int j = 0; j < d[1]; ++j) {
      for (int k = 0; k < d[2]; ++k) {
        const int si = (i + d[0] / 2) % d[0];
        const int sj = (j + d[1] / 2) % d[1];
        const int sk = (k + d[2] / 2) % d[2];
        const auto from = static_cast<Eigen::Index>(grid.index(i, j, k));
        const auto to = static_cast<Eigen::Index>(grid.index(si, sj, sk));
        if (to_centred) tmp[to] = v[from];
        else tmp[from] = v[to];
      }
    }
  }
  v = tmp;
}

}  // namespace

void cqft(Eigen::Ref<Eigen::VectorXcd> v, const Grid& grid, FftDirection dir) {
  std::span<cplx> data(v.data(), static_cast<std::size_t>(v.size()));
  if (dir == FftDirection::kForward) {
    fft3d_unitary(data, grid.dims(), FftDirection::kForward);
    center_shift(v, grid, true);
  } else {
    center_shift(v, grid, false);
    fft3d_unitary(data, grid.dims(), FftDirection::kInverse);
  }
}

void cqft(QeState& state, FftDirection dir) {
  for (Eigen::Index b = 0; b < state.amps().cols(); ++b) cqft(state.amps().col(b), state.grid(), dir);
}

Eigen::MatrixXcd overlap_matrix(const QeState& a, const QeState& b) {
  if (a.n_band() != b.n_band() || a.grid().size() != b.grid().size()) {
    throw InvalidArgument("overlap_matrix: states live on different registers");
  }
  return static_cast<double>(a.n_band()) * (a.active().adjoint() * b.active());
}

double subspace_fidelity(const QeState& state, const OrbitalSet& reference) {
  const OrbitalSet psi = decode(state);
  const Eigen::MatrixXcd m = state.grid().dv() * (reference.psi.adjoint() * psi.psi);
  return m.cwiseAbs2().sum() / state.n_band();
}

double subspace_fidelity(const MixedState& rho, const OrbitalSet& reference) {
  const auto n = static_cast<Eigen::Index>(rho.grid().size());
  const Eigen::MatrixXcd phi = std::sqrt(rho.grid().dv()) * reference.psi;
  const Eigen::Index blocks = rho.dimension() / n;
  double f = 0.0;
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const auto block = rho.matrix().block(b * n, b * n, n, n);
    f += (phi.adjoint() * block * phi).trace().real();
  }
  return f / rho.trace();
}

double largest_eigenvalue(const Eigen::MatrixXcd& m) {
  Eigen::VectorXcd v;
  return largest_eigenpair(m, v);
}

double largest_eigenpair(const Eigen::MatrixXcd& m, Eigen::VectorXcd& vec) {
  const Eigen::Index n = m.rows();
  if (n <= 512) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (m + m.adjoint()));
    vec = es.eigenvectors().col(n - 1);
    return es.eigenvalues()[n - 1];
  }
  // Lanczos with full reorthogonalisation; the matrix is PSD so the top Ritz
  // value converges quickly, especially from a warm start.
  const int kmax = static_cast<int>(std::min<Eigen::Index>(n, 120));
  Eigen::MatrixXcd q(n, kmax);
  std::vector<double> alpha, beta;
  Eigen::VectorXcd v = vec.size() == n ? vec : Eigen::VectorXcd(m.diagonal());
  if (v.norm() == 0.0) v.setOnes();
  v.normalize();
  double prev = 0.0;
  Eigen::VectorXd top_vec;
  int used = 0;
  for (int j = 0; j < kmax; ++j) {
    q.col(j) = v;
    used = j + 1;
    Eigen::VectorXcd w = m * v;
    alpha.push_back(v.dot(w).real());
    for (int pass = 0; pass < 2; ++pass) w -= q.leftCols(j + 1) * (q.leftCols(j + 1).adjoint() * w);
    beta.push_back(w.norm());
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(j + 1, j + 1);
    for (int i = 0; i <= j; ++i) {
      t(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i > 0) t(i, i - 1) = t(i - 1, i) = beta[static_cast<std::size_t>(i - 1)];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    const double top = es.eigenvalues()[j];
    top_vec = es.eigenvectors().col(j);
    const bool done = (j > 1 && std::abs(top - prev) < 1e-14 * std::max(1.0, std::abs(top))) ||
                      beta.back() < 1e-13;
    prev = top;
    if (done) break;
    v = w / beta.back();
  }
  vec = q.leftCols(used) * top_vec.cast<cplx>();
  vec.normalize();
  return prev;
}

double purity(const MixedState& rho) { return largest_eigenvalue(rho.matrix()) / rho.trace(); }

Eigen::VectorXd band_density(const QeState& state, const std::vector<double>& occupations) {
  const double scale = 2.0 * state.n_band() / state.grid().dv();
  Eigen::VectorXd rho = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(state.grid().size()));
  for (int b = 0; b < state.n_band(); ++b) {
    const double f = occupations.empty() ? 1.0 : occupations.at(static_cast<std::size_t>(b));
    rho += f * scale * state.amps().col(b).cwiseAbs2();
  }
  return rho;
}

// ---------------------------------------------------------------------------
// Binary dump: magic, version, grid shape, lengths, periodic flag, N_band,
// label qubits, k-point (frac + weight), then the raw complex array in label-
// major order.

namespace {

constexpr char kMagic[8] = {'Q', 'E', 'S', 'T', 'A', 'T', 'E', '1'};

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw InvalidArgument("truncated state file");
  return v;
}

}  // namespace

void save_state(const QeState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write state file " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const auto& g = state.grid();
  for (int a = 0; a < 3; ++a) put<std::int32_t>(out, g.dims()[a]);
  for (int a = 0; a < 3; ++a) put<double>(out, g.lengths()[a]);
  put<std::int32_t>(out, g.periodic() ? 1 : 0);
  put<std::int32_t>(out, state.n_band());
  put<std::int32_t>(out, state.label_qubits());
  for (int a = 0; a < 3; ++a) put<double>(out, state.kpoint().frac[a]);
  put<double>(out, state.kpoint().weight);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(state.amps().size()));
  out.write(reinterpret_cast<const char*>(state.amps().data()),
            static_cast<std::streamsize>(state.amps().size() * sizeof(cplx)));
}

QeState load_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open state file " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw InvalidArgument(path.string() + " is not a qedft state file");
  }
  Cell cell;
  for (int a = 0; a < 3; ++a) {
    const auto n = get<std::int32_t>(in);
    int q = 0;
    while ((1 << q) < n) ++q;
    if ((1 << q) != n) throw InvalidArgument("state file grid size is not a power of two");
    cell.qubits[a] = q;
  }
  for (int a = 0; a < 3; ++a) cell.lengths[a] = get<double>(in);
  cell.periodic = get<std::int32_t>(in) != 0;
  const int n_band = get<std::int32_t>(in);
  const int label_qubits = get<std::int32_t>(in);
  KPoint k;
  for (int a = 0; a < 3; ++a) k.frac[a] = get<double>(in);
  k.weight = get<double>(in);
  const auto count = get<std::uint64_t>(in);
  QeState state(Grid(cell), n_band, k);
  if (state.label_qubits() != label_qubits || count != static_cast<std::uint64_t>(state.amps().size())) {
    throw InvalidArgument("state file header is inconsistent");
  }
  in.read(reinterpret_cast<char*>(state.amps().data()),
          static_cast<std::streamsize>(count * sizeof(cplx)));
  if (!in) throw InvalidArgument("truncated state file");
  return state;
}

}  // namespace qedft
