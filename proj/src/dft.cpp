// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#include "qedft/dft.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "qedft/error.hpp"
#include "qedft/fft.hpp"
#include "qedft/units.hpp"

#ifndef QEDFT_DATA_DIR
#define QEDFT_DATA_DIR "data"
#endif

namespace qedft {

using units::kPi;

// ---------------------------------------------------------------------------
// GTH

GthTable parse_gth_table(const std::string& text) {
  GthTable table;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
    std::istringstream row(line);
    GthParams p;
    if (!(row >> p.species)) continue;
    if (!(row >> p.z_ion >> p.r_loc >> p.c[0] >> p.c[1] >> p.c[2] >> p.c[3])) {
      throw ConfigError("GTH table line " + std::to_string(lineno) +
                        ": expected `species Z_ion r_loc C1 C2 C3 C4`");
    }
    if (!(p.r_loc > 0.0)) {
      throw ConfigError("GTH table line " + std::to_string(lineno) + ": r_loc must be positive");
    }
    table[p.species] = p;
  }
  return table;
}

GthTable load_gth_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open GTH parameter file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_gth_table(ss.str());
}

const GthTable& default_gth_table() {
  static const GthTable table = [] {
    std::filesystem::path dir = QEDFT_DATA_DIR;
    if (const char* env = std::getenv("QEDFT_DATA")) dir = env;
    return load_gth_table(dir / "gth_lda.txt");
  }();
  return table;
}

double gth_local_radial(const GthParams& p, double r) {
  const double rl = p.r_loc;
  const double x = r / rl;
  const double x2 = x * x;
  const double gauss = std::exp(-0.5 * x2);
  const double poly = p.c[0] + x2 * (p.c[1] + x2 * (p.c[2] + x2 * p.c[3]));
  double coulomb;
  if (r < 1e-8 * rl) {
    coulomb = -p.z_ion * std::sqrt(2.0 / kPi) / rl;
  } else {
    coulomb = -p.z_ion / r * std::erf(r / (std::sqrt(2.0) * rl));
  }
  return coulomb + gauss * poly;
}

namespace {

const GthParams& lookup(const GthTable& table, const std::string& species) {
  auto it = table.find(species);
  if (it == table.end()) {
    throw ConfigError("no pseudopotential parameters for species '" + species + "'");
  }
  return it->second;
}

// Fourier coefficient (times the cell volume) of one GTH local potential.
double gth_form_factor(const GthParams& p, double g2) {
  const double rl = p.r_loc;
  const double x = g2 * rl * rl;
  const double gauss = std::exp(-0.5 * x);
  const double pref = std::pow(2.0 * kPi, 1.5) * rl * rl * rl;
  const double poly = p.c[0] + p.c[1] * (3.0 - x) + p.c[2] * (15.0 - 10.0 * x + x * x) +
                      p.c[3] * (105.0 - 105.0 * x + 21.0 * x * x - x * x * x);
  return -4.0 * kPi * p.z_ion / g2 * gauss + pref * gauss * poly;
}

double gth_form_factor_regular_limit(const GthParams& p) {
  const double rl = p.r_loc;
  const double pref = std::pow(2.0 * kPi, 1.5) * rl * rl * rl;
  return 2.0 * kPi * p.z_ion * rl * rl + pref * (p.c[0] + 3.0 * p.c[1] + 15.0 * p.c[2] + 105.0 * p.c[3]);
}

}  // namespace

PotentialField gth_local_potential(const Grid& grid, const std::vector<Atom>& atoms,
                                   const GthTable& table) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  PotentialField v = PotentialField::zeros(grid);
  std::vector<cplx> vg(grid.size(), cplx{0.0, 0.0});
  const double omega = grid.volume();
  for (const auto& atom : atoms) {
    const GthParams& p = lookup(table, atom.species);
    // Isolated cells keep the finite G -> 0 limit of V(G) + 4 pi Z / G^2.
    if (!grid.periodic()) vg[0] += gth_form_factor_regular_limit(p) / omega;
    for (std::size_t i = 1; i < grid.size(); ++i) {
      const Vec3 g = grid.g_vector(i);
      const double g2 = g.squaredNorm();
      const double phase = -g.dot(atom.position);
      vg[i] += gth_form_factor(p, g2) / omega * cplx(std::cos(phase), std::sin(phase));
    }
  }
  fft3d(vg, grid.dims(), FftDirection::kInverse);
  for (Eigen::Index i = 0; i < n; ++i) v.values[i] = vg[static_cast<std::size_t>(i)].real();
  return v;
}

double ion_ion_energy(const Cell& cell) {
  if (cell.periodic) return 0.0;
  double e = 0.0;
  for (std::size_t a = 0; a < cell.atoms.size(); ++a) {
    for (std::size_t b = a + 1; b < cell.atoms.size(); ++b) {
      const double r = (cell.atoms[a].position - cell.atoms[b].position).norm();
      e += cell.atoms[a].z_ion * cell.atoms[b].z_ion / r;
    }
  }
  return e;
}

// ---------------------------------------------------------------------------
// Hartree

PotentialField hartree_potential(const DensityField& rho, const Grid& grid) {
  std::vector<cplx> work(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) work[i] = rho.values[static_cast<Eigen::Index>(i)];
  fft3d(work, grid.dims(), FftDirection::kForward);
  const double inv_n = 1.0 / static_cast<double>(grid.size());
  work[0] = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    work[i] *= 4.0 * kPi / grid.g_vector(i).squaredNorm() * inv_n;
  }
  fft3d(work, grid.dims(), FftDirection::kInverse);
  PotentialField v = PotentialField::zeros(grid);
  for (std::size_t i = 0; i < grid.size(); ++i) v.values[static_cast<Eigen::Index>(i)] = work[i].real();
  return v;
}

double hartree_energy(const DensityField& rho, const Grid& grid) {
  return 0.5 * hartree_potential(rho, grid).values.dot(rho.values) * grid.dv();
}

// ---------------------------------------------------------------------------
// LDA

namespace {

// Perdew-Wang 1992 unpolarised correlation, returns (eps_c, d eps_c / d rs).
std::pair<double, double> pw92(double rs) {
  constexpr double A = 0.031091;
  constexpr double a1 = 0.21370;
  constexpr double b1 = 7.5957;
  constexpr double b2 = 3.5876;
  constexpr double b3 = 1.6382;
  constexpr double b4 = 0.49294;
  const double srs = std::sqrt(rs);
  const double q0 = -2.0 * A * (1.0 + a1 * rs);
  const double q1 = 2.0 * A * (b1 * srs + b2 * rs + b3 * rs * srs + b4 * rs * rs);
  const double dq1 = A * (b1 / srs + 2.0 * b2 + 3.0 * b3 * srs + 4.0 * b4 * rs);
  const double lg = std::log1p(1.0 / q1);
  const double eps = q0 * lg;
  const double deps = -2.0 * A * a1 * lg - q0 * dq1 / (q1 * q1 + q1);
  return {eps, deps};
}

}  // namespace

XcPoint lda_point(double rho) {
  if (!(rho > 1e-30)) return {};
  const double rs = std::cbrt(3.0 / (4.0 * kPi * rho));
  const double ex = -0.75 * std::cbrt(3.0 * rho / kPi);
  const auto [ec, dec] = pw92(rs);
  XcPoint out;
  out.eps = ex + ec;
  out.v = 4.0 / 3.0 * ex + ec - rs / 3.0 * dec;
  return out;
}

XcResult lda_xc(const DensityField& rho, const Grid& grid) {
  const auto n = rho.values.size();
  XcResult out;
  out.potential.values.resize(n);
  out.eps.resize(n);
  double e = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = std::max(rho.values[i], 0.0);
    const XcPoint p = lda_point(r);
    out.eps[i] = p.eps;
    out.potential.values[i] = p.v;
    e += r * p.eps;
  }
  out.energy = e * grid.dv();
  return out;
}

// ---------------------------------------------------------------------------
// KS model and energies

KsModel::KsModel(Cell c, const GthTable& table) : cell(std::move(c)) {
  cell.validate();
  grid = build_grid(cell);
  for (auto& atom : cell.atoms) {
    const GthParams& p = lookup(table, atom.species);
    if (atom.z_ion == 0.0) atom.z_ion = p.z_ion;
  }
  v_ext = gth_local_potential(grid, cell.atoms, table);
}

PotentialField ks_potential(const DensityField& rho, const Grid& grid, const PotentialField& v_ext) {
  PotentialField v = hartree_potential(rho, grid);
  v.values += lda_xc(rho, grid).potential.values;
  v.values += v_ext.values;
  return v;
}

PotentialField ks_potential(const DensityField& rho, const KsModel& model) {
  return ks_potential(rho, model.grid, model.v_ext);
}

DoubleCounting double_counting(const DensityField& rho, const Grid& grid) {
  DoubleCounting dc;
  dc.hartree = hartree_energy(rho, grid);
  const XcResult xc = lda_xc(rho, grid);
  dc.xc = xc.energy;
  dc.vxc_rho = xc.potential.values.dot(rho.values) * grid.dv();
  return dc;
}

HarrisResult harris_energy(double band_energy, const DensityField& rho_in, const Grid& grid,
                           double lambda) {
  const DoubleCounting dc = double_counting(rho_in, grid);
  HarrisResult r;
  r.band_energy = band_energy;
  r.hartree = dc.hartree;
  r.vxc_rho = dc.vxc_rho;
  r.xc = dc.xc;
  r.total = band_energy - dc.hartree - dc.vxc_rho + dc.xc;
  r.lambda = lambda;
  return r;
}

double ks_total_energy(double band_energy, const DensityField& rho_out, const Grid& grid) {
  return harris_energy(band_energy, rho_out, grid).total;
}

// ---------------------------------------------------------------------------
// Input densities

DensityField input_density(double lambda, const DensityField& acceptor, const DensityField& donor,
                           std::vector<std::string>* warnings) {
  if ((lambda < 0.0 || lambda > 1.0) && warnings) {
    warnings->push_back("ionicity lambda = " + std::to_string(lambda) + " lies outside [0, 1]");
  }
  return DensityField((1.0 + lambda) * acceptor.values + (1.0 - lambda) * donor.values);
}

DensityField superpose(const std::vector<DensityField>& atom_densities,
                       const std::vector<double>& factors) {
  if (atom_densities.empty() || atom_densities.size() != factors.size()) {
    throw InvalidArgument("superpose: one factor per atom density required");
  }
  DensityField out(Eigen::VectorXd::Zero(atom_densities.front().values.size()));
  for (std::size_t a = 0; a < atom_densities.size(); ++a) {
    out.values += factors[a] * atom_densities[a].values;
  }
  return out;
}

// ---------------------------------------------------------------------------
// XC polynomial fit

double XcFit::energy_density(double rho) const {
  double e = 0.0;
  for (const auto& [alpha, c] : coeffs) e += c * std::pow(rho, alpha);
  return e;
}

XcFit xc_poly_fit(double rho_min, double rho_max, int degree, double tolerance,
                  const std::function<double(double)>& energy_density) {
  if (!(rho_min > 0.0) || !(rho_max > rho_min)) {
    throw InvalidArgument("xc_poly_fit: need 0 < rho_min < rho_max");
  }
  if (degree < 2) throw InvalidArgument("xc_poly_fit: degree must be >= 2");
  auto f = energy_density ? energy_density
                          : [](double r) { return r * lda_point(r).eps; };

  constexpr int kSamples = 400;
  const int nterms = degree - 1;
  Eigen::MatrixXd a(kSamples, nterms);
  Eigen::VectorXd b(kSamples);
  // Columns are scaled to rho/rho_max so the normal matrix stays O(1).
  const double lmin = std::log(rho_min);
  const double lmax = std::log(rho_max);
  for (int s = 0; s < kSamples; ++s) {
    const double rho = std::exp(lmin + (lmax - lmin) * s / (kSamples - 1));
    const double x = rho / rho_max;
    for (int t = 0; t < nterms; ++t) a(s, t) = std::pow(x, t + 2);
    b[s] = f(rho);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cond = sv[0] / sv[sv.size() - 1];
  if (!std::isfinite(cond) || cond > 1e12) {
    throw SolverError("xc_poly_fit: ill-conditioned fit (condition number " +
                      std::to_string(cond) + "); narrow the density range or lower the degree");
  }
  const Eigen::VectorXd scaled = svd.solve(b);
  XcFit fit;
  fit.rho_min = rho_min;
  fit.rho_max = rho_max;
  fit.tolerance = tolerance;
  for (int t = 0; t < nterms; ++t) fit.coeffs[t + 2] = scaled[t] / std::pow(rho_max, t + 2);
  const double bn = b.norm();
  fit.residual = bn > 0.0 ? (a * scaled - b).norm() / bn : 0.0;
  if (fit.residual > tolerance) {
    throw SolverError("xc_poly_fit: relative residual " + std::to_string(fit.residual) +
                      " exceeds tolerance " + std::to_string(tolerance) +
                      "; narrow the density range or raise the degree");
  }
  return fit;
}

// ---------------------------------------------------------------------------

HarrisScan variational_harris_scan(const std::vector<double>& lambdas,
                                   const std::function<HarrisResult(double)>& experiment) {
  if (lambdas.empty()) throw InvalidArgument("variational_harris_scan: empty lambda grid");
  HarrisScan scan;
  scan.points.reserve(lambdas.size());
  for (double l : lambdas) {
    HarrisResult r = experiment(l);
    r.lambda = l;
    scan.points.push_back(r);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < scan.points.size(); ++i) {
    const auto& p = scan.points[i];
    const auto& q = scan.points[best];
    if (p.total > q.total || (p.total == q.total && p.lambda < q.lambda)) best = i;
  }
  scan.best_index = best;
  scan.lambda_star = scan.points[best].lambda;
  const auto [lo, hi] = std::minmax_element(lambdas.begin(), lambdas.end());
  scan.boundary = scan.lambda_star == *lo || scan.lambda_star == *hi;
  return scan;
}

}  // namespace qedft
