// Copyright 2026 The qedft Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <thread>

#include <unistd.h>

#include "qedft/dft.hpp"
#include "qedft/error.hpp"
#include "qedft/oracle.hpp"

namespace qedft {

namespace {

std::string cache_key(const Atom& atom, const Cell& cell, const GthParams& p,
                      const AtomDensityOptions& options) {
  std::ostringstream s;
  s << std::setprecision(17) << "vext-g " << atom.species << ' ' << p.z_ion << ' ' << p.r_loc;
  for (double c : p.c) s << ' ' << c;
  for (int a = 0; a < 3; ++a) s << ' ' << atom.position[a] << ' ' << cell.lengths[a] << ' ' << cell.qubits[a];
  s << ' ' << cell.periodic << ' ' << options.scf_tol;
  std::ostringstream name;
  name << "atom-" << atom.species << '-' << std::hex << std::hash<std::string>{}(s.str()) << ".bin";
  return name.str();
}

}  // namespace

DensityField isolated_atom_density(const Atom& atom, const Cell& cell, const GthTable& table,
                                   const AtomDensityOptions& options) {
  auto it = table.find(atom.species);
  if (it == table.end()) throw ConfigError("no pseudopotential for species " + atom.species);
  Cell alone = cell;
  alone.atoms = {atom};
  alone.atoms.front().z_ion = it->second.z_ion;
  const KsModel model(alone, table);
  const Grid& grid = model.grid;
  const auto n = static_cast<Eigen::Index>(grid.size());

  std::filesystem::path cache_file;
  if (options.cache_dir) {
    cache_file = *options.cache_dir / cache_key(model.cell.atoms.front(), alone, it->second, options);
    std::ifstream in(cache_file, std::ios::binary);
    if (in) {
      Eigen::VectorXd v(n);
      in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
      if (in && in.peek() == std::char_traits<char>::eof()) return DensityField(v);
    }
  }

  // Start from a normalised Gaussian of width r_loc + 1 bohr.
  const Vec3 center = model.cell.atoms.front().position;
  const double w = it->second.r_loc + 1.0;
  Eigen::VectorXd rho0(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 d = grid.displacement(grid.point(static_cast<std::size_t>(i)), center);
    rho0[i] = std::exp(-d.squaredNorm() / (2.0 * w * w));
  }
  rho0 *= model.electron_count() / (rho0.sum() * grid.dv());

  OracleOptions oo;
  oo.tol = options.scf_tol;
  oo.max_iter = options.max_iter;
  const OracleResult res = scf_loop(model, DensityField(rho0), oo);

  if (!cache_file.empty()) {
    // Concurrent writers each rename a private file; readers never see a
    // partial one.
    std::filesystem::create_directories(cache_file.parent_path());
    std::ostringstream tag;
    tag << ".tmp-" << std::this_thread::get_id() << '-' << ::getpid();
    auto tmp = cache_file;
    tmp += tag.str();
    {
      std::ofstream out(tmp, std::ios::binary);
      out.write(reinterpret_cast<const char*>(res.density.values.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
    }
    std::error_code ec;
    std::filesystem::rename(tmp, cache_file, ec);
    if (ec) std::filesystem::remove(tmp, ec);
  }
  return res.density;
}

}  // namespace qedft
