#pragma once

// Shared test helpers: random structures, a scratch directory, and a naive
// double-precision gridding oracle that visits every (voxel, atom) pair.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "voxmol/voxmol.hpp"

namespace testing_support {

using namespace voxmol;

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("voxmol_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    const auto p = file(name);
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }

 private:
  std::filesystem::path path_;
};

// Heavy elements all mapped by the default typer.
inline const std::vector<int> typed_elements = {6, 7, 8, 16, 15, 9, 17, 35, 53, 26, 5, 34, 14, 33};

inline RawMolecule random_molecule(std::mt19937_64& rng, std::size_t atoms, float spread, const std::string& name = "m") {
  std::uniform_real_distribution<float> pos(-spread, spread);
  std::uniform_int_distribution<std::size_t> el(0, typed_elements.size() - 1);
  RawMolecule m;
  m.name = name;
  for (std::size_t i = 0; i < atoms; ++i)
    m.atoms.push_back({static_cast<std::uint8_t>(typed_elements[el(rng)]), {pos(rng), pos(rng), pos(rng)}});
  return m;
}

inline std::string to_xyz(const RawMolecule& m) {
  std::ostringstream s;
  s.precision(9);
  s << m.atoms.size() << "\n" << m.name << "\n";
  for (const auto& a : m.atoms)
    s << element_symbol(a.element) << " " << a.position.x << " " << a.position.y << " " << a.position.z << "\n";
  return s.str();
}

inline double oracle_density(double d, double r, double grm, bool binary) {
  if (binary) return d <= r ? 1.0 : 0.0;
  const double d0 = grm * r;
  const double dz = r * (1 + 2 * grm * grm) / (2 * grm);
  if (d <= d0) return std::exp(-2 * d * d / (r * r));
  if (d >= dz) return 0.0;
  const double a = std::exp(-2 * grm * grm) / ((d0 - dz) * (d0 - dz));
  return a * (d - dz) * (d - dz);
}

struct OracleAtom {
  double x, y, z;
  std::vector<double> weights;  // per channel
  std::vector<double> radii;    // per channel
};

inline std::vector<OracleAtom> oracle_atoms(const CoordinateSet& set, const GridMakerConfig& cfg) {
  std::vector<OracleAtom> out;
  for (std::size_t a = 0; a < set.size(); ++a) {
    OracleAtom o{set.coords[a].x, set.coords[a].y, set.coords[a].z, {}, {}};
    for (int c = 0; c < set.num_types; ++c) {
      o.weights.push_back(set.type_weight(a, c));
      const double r = set.vector_mode() && cfg.radius_type_indexed ? set.type_radii[c] : set.radii[a];
      o.radii.push_back(r * cfg.radius_scale);
    }
    out.push_back(std::move(o));
  }
  return out;
}

/// C x D^3 grid in double; voxel (i,j,k) at origin + resolution * (i,j,k).
inline std::vector<double> oracle_forward(const GridMakerConfig& cfg, const Vec3& center,
                                          const std::vector<OracleAtom>& atoms, int channels) {
  const int dim = static_cast<int>(std::lround(double(cfg.dimension) / cfg.resolution)) + 1;
  const double half = (dim - 1) * double(cfg.resolution) / 2.0;
  const double ox = center.x - half, oy = center.y - half, oz = center.z - half;
  std::vector<double> grid(static_cast<std::size_t>(channels) * dim * dim * dim, 0.0);
  const std::size_t volume = static_cast<std::size_t>(dim) * dim * dim;
  std::vector<std::vector<int>> active(atoms.size());  // channels with non-zero weight
  for (std::size_t n = 0; n < atoms.size(); ++n)
    for (int c = 0; c < channels; ++c)
      if (atoms[n].weights[c] != 0) active[n].push_back(c);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      for (int k = 0; k < dim; ++k) {
        const double vx = ox + cfg.resolution * i, vy = oy + cfg.resolution * j, vz = oz + cfg.resolution * k;
        const std::size_t voxel = (static_cast<std::size_t>(i) * dim + j) * dim + k;
        for (std::size_t n = 0; n < atoms.size(); ++n) {
          const auto& a = atoms[n];
          const double d = std::sqrt((vx - a.x) * (vx - a.x) + (vy - a.y) * (vy - a.y) + (vz - a.z) * (vz - a.z));
          for (int c : active[n]) {
            const double v = a.weights[c] * oracle_density(d, a.radii[c], cfg.gaussian_radius_multiple, cfg.binary);
            double& cell = grid[c * volume + voxel];
            cell = cfg.binary ? std::max(cell, v) : cell + v;
          }
        }
      }
  return grid;
}

inline std::vector<double> oracle_forward(const GridMakerConfig& cfg, const Vec3& center, const CoordinateSet& set) {
  return oracle_forward(cfg, center, oracle_atoms(set, cfg), set.num_types);
}

inline double max_abs_diff(std::span<const float> a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
  return m;
}

// Objective sum_v g[c, v] * density(|v - p|) for one atom/channel, in double,
// visiting every voxel of the channel.
inline double atom_objective(const GridMakerConfig& cfg, const Vec3& center, const double p[3], double r, int channel,
                             std::span<const float> g) {
  const int dim = static_cast<int>(std::lround(double(cfg.dimension) / cfg.resolution)) + 1;
  const double half = (dim - 1) * double(cfg.resolution) / 2.0;
  const double o[3] = {center.x - half, center.y - half, center.z - half};
  const std::size_t volume = static_cast<std::size_t>(dim) * dim * dim;
  const float* gc = g.data() + static_cast<std::size_t>(channel) * volume;
  double sum = 0;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      for (int k = 0; k < dim; ++k) {
        const double dx = o[0] + cfg.resolution * i - p[0], dy = o[1] + cfg.resolution * j - p[1],
                     dz = o[2] + cfg.resolution * k - p[2];
        const float gv = gc[(static_cast<std::size_t>(i) * dim + j) * dim + k];
        if (gv == 0.0f) continue;
        sum += gv * oracle_density(std::sqrt(dx * dx + dy * dy + dz * dz), r, cfg.gaussian_radius_multiple, false);
      }
  return sum;
}

struct GradientComparison {
  std::vector<double> analytic;
  std::vector<double> numeric;

  // |analytic - numeric| / max(|numeric|, floor * max|numeric|, tiny)
  double max_relative_error(double floor) const {
    double scale = 0;
    for (double v : numeric) scale = std::max(scale, std::abs(v));
    double worst = 0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double denom = std::max({std::abs(numeric[i]), floor * scale, 1e-12});
      worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
  }

  // Error of each 3-vector block relative to the block's norm (one block per atom).
  double max_blockwise_error(std::size_t block = 3) const {
    double worst = 0;
    for (std::size_t b = 0; b + block <= numeric.size(); b += block) {
      double norm = 0, err = 0;
      for (std::size_t i = b; i < b + block; ++i) {
        norm += numeric[i] * numeric[i];
        err = std::max(err, std::abs(analytic[i] - numeric[i]));
      }
      worst = std::max(worst, err / std::max(std::sqrt(norm), 1e-12));
    }
    return worst;
  }

  void append(const GradientComparison& o) {
    analytic.insert(analytic.end(), o.analytic.begin(), o.analytic.end());
    numeric.insert(numeric.end(), o.numeric.begin(), o.numeric.end());
  }
};

/// Central differences of sum(g * forward) w.r.t. each atom coordinate (and
/// each type weight in vector mode) against GridMaker::backward.
inline std::pair<GradientComparison, GradientComparison> compare_gradients(const GridMaker& maker, const Vec3& center,
                                                                           const CoordinateSet& set,
                                                                           const ManagedGrid<float>& g, double h) {
  const auto& cfg = maker.config();
  const auto grads = maker.backward(center, set, g.view());
  const auto atoms = oracle_atoms(set, cfg);
  GradientComparison coords, types;
  for (std::size_t a = 0; a < set.size(); ++a) {
    for (int k = 0; k < 3; ++k) {
      double fd = 0;
      for (int c = 0; c < set.num_types; ++c) {
        if (atoms[a].weights[c] == 0) continue;
        double p[3] = {atoms[a].x, atoms[a].y, atoms[a].z};
        p[k] += h;
        const double up = atom_objective(cfg, center, p, atoms[a].radii[c], c, g.values());
        p[k] -= 2 * h;
        const double down = atom_objective(cfg, center, p, atoms[a].radii[c], c, g.values());
        fd += atoms[a].weights[c] * (up - down) / (2 * h);
      }
      coords.numeric.push_back(fd);
      coords.analytic.push_back(grads.coords[a][k]);
    }
    if (set.vector_mode()) {
      for (int c = 0; c < set.num_types; ++c) {
        const double p[3] = {atoms[a].x, atoms[a].y, atoms[a].z};
        const double base = atom_objective(cfg, center, p, atoms[a].radii[c], c, g.values());
        const double w = atoms[a].weights[c];
        types.numeric.push_back(((w + h) * base - (w - h) * base) / (2 * h));
        types.analytic.push_back(grads.types[a * static_cast<std::size_t>(set.num_types) + c]);
      }
    }
  }
  return {coords, types};
}

}  // namespace testing_support
