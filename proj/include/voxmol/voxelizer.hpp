#pragma once

// GridMaker: typed coordinates -> C x D x D x D density grids, and grid
// gradients -> atomic coordinate/type gradients.
//
// Density of an atom with (scaled) radius r at distance d, grm = Gaussian
// radius multiple, d0 = grm*r, dz = r*(1 + 2 grm^2)/(2 grm):
//   d <= d0       exp(-2 d^2 / r^2)
//   d0 < d < dz   a (d - dz)^2,  a = exp(-2 grm^2) / (d0 - dz)^2
//   d >= dz       0
// The quadratic tail matches value and slope at d0 and reaches zero with
// zero slope at dz. Binary mode is 1 for d <= r, else 0.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "example.hpp"
#include "geom.hpp"
#include "grid.hpp"
#include "parallel.hpp"
#include "typing.hpp"
#include "vec3.hpp"

namespace voxmol {

struct GridMakerConfig {
  float resolution = 0.5f;
  float dimension = 23.5f;
  bool binary = false;
  bool radius_type_indexed = false;
  float radius_scale = 1.0f;
  float gaussian_radius_multiple = 1.0f;

  void validate() const {
    if (!(resolution > 0) || !std::isfinite(resolution)) throw ArgumentError("resolution must be > 0");
    if (!(dimension > 0) || !std::isfinite(dimension)) throw ArgumentError("dimension must be > 0");
    if (!(radius_scale > 0) || !std::isfinite(radius_scale)) throw ArgumentError("radius_scale must be > 0");
    if (!(gaussian_radius_multiple > 0) || !std::isfinite(gaussian_radius_multiple))
      throw ArgumentError("gaussian_radius_multiple must be > 0");
  }
};

/// Grid points per side: round(dimension / resolution) + 1 (points, not cells).
inline std::size_t points_per_side(const GridMakerConfig& cfg) {
  return static_cast<std::size_t>(std::lround(double(cfg.dimension) / double(cfg.resolution))) + 1;
}

class DensityKernel {
 public:
  DensityKernel(float radius, float grm, bool binary) : radius_(radius), binary_(binary) {
    if (!(radius > 0) || !std::isfinite(radius)) throw ArgumentError("atomic radius must be > 0");
    if (!(grm > 0)) throw ArgumentError("gaussian_radius_multiple must be > 0");
    inv_r2_ = 1.0f / (radius * radius);
    gauss_end_ = grm * radius;
    // round the zero point down so every float d >= the exact zero point maps to 0
    const double zero = double(radius) * (1.0 + 2.0 * double(grm) * grm) / (2.0 * grm);
    zero_at_ = static_cast<float>(zero);
    if (double(zero_at_) > zero) zero_at_ = std::nextafter(zero_at_, 0.0f);
    const float span = gauss_end_ - zero_at_;
    quad_coef_ = std::exp(-2.0f * grm * grm) / (span * span);
    cutoff_ = binary ? radius : zero_at_;
    gauss_end2_ = gauss_end_ * gauss_end_;
    cutoff2_ = cutoff_ * cutoff_;
  }

  DensityKernel(float radius, const GridMakerConfig& cfg)
      : DensityKernel(radius, cfg.gaussian_radius_multiple, cfg.binary) {}

  float radius() const { return radius_; }
  float gaussian_end() const { return gauss_end_; }
  float zero_at() const { return zero_at_; }
  float quadratic_coefficient() const { return quad_coef_; }
  bool binary() const { return binary_; }
  /// Largest distance with possibly non-zero density.
  float cutoff() const { return cutoff_; }

  float value(float d) const {
    if (binary_) return d <= radius_ ? 1.0f : 0.0f;
    if (d >= zero_at_) return 0.0f;
    if (d <= gauss_end_) return std::exp(-2.0f * d * d * inv_r2_);
    const float q = d - zero_at_;
    return quad_coef_ * q * q;
  }

  /// value() from a squared distance; avoids the sqrt in the Gaussian core.
  float value_sq(float d2) const {
    if (binary_) return d2 <= cutoff2_ ? 1.0f : 0.0f;
    if (d2 >= cutoff2_) return 0.0f;
    if (d2 <= gauss_end2_) return std::exp(-2.0f * d2 * inv_r2_);
    const float q = std::sqrt(d2) - zero_at_;
    return quad_coef_ * q * q;
  }

  /// d(density)/dd; zero in binary mode.
  float derivative(float d) const {
    if (binary_ || d >= zero_at_) return 0.0f;
    if (d <= gauss_end_) return -4.0f * d * inv_r2_ * std::exp(-2.0f * d * d * inv_r2_);
    return 2.0f * quad_coef_ * (d - zero_at_);
  }

 private:
  float radius_;
  bool binary_;
  float inv_r2_ = 0, gauss_end_ = 0, zero_at_ = 0, quad_coef_ = 0, cutoff_ = 0;
  float gauss_end2_ = 0, cutoff2_ = 0;
};

/// Density at distance d for an atom of radius r (radius_scale already applied).
inline float density(float d, float r, const GridMakerConfig& cfg) {
  if (!(r > 0)) throw ArgumentError("atomic radius must be > 0");
  return DensityKernel(r, cfg).value(d);
}

inline float density_derivative(float d, float r, const GridMakerConfig& cfg) {
  if (!(r > 0)) throw ArgumentError("atomic radius must be > 0");
  return DensityKernel(r, cfg).derivative(d);
}

/// Gradients for one coordinate set. types is N x num_types row-major and
/// only filled for vector-typed inputs.
struct AtomGradients {
  std::vector<Vec3> coords;
  std::vector<float> types;
  int num_types = 0;
  bool has_types = false;
};

namespace detail {

struct KernelTerm {
  std::uint32_t channel;
  float weight;
  DensityKernel kernel;
};

struct Placement {
  Vec3 offset;  // grid origin - atom position
  int lo[3];
  int hi[3];  // inclusive voxel index range
  std::uint32_t first_term;
  std::uint32_t num_terms;
};

// Everything needed to grid one example: per-atom placements bucketed by
// x-plane, in atom order, so each voxel sums its atoms in a fixed order.
struct ExamplePlan {
  std::vector<Placement> placements;
  std::vector<KernelTerm> terms;
  std::vector<std::vector<std::uint32_t>> by_plane;
};

inline float kernel_radius(const CoordinateSet& set, std::size_t atom, int channel, const GridMakerConfig& cfg) {
  if (set.vector_mode() && cfg.radius_type_indexed) {
    if (static_cast<std::size_t>(channel) >= set.type_radii.size())
      throw ArgumentError("radius_type_indexed requires a per-type radius table");
    return set.type_radii[static_cast<std::size_t>(channel)] * cfg.radius_scale;
  }
  return set.radii[atom] * cfg.radius_scale;
}

inline void check_set(const CoordinateSet& set) {
  if (set.radii.size() != set.size()) throw ArgumentError("coordinate set radii length differs from atom count");
  if (set.vector_mode()) {
    if (set.type_vector.size() != set.size() * static_cast<std::size_t>(set.num_types))
      throw ArgumentError("type vector matrix must be N x num_types");
  } else if (set.type_index.size() != set.size()) {
    throw ArgumentError("type index length differs from atom count");
  }
}

inline void voxel_range(const Vec3& offset, float cutoff, float resolution, int dim, int lo[3], int hi[3]) {
  // offset = origin - atom; voxel i sits at atom + offset + resolution * i
  for (int k = 0; k < 3; ++k) {
    const float p = -offset[k];
    const float l = std::ceil((p - cutoff) / resolution - 1e-4f);
    const float h = std::floor((p + cutoff) / resolution + 1e-4f);
    lo[k] = static_cast<int>(std::clamp(l, 0.0f, float(dim)));
    hi[k] = static_cast<int>(std::clamp(h, -1.0f, float(dim - 1)));
  }
}

}  // namespace detail

class GridMaker {
 public:
  explicit GridMaker(GridMakerConfig cfg = {}, unsigned threads = 0)
      : cfg_(cfg), threads_(threads ? threads : default_thread_count()) {
    cfg_.validate();
    dim_ = points_per_side(cfg_);
  }

  const GridMakerConfig& config() const { return cfg_; }
  std::size_t dim() const { return dim_; }
  unsigned threads() const { return threads_; }
  void set_threads(unsigned n) { threads_ = n ? n : default_thread_count(); }

  /// Position of voxel (0,0,0) for a grid centered on `center`. Equals
  /// center - dimension/2 whenever dimension is a multiple of resolution.
  Vec3 grid_origin(const Vec3& center) const {
    const float half = static_cast<float>(double(dim_ - 1) * cfg_.resolution / 2.0);
    return {center.x - half, center.y - half, center.z - half};
  }

  GridShape grid_shape(std::size_t channels) const { return {channels, dim_, dim_, dim_}; }
  GridShape batch_shape(std::size_t n, std::size_t channels) const { return {n, channels, dim_, dim_, dim_}; }

  ManagedGrid<float> make_grid(std::size_t channels) const { return ManagedGrid<float>(grid_shape(channels)); }

  // ---- forward -----------------------------------------------------------

  void forward(const Vec3& center, const CoordinateSet& atoms, GridView<float> out) const {
    forward_sets(center, std::span<const CoordinateSet>(&atoms, 1), nullptr, out);
  }

  /// Samples one augmentation transform about `center` from rng and grids
  /// the transformed atoms. Returns the transform used.
  Transform forward(const Vec3& center, const CoordinateSet& atoms, GridView<float> out, float random_translation,
                    bool random_rotation, Rng& rng) const {
    Transform t = make_transform(center, random_translation, random_rotation, rng);
    forward_sets(center, std::span<const CoordinateSet>(&atoms, 1), &t, out);
    return t;
  }

  /// Explicit transform; the grid is centered on the transform's center.
  void forward(const Transform& t, const CoordinateSet& atoms, GridView<float> out) const {
    forward_sets(t.center(), std::span<const CoordinateSet>(&atoms, 1), &t, out);
  }

  /// All coordinate sets of one example, in consecutive channel blocks.
  void forward(const Vec3& center, const Example& ex, GridView<float> out) const {
    forward_sets(center, ex.coord_sets, nullptr, out);
  }

  /// Default grid center of an example: centroid of its last coordinate set.
  static Vec3 default_center(const Example& ex) {
    for (auto it = ex.coord_sets.rbegin(); it != ex.coord_sets.rend(); ++it)
      if (!it->empty()) return it->centroid();
    return {};
  }

  /// N x C x D x D x D. Example n fills slab n. With augmentation each
  /// example gets its own transform, drawn from rng in example order.
  std::vector<Transform> forward_batch(std::span<const Example> batch, GridView<float> out, Rng& rng,
                                       float random_translation = 0.0f, bool random_rotation = false,
                                       std::span<const Vec3> centers = {}) const {
    return forward_batch_impl(batch, out, &rng, random_translation, random_rotation, centers);
  }

  std::vector<Transform> forward_batch(std::span<const Example> batch, GridView<float> out,
                                       std::span<const Vec3> centers = {}) const {
    return forward_batch_impl(batch, out, nullptr, 0.0f, false, centers);
  }

  // ---- backward ----------------------------------------------------------

  AtomGradients backward(const Vec3& center, const CoordinateSet& atoms, GridView<const float> grid_grad) const {
    check_grid(grid_grad.shape(), atoms.num_types, "gradient grid");
    return backward_set(grid_origin(center), atoms, atoms.coords, grid_grad.data(), 0, nullptr);
  }

  /// Gradients w.r.t. the untransformed coordinates of a set gridded with t.
  AtomGradients backward(const Transform& t, const CoordinateSet& atoms, GridView<const float> grid_grad) const {
    check_grid(grid_grad.shape(), atoms.num_types, "gradient grid");
    std::vector<Vec3> moved(atoms.size());
    t.forward(atoms.coords, moved);
    return backward_set(grid_origin(t.center()), atoms, moved, grid_grad.data(), 0, &t);
  }

  /// One AtomGradients per coordinate set of the example.
  std::vector<AtomGradients> backward(const Vec3& center, const Example& ex, GridView<const float> grid_grad) const {
    check_grid(grid_grad.shape(), ex.num_types(), "gradient grid");
    std::vector<AtomGradients> out;
    std::uint32_t offset = 0;
    for (const auto& set : ex.coord_sets) {
      out.push_back(backward_set(grid_origin(center), set, set.coords, grid_grad.data(), offset, nullptr));
      offset += static_cast<std::uint32_t>(set.num_types);
    }
    return out;
  }

 private:
  void check_grid(const GridShape& s, int channels, const char* what) const {
    if (s.rank() != 4 || s.extent(0) != static_cast<std::size_t>(channels) || s.extent(1) != dim_ ||
        s.extent(2) != dim_ || s.extent(3) != dim_)
      throw ArgumentError(std::string(what) + " has shape " + s.str() + ", expected " +
                          grid_shape(static_cast<std::size_t>(std::max(channels, 1))).str() +
                          (channels == 0 ? " with 0 channels" : ""));
  }

  void forward_sets(const Vec3& center, std::span<const CoordinateSet> sets, const Transform* t,
                    GridView<float> out) const {
    int channels = 0;
    for (const auto& s : sets) channels += s.num_types;
    check_grid(out.shape(), channels, "output grid");
    const auto plan = make_plan(grid_origin(center), sets, t);
    parallel_for(dim_, threads_, [&](std::size_t i) {
      fill_plane(plan, i, out.data(), static_cast<std::size_t>(channels));
    });
  }

  std::vector<Transform> forward_batch_impl(std::span<const Example> batch, GridView<float> out, Rng* rng,
                                            float random_translation, bool random_rotation,
                                            std::span<const Vec3> centers) const {
    const auto& s = out.shape();
    if (s.rank() != 5 || s.extent(0) != batch.size() || s.extent(2) != dim_ || s.extent(3) != dim_ ||
        s.extent(4) != dim_)
      throw ArgumentError("batch grid has shape " + s.str() + ", expected " +
                          std::to_string(batch.size()) + " x C x " + std::to_string(dim_) + "^3");
    if (!centers.empty() && centers.size() != batch.size())
      throw ArgumentError("centers must be empty or one per example");
    const std::size_t channels = s.extent(1);
    for (const auto& ex : batch)
      if (static_cast<std::size_t>(ex.num_types()) != channels)
        throw ArgumentError("batch grid has " + std::to_string(channels) + " channels but an example needs " +
                            std::to_string(ex.num_types()));
    const bool augment = random_rotation || random_translation != 0.0f;
    if (augment && !rng) throw ArgumentError("random augmentation requires an rng");

    std::vector<Transform> transforms;
    std::vector<detail::ExamplePlan> plans;
    transforms.reserve(batch.size());
    plans.reserve(batch.size());
    for (std::size_t n = 0; n < batch.size(); ++n) {
      const Vec3 center = centers.empty() ? default_center(batch[n]) : centers[n];
      transforms.push_back(augment ? make_transform(center, random_translation, random_rotation, *rng)
                                   : Transform(Quaternion(), center));
      plans.push_back(make_plan(grid_origin(center), batch[n].coord_sets, augment ? &transforms.back() : nullptr));
    }

    const std::size_t slab = channels * dim_ * dim_ * dim_;
    parallel_for(batch.size() * dim_, threads_, [&](std::size_t task) {
      const std::size_t n = task / dim_, i = task % dim_;
      fill_plane(plans[n], i, out.data() + n * slab, channels);
    });
    return transforms;
  }

  detail::ExamplePlan make_plan(const Vec3& origin, std::span<const CoordinateSet> sets, const Transform* t) const {
    detail::ExamplePlan plan;
    plan.by_plane.resize(dim_);
    const int dim = static_cast<int>(dim_);
    std::uint32_t channel_offset = 0;
    for (const auto& set : sets) {
      detail::check_set(set);
      for (std::size_t a = 0; a < set.size(); ++a) {
        const Vec3 pos = t ? t->apply(set.coords[a]) : set.coords[a];
        if (!is_finite(pos)) throw ArgumentError("non-finite atom coordinate");
        detail::Placement p{};
        p.offset = origin - pos;
        p.first_term = static_cast<std::uint32_t>(plan.terms.size());
        float reach = 0;
        if (set.vector_mode()) {
          for (int c = 0; c < set.num_types; ++c) {
            const float w = set.type_weight(a, c);
            if (w == 0.0f) continue;
            detail::KernelTerm term{channel_offset + static_cast<std::uint32_t>(c), w,
                                    DensityKernel(detail::kernel_radius(set, a, c, cfg_), cfg_)};
            reach = std::max(reach, term.kernel.cutoff());
            plan.terms.push_back(term);
          }
        } else {
          const int type = set.type_index[a];
          if (type < 0 || type >= set.num_types) throw ArgumentError("atom type index out of range");
          detail::KernelTerm term{channel_offset + static_cast<std::uint32_t>(type), 1.0f,
                                  DensityKernel(set.radii[a] * cfg_.radius_scale, cfg_)};
          reach = term.kernel.cutoff();
          plan.terms.push_back(term);
        }
        p.num_terms = static_cast<std::uint32_t>(plan.terms.size()) - p.first_term;
        if (p.num_terms == 0) continue;
        detail::voxel_range(p.offset, reach, cfg_.resolution, dim, p.lo, p.hi);
        if (p.lo[0] > p.hi[0] || p.lo[1] > p.hi[1] || p.lo[2] > p.hi[2]) continue;
        const auto idx = static_cast<std::uint32_t>(plan.placements.size());
        plan.placements.push_back(p);
        for (int x = p.lo[0]; x <= p.hi[0]; ++x) plan.by_plane[static_cast<std::size_t>(x)].push_back(idx);
      }
      channel_offset += static_cast<std::uint32_t>(set.num_types);
    }
    return plan;
  }

  // Zero x-plane i of every channel, then accumulate its atoms in order.
  void fill_plane(const detail::ExamplePlan& plan, std::size_t i, float* slab, std::size_t channels) const {
    const std::size_t d = dim_, plane = d * d, volume = plane * d;
    for (std::size_t c = 0; c < channels; ++c) std::fill_n(slab + c * volume + i * plane, plane, 0.0f);
    const float res = cfg_.resolution;
    const bool binary = cfg_.binary;
    for (std::uint32_t pi : plan.by_plane[i]) {
      const auto& p = plan.placements[pi];
      const float dx = p.offset.x + res * static_cast<float>(i);
      const float dx2 = dx * dx;
      for (int j = p.lo[1]; j <= p.hi[1]; ++j) {
        const float dy = p.offset.y + res * static_cast<float>(j);
        const float dxy2 = dx2 + dy * dy;
        for (int k = p.lo[2]; k <= p.hi[2]; ++k) {
          const float dz = p.offset.z + res * static_cast<float>(k);
          const float d2 = dxy2 + dz * dz;
          const std::size_t voxel = i * plane + static_cast<std::size_t>(j) * d + static_cast<std::size_t>(k);
          for (std::uint32_t t = 0; t < p.num_terms; ++t) {
            const auto& term = plan.terms[p.first_term + t];
            const float v = term.kernel.value_sq(d2);
            if (v == 0.0f) continue;
            float& cell = slab[term.channel * volume + voxel];
            if (binary)
              cell = std::max(cell, term.weight * v);
            else
              cell += term.weight * v;
          }
        }
      }
    }
  }

  AtomGradients backward_set(const Vec3& origin, const CoordinateSet& set, std::span<const Vec3> positions,
                             const float* grad, std::uint32_t channel_offset, const Transform* t) const {
    detail::check_set(set);
    AtomGradients out;
    out.num_types = set.num_types;
    out.has_types = set.vector_mode();
    out.coords.assign(set.size(), Vec3{});
    if (out.has_types) out.types.assign(set.size() * static_cast<std::size_t>(set.num_types), 0.0f);

    const std::size_t d = dim_, plane = d * d, volume = plane * d;
    const int dim = static_cast<int>(dim_);
    const float res = cfg_.resolution;

    parallel_for(set.size(), threads_, [&](std::size_t a) {
      const Vec3 pos = positions[a];
      if (!is_finite(pos)) throw ArgumentError("non-finite atom coordinate");
      // kernels per channel this atom touches (all channels in vector mode)
      std::vector<std::pair<std::uint32_t, DensityKernel>> kernels;
      std::vector<float> weights;
      float reach = 0;
      if (set.vector_mode()) {
        for (int c = 0; c < set.num_types; ++c) {
          kernels.emplace_back(static_cast<std::uint32_t>(c), DensityKernel(detail::kernel_radius(set, a, c, cfg_), cfg_));
          weights.push_back(set.type_weight(a, c));
          reach = std::max(reach, kernels.back().second.cutoff());
        }
      } else {
        kernels.emplace_back(static_cast<std::uint32_t>(set.type_index[a]),
                             DensityKernel(set.radii[a] * cfg_.radius_scale, cfg_));
        weights.push_back(1.0f);
        reach = kernels.back().second.cutoff();
      }

      const Vec3 offset = origin - pos;
      int lo[3], hi[3];
      detail::voxel_range(offset, reach, res, dim, lo, hi);
      double g[3] = {0, 0, 0};
      std::vector<double> tg(kernels.size(), 0.0);
      for (int i = lo[0]; i <= hi[0]; ++i) {
        const float dx = offset.x + res * static_cast<float>(i);
        for (int j = lo[1]; j <= hi[1]; ++j) {
          const float dy = offset.y + res * static_cast<float>(j);
          for (int k = lo[2]; k <= hi[2]; ++k) {
            const float dz = offset.z + res * static_cast<float>(k);
            const float d2 = dx * dx + dy * dy + dz * dz;
            const float dist = std::sqrt(d2);
            const std::size_t voxel = static_cast<std::size_t>(i) * plane + static_cast<std::size_t>(j) * d +
                                      static_cast<std::size_t>(k);
            for (std::size_t q = 0; q < kernels.size(); ++q) {
              const auto& [c, kern] = kernels[q];
              const bool inside = kern.binary() ? dist <= kern.cutoff() : dist < kern.cutoff();
              if (!inside) continue;
              const float gv = grad[(channel_offset + c) * volume + voxel];
              if (gv == 0.0f) continue;
              if (out.has_types) tg[q] += double(gv) * kern.value(dist);
              if (weights[q] == 0.0f || dist == 0.0f) continue;
              // d density / d atom = f'(d) (atom - voxel) / d, and atom - voxel = -(dx, dy, dz)
              const double s = -double(gv) * weights[q] * kern.derivative(dist) / dist;
              g[0] += s * dx;
              g[1] += s * dy;
              g[2] += s * dz;
            }
          }
        }
      }
      Vec3 grad_pos{static_cast<float>(g[0]), static_cast<float>(g[1]), static_cast<float>(g[2])};
      out.coords[a] = t ? t->backward_rotate(grad_pos) : grad_pos;
      if (out.has_types)
        for (std::size_t q = 0; q < kernels.size(); ++q)
          out.types[a * static_cast<std::size_t>(set.num_types) + kernels[q].first] = static_cast<float>(tg[q]);
    });
    return out;
  }

  GridMakerConfig cfg_;
  unsigned threads_;
  std::size_t dim_ = 0;
};

}  // namespace voxmol
