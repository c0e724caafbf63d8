#pragma once

// Rigid transforms: quaternion rotation about a center, then translation.

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <string>

#include "error.hpp"
#include "example.hpp"
#include "grid.hpp"
#include "vec3.hpp"

namespace voxmol {

using Rng = std::mt19937_64;

class Quaternion {
 public:
  constexpr Quaternion() = default;
  Quaternion(float w, float x, float y, float z) : w_(w), x_(x), y_(y), z_(z) { normalize(); }

  float w() const { return w_; }
  float x() const { return x_; }
  float y() const { return y_; }
  float z() const { return z_; }

  float norm() const {
    return static_cast<float>(std::sqrt(double(w_) * w_ + double(x_) * x_ + double(y_) * y_ + double(z_) * z_));
  }
  Quaternion conjugate() const { return Quaternion(w_, -x_, -y_, -z_); }
  Quaternion inverse() const { return conjugate(); }

  /// Rotation angle in radians, in [0, pi].
  double angle() const { return 2.0 * std::acos(std::min(1.0, std::abs(double(w_)))); }

  bool is_identity() const { return w_ == 1.0f && x_ == 0.0f && y_ == 0.0f && z_ == 0.0f; }

  friend Quaternion operator*(const Quaternion& a, const Quaternion& b) {
    return Quaternion(a.w_ * b.w_ - a.x_ * b.x_ - a.y_ * b.y_ - a.z_ * b.z_,
                      a.w_ * b.x_ + a.x_ * b.w_ + a.y_ * b.z_ - a.z_ * b.y_,
                      a.w_ * b.y_ - a.x_ * b.z_ + a.y_ * b.w_ + a.z_ * b.x_,
                      a.w_ * b.z_ + a.x_ * b.y_ - a.y_ * b.x_ + a.z_ * b.w_);
  }

  /// Row-major 3x3 rotation matrix.
  std::array<float, 9> matrix() const {
    // renormalize in double; inputs may have drifted
    const double n = std::sqrt(double(w_) * w_ + double(x_) * x_ + double(y_) * y_ + double(z_) * z_);
    const double w = w_ / n, x = x_ / n, y = y_ / n, z = z_ / n;
    return {static_cast<float>(1 - 2 * (y * y + z * z)), static_cast<float>(2 * (x * y - w * z)),
            static_cast<float>(2 * (x * z + w * y)),     static_cast<float>(2 * (x * y + w * z)),
            static_cast<float>(1 - 2 * (x * x + z * z)), static_cast<float>(2 * (y * z - w * x)),
            static_cast<float>(2 * (x * z - w * y)),     static_cast<float>(2 * (y * z + w * x)),
            static_cast<float>(1 - 2 * (x * x + y * y))};
  }

 private:
  void normalize() {
    const float n = norm();
    if (!(n > 0) || !std::isfinite(n)) throw ArgumentError("quaternion must have finite non-zero norm");
    w_ /= n, x_ /= n, y_ /= n, z_ /= n;
  }

  float w_ = 1, x_ = 0, y_ = 0, z_ = 0;
};

inline Vec3 rotate(const std::array<float, 9>& m, const Vec3& v) {
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
          m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

inline Vec3 rotate_transposed(const std::array<float, 9>& m, const Vec3& v) {
  return {m[0] * v.x + m[3] * v.y + m[6] * v.z, m[1] * v.x + m[4] * v.y + m[7] * v.z,
          m[2] * v.x + m[5] * v.y + m[8] * v.z};
}

/// Uniform over SO(3) from three uniform variates (Shoemake's subgroup method).
inline Quaternion random_unit_quaternion(Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u1 = unit(rng), u2 = unit(rng), u3 = unit(rng);
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double t1 = 2.0 * std::numbers::pi * u2, t2 = 2.0 * std::numbers::pi * u3;
  return Quaternion(static_cast<float>(b * std::cos(t2)), static_cast<float>(a * std::sin(t1)),
                    static_cast<float>(a * std::cos(t1)), static_cast<float>(b * std::sin(t2)));
}

class Transform {
 public:
  Transform() = default;
  explicit Transform(Quaternion rotation, Vec3 center = {}, Vec3 translation = {})
      : rotation_(rotation), center_(center), translation_(translation), matrix_(rotation.matrix()) {}

  const Quaternion& rotation() const { return rotation_; }
  const Vec3& center() const { return center_; }
  const Vec3& translation() const { return translation_; }
  const std::array<float, 9>& matrix() const { return matrix_; }

  Vec3 apply(const Vec3& p) const { return rotate(matrix_, p - center_) + center_ + translation_; }

  /// out = R (in - center) + center + translation. in and out may alias.
  void forward(std::span<const Vec3> in, std::span<Vec3> out) const {
    if (in.size() != out.size())
      throw ArgumentError("transform input has " + std::to_string(in.size()) + " points, output " +
                          std::to_string(out.size()));
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = apply(in[i]);
  }

  /// N x 3 coordinate grids.
  void forward(GridView<const float> in, GridView<float> out) const {
    if (in.shape().rank() != 2 || in.shape().extent(1) != 3 || !(in.shape() == out.shape()))
      throw ArgumentError("transform expects matching N x 3 grids, got " + in.shape().str() + " and " +
                          out.shape().str());
    const auto src = in.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < in.shape().extent(0); ++i) {
      const Vec3 p = apply({src[3 * i], src[3 * i + 1], src[3 * i + 2]});
      dst[3 * i] = p.x, dst[3 * i + 1] = p.y, dst[3 * i + 2] = p.z;
    }
  }

  void forward(CoordinateSet& set) const { forward(set.coords, set.coords); }

  /// Every coordinate set moves with the same transform; types and labels are untouched.
  Example forward(const Example& in) const {
    Example out = in;
    for (auto& set : out.coord_sets) forward(set);
    return out;
  }

  /// Rotate a gradient computed in the transformed frame back to the input frame.
  Vec3 backward_rotate(const Vec3& g) const { return rotate_transposed(matrix_, g); }

 private:
  Quaternion rotation_;
  Vec3 center_;
  Vec3 translation_;
  std::array<float, 9> matrix_ = Quaternion().matrix();
};

/// Translation components are i.i.d. uniform in [-random_translate, random_translate]
/// (a cube, not a ball); rotation is uniform over SO(3) when requested.
inline Transform make_transform(Vec3 center, float random_translate, bool random_rotation, Rng& rng) {
  if (!(random_translate >= 0)) throw ArgumentError("random_translate must be >= 0");
  Vec3 t;
  if (random_translate > 0) {
    std::uniform_real_distribution<float> d(-random_translate, random_translate);
    t = {d(rng), d(rng), d(rng)};
  }
  Quaternion q = random_rotation ? random_unit_quaternion(rng) : Quaternion();
  return Transform(q, center, t);
}

inline Example transform_example(const Transform& t, const Example& e) { return t.forward(e); }

}  // namespace voxmol
