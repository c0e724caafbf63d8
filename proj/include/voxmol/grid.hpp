#pragma once

// Dense row-major float arrays. ManagedGrid owns its storage; GridView
// aliases a buffer owned by someone else and never copies or frees it.

#include <algorithm>
#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "error.hpp"

namespace voxmol {

enum class DType { f32, f64 };

template <typename T>
concept GridScalar = std::is_same_v<T, float> || std::is_same_v<T, double>;

template <GridScalar T>
constexpr DType dtype_of() {
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

inline const char* dtype_name(DType t) { return t == DType::f32 ? "float32" : "float64"; }

inline constexpr std::size_t max_grid_rank = 6;

class GridShape {
 public:
  GridShape() = default;
  GridShape(std::initializer_list<std::size_t> dims) : GridShape(std::span<const std::size_t>(dims.begin(), dims.size())) {}

  explicit GridShape(std::span<const std::size_t> dims) {
    if (dims.empty() || dims.size() > max_grid_rank)
      throw ArgumentError("grid rank must be in [1, " + std::to_string(max_grid_rank) + "], got " +
                          std::to_string(dims.size()));
    rank_ = dims.size();
    for (std::size_t i = 0; i < rank_; ++i) {
      if (dims[i] == 0)
        throw ArgumentError("grid extent " + std::to_string(i) + " must be >= 1");
      dims_[i] = dims[i];
    }
    size_ = 1;
    for (std::size_t i = rank_; i-- > 0;) {
      strides_[i] = size_;
      size_ *= dims_[i];
    }
  }

  std::size_t rank() const { return rank_; }
  std::size_t size() const { return size_; }
  std::size_t extent(std::size_t i) const { return dims_.at(i); }
  std::size_t stride(std::size_t i) const { return strides_.at(i); }
  std::span<const std::size_t> dims() const { return {dims_.data(), rank_}; }

  /// Row-major flat offset; throws IndexError when any index is out of range.
  std::size_t offset(std::span<const std::size_t> index) const {
    if (index.size() != rank_)
      throw IndexError("expected " + std::to_string(rank_) + " indices, got " + std::to_string(index.size()));
    std::size_t off = 0;
    for (std::size_t i = 0; i < rank_; ++i) {
      if (index[i] >= dims_[i])
        throw IndexError("index " + std::to_string(index[i]) + " out of range for axis " + std::to_string(i) +
                         " of extent " + std::to_string(dims_[i]));
      off += index[i] * strides_[i];
    }
    return off;
  }

  std::string str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < rank_; ++i) {
      if (i) s += ", ";
      s += std::to_string(dims_[i]);
    }
    return s + (rank_ == 1 ? ",)" : ")");
  }

  friend bool operator==(const GridShape& a, const GridShape& b) {
    return std::ranges::equal(a.dims(), b.dims());
  }

 private:
  std::array<std::size_t, max_grid_rank> dims_{};
  std::array<std::size_t, max_grid_rank> strides_{};
  std::size_t rank_ = 0;
  std::size_t size_ = 0;
};

template <typename T>
class GridView {
 public:
  using value_type = std::remove_const_t<T>;
  static_assert(GridScalar<value_type>);

  GridView() = default;

  GridView(std::span<T> buffer, GridShape shape) : data_(buffer.data()), shape_(shape) {
    if (buffer.size() < shape_.size())
      throw ArgumentError("buffer holds " + std::to_string(buffer.size()) + " elements but shape " + shape_.str() +
                          " needs " + std::to_string(shape_.size()));
  }

  // Read-only view from a mutable one.
  template <typename U>
    requires(std::is_const_v<T> && std::is_same_v<const U, T>)
  GridView(const GridView<U>& other) : data_(other.data()), shape_(other.shape()) {}

  const GridShape& shape() const { return shape_; }
  std::size_t size() const { return shape_.size(); }
  T* data() const { return data_; }
  std::span<T> values() const { return {data_, shape_.size()}; }

  template <typename... I>
  T& operator()(I... idx) const {
    const std::array<std::size_t, sizeof...(I)> index{static_cast<std::size_t>(idx)...};
    return data_[shape_.offset(index)];
  }

  value_type get(std::span<const std::size_t> index) const { return data_[shape_.offset(index)]; }
  void set(std::span<const std::size_t> index, value_type v) const
    requires(!std::is_const_v<T>)
  {
    data_[shape_.offset(index)] = v;
  }

  void fill(value_type v) const
    requires(!std::is_const_v<T>)
  {
    std::fill_n(data_, shape_.size(), v);
  }

  /// Sub-view over the contiguous block at leading index i (rank drops by one).
  GridView slab(std::size_t i) const {
    if (shape_.rank() < 2) throw ArgumentError("slab requires rank >= 2");
    if (i >= shape_.extent(0)) throw IndexError("slab index out of range");
    auto d = shape_.dims();
    GridShape sub(d.subspan(1));
    return GridView(std::span<T>(data_ + i * shape_.stride(0), sub.size()), sub);
  }

 private:
  T* data_ = nullptr;
  GridShape shape_;
};

template <GridScalar T>
class ManagedGrid {
 public:
  using value_type = T;

  explicit ManagedGrid(GridShape shape) : shape_(shape), data_(shape.size(), T{0}) {}

  const GridShape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  GridView<T> view() { return {std::span<T>(data_), shape_}; }
  GridView<const T> view() const { return {std::span<const T>(data_), shape_}; }
  GridView<const T> cview() const { return view(); }

  template <typename... I>
  T& operator()(I... idx) {
    const std::array<std::size_t, sizeof...(I)> index{static_cast<std::size_t>(idx)...};
    return data_[shape_.offset(index)];
  }
  template <typename... I>
  const T& operator()(I... idx) const {
    const std::array<std::size_t, sizeof...(I)> index{static_cast<std::size_t>(idx)...};
    return data_[shape_.offset(index)];
  }

  T get(std::span<const std::size_t> index) const { return data_[shape_.offset(index)]; }
  void set(std::span<const std::size_t> index, T v) { data_[shape_.offset(index)] = v; }
  void fill(T v) { std::ranges::fill(data_, v); }

 private:
  GridShape shape_;
  std::vector<T> data_;
};

using MGrid1f = ManagedGrid<float>;
using MGrid1d = ManagedGrid<double>;
using AnyGrid = std::variant<ManagedGrid<float>, ManagedGrid<double>>;

template <GridScalar T>
ManagedGrid<T> make_grid(GridShape shape) {
  return ManagedGrid<T>(shape);
}

inline AnyGrid make_grid(GridShape shape, DType type) {
  if (type == DType::f32) return ManagedGrid<float>(shape);
  return ManagedGrid<double>(shape);
}

inline DType dtype_of(const AnyGrid& g) { return g.index() == 0 ? DType::f32 : DType::f64; }

/// Type-erased host buffer, e.g. one handed over by a scripting runtime.
struct RawBuffer {
  void* data = nullptr;
  DType dtype = DType::f32;
  std::size_t count = 0;
};

template <GridScalar T>
GridView<T> view_over(std::span<T> buffer, GridShape shape) {
  return GridView<T>(buffer, shape);
}

template <GridScalar T>
GridView<T> view_over(const RawBuffer& buffer, GridShape shape) {
  if (buffer.dtype != dtype_of<T>())
    throw ArgumentError(std::string("dtype mismatch: buffer is ") + dtype_name(buffer.dtype) + ", view requests " +
                        dtype_name(dtype_of<T>()) + "; source and destination dtypes must match");
  return GridView<T>(std::span<T>(static_cast<T*>(buffer.data), buffer.count), shape);
}

template <typename G>
concept GridLike = requires(const G& g) {
  { g.shape() } -> std::convertible_to<const GridShape&>;
  g.values();
};

/// Elementwise deep copy; shapes and element types must match exactly.
template <GridLike Src, GridLike Dst>
void copy_into(const Src& src, Dst&& dst) {
  using S = std::remove_cvref_t<decltype(*src.values().data())>;
  using D = std::remove_cvref_t<decltype(*dst.values().data())>;
  static_assert(std::is_same_v<S, D>, "copy_into requires matching element types");
  if (!(src.shape() == dst.shape()))
    throw ArgumentError("copy_into shape mismatch: " + src.shape().str() + " vs " + dst.shape().str());
  auto in = src.values();
  auto out = dst.values();
  std::copy(in.begin(), in.end(), out.begin());
}

inline void copy_into(const AnyGrid& src, AnyGrid& dst) {
  if (src.index() != dst.index())
    throw ArgumentError(std::string("copy_into dtype mismatch: ") + dtype_name(dtype_of(src)) + " vs " +
                        dtype_name(dtype_of(dst)));
  std::visit(
      [&](const auto& s) {
        using G = std::remove_cvref_t<decltype(s)>;
        copy_into(s, std::get<G>(dst));
      },
      src);
}

}  // namespace voxmol
