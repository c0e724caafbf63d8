#pragma once

// NPY v1.0 reader/writer (little-endian f4/f8, C order).

#include <charconv>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "bytes.hpp"
#include "grid.hpp"

namespace voxmol::npy {

inline constexpr std::string_view magic = "\x93NUMPY";

inline std::string header_dict(DType dtype, const GridShape& shape) {
  std::string dict = "{'descr': '";
  dict += dtype == DType::f32 ? "<f4" : "<f8";
  dict += "', 'fortran_order': False, 'shape': ";
  dict += shape.str();
  dict += ", }";
  return dict;
}

template <GridLike G>
std::string encode(const G& grid) {
  using T = std::remove_cvref_t<decltype(*grid.values().data())>;
  std::string dict = header_dict(dtype_of<T>(), grid.shape());
  // magic(6) + version(2) + u16 length(2) + dict + padding + '\n' is a multiple of 64
  const std::size_t unpadded = magic.size() + 4 + dict.size() + 1;
  dict.append((64 - unpadded % 64) % 64, ' ');
  dict += '\n';

  std::string out;
  out.reserve(magic.size() + 4 + dict.size() + grid.shape().size() * sizeof(T));
  out += magic;
  out += '\x01';
  out += '\x00';
  bytes::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(dict.size()));
  out += dict;
  if constexpr (std::endian::native == std::endian::little) {
    out.append(reinterpret_cast<const char*>(grid.values().data()), grid.shape().size() * sizeof(T));
  } else {
    for (T v : grid.values()) bytes::put_le<T>(out, v);
  }
  return out;
}

template <GridLike G>
void write(const std::string& path, const G& grid) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  const std::string data = encode(grid);
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw IoError("write failed: " + path);
}

namespace detail {

inline std::string_view dict_value(std::string_view dict, std::string_view key) {
  const std::string quoted = "'" + std::string(key) + "'";
  auto pos = dict.find(quoted);
  if (pos == std::string_view::npos) throw FormatError("npy header missing key " + quoted);
  pos = dict.find(':', pos + quoted.size());
  if (pos == std::string_view::npos) throw FormatError("npy header malformed near " + quoted);
  return dict.substr(pos + 1);
}

inline std::string_view trim_left(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

}  // namespace detail

inline AnyGrid decode(std::string_view data) {
  const auto* bytes_ptr = reinterpret_cast<const unsigned char*>(data.data());
  if (data.size() < 10 || data.substr(0, magic.size()) != magic) throw FormatError("not an NPY file (bad magic)");
  const int major = bytes_ptr[6];
  std::size_t header_len = 0;
  std::size_t prefix = 10;
  if (major == 1) {
    header_len = bytes::get_le<std::uint16_t>(bytes_ptr + 8);
  } else if (major == 2 || major == 3) {
    if (data.size() < 12) throw FormatError("truncated NPY header");
    header_len = bytes::get_le<std::uint32_t>(bytes_ptr + 8);
    prefix = 12;
  } else {
    throw FormatError("unsupported NPY version " + std::to_string(major));
  }
  if (data.size() < prefix + header_len) throw FormatError("truncated NPY header");
  const std::string_view dict = data.substr(prefix, header_len);

  auto descr = detail::trim_left(detail::dict_value(dict, "descr"));
  DType dtype;
  if (descr.starts_with("'<f4'") || descr.starts_with("'float32'"))
    dtype = DType::f32;
  else if (descr.starts_with("'<f8'") || descr.starts_with("'float64'"))
    dtype = DType::f64;
  else
    throw FormatError("unsupported NPY dtype " + std::string(descr.substr(0, descr.find(','))));

  if (!detail::trim_left(detail::dict_value(dict, "fortran_order")).starts_with("False"))
    throw FormatError("fortran-ordered NPY arrays are not supported");

  auto shape_text = detail::trim_left(detail::dict_value(dict, "shape"));
  if (shape_text.empty() || shape_text.front() != '(') throw FormatError("npy shape is not a tuple");
  shape_text.remove_prefix(1);
  std::vector<std::size_t> dims;
  while (true) {
    shape_text = detail::trim_left(shape_text);
    if (shape_text.empty()) throw FormatError("unterminated npy shape");
    if (shape_text.front() == ')') break;
    if (shape_text.front() == ',') {
      shape_text.remove_prefix(1);
      continue;
    }
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(shape_text.data(), shape_text.data() + shape_text.size(), v);
    if (ec != std::errc{}) throw FormatError("bad npy shape entry");
    dims.push_back(v);
    shape_text.remove_prefix(static_cast<std::size_t>(ptr - shape_text.data()));
  }
  if (dims.empty()) dims.push_back(1);  // 0-d scalar
  GridShape shape{std::span<const std::size_t>(dims)};

  const std::size_t elem = dtype == DType::f32 ? 4 : 8;
  const std::size_t body = prefix + header_len;
  if (data.size() < body + shape.size() * elem) throw FormatError("truncated NPY payload");

  AnyGrid out = make_grid(shape, dtype);
  std::visit(
      [&](auto& g) {
        using T = typename std::remove_cvref_t<decltype(g)>::value_type;
        auto vals = g.values();
        for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = bytes::get_le<T>(bytes_ptr + body + i * sizeof(T));
      },
      out);
  return out;
}

inline AnyGrid read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode(data);
}

}  // namespace voxmol::npy
