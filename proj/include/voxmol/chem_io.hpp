#pragma once

// Structure file parsing: XYZ and the ATOM/HETATM subset of PDB.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "elements.hpp"
#include "error.hpp"
#include "vec3.hpp"

namespace voxmol {

struct RawAtom {
  std::uint8_t element = 0;  // atomic number, 1..118
  Vec3 position;             // Angstrom

  friend bool operator==(const RawAtom&, const RawAtom&) = default;
};

struct RawMolecule {
  std::string name;
  std::vector<RawAtom> atoms;

  friend bool operator==(const RawMolecule&, const RawMolecule&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline bool parse_float(std::string_view s, float& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

// Splits on '\n', dropping a trailing '\r' from each line.
inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (end == text.size()) break;
    start = end + 1;
  }
  return lines;
}

inline std::string printable(std::string_view s) {
  std::string out;
  for (char c : s.substr(0, 80)) out += std::isprint(static_cast<unsigned char>(c)) ? c : '?';
  return out;
}

}  // namespace detail

/// XYZ: atom count, comment line, then "symbol x y z" per atom. A numeric
/// symbol is read as an atomic number.
inline RawMolecule parse_xyz(std::string_view text, std::string name = {}) {
  const auto lines = detail::split_lines(text);
  if (lines.empty() || detail::trim(lines[0]).empty()) throw ParseError("missing atom count", 1);

  const auto count_text = detail::trim(lines[0]);
  std::size_t count = 0;
  auto [ptr, ec] = std::from_chars(count_text.data(), count_text.data() + count_text.size(), count);
  if (ec != std::errc{} || ptr != count_text.data() + count_text.size())
    throw ParseError("atom count is not a non-negative integer: '" + detail::printable(count_text) + "'", 1);

  RawMolecule mol;
  mol.name = std::move(name);
  mol.atoms.reserve(std::min<std::size_t>(count, lines.size()));
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t lineno = i + 3;
    if (lineno > lines.size() || detail::trim(lines[lineno - 1]).empty())
      throw ParseError("atom count mismatch: expected " + std::to_string(count) + " atoms, found " + std::to_string(i),
                       lineno);
    const auto fields = detail::split_ws(lines[lineno - 1]);
    if (fields.size() < 4) throw ParseError("expected 'symbol x y z'", lineno);

    std::optional<int> z;
    int numeric = 0;
    auto [p, e] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), numeric);
    if (e == std::errc{} && p == fields[0].data() + fields[0].size()) {
      if (numeric >= 1 && numeric <= max_atomic_number) z = numeric;
    } else {
      z = element_from_symbol(fields[0]);
    }
    if (!z) throw ParseError("unknown element symbol '" + detail::printable(fields[0]) + "'", lineno);

    RawAtom atom;
    atom.element = static_cast<std::uint8_t>(*z);
    for (int k = 0; k < 3; ++k)
      if (!detail::parse_float(fields[k + 1], atom.position[k]))
        throw ParseError("malformed coordinate '" + detail::printable(fields[k + 1]) + "'", lineno);
    mol.atoms.push_back(atom);
  }
  for (std::size_t l = count + 2; l < lines.size(); ++l)
    if (!detail::trim(lines[l]).empty())
      throw ParseError("atom count mismatch: more than " + std::to_string(count) + " atom lines", l + 1);
  return mol;
}

namespace detail {

// Element from the PDB atom-name field (columns 13-16) when columns 77-78 are blank.
inline std::optional<int> element_from_atom_name(std::string_view field) {
  std::string name(field);
  name.resize(std::max<std::size_t>(name.size(), 2), ' ');
  const unsigned char c0 = name[0], c1 = name[1];
  if (std::isalpha(c0)) {
    if (std::isalpha(c1)) {
      const char two[2] = {static_cast<char>(c0), static_cast<char>(c1)};
      if (auto z = element_from_symbol(std::string_view(two, 2))) return z;
    }
    return element_from_symbol(std::string_view(name.data(), 1));
  }
  if (std::isalpha(c1)) return element_from_symbol(std::string_view(name.data() + 1, 1));
  return std::nullopt;
}

inline std::string_view columns(std::string_view line, std::size_t first, std::size_t last) {
  // 1-based inclusive column range, clipped to the line
  if (line.size() < first) return {};
  return line.substr(first - 1, std::min(last, line.size()) - first + 1);
}

}  // namespace detail

/// PDB ATOM/HETATM records only. Keeps altLoc blank or 'A'; stops at the
/// first ENDMDL so only the first model is read.
inline RawMolecule parse_pdb_subset(std::string_view text, std::string name = {}) {
  RawMolecule mol;
  mol.name = std::move(name);
  const auto lines = detail::split_lines(text);
  for (std::size_t l = 0; l < lines.size(); ++l) {
    const auto line = lines[l];
    const std::size_t lineno = l + 1;
    if (line.starts_with("ENDMDL")) break;
    if (!line.starts_with("ATOM ") && !line.starts_with("HETATM")) continue;
    if (line.size() < 54) throw ParseError("record too short for coordinates: '" + detail::printable(line) + "'", lineno);

    const char altloc = line[16];
    if (altloc != ' ' && altloc != 'A') continue;

    RawAtom atom;
    for (int k = 0; k < 3; ++k) {
      const auto field = line.substr(30 + 8 * k, 8);
      if (!detail::parse_float(field, atom.position[k]))
        throw ParseError("non-numeric coordinate '" + detail::printable(field) + "' in record '" +
                             detail::printable(line) + "'",
                         lineno);
    }

    std::optional<int> z;
    const auto elem = detail::trim(detail::columns(line, 77, 78));
    if (!elem.empty())
      z = element_from_symbol(elem);
    else
      z = detail::element_from_atom_name(detail::columns(line, 13, 16));
    if (!z) throw ParseError("unresolvable element in record '" + detail::printable(line) + "'", lineno);
    atom.element = static_cast<std::uint8_t>(*z);
    mol.atoms.push_back(atom);
  }
  return mol;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read structure file " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

/// Parse by extension (.xyz, .pdb/.ent); anything else is sniffed for
/// ATOM/HETATM records.
inline RawMolecule parse_structure(std::string_view text, const std::string& name) {
  auto ext = std::filesystem::path(name).extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  try {
    if (ext == ".xyz") return parse_xyz(text, name);
    if (ext == ".pdb" || ext == ".ent") return parse_pdb_subset(text, name);
    if (text.find("ATOM  ") != std::string_view::npos || text.find("HETATM") != std::string_view::npos)
      return parse_pdb_subset(text, name);
    return parse_xyz(text, name);
  } catch (const ParseError& e) {
    throw e.prefixed(name);
  }
}

inline RawMolecule read_structure_file(const std::string& path) {
  return parse_structure(read_text_file(path), path);
}

}  // namespace voxmol
