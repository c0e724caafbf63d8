#pragma once

// Atom typing: map raw atoms to a channel (index or one-hot vector) and a
// radius, either from an element table or a user callback.

#include <array>
#include <functional>
#include <istream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "chem_io.hpp"
#include "elements.hpp"
#include "error.hpp"
#include "log.hpp"
#include "vec3.hpp"

namespace voxmol {

/// Element-keyed typer. element_map[z] is a type index, or -1 for ignored.
class TyperTable {
 public:
  TyperTable() { element_map_.fill(-1); }

  TyperTable(std::vector<std::string> names, std::vector<float> radii, std::array<int, max_atomic_number + 1> map)
      : names_(std::move(names)), radii_(std::move(radii)), element_map_(map) {
    validate();
  }

  int num_types() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& type_names() const { return names_; }
  const std::vector<float>& radii() const { return radii_; }

  std::optional<int> type_of(int element) const {
    if (element < 1 || element > max_atomic_number) return std::nullopt;
    const int t = element_map_[element];
    return t < 0 ? std::nullopt : std::optional<int>(t);
  }

  /// Add a type covering the given elements; returns its index.
  int add_type(std::string name, float radius, std::initializer_list<int> elements) {
    return add_type(std::move(name), radius, std::vector<int>(elements));
  }
  int add_type(std::string name, float radius, const std::vector<int>& elements) {
    if (!(radius > 0)) throw ArgumentError("type radius must be > 0 for " + name);
    const int t = num_types();
    names_.push_back(std::move(name));
    radii_.push_back(radius);
    for (int z : elements) {
      if (z < 1 || z > max_atomic_number) throw ArgumentError("element out of range: " + std::to_string(z));
      element_map_[z] = t;
    }
    return t;
  }

  /// Text form: "name radius element[,element...]" per line, '#' comments.
  static TyperTable parse(std::istream& in) {
    TyperTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto view = detail::trim(line);
      if (view.empty() || view.front() == '#') continue;
      const auto fields = detail::split_ws(view);
      if (fields.size() != 3) throw ParseError("expected 'name radius element[,element...]'", lineno);
      float radius = 0;
      if (!detail::parse_float(fields[1], radius) || radius <= 0)
        throw ParseError("radius must be a positive number", lineno);
      std::vector<int> elements;
      std::string_view list = fields[2];
      while (!list.empty()) {
        auto comma = list.find(',');
        auto sym = list.substr(0, comma);
        auto z = element_from_symbol(sym);
        if (!z) throw ParseError("unknown element '" + std::string(sym) + "'", lineno);
        elements.push_back(*z);
        if (comma == std::string_view::npos) break;
        list.remove_prefix(comma + 1);
      }
      table.add_type(std::string(fields[0]), radius, elements);
    }
    return table;
  }

  static TyperTable parse(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

 private:
  void validate() const {
    if (names_.size() != radii_.size()) throw ArgumentError("typer names and radii differ in length");
    for (float r : radii_)
      if (!(r > 0)) throw ArgumentError("typer radii must be > 0");
    for (int t : element_map_)
      if (t >= num_types() || t < -1) throw ArgumentError("typer element map refers to a missing type");
  }

  std::vector<std::string> names_;
  std::vector<float> radii_;
  std::array<int, max_atomic_number + 1> element_map_{};
};

/// Built-in element typer: 14 heavy-atom types, hydrogens ignored.
inline const TyperTable& default_element_typer() {
  static const TyperTable table = [] {
    TyperTable t;
    t.add_type("C", 1.90f, {6});
    t.add_type("N", 1.80f, {7});
    t.add_type("O", 1.70f, {8});
    t.add_type("S", 2.00f, {16});
    t.add_type("P", 2.10f, {15});
    t.add_type("F", 1.50f, {9});
    t.add_type("Cl", 1.80f, {17});
    t.add_type("Br", 2.00f, {35});
    t.add_type("I", 2.20f, {53});
    std::vector<int> metals = {3, 4, 11, 12, 13, 19, 20, 31, 37, 38, 49, 50, 55, 56, 81, 82, 83};
    for (int z = 21; z <= 30; ++z) metals.push_back(z);
    for (int z = 39; z <= 48; ++z) metals.push_back(z);
    for (int z = 57; z <= 80; ++z) metals.push_back(z);
    t.add_type("Metal", 1.20f, metals);
    t.add_type("B", 1.92f, {5});
    t.add_type("Se", 2.10f, {34});
    t.add_type("Si", 2.20f, {14});
    t.add_type("Other", 1.70f, {2, 10, 18, 32, 33, 36, 51, 52, 54});
    return t;
  }();
  return table;
}

/// Callback typer: returns a type index for an atom, or nullopt to drop it.
struct CallbackTyper {
  std::vector<std::string> type_names;
  std::vector<float> radii;
  std::function<std::optional<int>(const RawAtom&)> assign;

  int num_types() const { return static_cast<int>(type_names.size()); }
};

enum class TypeMode { index, vector };

/// Typed coordinates of one molecule. In index mode type_index holds one
/// entry per atom; in vector mode type_vector is an N x num_types row-major
/// matrix. type_radii is the per-type radius table (used when radii are
/// looked up by type).
struct CoordinateSet {
  std::vector<Vec3> coords;
  TypeMode mode = TypeMode::index;
  std::vector<int> type_index;
  std::vector<float> type_vector;
  std::vector<float> radii;
  std::vector<float> type_radii;
  std::vector<std::string> type_names;
  int num_types = 0;

  std::size_t size() const { return coords.size(); }
  bool empty() const { return coords.empty(); }
  bool vector_mode() const { return mode == TypeMode::vector; }

  float type_weight(std::size_t atom, int type) const {
    if (mode == TypeMode::index) return type_index[atom] == type ? 1.0f : 0.0f;
    return type_vector[atom * static_cast<std::size_t>(num_types) + static_cast<std::size_t>(type)];
  }

  /// Same typing metadata, no atoms.
  CoordinateSet empty_like() const {
    CoordinateSet e;
    e.mode = mode;
    e.type_radii = type_radii;
    e.type_names = type_names;
    e.num_types = num_types;
    return e;
  }

  Vec3 centroid() const {
    double s[3] = {0, 0, 0};
    for (const auto& c : coords)
      for (int k = 0; k < 3; ++k) s[k] += c[k];
    const double n = coords.empty() ? 1.0 : static_cast<double>(coords.size());
    return {static_cast<float>(s[0] / n), static_cast<float>(s[1] / n), static_cast<float>(s[2] / n)};
  }
};

using TypedAtoms = CoordinateSet;

inline CoordinateSet type_molecule(const RawMolecule& mol, const TyperTable& typer) {
  CoordinateSet out;
  out.num_types = typer.num_types();
  out.type_radii = typer.radii();
  out.type_names = typer.type_names();
  out.coords.reserve(mol.atoms.size());
  std::set<int> unmapped;
  for (const auto& a : mol.atoms) {
    if (!is_finite(a.position)) throw ArgumentError("non-finite coordinate in " + mol.name);
    auto t = typer.type_of(a.element);
    if (!t) {
      if (a.element != 1) unmapped.insert(a.element);
      continue;
    }
    out.coords.push_back(a.position);
    out.type_index.push_back(*t);
    out.radii.push_back(typer.radii()[*t]);
  }
  for (int z : unmapped) {
    auto sym = element_symbol(z);
    warn("element " + (sym.empty() ? std::to_string(z) : std::string(sym)) + " has no type; atoms ignored" +
         (mol.name.empty() ? std::string() : " in " + mol.name));
  }
  return out;
}

inline CoordinateSet type_molecule(const RawMolecule& mol, const CallbackTyper& typer) {
  if (typer.radii.size() != typer.type_names.size())
    throw ArgumentError("callback typer names and radii differ in length");
  for (float r : typer.radii)
    if (!(r > 0)) throw ArgumentError("callback typer radii must be > 0");
  CoordinateSet out;
  out.num_types = typer.num_types();
  out.type_radii = typer.radii;
  out.type_names = typer.type_names;
  for (const auto& a : mol.atoms) {
    if (!is_finite(a.position)) throw ArgumentError("non-finite coordinate in " + mol.name);
    auto t = typer.assign(a);
    if (!t) continue;
    if (*t < 0 || *t >= out.num_types)
      throw ArgumentError("callback returned type " + std::to_string(*t) + " outside [0, " +
                          std::to_string(out.num_types) + ")");
    out.coords.push_back(a.position);
    out.type_index.push_back(*t);
    out.radii.push_back(typer.radii[*t]);
  }
  return out;
}

/// Index types to one-hot rows; coordinates and radii unchanged.
inline CoordinateSet make_vector_types(const CoordinateSet& in) {
  if (in.vector_mode()) throw ArgumentError("coordinate set already uses vector types");
  CoordinateSet out = in;
  out.mode = TypeMode::vector;
  out.type_index.clear();
  out.type_vector.assign(in.size() * static_cast<std::size_t>(in.num_types), 0.0f);
  for (std::size_t i = 0; i < in.size(); ++i)
    out.type_vector[i * static_cast<std::size_t>(in.num_types) + static_cast<std::size_t>(in.type_index[i])] = 1.0f;
  return out;
}

}  // namespace voxmol
