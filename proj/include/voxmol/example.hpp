#pragma once

#include <optional>
#include <string>
#include <vector>

#include "typing.hpp"

namespace voxmol {

/// Coordinate sets analyzed together (e.g. receptor then ligand) plus labels.
struct Example {
  std::vector<CoordinateSet> coord_sets;
  std::vector<float> labels;
  std::optional<int> group;
  bool seqcont = false;  // continuation of the group's previous frame
  bool padding = false;  // filler frame for a group shorter than its slot

  int num_types() const {
    int n = 0;
    for (const auto& s : coord_sets) n += s.num_types;
    return n;
  }

  std::size_t num_atoms() const {
    std::size_t n = 0;
    for (const auto& s : coord_sets) n += s.size();
    return n;
  }
};

}  // namespace voxmol
