#pragma once

#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>

namespace voxmol {

inline constexpr int max_atomic_number = 118;

inline constexpr std::array<std::string_view, max_atomic_number + 1> element_symbols = {
    "",
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
};

inline std::string_view element_symbol(int z) {
  return z >= 1 && z <= max_atomic_number ? element_symbols[z] : std::string_view{};
}

/// Case-insensitive symbol lookup ("cl", "CL", "Cl" all give 17).
inline std::optional<int> element_from_symbol(std::string_view sym) {
  if (sym.empty() || sym.size() > 3) return std::nullopt;
  for (int z = 1; z <= max_atomic_number; ++z) {
    const auto ref = element_symbols[z];
    if (ref.size() != sym.size()) continue;
    bool same = true;
    for (std::size_t i = 0; i < sym.size() && same; ++i)
      same = std::tolower(static_cast<unsigned char>(sym[i])) == std::tolower(static_cast<unsigned char>(ref[i]));
    if (same) return z;
  }
  return std::nullopt;
}

}  // namespace voxmol
