#pragma once

// ExampleProvider: parses .types metadata ("[(int)group] [(float)label]* [molfile]+")
// and serves an endless stream of resolved examples with optional shuffling,
// class balancing, receptor and numeric stratification, copies, and
// grouped sequences.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "chem_io.hpp"
#include "error.hpp"
#include "example.hpp"
#include "geom.hpp"
#include "molcache.hpp"
#include "typing.hpp"

namespace voxmol {

struct ProviderConfig {
  bool shuffle = false;
  bool balanced = false;
  bool stratify_receptor = false;
  int labelpos = 0;
  int stratify_pos = 1;
  bool stratify_abs = true;
  float stratify_min = 0;
  float stratify_max = 0;
  float stratify_step = 0;
  int group_batch_size = 1;
  int max_group_size = 0;
  bool cache_structs = true;
  bool duplicate_first = false;
  int num_copies = 1;
  bool make_vector_types = false;
  std::string data_root;
  std::string recmolcache;
  std::string ligmolcache;
  std::optional<std::uint64_t> seed;  // entropy-seeded when absent

  bool stratified() const { return stratify_max > stratify_min; }

  int num_strata() const {
    if (!stratified()) return 1;
    return std::max(1, static_cast<int>(std::ceil((double(stratify_max) - stratify_min) / stratify_step - 1e-9)));
  }

  void validate() const {
    if (stratified() && !(stratify_step > 0))
      throw ConfigError("stratify_step must be > 0 when stratify_max > stratify_min");
    if (labelpos < 0) throw ConfigError("labelpos must be >= 0");
    if (stratify_pos < 0) throw ConfigError("stratify_pos must be >= 0");
    if (num_copies < 1) throw ConfigError("num_copies must be >= 1");
    if (group_batch_size < 1) throw ConfigError("group_batch_size must be >= 1");
    if (max_group_size < 0) throw ConfigError("max_group_size must be >= 0");
  }
};

struct ExampleSpec {
  std::optional<int> group;
  std::vector<float> labels;
  std::vector<std::string> files;
  bool seqcont = false;
  std::string text;  // the metadata line, for reports
};

/// One metadata line. A leading integer is the group id iff max_group_size > 0;
/// then every token that parses as a number is a label; the rest are files.
inline ExampleSpec parse_types_line(std::string_view line, const ProviderConfig& cfg) {
  const auto tokens = detail::split_ws(line);
  ExampleSpec spec;
  spec.text = std::string(detail::trim(line));
  std::size_t i = 0;
  if (cfg.max_group_size > 0) {
    int group = 0;
    if (tokens.empty()) throw ParseError("group id expected");
    auto [p, ec] = std::from_chars(tokens[0].data(), tokens[0].data() + tokens[0].size(), group);
    if (ec != std::errc{} || p != tokens[0].data() + tokens[0].size())
      throw ParseError("group id expected, got '" + detail::printable(tokens[0]) + "'");
    spec.group = group;
    i = 1;
  }
  for (; i < tokens.size(); ++i) {
    auto tok = tokens[i];
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    float v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || p != tok.data() + tok.size() || (ec != std::errc{} && ec != std::errc::result_out_of_range))
      break;
    if (ec != std::errc{} || !std::isfinite(v))
      throw ParseError("label '" + detail::printable(tokens[i]) + "' is not a finite number");
    spec.labels.push_back(v);
  }
  for (; i < tokens.size(); ++i) spec.files.emplace_back(tokens[i]);
  if (spec.files.empty()) throw ParseError("no molecule file on line");
  return spec;
}

using Typer = std::variant<TyperTable, CallbackTyper>;

inline int num_types(const Typer& t) {
  return std::visit([](const auto& x) { return x.num_types(); }, t);
}

inline CoordinateSet type_molecule(const RawMolecule& mol, const Typer& typer) {
  return std::visit([&](const auto& t) { return type_molecule(mol, t); }, typer);
}

/// duplicate_first: [A, B, C] -> [A, B, A, C].
inline std::vector<CoordinateSet> duplicate_first(const std::vector<CoordinateSet>& sets) {
  if (sets.size() < 2) return sets;
  std::vector<CoordinateSet> out;
  out.reserve(2 * (sets.size() - 1));
  for (std::size_t j = 1; j < sets.size(); ++j) {
    out.push_back(sets[0]);
    out.push_back(sets[j]);
  }
  return out;
}

class ExampleProvider {
 public:
  explicit ExampleProvider(ProviderConfig cfg = {})
      : ExampleProvider(std::move(cfg), default_element_typer(), default_element_typer()) {}

  ExampleProvider(ProviderConfig cfg, Typer receptor_typer, Typer ligand_typer)
      : cfg_(std::move(cfg)), rec_typer_(std::move(receptor_typer)), lig_typer_(std::move(ligand_typer)) {
    cfg_.validate();
    rng_.seed(cfg_.seed ? *cfg_.seed : std::random_device{}());
    if (!cfg_.recmolcache.empty()) rec_cache_ = StructureCache::open(cfg_.recmolcache);
    if (!cfg_.ligmolcache.empty()) lig_cache_ = StructureCache::open(cfg_.ligmolcache);
  }

  const ProviderConfig& config() const { return cfg_; }
  std::size_t size() const { return specs_.size(); }
  const ExampleSpec& spec(std::size_t i) const { return specs_.at(i); }
  const std::vector<ExampleSpec>& specs() const { return specs_; }

  void populate(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read metadata file " + path);
    populate(in, path);
  }

  void populate(std::span<const std::string> paths) {
    for (const auto& p : paths) populate(p);
  }

  /// Blank lines and '#' comments are skipped.
  void populate(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto view = detail::trim(line);
      if (view.empty() || view.front() == '#') continue;
      try {
        add(parse_types_line(view, cfg_));
      } catch (const ParseError& e) {
        throw ParseError(e.what(), lineno).prefixed(source);
      }
    }
  }

  void add(ExampleSpec spec) {
    if (cfg_.balanced && spec.labels.size() <= static_cast<std::size_t>(cfg_.labelpos))
      throw ParseError("no label at labelpos " + std::to_string(cfg_.labelpos));
    if (cfg_.stratified() && spec.labels.size() <= static_cast<std::size_t>(cfg_.stratify_pos))
      throw ParseError("no label at stratify_pos " + std::to_string(cfg_.stratify_pos));
    if (cfg_.max_group_size > 0 && !spec.group) throw ParseError("group id expected");
    specs_.push_back(std::move(spec));
    dirty_ = true;
  }

  /// Binary class of a spec: labels[labelpos] != 0 (0 when the label is missing).
  int class_of(std::size_t i) const {
    const auto& l = specs_.at(i).labels;
    const auto pos = static_cast<std::size_t>(cfg_.labelpos);
    return pos < l.size() && l[pos] != 0.0f ? 1 : 0;
  }

  /// Numeric stratum; out-of-range values clamp into the first/last bin.
  int stratum_of(std::size_t i) const {
    if (!cfg_.stratified()) return 0;
    float v = specs_.at(i).labels.at(static_cast<std::size_t>(cfg_.stratify_pos));
    if (cfg_.stratify_abs) v = std::abs(v);
    const int bin = static_cast<int>(std::floor((double(v) - cfg_.stratify_min) / cfg_.stratify_step));
    return std::clamp(bin, 0, cfg_.num_strata() - 1);
  }

  const std::string& receptor_of(std::size_t i) const { return specs_.at(i).files.front(); }

  /// Spec indices for the next n draws, num_copies expansion included.
  std::vector<std::size_t> next_indices(std::size_t n) {
    if (n < 1) throw ArgumentError("batch size must be >= 1");
    if (specs_.empty()) throw UsageError("provider is empty; populate it first");
    build();
    std::vector<std::size_t> out;
    out.reserve(n);
    while (out.size() < n) {
      if (pending_copies_ == 0) {
        pending_index_ = draw();
        pending_copies_ = cfg_.num_copies;
      }
      out.push_back(pending_index_);
      --pending_copies_;
    }
    return out;
  }

  Example next() { return next_batch(1).front(); }

  std::vector<Example> next_batch(std::size_t n) {
    const auto idx = next_indices(n);
    std::vector<Example> out;
    out.reserve(n);
    for (std::size_t i : idx) out.push_back(resolve(specs_[i]));
    return out;
  }

  /// n parallel sequences of group_batch_size frames, each from a distinct
  /// group. seqcont is false only on a group's first frame; groups are padded
  /// with empty continuation frames up to a multiple of group_batch_size that
  /// covers max_group_size.
  std::vector<std::vector<Example>> next_group_batch(std::size_t n) {
    if (cfg_.max_group_size <= 0) throw ConfigError("next_group_batch requires max_group_size > 0");
    if (n < 1) throw ArgumentError("batch size must be >= 1");
    if (specs_.empty()) throw UsageError("provider is empty; populate it first");
    build();
    if (n > groups_.size())
      throw ConfigError("requested " + std::to_string(n) + " sequences but only " + std::to_string(groups_.size()) +
                        " groups exist");
    const auto gbs = static_cast<std::size_t>(cfg_.group_batch_size);
    const std::size_t slot_len = (static_cast<std::size_t>(cfg_.max_group_size) + gbs - 1) / gbs * gbs;
    if (lanes_.size() != n) lanes_.assign(n, Lane{});

    std::vector<std::vector<Example>> out(n);
    for (std::size_t l = 0; l < n; ++l) {
      auto& lane = lanes_[l];
      if (!lane.group || lane.pos >= slot_len) {
        lane.group = next_group(l);
        lane.pos = 0;
      }
      const auto& frames = groups_[*lane.group].frames;
      for (std::size_t t = 0; t < gbs; ++t, ++lane.pos) {
        if (lane.pos < frames.size()) {
          Example ex = resolve(specs_[frames[lane.pos]]);
          ex.seqcont = lane.pos != 0;
          out[l].push_back(std::move(ex));
        } else {
          Example pad = resolve(specs_[frames.back()]);
          for (auto& s : pad.coord_sets) s = s.empty_like();
          pad.seqcont = true;
          pad.padding = true;
          out[l].push_back(std::move(pad));
        }
      }
    }
    return out;
  }

  /// Load, type and assemble the coordinate sets of one spec.
  Example resolve(const ExampleSpec& spec) {
    Example ex;
    ex.labels = spec.labels;
    ex.group = spec.group;
    ex.seqcont = spec.seqcont;
    ex.coord_sets.reserve(spec.files.size());
    for (std::size_t k = 0; k < spec.files.size(); ++k) ex.coord_sets.push_back(load_set(spec.files[k], k == 0));
    if (cfg_.duplicate_first) ex.coord_sets = duplicate_first(ex.coord_sets);
    return ex;
  }

  /// Channels of an example with `files` molecule files (after duplicate_first).
  int num_types(std::size_t files) const {
    if (files == 0) return 0;
    const int rec = voxmol::num_types(rec_typer_), lig = voxmol::num_types(lig_typer_);
    if (cfg_.duplicate_first && files >= 2) return static_cast<int>(files - 1) * (rec + lig);
    return rec + static_cast<int>(files - 1) * lig;
  }

  std::vector<std::string> channel_names(std::size_t files) const {
    auto names = [](const Typer& t) {
      if (const auto* table = std::get_if<TyperTable>(&t)) return table->type_names();
      return std::get<CallbackTyper>(t).type_names;
    };
    auto order = std::vector<bool>{};  // true = receptor
    if (cfg_.duplicate_first && files >= 2) {
      for (std::size_t j = 1; j < files; ++j) order.insert(order.end(), {true, false});
    } else {
      for (std::size_t j = 0; j < files; ++j) order.push_back(j == 0);
    }
    std::vector<std::string> out;
    for (std::size_t s = 0; s < order.size(); ++s)
      for (const auto& n : names(order[s] ? rec_typer_ : lig_typer_)) out.push_back(std::to_string(s) + ":" + n);
    return out;
  }

  /// Path used to read a molecule file (data_root applies to relative paths only).
  std::string resolve_path(const std::string& file) const {
    if (cfg_.data_root.empty() || std::filesystem::path(file).is_absolute()) return file;
    return (std::filesystem::path(cfg_.data_root) / file).string();
  }

 private:
  struct Leaf {
    int stratum, cls;
    std::size_t receptor;
    std::vector<std::size_t> members;
    std::size_t pos = 0;
  };

  struct Group {
    std::vector<std::size_t> frames;
  };

  struct Lane {
    std::optional<std::size_t> group;
    std::size_t pos = 0;
  };

  void build() {
    if (!dirty_) return;
    dirty_ = false;
    leaves_.clear();
    receptor_ids_.clear();
    std::map<std::tuple<int, int, std::size_t>, std::size_t> leaf_of;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      std::size_t rec = 0;
      if (cfg_.stratify_receptor) rec = receptor_ids_.emplace(receptor_of(i), receptor_ids_.size()).first->second;
      const int cls = cfg_.balanced ? class_of(i) : 0;
      const int stratum = stratum_of(i);
      auto [it, inserted] = leaf_of.emplace(std::make_tuple(stratum, cls, rec), leaves_.size());
      if (inserted) leaves_.push_back(Leaf{stratum, cls, rec, {}, 0});
      leaves_[it->second].members.push_back(i);
    }
    for (auto& leaf : leaves_)
      if (cfg_.shuffle) std::shuffle(leaf.members.begin(), leaf.members.end(), rng_);
    stratum_served_.assign(static_cast<std::size_t>(cfg_.num_strata()), 0);
    receptor_served_.assign(std::max<std::size_t>(1, receptor_ids_.size()), 0);
    last_stratum_ = -1;
    last_receptor_ = -1;
    class_turn_ = 0;
    pending_copies_ = 0;

    groups_.clear();
    group_cycle_.clear();
    lanes_.clear();
    if (cfg_.max_group_size > 0) {
      std::map<int, std::size_t> group_of;
      for (std::size_t i = 0; i < specs_.size(); ++i) {
        auto [it, inserted] = group_of.emplace(*specs_[i].group, groups_.size());
        if (inserted) groups_.emplace_back();
        groups_[it->second].frames.push_back(i);
      }
      for (std::size_t g = 0; g < groups_.size(); ++g) {
        if (groups_[g].frames.size() > static_cast<std::size_t>(cfg_.max_group_size))
          throw ConfigError("group " + std::to_string(*specs_[groups_[g].frames[0]].group) + " has " +
                            std::to_string(groups_[g].frames.size()) + " frames, more than max_group_size " +
                            std::to_string(cfg_.max_group_size));
        group_cycle_.push_back(g);
      }
      if (cfg_.shuffle) std::shuffle(group_cycle_.begin(), group_cycle_.end(), rng_);
      group_pos_ = 0;
    }
  }

  // Least-served option, ties broken cyclically after the previous choice.
  static std::size_t pick(const std::vector<std::size_t>& options, const std::vector<std::size_t>& served,
                          long last, std::size_t modulus) {
    std::size_t best = options.front();
    auto rank = [&](std::size_t o) { return (o + modulus - static_cast<std::size_t>(last + 1) % modulus) % modulus; };
    for (std::size_t o : options)
      if (served[o] < served[best] || (served[o] == served[best] && rank(o) < rank(best))) best = o;
    return best;
  }

  std::size_t draw() {
    int cls = 0;
    if (cfg_.balanced) {
      cls = class_turn_;
      class_turn_ ^= 1;
    }
    std::vector<std::size_t> strata;
    for (const auto& leaf : leaves_)
      if (leaf.cls == cls) strata.push_back(static_cast<std::size_t>(leaf.stratum));
    if (strata.empty())
      throw ConfigError("balanced sampling needs examples of both classes; class " + std::to_string(cls) +
                        " (label at position " + std::to_string(cfg_.labelpos) + (cls ? " != 0" : " == 0") +
                        ") has none");
    std::ranges::sort(strata);
    strata.erase(std::unique(strata.begin(), strata.end()), strata.end());
    const std::size_t stratum = pick(strata, stratum_served_, last_stratum_, stratum_served_.size());

    std::vector<std::size_t> receptors;
    for (const auto& leaf : leaves_)
      if (leaf.cls == cls && static_cast<std::size_t>(leaf.stratum) == stratum) receptors.push_back(leaf.receptor);
    std::ranges::sort(receptors);
    receptors.erase(std::unique(receptors.begin(), receptors.end()), receptors.end());
    const std::size_t receptor = pick(receptors, receptor_served_, last_receptor_, receptor_served_.size());

    Leaf* leaf = nullptr;
    for (auto& l : leaves_)
      if (l.cls == cls && static_cast<std::size_t>(l.stratum) == stratum && l.receptor == receptor) leaf = &l;

    ++stratum_served_[stratum];
    ++receptor_served_[receptor];
    last_stratum_ = static_cast<long>(stratum);
    last_receptor_ = static_cast<long>(receptor);

    if (leaf->pos == leaf->members.size()) {
      leaf->pos = 0;
      if (cfg_.shuffle) std::shuffle(leaf->members.begin(), leaf->members.end(), rng_);
    }
    return leaf->members[leaf->pos++];
  }

  std::size_t next_group(std::size_t lane) {
    for (std::size_t tries = 0; tries <= 2 * group_cycle_.size(); ++tries) {
      if (group_pos_ == group_cycle_.size()) {
        group_pos_ = 0;
        if (cfg_.shuffle) std::shuffle(group_cycle_.begin(), group_cycle_.end(), rng_);
      }
      const std::size_t g = group_cycle_[group_pos_++];
      bool busy = false;
      for (std::size_t l = 0; l < lanes_.size(); ++l)
        if (l != lane && lanes_[l].group == g) busy = true;
      if (!busy) return g;
    }
    throw ConfigError("no free group for sequence lane");
  }

  CoordinateSet load_set(const std::string& file, bool receptor) {
    const std::string key = (receptor ? "r:" : "l:") + file;
    if (cfg_.cache_structs) {
      if (auto it = memo_.find(key); it != memo_.end()) return *it->second;
    }
    const StructureCache& cache = receptor ? rec_cache_ : lig_cache_;
    RawMolecule mol = cache.is_open() && cache.contains(file) ? cache.lookup(file) : read_structure_file(resolve_path(file));
    CoordinateSet set = type_molecule(mol, receptor ? rec_typer_ : lig_typer_);
    if (cfg_.make_vector_types) set = make_vector_types(set);
    if (cfg_.cache_structs) memo_.emplace(key, std::make_shared<const CoordinateSet>(set));
    return set;
  }

  ProviderConfig cfg_;
  Typer rec_typer_;
  Typer lig_typer_;
  StructureCache rec_cache_;
  StructureCache lig_cache_;
  Rng rng_;

  std::vector<ExampleSpec> specs_;
  bool dirty_ = true;

  std::vector<Leaf> leaves_;
  std::map<std::string, std::size_t> receptor_ids_;
  std::vector<std::size_t> stratum_served_;
  std::vector<std::size_t> receptor_served_;
  long last_stratum_ = -1;
  long last_receptor_ = -1;
  int class_turn_ = 0;
  std::size_t pending_index_ = 0;
  int pending_copies_ = 0;

  std::vector<Group> groups_;
  std::vector<std::size_t> group_cycle_;
  std::size_t group_pos_ = 0;
  std::vector<Lane> lanes_;

  std::map<std::string, std::shared_ptr<const CoordinateSet>> memo_;
};

}  // namespace voxmol
