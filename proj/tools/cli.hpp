#pragma once

// Command-line front end. run_cli() is the whole program minus main(), so
// tests can drive it in-process.

#include <CLI11.hpp>
#include <json.hpp>
#include <sys/resource.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "voxmol/voxmol.hpp"

namespace voxmol::cli {

struct CommonOptions {
  GridMakerConfig grid;
  ProviderConfig provider;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  float random_translation = 0.0f;
  bool random_rotation = false;
  std::string typer_file;
};

inline void add_grid_options(CLI::App& app, CommonOptions& o) {
  auto& g = o.grid;
  app.add_option("--resolution", g.resolution, "grid spacing in Angstroms");
  app.add_option("--dimension", g.dimension, "grid side length in Angstroms");
  app.add_option("--binary", g.binary, "1 inside the atomic radius, else 0");
  app.add_option("--radius_type_indexed", g.radius_type_indexed, "vector types use per-type radii");
  app.add_option("--radius_scale", g.radius_scale, "multiplier on atomic radii");
  app.add_option("--gaussian_radius_multiple", g.gaussian_radius_multiple, "Gaussian core extent in radii");
  app.add_option("--random_translation", o.random_translation, "per-axis translation bound in Angstroms");
  app.add_option("--random_rotation", o.random_rotation, "uniform random rotation");
  app.add_option("--typer", o.typer_file, "typer table file (default: built-in 14-type element typer)");
  app.add_option("--seed", o.seed, "random seed");
  app.add_option("--threads", o.threads, "worker threads (default: VOXMOL_THREADS or all cores)");
}

inline void add_provider_options(CLI::App& app, CommonOptions& o) {
  auto& p = o.provider;
  app.add_option("--shuffle", p.shuffle, "shuffle examples");
  app.add_option("--balanced", p.balanced, "alternate classes in each batch");
  app.add_option("--stratify_receptor", p.stratify_receptor, "round-robin over receptors");
  app.add_option("--labelpos", p.labelpos, "label used for class balancing");
  app.add_option("--stratify_pos", p.stratify_pos, "label used for numeric stratification");
  app.add_option("--stratify_abs", p.stratify_abs, "stratify on the absolute label value");
  app.add_option("--stratify_min", p.stratify_min, "lower edge of the first stratum");
  app.add_option("--stratify_max", p.stratify_max, "upper edge of the last stratum");
  app.add_option("--stratify_step", p.stratify_step, "stratum width");
  app.add_option("--group_batch_size", p.group_batch_size, "frames per sequence slice");
  app.add_option("--max_group_size", p.max_group_size, "maximum frames per group (0: no groups)");
  app.add_option("--cache_structs", p.cache_structs, "keep parsed structures in memory");
  app.add_option("--duplicate_first", p.duplicate_first, "pair the first set with each later set");
  app.add_option("--num_copies", p.num_copies, "consecutive copies of each drawn example");
  app.add_option("--make_vector_types", p.make_vector_types, "one-hot type vectors");
  app.add_option("--data_root", p.data_root, "prefix for relative structure paths");
  app.add_option("--recmolcache", p.recmolcache, "receptor structure cache");
  app.add_option("--ligmolcache", p.ligmolcache, "ligand structure cache");
}

inline std::string resolve_input(const CommonOptions& o, const std::string& file) {
  if (o.provider.data_root.empty() || std::filesystem::path(file).is_absolute()) return file;
  return (std::filesystem::path(o.provider.data_root) / file).string();
}

inline const std::string& require_file(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw UsageError("input file not found: " + path);
  return path;
}

inline TyperTable load_typer(const std::string& path) {
  if (path.empty()) return default_element_typer();
  std::ifstream in(path);
  if (!in) throw IoError("cannot read typer file " + path);
  try {
    return TyperTable::parse(in);
  } catch (const ParseError& e) {
    throw e.prefixed(path);
  }
}

inline unsigned thread_count(const CommonOptions& o) {
  return o.threads && *o.threads > 0 ? *o.threads : default_thread_count();
}

inline ExampleProvider make_provider(const CommonOptions& o, const std::vector<std::string>& types_files) {
  for (const auto& f : types_files) require_file(f);
  ProviderConfig cfg = o.provider;
  cfg.seed = o.seed.value_or(0);
  const TyperTable typer = load_typer(o.typer_file);
  ExampleProvider provider(cfg, typer, typer);
  provider.populate(types_files);
  return provider;
}

inline std::vector<std::size_t> dims_of(const GridShape& s) { return {s.dims().begin(), s.dims().end()}; }

// FNV-1a over the raw float bytes.
inline std::string checksum(std::span<const float> values) {
  std::uint64_t h = 1469598103934665603ull;
  const auto* p = reinterpret_cast<const unsigned char*>(values.data());
  for (std::size_t i = 0; i < values.size_bytes(); ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

inline double peak_rss_mb() {
  rusage u{};
  getrusage(RUSAGE_SELF, &u);
  return static_cast<double>(u.ru_maxrss) / 1024.0;  // kilobytes on Linux
}

// ---- voxelize -------------------------------------------------------------

struct VoxelizeArgs {
  std::vector<std::string> inputs;
  std::string molcache;
  std::vector<float> center;
  std::string output = "grid.npy";
};

inline int cmd_voxelize(const CommonOptions& o, const VoxelizeArgs& a, std::ostream& out) {
  const TyperTable typer = load_typer(o.typer_file);
  StructureCache cache;
  if (!a.molcache.empty()) cache = StructureCache::open(a.molcache);

  Example ex;
  for (const auto& input : a.inputs) {
    if (cache.is_open()) {
      ex.coord_sets.push_back(type_molecule(cache.lookup(input), typer));
    } else {
      const std::string path = require_file(resolve_input(o, input));
      ex.coord_sets.push_back(type_molecule(read_structure_file(path), typer));
    }
  }

  GridMaker maker(o.grid, thread_count(o));
  const Vec3 center = a.center.empty() ? GridMaker::default_center(ex) : Vec3{a.center[0], a.center[1], a.center[2]};
  auto grid = maker.make_grid(static_cast<std::size_t>(ex.num_types()));
  Rng rng(o.seed.value_or(0));
  const Transform t = make_transform(center, o.random_translation, o.random_rotation, rng);
  maker.forward(center, t.forward(ex), grid.view());

  npy::write(a.output, grid);
  const Vec3 origin = maker.grid_origin(center);
  nlohmann::json side;
  side["origin"] = {origin.x, origin.y, origin.z};
  side["center"] = {center.x, center.y, center.z};
  side["resolution"] = o.grid.resolution;
  side["dimension"] = o.grid.dimension;
  side["points_per_side"] = maker.dim();
  side["binary"] = o.grid.binary;
  side["dtype"] = "float32";
  side["shape"] = dims_of(grid.shape());
  std::vector<std::string> channels;
  for (std::size_t s = 0; s < ex.coord_sets.size(); ++s)
    for (const auto& n : ex.coord_sets[s].type_names) channels.push_back(std::to_string(s) + ":" + n);
  side["channels"] = channels;
  side["inputs"] = a.inputs;
  std::ofstream js(a.output + ".json");
  if (!js) throw IoError("cannot write " + a.output + ".json");
  js << side.dump(2) << "\n";

  const auto values = grid.view().values();
  const auto nonzero = std::count_if(values.begin(), values.end(), [](float v) { return v != 0.0f; });
  out << "shape " << grid.shape().str() << "\n";
  out << "nonzero " << nonzero << "\n";
  out << "wrote " << a.output << "\n";
  return 0;
}

// ---- cache ----------------------------------------------------------------

struct CacheArgs {
  std::vector<std::string> files;
  std::vector<std::string> types;
  std::string role = "all";
  std::string output;
};

inline int cmd_cache(const CommonOptions& o, const CacheArgs& a, std::ostream& out) {
  std::vector<std::string> names = a.files;
  if (!a.types.empty()) {
    ProviderConfig cfg = o.provider;
    cfg.recmolcache.clear();
    cfg.ligmolcache.clear();
    ExampleProvider provider(cfg);
    for (const auto& f : a.types) require_file(f);
    provider.populate(a.types);
    for (const auto& spec : provider.specs())
      for (std::size_t k = 0; k < spec.files.size(); ++k) {
        const bool rec = k == 0;
        if (a.role == "all" || (a.role == "rec") == rec) names.push_back(spec.files[k]);
      }
  }
  if (names.empty()) throw UsageError("no structures to cache");

  std::vector<RawMolecule> mols;
  std::set<std::string> seen;
  for (const auto& name : names) {
    // a structure referenced by many metadata lines is stored once; explicit
    // duplicates go through so the writer reports them
    if (!a.types.empty() && !seen.insert(name).second) continue;
    const std::string path = resolve_input(o, name);
    RawMolecule mol = read_structure_file(path);
    mol.name = name;
    mols.push_back(std::move(mol));
  }
  write_cache(mols, a.output);
  const auto bytes = std::filesystem::file_size(a.output);
  const auto cache = StructureCache::open(a.output);
  out << "entries " << cache.size() << "\n";
  out << "bytes " << bytes << "\n";
  out << "wrote " << a.output << "\n";
  return 0;
}

// ---- inspect --------------------------------------------------------------

struct InspectArgs {
  std::vector<std::string> types;
  int batches = 1;
  int batch_size = 10;
  bool list = true;
};

inline int cmd_inspect(const CommonOptions& o, const InspectArgs& a, std::ostream& out) {
  if (a.batches < 1) throw UsageError("--batches must be >= 1");
  auto provider = make_provider(o, a.types);
  std::map<int, std::size_t> classes;
  std::map<std::string, std::size_t> receptors;
  std::map<int, std::size_t> strata;
  out << "examples " << provider.size() << "\n";
  for (int b = 0; b < a.batches; ++b) {
    const auto idx = provider.next_indices(static_cast<std::size_t>(a.batch_size));
    if (a.list) out << "batch " << b << "\n";
    for (std::size_t i : idx) {
      ++classes[provider.class_of(i)];
      ++receptors[provider.receptor_of(i)];
      ++strata[provider.stratum_of(i)];
      if (a.list) out << "  " << provider.spec(i).text << "\n";
    }
  }
  out << "classes\n";
  for (int c : {0, 1}) out << "  " << c << " " << classes[c] << "\n";
  out << "receptors\n";
  for (const auto& [r, n] : receptors) out << "  " << r << " " << n << "\n";
  out << "strata\n";
  const auto& cfg = provider.config();
  for (const auto& [s, n] : strata) {
    if (cfg.stratified())
      out << "  [" << cfg.stratify_min + s * cfg.stratify_step << ", "
          << std::min(cfg.stratify_max, cfg.stratify_min + (s + 1) * cfg.stratify_step) << ") " << n << "\n";
    else
      out << "  all " << n << "\n";
  }
  return 0;
}

// ---- bench ----------------------------------------------------------------

struct BenchArgs {
  std::vector<std::string> types;
  int batch_size = 8;
  int repetitions = 5;
  int warmup = 1;
  bool json = false;
};

inline int cmd_bench(const CommonOptions& o, const BenchArgs& a, std::ostream& out) {
  if (a.batch_size < 1) throw UsageError("--batch_size must be >= 1");
  if (a.repetitions < 1) throw UsageError("--repetitions must be >= 1");
  if (a.warmup < 0) throw UsageError("--warmup must be >= 0");
  auto provider = make_provider(o, a.types);
  const auto batch = provider.next_batch(static_cast<std::size_t>(a.batch_size));
  const std::size_t channels = static_cast<std::size_t>(batch.front().num_types());

  const unsigned all = thread_count(o);
  std::vector<unsigned> counts{1};
  if (all != 1) counts.push_back(all);

  nlohmann::json runs = nlohmann::json::array();
  for (unsigned threads : counts) {
    GridMaker maker(o.grid, threads);
    ManagedGrid<float> grid(maker.batch_shape(batch.size(), channels));
    auto run_once = [&] {
      Rng rng(o.seed.value_or(0));
      maker.forward_batch(batch, grid.view(), rng, o.random_translation, o.random_rotation);
    };
    for (int w = 0; w < a.warmup; ++w) run_once();
    std::vector<double> secs;
    for (int r = 0; r < a.repetitions; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      run_once();
      secs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::ranges::sort(secs);
    const double median = secs[secs.size() / 2];
    runs.push_back({{"threads", threads},
                    {"median_seconds", median},
                    {"grids_per_sec", static_cast<double>(batch.size()) / median},
                    {"checksum", checksum(grid.view().values())}});
  }

  const auto& best = runs.back();
  nlohmann::json report{{"grids_per_sec", best["grids_per_sec"]},
                        {"peak_mb", peak_rss_mb()},
                        {"threads", best["threads"]},
                        {"checksum", best["checksum"]},
                        {"batch_size", a.batch_size},
                        {"repetitions", a.repetitions},
                        {"shape", dims_of(GridMaker(o.grid, 1).batch_shape(batch.size(), channels))},
                        {"runs", runs}};
  if (a.json) {
    out << report.dump(2) << "\n";
  } else {
    for (const auto& r : runs)
      out << "threads " << r["threads"] << ": " << r["grids_per_sec"].get<double>() << " grids/s, checksum "
          << r["checksum"].get<std::string>() << "\n";
    out << "peak_mb " << report["peak_mb"].get<double>() << "\n";
  }
  return 0;
}

// ---- entry ----------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"voxmol: molecular structures to density grids"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", "voxmol 0.1.0");

  CommonOptions common;

  VoxelizeArgs vox;
  auto* voxelize = app.add_subcommand("voxelize", "grid structure files into an NPY array");
  voxelize->add_option("inputs", vox.inputs, "structure files (or cache names with --molcache), one coordinate set each")
      ->required();
  voxelize->add_option("--molcache", vox.molcache, "read inputs from this structure cache");
  voxelize->add_option("--center", vox.center, "grid center x y z (default: centroid of the last input)")
      ->expected(3);
  voxelize->add_option("-o,--output", vox.output, "output NPY path; metadata goes to <output>.json");
  voxelize->add_option("--data_root", common.provider.data_root, "prefix for relative structure paths");
  add_grid_options(*voxelize, common);

  CacheArgs cache_args;
  auto* cache = app.add_subcommand("cache", "pack structures into a memory-mappable cache");
  cache->add_option("files", cache_args.files, "structure files");
  cache->add_option("--types", cache_args.types, "metadata files whose structures are cached");
  cache->add_option("--role", cache_args.role, "which files of each metadata line: rec (first), lig (rest) or all")
      ->check(CLI::IsMember({"rec", "lig", "all"}));
  cache->add_option("-o,--output", cache_args.output, "cache path")->required();
  cache->add_option("--data_root", common.provider.data_root, "prefix for relative structure paths");
  cache->add_option("--max_group_size", common.provider.max_group_size, "metadata lines start with a group id");

  InspectArgs insp;
  auto* inspect = app.add_subcommand("inspect", "report the composition of sampled batches");
  inspect->add_option("types", insp.types, "metadata files")->required();
  inspect->add_option("--batches", insp.batches, "number of batches to draw");
  inspect->add_option("--batch_size", insp.batch_size, "examples per batch");
  inspect->add_option("--list", insp.list, "list the lines of every batch");
  inspect->add_option("--seed", common.seed, "random seed");
  add_provider_options(*inspect, common);

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "time batch gridding with 1 and all threads");
  bench->add_option("types", bench_args.types, "metadata files")->required();
  bench->add_option("--batch_size", bench_args.batch_size, "examples per batch");
  bench->add_option("--repetitions", bench_args.repetitions, "timed repetitions (median reported)");
  bench->add_option("--warmup", bench_args.warmup, "untimed warmup runs");
  bench->add_flag("--json", bench_args.json, "machine-readable report");
  add_grid_options(*bench, common);
  add_provider_options(*bench, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    common.grid.validate();
    common.provider.validate();
    if (*voxelize) return cmd_voxelize(common, vox, out);
    if (*cache) return cmd_cache(common, cache_args, out);
    if (*inspect) return cmd_inspect(common, insp, out);
    if (*bench) return cmd_bench(common, bench_args, out);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace voxmol::cli
