#include <gtest/gtest.h>

#include <sstream>

#include "cli.hpp"
#include "support.hpp"

using namespace voxmol;
using testing_support::TempDir;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "voxmol");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

ManagedGrid<float> load(const std::string& path) { return std::get<ManagedGrid<float>>(npy::read(path)); }

}  // namespace

TEST(Cli, VoxelizeSingleCarbon) {
  TempDir dir;
  const auto xyz = dir.write("c.xyz", "1\ncarbon\nC 0 0 0\n");
  const auto out = dir.file("g.npy");
  auto r = run({"voxelize", xyz, "-o", out});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("shape (14, 48, 48, 48)"), std::string::npos);
  auto g = load(out);
  EXPECT_EQ(g.shape(), GridShape({14, 48, 48, 48}));
  std::ifstream side(out + ".json");
  auto meta = nlohmann::json::parse(side);
  EXPECT_EQ(meta["channels"][0], "0:C");
  EXPECT_EQ(meta["shape"][1], 48);
  EXPECT_FLOAT_EQ(meta["origin"][0].get<float>(), -11.75f);
}

TEST(Cli, BinaryVoxelsAreOne) {
  TempDir dir;
  const auto xyz = dir.write("m.xyz", "2\n\nC 0 0 0\nN 1 0 0\n");
  auto r = run({"voxelize", xyz, "--binary", "true", "-o", dir.file("b.npy")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t nonzero = 0;
  for (float v : load(dir.file("b.npy")).values())
    if (v != 0.0f) {
      EXPECT_EQ(v, 1.0f);
      ++nonzero;
    }
  EXPECT_GT(nonzero, 0u);
}

TEST(Cli, MissingInputIsUsageError) {
  auto r = run({"voxelize", "/no/such/file.xyz"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("/no/such/file.xyz"), std::string::npos);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
}

TEST(Cli, MalformedStructureIsParseError) {
  TempDir dir;
  const auto xyz = dir.write("bad.xyz", "2\n\nC 0 0 0\n");
  auto r = run({"voxelize", xyz, "-o", dir.file("x.npy")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bad.xyz"), std::string::npos);
}

TEST(Cli, HelpListsOptionDefaults) {
  auto r = run({"bench", "--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* flag : {"--resolution FLOAT [0.5]", "--dimension FLOAT [23.5]", "--gaussian_radius_multiple",
                           "--shuffle", "--balanced", "--stratify_receptor", "--labelpos", "--stratify_pos",
                           "--stratify_abs", "--stratify_min", "--stratify_max", "--stratify_step",
                           "--group_batch_size", "--max_group_size", "--cache_structs", "--duplicate_first",
                           "--num_copies", "--make_vector_types", "--data_root", "--recmolcache", "--ligmolcache",
                           "--binary", "--radius_type_indexed", "--radius_scale"})
    EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
}

TEST(Cli, CacheDedupesAndVoxelizesIdentically) {
  TempDir dir;
  dir.write("r1.xyz", "2\n\nC 0 0 0\nO 1.25 0.5 0\n");
  dir.write("r2.xyz", "1\n\nN 0 1 0\n");
  dir.write("l.xyz", "1\n\nS 0.5 0.5 0.5\n");
  const auto types = dir.write("d.types", "1 r1.xyz l.xyz\n0 r2.xyz l.xyz\n1 r1.xyz l.xyz\n");
  auto r = run({"cache", "--types", types, "--role", "rec", "--data_root", dir.file(""), "-o", dir.file("rec.molc")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("entries 2"), std::string::npos);

  ASSERT_EQ(run({"voxelize", dir.file("r1.xyz"), "-o", dir.file("raw.npy")}).code, 0);
  auto c = run({"voxelize", dir.file("r1.xyz"), "--molcache", dir.file("all.molc"), "-o", dir.file("c.npy")});
  EXPECT_EQ(c.code, 1);  // cache file does not exist yet
  ASSERT_EQ(run({"cache", dir.file("r1.xyz"), "-o", dir.file("all.molc")}).code, 0);
  c = run({"voxelize", dir.file("r1.xyz"), "--molcache", dir.file("all.molc"), "-o", dir.file("c.npy")});
  ASSERT_EQ(c.code, 0) << c.err;
  auto a = load(dir.file("raw.npy")), b = load(dir.file("c.npy"));
  EXPECT_TRUE(std::ranges::equal(a.values(), b.values()));

  EXPECT_EQ(run({"cache", "-o", dir.file("empty.molc")}).code, 2);
}

TEST(Cli, InspectReportsBalancedCounts) {
  TempDir dir;
  std::string text;
  for (int i = 0; i < 100; ++i) text += (i < 3 ? "1 r" : "0 r") + std::to_string(i % 5) + ".xyz l.xyz\n";
  const auto types = dir.write("d.types", text);
  auto r = run({"inspect", types, "--balanced", "true", "--batches", "100", "--batch_size", "10", "--list", "false"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("classes\n  0 500\n  1 500\n"), std::string::npos) << r.out;

  auto listed = run({"inspect", types, "--batches", "1", "--batch_size", "3"});
  EXPECT_NE(listed.out.find("batch 0\n  1 r0.xyz l.xyz\n  1 r1.xyz l.xyz\n  1 r2.xyz l.xyz\n"), std::string::npos);

  auto bad = run({"inspect", types, "--stratify_max", "5"});
  EXPECT_EQ(bad.code, 2);
}

TEST(Cli, BenchChecksumsAgreeAcrossRunsAndThreads) {
  TempDir dir;
  dir.write("r.xyz", "3\n\nC 0 0 0\nO 1.2 0 0\nN 0 1.3 0\n");
  dir.write("l.xyz", "2\n\nC 2 2 2\nS 2.5 1 0\n");
  const auto types = dir.write("d.types", "1 r.xyz l.xyz\n0 l.xyz r.xyz\n");
  const std::vector<std::string> args{"bench", types, "--data_root", dir.file(""), "--batch_size", "2",
                                      "--repetitions", "5", "--threads", "3", "--random_rotation", "true",
                                      "--seed", "5", "--json"};
  auto a = run(args), b = run(args);
  ASSERT_EQ(a.code, 0) << a.err;
  auto ja = nlohmann::json::parse(a.out), jb = nlohmann::json::parse(b.out);
  for (const char* key : {"grids_per_sec", "peak_mb", "threads"}) EXPECT_TRUE(ja.contains(key)) << key;
  EXPECT_EQ(ja["checksum"], jb["checksum"]);
  ASSERT_EQ(ja["runs"].size(), 2u);
  EXPECT_EQ(ja["runs"][0]["checksum"], ja["runs"][1]["checksum"]);
  EXPECT_EQ(ja["threads"], 3);
}
