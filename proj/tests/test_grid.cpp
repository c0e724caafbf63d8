#include <gtest/gtest.h>

#include <cstring>

#include "support.hpp"

using namespace voxmol;
using testing_support::TempDir;

TEST(GridShape, StridesAreRowMajor) {
  GridShape s{2, 3, 4};
  EXPECT_EQ(s.rank(), 3u);
  EXPECT_EQ(s.size(), 24u);
  EXPECT_EQ(s.stride(0), 12u);
  EXPECT_EQ(s.stride(1), 4u);
  EXPECT_EQ(s.stride(2), 1u);
  EXPECT_EQ(s.str(), "(2, 3, 4)");
  EXPECT_EQ(GridShape({4}).str(), "(4,)");
}

TEST(GridShape, RejectsBadRanksAndExtents) {
  EXPECT_THROW(GridShape({}), ArgumentError);
  EXPECT_THROW(GridShape({1, 1, 1, 1, 1, 1, 1}), ArgumentError);
  EXPECT_THROW(GridShape({2, 0}), ArgumentError);
}

TEST(GridView, IndexingMatchesRowMajorOffsets) {
  ManagedGrid<float> g(GridShape{2, 2});
  g(0, 0) = 1;
  g(0, 1) = 2;
  g(1, 0) = 3;
  g(1, 1) = 4;
  const std::vector<float> expect{1, 2, 3, 4};
  EXPECT_TRUE(std::ranges::equal(g.values(), expect));
  EXPECT_THROW(g(2, 0), IndexError);
  const std::array<std::size_t, 2> idx{1, 0};
  EXPECT_EQ(g.get(idx), 3.0f);
}

TEST(GridView, WrapsCallerBufferWithoutCopy) {
  std::vector<float> buf(8, 0.0f);
  auto v = view_over<float>(std::span<float>(buf), GridShape{2, 4});
  v(1, 3) = 7.0f;
  EXPECT_EQ(buf[7], 7.0f);
  EXPECT_EQ(v.data(), buf.data());
  EXPECT_THROW(view_over<float>(std::span<float>(buf), GridShape{3, 3}), ArgumentError);
}

TEST(GridView, SlabIsContiguousSubview) {
  ManagedGrid<double> g(GridShape{3, 2, 2});
  auto s = g.view().slab(1);
  s.fill(5.0);
  EXPECT_EQ(g(1, 0, 0), 5.0);
  EXPECT_EQ(g(1, 1, 1), 5.0);
  EXPECT_EQ(g(0, 1, 1), 0.0);
  EXPECT_EQ(g(2, 0, 0), 0.0);
}

TEST(GridView, RawBufferDtypeMustMatch) {
  std::vector<double> buf(4);
  RawBuffer raw{buf.data(), DType::f64, buf.size()};
  EXPECT_NO_THROW(view_over<double>(raw, GridShape{4}));
  try {
    view_over<float>(raw, GridShape{4});
    FAIL();
  } catch (const ArgumentError& e) {
    EXPECT_NE(std::string(e.what()).find("dtypes must match"), std::string::npos);
  }
}

TEST(CopyInto, DeepCopiesAndChecksShapes) {
  ManagedGrid<float> a(GridShape{2, 2}), b(GridShape{2, 2}), c(GridShape{4});
  a.fill(3.0f);
  copy_into(a, b);
  EXPECT_EQ(b(1, 1), 3.0f);
  a.fill(1.0f);
  EXPECT_EQ(b(1, 1), 3.0f);
  EXPECT_THROW(copy_into(a, c), ArgumentError);
  AnyGrid f = make_grid(GridShape{2}, DType::f32), d = make_grid(GridShape{2}, DType::f64);
  EXPECT_THROW(copy_into(f, d), ArgumentError);
}

TEST(Npy, HeaderIsAlignedAndDescribesDtype) {
  ManagedGrid<float> g(GridShape{2, 3});
  const std::string data = npy::encode(g);
  ASSERT_GE(data.size(), 10u);
  EXPECT_EQ(data.substr(0, 6), std::string("\x93NUMPY"));
  EXPECT_EQ(data[6], 1);
  EXPECT_EQ(data[7], 0);
  const std::size_t header_len = static_cast<unsigned char>(data[8]) | (static_cast<unsigned char>(data[9]) << 8);
  EXPECT_EQ((10 + header_len) % 64, 0u);
  const std::string header = data.substr(10, header_len);
  EXPECT_NE(header.find("'descr': '<f4'"), std::string::npos);
  EXPECT_NE(header.find("'fortran_order': False"), std::string::npos);
  EXPECT_NE(header.find("'shape': (2, 3)"), std::string::npos);
  EXPECT_EQ(header.back(), '\n');
  EXPECT_EQ(data.size(), 10 + header_len + 6 * sizeof(float));
}

TEST(Npy, RoundTripsBothDtypes) {
  TempDir dir;
  ManagedGrid<float> f(GridShape{2, 3, 4});
  for (std::size_t i = 0; i < f.size(); ++i) f.values()[i] = static_cast<float>(i) * 0.25f - 1.0f;
  npy::write(dir.file("f.npy"), f);
  auto back = npy::read(dir.file("f.npy"));
  ASSERT_EQ(dtype_of(back), DType::f32);
  const auto& bf = std::get<ManagedGrid<float>>(back);
  EXPECT_EQ(bf.shape(), f.shape());
  EXPECT_EQ(std::memcmp(bf.data(), f.data(), f.size() * sizeof(float)), 0);

  ManagedGrid<double> d(GridShape{5});
  d.values()[3] = 1e300;
  auto bd = npy::decode(npy::encode(d));
  ASSERT_EQ(dtype_of(bd), DType::f64);
  EXPECT_EQ(std::get<ManagedGrid<double>>(bd).values()[3], 1e300);
}

TEST(Npy, RejectsMalformedInput) {
  EXPECT_THROW(npy::decode("garbage"), FormatError);
  ManagedGrid<float> g(GridShape{4});
  std::string data = npy::encode(g);
  EXPECT_THROW(npy::decode(data.substr(0, data.size() - 1)), FormatError);
  std::string fortran = data;
  fortran.replace(fortran.find("False"), 5, "True ");
  EXPECT_THROW(npy::decode(fortran), FormatError);
}
