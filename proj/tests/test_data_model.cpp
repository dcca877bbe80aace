#include <gtest/gtest.h>

#include <cstring>

#include "mscate/data_model.hpp"
#include "mscate/error.hpp"
#include "test_support.hpp"

namespace mscate {
namespace {

using test::scratch_dir;

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an mscate::Error";
  return ErrorCode::Numerical;
}

TEST(Raster, ZeroGridRoundTrip) {
  const auto dir = scratch_dir("raster_zero");
  RasterBundle b;
  b.width = 4;
  b.height = 4;
  b.bands = 1;
  b.data.assign(16, 0.0f);
  save_raster(b, dir / "r.json");
  const RasterBundle got = load_raster(dir / "r.json");
  EXPECT_EQ(got.width, 4);
  EXPECT_EQ(got.height, 4);
  EXPECT_EQ(got.bands, 1);
  for (float v : got.data) EXPECT_EQ(v, 0.0f);
}

TEST(Raster, PayloadTooShortIsSizeMismatch) {
  const auto dir = scratch_dir("raster_short");
  test::spit(dir / "r.json", R"({"width":2,"height":2,"bands":1,"pixel_size_m":1,"dtype":"f32"})");
  const float three[3] = {1, 2, 3};
  std::string bytes(reinterpret_cast<const char*>(three), sizeof three);
  test::spit(dir / "r.bin", bytes);
  EXPECT_EQ(code_of([&] { load_raster(dir / "r.json"); }), ErrorCode::SizeMismatch);
}

TEST(Raster, MalformedHeaderAndNonFinite) {
  const auto dir = scratch_dir("raster_bad");
  test::spit(dir / "a.json", R"({"width":2,"height":"x"})");
  EXPECT_EQ(code_of([&] { load_raster(dir / "a.json"); }), ErrorCode::MalformedHeader);
  test::spit(dir / "b.json", R"({"width":1,"height":1,"bands":1,"pixel_size_m":1,"dtype":"f32"})");
  const float nan = std::numeric_limits<float>::quiet_NaN();
  test::spit(dir / "b.bin", std::string(reinterpret_cast<const char*>(&nan), sizeof nan));
  EXPECT_EQ(code_of([&] { load_raster(dir / "b.json"); }), ErrorCode::NonFiniteValue);
}

TEST(Raster, SeededRandomRoundTripIsBitwise) {
  const auto dir = scratch_dir("raster_rt");
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const RasterBundle b = test::random_raster(64, 64, 3, seed);
    save_raster(b, dir / "r.json");
    const RasterBundle got = load_raster(dir / "r.json");
    ASSERT_EQ(got.data.size(), b.data.size());
    EXPECT_EQ(std::memcmp(got.data.data(), b.data.data(), b.data.size() * sizeof(float)), 0);
    // Loading is byte-deterministic.
    EXPECT_EQ(load_raster(dir / "r.json").data, got.data);
  }
}

TEST(Units, ParsesTwoRows) {
  const auto dir = scratch_dir("units_two");
  test::spit(dir / "u.csv", "id,x,y,w,outcome\nu1,10,10,1,3.5\nu2,20,20,0,-1.0\n");
  const auto units = load_units(dir / "u.csv");
  ASSERT_EQ(units.size(), 2u);
  EXPECT_EQ(units[0].id, "u1");
  EXPECT_EQ(units[0].w, 1);
  EXPECT_DOUBLE_EQ(units[0].outcome, 3.5);
  EXPECT_EQ(units[1].id, "u2");
  EXPECT_DOUBLE_EQ(units[1].outcome, -1.0);
}

TEST(Units, ErrorsAreTyped) {
  const auto dir = scratch_dir("units_err");
  test::spit(dir / "a.csv", "id,x,y,w,outcome\nu1,10,10,2,3.5\n");
  EXPECT_EQ(code_of([&] { load_units(dir / "a.csv"); }), ErrorCode::NonBinaryTreatment);
  test::spit(dir / "b.csv", "id,x,y,w,outcome\nu1,1,1,1,0\nu1,2,2,0,0\n");
  EXPECT_EQ(code_of([&] { load_units(dir / "b.csv"); }), ErrorCode::DuplicateId);
  test::spit(dir / "c.csv", "id,x,y,w,outcome\nu1,abc,1,1,0\n");
  EXPECT_EQ(code_of([&] { load_units(dir / "c.csv"); }), ErrorCode::UnparsableRow);
  test::spit(dir / "d.csv", "id,x,y,w,outcome\nu1,1,1,1\n");
  EXPECT_EQ(code_of([&] { load_units(dir / "d.csv"); }), ErrorCode::UnparsableRow);
}

TEST(Units, SeededThousandRowRoundTrip) {
  const auto dir = scratch_dir("units_rt");
  Rng rng(99);
  std::vector<UnitRecord> units(1000);
  for (std::size_t i = 0; i < units.size(); ++i) {
    units[i].id = "unit_" + std::to_string(i * 7919 % 100003);
    units[i].x = rng.uniform(0, 5000);
    units[i].y = rng.uniform(0, 5000);
    units[i].w = rng.bernoulli(0.5) ? 1 : 0;
    units[i].outcome = rng.normal(0, 1e3);
  }
  save_units(units, dir / "u.csv");
  EXPECT_EQ(load_units(dir / "u.csv"), units);
}

TEST(Embeddings, SingleUnitRoundTrip) {
  const auto dir = scratch_dir("emb_one");
  const EmbeddingTable t({"a"}, 16, MatrixF(1, 2, 0.0f));
  save_embeddings(t, dir / "e.csv");
  EXPECT_EQ(load_embeddings(dir / "e.csv"), t);
}

TEST(Embeddings, RowCountMismatchIsDimMismatch) {
  EXPECT_EQ(code_of([] { EmbeddingTable({"a", "b"}, 0, MatrixF(1, 2)); }), ErrorCode::DimMismatch);
}

TEST(Embeddings, SeededWideTableRoundTripsBitExactly) {
  const auto dir = scratch_dir("emb_rt");
  Rng rng(5);
  MatrixF m(100, 512);
  for (auto& v : m.values()) v = static_cast<float>(rng.normal() * std::pow(10.0, rng.uniform(-8, 8)));
  std::vector<std::string> ids;
  for (int i = 0; i < 100; ++i) ids.push_back("id" + std::to_string(i));
  const EmbeddingTable t(ids, 64, m);
  save_embeddings(t, dir / "e.csv");
  const EmbeddingTable got = load_embeddings(dir / "e.csv");
  ASSERT_EQ(got.size(), 100u);
  EXPECT_EQ(std::memcmp(got.values().values().data(), m.values().data(), m.values().size() * sizeof(float)), 0);
  EXPECT_EQ(got.scale_tag(), 64);
}

TEST(Embeddings, AlignedRejectsUnknownIds) {
  const EmbeddingTable t({"a", "b"}, 0, MatrixF(2, 1, 1.0f));
  const std::vector<std::string> ids{"b", "zz"};
  EXPECT_EQ(code_of([&] { t.aligned(ids); }), ErrorCode::UnknownUnitId);
}

TEST(Format, LocaleIndependentRoundTrip) {
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-300, 300));
    bool ok = false;
    EXPECT_EQ(parse_double(format_double(v), &ok), v);
    EXPECT_TRUE(ok);
  }
}

}  // namespace
}  // namespace mscate
