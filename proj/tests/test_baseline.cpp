#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "weakstil/baseline.hpp"
#include "weakstil/random.hpp"

using namespace weakstil;

namespace {
DetectionSummary det(std::uint64_t tils, std::uint64_t tiles) { return {"s", tils, tiles, {}}; }
}  // namespace

TEST(TbTil, NoDetections) { EXPECT_EQ(tb_til_percent(det(0, 7)), 0.0); }

TEST(TbTil, HundredTilsTenTiles) {
  EXPECT_NEAR(tb_til_percent(det(100, 10)), 0.007670, 1e-6);
  EXPECT_NEAR(tb_til_percent(det(100, 10)), 100.0 * 16.0 * std::numbers::pi / 655360.0, 1e-15);
}

// 13037 TILs over 10 tiles sits just below full coverage; the exact value is
// 13037 * 16pi / 655360 = 0.999925...
TEST(TbTil, NearFullCoverage) {
  const double v = tb_til_percent(det(13037, 10));
  EXPECT_NEAR(v, 13037.0 * 16.0 * std::numbers::pi / 655360.0, 1e-15);
  EXPECT_GT(v, 0.9999);
  EXPECT_LT(v, 1.0);
  EXPECT_GT(tb_til_percent(det(13038, 10)), 1.0);  // not clamped
}

TEST(TbTil, ClosedFormAndLinearity) {
  Rng rng(3);
  const double k = 16.0 * std::numbers::pi / 65536.0;
  for (int t = 0; t < 10000; ++t) {
    const std::uint64_t tils = rng.below(1'000'000);
    const std::uint64_t tiles = 1 + rng.below(100'000);
    const double v = tb_til_percent(det(tils, tiles));
    const double want = static_cast<double>(tils) / static_cast<double>(tiles) * k;
    EXPECT_LE(std::fabs(v - want), 1e-15 * std::fabs(want));
    EXPECT_EQ(tb_til_percent(det(2 * tils, tiles)), 2.0 * v);
    EXPECT_EQ(tb_til_percent(det(tils, 2 * tiles)), 0.5 * v);
  }
}

TEST(TbTil, InvalidInputs) {
  EXPECT_THROW(tb_til_percent(det(5, 0)), ValidationError);
  auto d = det(5, 1);
  d.geometry.mpp = 0.0;
  EXPECT_THROW(tb_til_percent(d), ValidationError);
}
