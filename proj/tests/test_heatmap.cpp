#include <gtest/gtest.h>

#include <string>

#include "oracles.hpp"
#include "tempdir.hpp"
#include "weakstil/heatmap.hpp"

using namespace weakstil;

namespace {
std::vector<std::uint8_t> bytes_of(const std::string& header, std::vector<std::uint8_t> body) {
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), body.begin(), body.end());
  return out;
}
}  // namespace

TEST(ScoreColor, RampPoints) {
  EXPECT_EQ(score_color(0.0), (Rgb{0, 0, 255}));
  EXPECT_EQ(score_color(1.0), (Rgb{255, 0, 0}));
  EXPECT_EQ(score_color(0.5), (Rgb{128, 0, 128}));
}

TEST(ScoreColor, Monotone) {
  Rgb prev = score_color(0.0);
  for (int i = 1; i <= 10000; ++i) {
    const Rgb c = score_color(i / 10000.0);
    EXPECT_LE(prev.r, c.r);
    EXPECT_GE(prev.b, c.b);
    prev = c;
  }
}

TEST(Ppm, WhitePixelGolden) {
  EXPECT_EQ(encode_ppm(HeatmapCanvas(1, 1)), bytes_of("P6\n1 1\n255\n", {255, 255, 255}));
}

TEST(Ppm, TwoTileGolden) {
  FeatureBag bag;
  bag.h_dim = 1;
  bag.tiles = {{0, 0, {0.0}}, {1, 0, {0.0}}};
  const std::vector<double> scores{0.0, 1.0};
  EXPECT_EQ(encode_ppm(render(bag, scores)), bytes_of("P6\n2 1\n255\n", {0, 0, 255, 255, 0, 0}));
}

TEST(Render, BlocksAndBackground) {
  FeatureBag bag;
  bag.h_dim = 1;
  bag.tiles = {{0, 0, {0.0}}, {2, 1, {0.0}}};
  const std::vector<double> scores{1.0, 0.5};
  const auto c = render(bag, scores, 3);
  EXPECT_EQ(c.width, 9u);
  EXPECT_EQ(c.height, 6u);
  EXPECT_EQ(c.at(2, 2), (Rgb{255, 0, 0}));
  EXPECT_EQ(c.at(8, 5), (Rgb{128, 0, 128}));
  EXPECT_EQ(c.at(4, 1), Rgb{});
  EXPECT_THROW(render(bag, std::vector<double>{0.1}, 1), ValidationError);
}

TEST(Ppm, RoundTripAndDeterminism) {
  Rng rng(6);
  weakstil::testing::TempDir dir;
  for (int t = 0; t < 20; ++t) {
    const auto bag = oracle::random_bag(rng, 2, 1 + rng.below(40));
    std::vector<double> scores;
    for (std::size_t i = 0; i < bag.tiles.size(); ++i) scores.push_back(rng.uniform());
    const auto canvas = render(bag, scores, 1 + rng.below(3));
    EXPECT_EQ(decode_ppm(encode_ppm(canvas)), canvas);
    write_ppm(canvas, dir / "a.ppm");
    write_ppm(canvas, dir / "b.ppm");
    EXPECT_EQ(read_file(dir / "a.ppm"), read_file(dir / "b.ppm"));
  }
}

TEST(Ppm, DecodeRejectsGarbage) {
  EXPECT_THROW(decode_ppm(bytes_of("P5\n1 1\n255\n", {0})), ValidationError);
  EXPECT_THROW(decode_ppm(bytes_of("P6\n2 1\n255\n", {0, 0, 0})), ValidationError);
}
