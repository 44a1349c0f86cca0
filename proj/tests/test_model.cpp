#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "weakstil/model.hpp"

using namespace weakstil;

namespace {

FeatureBag bag_of(std::size_t h_dim, std::vector<std::vector<double>> rows) {
  FeatureBag bag;
  bag.slide_id = "b";
  bag.h_dim = h_dim;
  std::uint32_t col = 0;
  for (auto& r : rows) bag.tiles.push_back({col++, 0, std::move(r)});
  return bag;
}

bool within_ulps(double a, double b, int ulps) {
  if (a == b) return true;
  double x = a;
  for (int i = 0; i < ulps; ++i) x = std::nextafter(x, b);
  return x == b;
}

}  // namespace

TEST(Sigmoid, Anchors) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(std::log(3.0)), 0.75, 1e-15);
  const double tiny = sigmoid(-1000.0);
  EXPECT_FALSE(std::isnan(tiny));
  EXPECT_GE(tiny, 0.0);
  EXPECT_LT(tiny, 1e-300);
  EXPECT_EQ(sigmoid(1000.0), 1.0);
}

TEST(Forward, ZeroLinearHeadScoresHalf) {
  Rng rng(1);
  const auto bag = oracle::random_bag(rng, 5, 9);
  const auto pred = forward(ModelHead::zeros(HeadKind::Linear, 5), bag);
  for (double s : pred.tile_scores) EXPECT_EQ(s, 0.5);
  EXPECT_EQ(pred.bag_score, 0.5);
}

TEST(Forward, HandEvaluatedLinear) {
  auto head = ModelHead::zeros(HeadKind::Linear, 2);
  head.w()[0] = 1.0;
  head.w()[1] = -1.0;
  const auto pred = forward(head, bag_of(2, {{0.0, 0.0}, {std::log(3.0), 0.0}}));
  ASSERT_EQ(pred.tile_scores.size(), 2u);
  EXPECT_EQ(pred.tile_scores[0], 0.5);
  EXPECT_NEAR(pred.tile_scores[1], 0.75, 1e-15);
  EXPECT_NEAR(pred.bag_score, 0.625, 1e-15);
}

TEST(Forward, ConstantTwoLinearHead) {
  auto head = ModelHead::zeros(HeadKind::TwoLinear, 3, 8);
  head.b2() = std::log(3.0);
  Rng rng(2);
  const auto pred = forward(head, oracle::random_bag(rng, 3, 6));
  for (double s : pred.tile_scores) EXPECT_NEAR(s, 0.75, 1e-15);
}

TEST(Forward, DimensionMismatchThrows) {
  Rng rng(2);
  EXPECT_THROW(forward(ModelHead::zeros(HeadKind::Linear, 4), oracle::random_bag(rng, 3, 2)), ValidationError);
}

TEST(Forward, AgreesWithDirectEvaluation) {
  Rng rng(9);
  for (auto kind : {HeadKind::Linear, HeadKind::TwoLinear, HeadKind::TwoLinearTanh}) {
    for (int t = 0; t < 20; ++t) {
      const auto head = oracle::random_head(rng, kind, 6, 10);
      const auto bag = oracle::random_bag(rng, 6, 1 + rng.below(40));
      EXPECT_NEAR(forward(head, bag).bag_score, oracle::bag_score(head, bag), 1e-13);
    }
  }
}

TEST(Loss, Examples) {
  BagPrediction p;
  p.bag_score = 0.5;
  EXPECT_EQ(loss(p, 0.5), 0.0);
  p.bag_score = 0.625;
  EXPECT_EQ(loss(p, 0.5), 0.015625);
  p.bag_score = 0.9;
  EXPECT_NEAR(loss(p, 0.2), 0.49, 1e-15);
}

TEST(Backward, ZeroResidualGivesZeroGradient) {
  Rng rng(4);
  const auto bag = oracle::random_bag(rng, 7, 5);
  const auto g = backward(ModelHead::zeros(HeadKind::Linear, 7), bag, 0.5);
  for (double x : g.params) EXPECT_EQ(x, 0.0);
}

TEST(Backward, HandChainRule) {
  const auto g = backward(ModelHead::zeros(HeadKind::Linear, 1), bag_of(1, {{0.0}}), 0.0);
  EXPECT_EQ(g.b(), 0.25);
  EXPECT_EQ(g.w()[0], 0.0);
}

TEST(Backward, MatchesFiniteDifferences) {
  Rng rng(17);
  int checked = 0;
  for (auto kind : {HeadKind::Linear, HeadKind::TwoLinear, HeadKind::TwoLinearTanh}) {
    for (int t = 0; t < 25; ++t) {
      const std::size_t h = 1 + rng.below(8);
      const auto head = oracle::random_head(rng, kind, h, 1 + rng.below(6));
      const auto bag = oracle::random_bag(rng, h, 1 + rng.below(10));
      const double label = rng.uniform();
      const auto g = backward(head, bag, label);
      ASSERT_TRUE(g.same_shape(head));
      for (std::size_t i = 0; i < head.params.size(); ++i) {
        const double fd = oracle::finite_difference(head, bag, label, i);
        EXPECT_TRUE(oracle::gradients_agree(g.params[i], fd))
            << to_string(kind) << " param " << i << ": " << g.params[i] << " vs " << fd;
      }
      ++checked;
    }
  }
  EXPECT_EQ(checked, 75);
}

TEST(Invariance, PermutationAndDuplication) {
  Rng rng(23);
  for (auto kind : {HeadKind::Linear, HeadKind::TwoLinear, HeadKind::TwoLinearTanh}) {
    for (int t = 0; t < 30; ++t) {
      const auto head = oracle::random_head(rng, kind, 5, 7);
      auto bag = oracle::random_bag(rng, 5, 1 + rng.below(60));
      const double base = forward(head, bag).bag_score;
      for (double s : forward(head, bag).tile_scores) {
        EXPECT_GT(s, 0.0);
        EXPECT_LT(s, 1.0);
      }

      auto permuted = bag;
      rng.shuffle(permuted.tiles);
      EXPECT_TRUE(within_ulps(base, forward(head, permuted).bag_score, 8));

      auto duplicated = bag;
      const std::size_t k = 2 + rng.below(4);
      for (std::size_t rep = 1; rep < k; ++rep)
        for (auto tile : bag.tiles) {
          tile.row += static_cast<std::uint32_t>(1000 * rep);
          duplicated.tiles.push_back(tile);
        }
      EXPECT_TRUE(within_ulps(base, forward(head, duplicated).bag_score, 8));
    }
  }
}

TEST(Invariance, TwoLinearCollapsesToLinear) {
  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    const std::size_t h = 1 + rng.below(10), hid = 1 + rng.below(12);
    const auto mlp = oracle::random_head(rng, HeadKind::TwoLinear, h, hid);
    auto lin = ModelHead::zeros(HeadKind::Linear, h);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < hid; ++j) lin.w()[i] += mlp.w1()[i * hid + j] * mlp.w2()[j];
    lin.b() = mlp.b2();
    for (std::size_t j = 0; j < hid; ++j) lin.b() += mlp.b1()[j] * mlp.w2()[j];
    const auto bag = oracle::random_bag(rng, h, 1 + rng.below(20));
    EXPECT_NEAR(forward(mlp, bag).bag_score, forward(lin, bag).bag_score, 1e-12);
  }
}

TEST(InitHead, LinearIsZero) {
  const auto head = init_head(HeadKind::Linear, 512, 99);
  EXPECT_EQ(head.params.size(), 513u);
  for (double x : head.params) EXPECT_EQ(x, 0.0);
}

TEST(InitHead, DeterministicAndBounded) {
  EXPECT_EQ(init_head(HeadKind::TwoLinearTanh, 512, 5), init_head(HeadKind::TwoLinearTanh, 512, 5));
  EXPECT_NE(init_head(HeadKind::TwoLinearTanh, 512, 5), init_head(HeadKind::TwoLinearTanh, 512, 6));
  const auto head = init_head(HeadKind::TwoLinear, 512, 5);
  const double bound = 1.0 / std::sqrt(512.0);
  for (double x : head.w1()) {
    EXPECT_GT(x, -bound);
    EXPECT_LT(x, bound);
  }
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(kDefaultHidden));
  for (double x : head.w2()) EXPECT_LT(std::fabs(x), bound2);
  for (double x : head.b1()) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(head.b2(), 0.0);
}

TEST(HeadKindNames, RoundTrip) {
  for (auto kind : {HeadKind::Linear, HeadKind::TwoLinear, HeadKind::TwoLinearTanh})
    EXPECT_EQ(parse_head_kind(to_string(kind)), kind);
  EXPECT_FALSE(parse_head_kind("mlp").has_value());
}
