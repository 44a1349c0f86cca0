#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "weakstil/synth.hpp"
#include "weakstil/train.hpp"

using namespace weakstil;

namespace {

SynthDataset small_planted(std::size_t bags = 60, std::uint64_t seed = 0) {
  SynthConfig sc;
  sc.num_bags = bags;
  sc.tiles_min = 20;
  sc.tiles_max = 60;
  sc.h_dim = 8;
  sc.seed = seed;
  return generate(sc);
}

struct Split {
  std::vector<FeatureBag> train, val;
};

Split first_split(const SynthDataset& ds, std::size_t n_train) {
  Split s;
  s.train.assign(ds.bags.begin(), ds.bags.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(ds.bags.begin() + static_cast<std::ptrdiff_t>(n_train), ds.bags.end());
  return s;
}

}  // namespace

TEST(Subsample, SmallBagUnchanged) {
  Rng rng(1), data(2);
  const auto bag = oracle::random_bag(rng, 2, 300);
  const auto out = subsample_tiles(bag, 500, data);
  ASSERT_EQ(out.tiles.size(), 300u);
  for (std::size_t i = 0; i < 300; ++i) EXPECT_EQ(out.tiles[i].features, bag.tiles[i].features);
}

TEST(Subsample, DistinctOriginalTiles) {
  Rng rng(1);
  const auto idx = subsample_indices(1000, 500, rng);
  ASSERT_EQ(idx.size(), 500u);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 500u);
  EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
  EXPECT_LT(idx.back(), 1000u);
}

TEST(Subsample, Deterministic) {
  Rng make(4);
  const auto bag = oracle::random_bag(make, 2, 1000);
  Rng a(9), b(9);
  const auto x = subsample_tiles(bag, 500, a), y = subsample_tiles(bag, 500, b);
  ASSERT_EQ(x.tiles.size(), 500u);
  for (std::size_t i = 0; i < 500; ++i) {
    EXPECT_EQ(x.tiles[i].col, y.tiles[i].col);
    EXPECT_EQ(x.tiles[i].row, y.tiles[i].row);
  }
}

TEST(Subsample, RoughlyUniform) {
  Rng rng(77);
  std::vector<int> hits(20, 0);
  for (int t = 0; t < 20000; ++t)
    for (std::size_t i : subsample_indices(20, 5, rng)) ++hits[i];
  for (int h : hits) EXPECT_NEAR(h, 5000, 300);
}

TEST(TrainFold, SingleEpoch) {
  const auto ds = small_planted();
  const auto s = first_split(ds, 45);
  TrainConfig cfg;
  cfg.epochs = 1;
  const auto r = train_fold(s.train, s.val, cfg);
  EXPECT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.best_epoch, 1);
  EXPECT_EQ(r.steps, 45u);
}

TEST(TrainFold, EpochsMustBePositive) {
  const auto ds = small_planted();
  const auto s = first_split(ds, 45);
  TrainConfig cfg;
  cfg.epochs = 0;
  try {
    train_fold(s.train, s.val, cfg);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "epochs must be ≥ 1");
  }
}

TEST(TrainFold, RequiresBothValidationClasses) {
  const auto ds = small_planted();
  auto s = first_split(ds, 45);
  for (auto& b : s.val) b.label = 0.1;
  EXPECT_THROW(train_fold(s.train, s.val, TrainConfig{}), ValidationError);
}

TEST(TrainFold, BitIdenticalReruns) {
  const auto ds = small_planted();
  const auto s = first_split(ds, 45);
  for (auto kind : {HeadKind::Linear, HeadKind::TwoLinearTanh}) {
    TrainConfig cfg;
    cfg.head_kind = kind;
    cfg.hidden = 8;
    cfg.epochs = 5;
    cfg.subsample = 15;
    cfg.seed = 13;
    std::ostringstream log_a, log_b;
    const auto a = train_fold(s.train, s.val, cfg, &log_a);
    const auto b = train_fold(s.train, s.val, cfg, &log_b);
    EXPECT_EQ(a, b);
    EXPECT_EQ(log_a.str(), log_b.str());
  }
}

TEST(TrainFold, StepCountAndSelectionInvariant) {
  const auto ds = small_planted();
  const auto s = first_split(ds, 40);
  TrainConfig cfg;
  cfg.head_kind = HeadKind::TwoLinear;
  cfg.hidden = 6;
  cfg.epochs = 7;
  cfg.lr = 1e-2;
  const auto r = train_fold(s.train, s.val, cfg);
  EXPECT_EQ(r.steps, 7u * 40u);
  ASSERT_EQ(r.history.size(), 7u);
  const auto rep = evaluate(r.best_head, s.val, cfg.binarize_threshold);
  ASSERT_TRUE(rep.auc.has_value());
  EXPECT_NEAR(*rep.auc, r.best_val_auc, 1e-12);
  const auto best = std::max_element(r.history.begin(), r.history.end(),
                                     [](const auto& x, const auto& y) { return x.val_auc < y.val_auc; });
  EXPECT_EQ(best->epoch, r.best_epoch);  // max_element returns the first maximum
}

TEST(TrainFold, SeedOnlyReordersWithSingleTrainingBag) {
  const auto ds = small_planted();
  std::vector<FeatureBag> one{ds.bags[0]};
  const std::vector<FeatureBag> val(ds.bags.begin() + 30, ds.bags.end());
  TrainConfig a, b;
  a.epochs = b.epochs = 4;
  a.seed = 1;
  b.seed = 2;
  EXPECT_EQ(train_fold(one, val, a), train_fold(one, val, b));
}

TEST(TrainFold, RecoversPlantedSignal) {
  SynthConfig sc;
  sc.num_bags = 100;
  sc.tiles_min = 50;
  sc.tiles_max = 100;
  sc.h_dim = 16;
  const auto ds = generate(sc);
  const auto s = first_split(ds, 80);
  TrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.l2 = 1e-4;
  cfg.epochs = 50;
  std::vector<double> labels;
  for (const auto& b : s.val) labels.push_back(b.label);
  std::nth_element(labels.begin(), labels.begin() + labels.size() / 2, labels.end());
  cfg.binarize_threshold = labels[labels.size() / 2];
  const auto r = train_fold(s.train, s.val, cfg);
  EXPECT_GE(r.best_val_auc, 0.95);
}

TEST(TrainFold, NoiselessLinearFitsTrainingSet) {
  SynthConfig sc;
  sc.num_bags = 40;
  sc.tiles_min = 10;
  sc.tiles_max = 30;
  sc.h_dim = 6;
  sc.label_noise_sd = 0.0;
  const auto ds = generate(sc);
  TrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.l2 = 0.0;
  cfg.epochs = 200;
  const auto r = train_fold(ds.bags, ds.bags, cfg);
  EXPECT_LT(r.history.back().train_mse, 1e-4);
}
