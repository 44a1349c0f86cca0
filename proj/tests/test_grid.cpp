#include <gtest/gtest.h>

#include <sstream>

#include "weakstil/grid.hpp"
#include "weakstil/synth.hpp"

using namespace weakstil;

namespace {

SynthDataset tiny_data() {
  SynthConfig sc;
  sc.num_bags = 30;
  sc.tiles_min = 5;
  sc.tiles_max = 15;
  sc.h_dim = 4;
  sc.seed = 5;
  return generate(sc);
}

GridSpec tiny_spec(std::vector<double> lrs, std::vector<double> regs) {
  GridSpec g;
  g.learning_rates = std::move(lrs);
  g.regs = std::move(regs);
  g.base.epochs = 3;
  g.base.subsample = 8;
  g.base.seed = 21;
  return g;
}

GridReport manual(std::vector<double> lrs, std::vector<double> regs, std::vector<std::optional<double>> means) {
  GridReport r;
  r.learning_rates = lrs;
  r.regs = regs;
  for (std::size_t li = 0; li < lrs.size(); ++li)
    for (std::size_t ri = 0; ri < regs.size(); ++ri) {
      GridCell c;
      c.lr_index = li;
      c.reg_index = ri;
      c.lr = lrs[li];
      c.reg = regs[ri];
      c.mean = means[li * regs.size() + ri];
      r.cells.push_back(c);
    }
  return r;
}

}  // namespace

TEST(GridSpec, PaperLattice) {
  const auto g = GridSpec::paper(HeadKind::TwoLinear);
  EXPECT_EQ(g.learning_rates.size() * g.regs.size(), 48u);
  EXPECT_EQ(g.base.subsample, 500u);
  EXPECT_NO_THROW(g.validate());
  auto bad = g;
  std::swap(bad.regs[0], bad.regs[1]);
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(RunGrid, DegenerateGridEqualsFoldAggregate) {
  const auto ds = tiny_data();
  const auto plan = stratified_kfold(ds.bags, 5, 0);
  const auto spec = tiny_spec({1e-2}, {1e-4});
  const auto report = run_grid(spec, plan, ds.bags);
  ASSERT_EQ(report.cells.size(), 1u);
  std::vector<double> values;
  for (std::size_t f = 0; f < 5; ++f) {
    const auto sets = materialize(plan, f, ds.bags);
    TrainConfig cfg = spec.base;
    cfg.lr = 1e-2;
    cfg.l2 = 1e-4;
    cfg.seed = grid_seed(spec.base.seed, 0, 0, f);
    try {
      const double auc = train_fold(sets.train, sets.val, cfg).best_val_auc;
      EXPECT_EQ(report.cells[0].fold_auc[f], auc);
      values.push_back(100.0 * auc);
    } catch (const ValidationError&) {
      EXPECT_FALSE(report.cells[0].fold_auc[f].has_value());
    }
  }
  ASSERT_FALSE(values.empty());
  EXPECT_EQ(report.cells[0].mean, summarize(values).mean);
}

TEST(RunGrid, SchedulingDoesNotChangeReport) {
  const auto ds = tiny_data();
  const auto plan = stratified_kfold(ds.bags, 5, 0);
  const auto spec = tiny_spec({5e-2, 1e-3}, {1e-3, 1e-5});
  const auto serial = run_grid(spec, plan, ds.bags, 1);
  EXPECT_EQ(serial, run_grid(spec, plan, ds.bags, 3));
  EXPECT_EQ(serial, run_grid(spec, plan, ds.bags, 1));
  std::ostringstream a, b;
  write_grid_csv(a, serial);
  write_grid_table(b, serial);
  EXPECT_EQ(a.str().rfind("lr,reg,fold,best_val_auc\n", 0), 0u);
  EXPECT_NE(b.str().find("best: lr="), std::string::npos);
}

TEST(SelectBest, UniqueMaximum) {
  const auto r = manual({1e-2, 5e-3}, {1e-3, 1e-4}, {70.0, 60.0, 65.0, 50.0});
  EXPECT_EQ(select_best(r), std::make_pair(1e-2, 1e-3));
}

TEST(SelectBest, TiesPreferLowerLearningRate) {
  const auto r = manual({1e-2, 5e-3}, {1e-3, 1e-4}, {80.0, 10.0, 10.0, 80.0});
  EXPECT_EQ(select_best(r), std::make_pair(5e-3, 1e-4));
}

TEST(SelectBest, AllEqualPicksSmallest) {
  const auto r = manual({1e-2, 5e-3, 1e-3}, {1e-3, 1e-4}, {50.0, 50.0, 50.0, 50.0, 50.0, 50.0});
  EXPECT_EQ(select_best(r), std::make_pair(1e-3, 1e-4));
}

TEST(SelectBest, SkipsFailedCellsAndThrowsWhenNoneSucceeded) {
  const auto r = manual({1e-2, 5e-3}, {1e-3}, {std::nullopt, 40.0});
  EXPECT_EQ(select_best(r), std::make_pair(5e-3, 1e-3));
  EXPECT_THROW(select_best(manual({1e-2}, {1e-3}, {std::nullopt})), ValidationError);
}
