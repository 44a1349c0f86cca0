#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "weakstil/metrics.hpp"
#include "weakstil/parallel.hpp"
#include "weakstil/random.hpp"
#include "weakstil/splits.hpp"
#include "weakstil/train.hpp"

namespace weakstil {

/// Seed of fold `fold` in a cross-validation run; `train --fold i` uses the same one.
inline std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) { return derive_seed(seed, fold); }

struct FoldOutcome {
  std::size_t fold = 0;
  TrainResult training;
  EvalReport test;
  std::string log;
};

struct CrossValResult {
  std::vector<FoldOutcome> folds;

  /// Test predictions of every fold, in fold order.
  std::vector<PredictionRecord> pooled_predictions() const {
    std::vector<PredictionRecord> out;
    for (const auto& f : folds) out.insert(out.end(), f.test.records.begin(), f.test.records.end());
    return out;
  }

  std::vector<double> metric(std::optional<double> EvalReport::*field) const {
    std::vector<double> out;
    for (const auto& f : folds)
      if (f.test.*field) out.push_back(*(f.test.*field));
    return out;
  }
};

inline FoldOutcome run_fold(const SplitPlan& plan, std::size_t fold, std::span<const FeatureBag> bags,
                            TrainConfig config) {
  const FoldSets sets = materialize(plan, fold, bags);
  config.seed = fold_seed(config.seed, fold);
  FoldOutcome out;
  out.fold = fold;
  std::ostringstream log;
  out.training = train_fold(sets.train, sets.val, config, &log);
  out.log = log.str();
  out.test = evaluate(out.training.best_head, sets.test, config.binarize_threshold);
  return out;
}

/// All k rotated folds: train on T, select on V, report on E.
inline CrossValResult cross_validate(const SplitPlan& plan, std::span<const FeatureBag> bags,
                                     const TrainConfig& config, std::size_t jobs = 1) {
  config.validate();
  CrossValResult result;
  result.folds.resize(plan.k);
  parallel_for(plan.k, jobs, [&](std::size_t fold) { result.folds[fold] = run_fold(plan, fold, bags, config); });
  return result;
}

/// `metric,mean,spread,n` rows over folds (the Table-1 shape).
inline void write_cv_summary_csv(std::ostream& os, const CrossValResult& cv, Spread spread = Spread::StdDev) {
  os << "metric,mean," << (spread == Spread::StdDev ? "std" : "sem") << ",n\n";
  auto row = [&](const char* name, std::optional<double> EvalReport::*field) {
    const auto values = cv.metric(field);
    if (values.empty()) {
      os << name << ",NA,NA,0\n";
      return;
    }
    const FoldSummary s = summarize(values, spread);
    os << name << ',' << format_fixed(s.mean) << ',' << (s.count > 1 ? format_fixed(s.spread) : "NA") << ','
       << s.count << '\n';
  };
  row("r2", &EvalReport::r2);
  row("auc", &EvalReport::auc);
  row("pearson_r", &EvalReport::pearson_r);
  row("mse", &EvalReport::mse);
}

}  // namespace weakstil
