#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "weakstil/core.hpp"
#include "weakstil/metrics.hpp"
#include "weakstil/model.hpp"
#include "weakstil/optim.hpp"
#include "weakstil/random.hpp"

namespace weakstil {

struct TrainConfig {
  HeadKind head_kind = HeadKind::Linear;
  std::size_t hidden = kDefaultHidden;
  double lr = 5e-3;
  double l2 = 1e-4;
  L2Mode l2_mode = L2Mode::Coupled;
  int epochs = 50;
  int batch_size = 1;
  std::optional<std::size_t> subsample;
  double binarize_threshold = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw ValidationError("epochs must be ≥ 1");
    if (batch_size != 1) throw ValidationError("batch_size must be 1");
    if (subsample && *subsample < 1) throw ValidationError("subsample must be ≥ 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be positive");
    if (!(l2 >= 0.0) || !std::isfinite(l2)) throw ValidationError("l2 must be non-negative");
    if (head_kind != HeadKind::Linear && hidden == 0) throw ValidationError("hidden must be ≥ 1");
  }

  AdamHyper adam() const {
    AdamHyper h;
    h.lr = lr;
    h.l2 = l2;
    h.l2_mode = l2_mode;
    return h;
  }
};

struct EpochStats {
  int epoch = 0;
  double train_mse = 0.0;
  double val_auc = 0.0;
  std::optional<double> val_r2;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct TrainResult {
  ModelHead best_head;
  int best_epoch = 0;
  double best_val_auc = 0.0;
  std::vector<EpochStats> history;
  std::uint64_t steps = 0;

  friend bool operator==(const TrainResult&, const TrainResult&) = default;
};

/// Indices of an order-preserving uniform subsample without replacement
/// (selection sampling). Returns all indices when n_tiles <= n.
inline std::vector<std::size_t> subsample_indices(std::size_t n_tiles, std::size_t n, Rng& rng) {
  std::vector<std::size_t> out;
  if (n_tiles <= n) {
    out.resize(n_tiles);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  out.reserve(n);
  std::size_t needed = n;
  for (std::size_t i = 0; i < n_tiles && needed > 0; ++i) {
    const std::size_t remaining = n_tiles - i;
    if (rng.below(remaining) < needed) {
      out.push_back(i);
      --needed;
    }
  }
  return out;
}

inline FeatureBag subsample_tiles(const FeatureBag& bag, std::size_t n, Rng& rng) {
  if (n < 1) throw ValidationError("subsample size must be ≥ 1");
  if (bag.tiles.size() <= n) return bag;
  FeatureBag out = bag;
  out.tiles.clear();
  for (std::size_t i : subsample_indices(bag.tiles.size(), n, rng)) out.tiles.push_back(bag.tiles[i]);
  return out;
}

/// Seeds of the independent random streams one training run consumes.
struct TrainStreams {
  static std::uint64_t init(std::uint64_t seed) { return derive_seed(seed, 0); }
  static std::uint64_t data(std::uint64_t seed) { return derive_seed(seed, 1); }
};

/// One fold of training: batch size 1, Adam, per-epoch validation, and
/// retention of the head with the best validation AUC (earliest on ties).
///
/// Validation uses full bags and labels binarized at the configured threshold;
/// predictions are never thresholded. If `log` is set, one line per epoch is
/// written as `epoch=<k> train_mse=<v> val_auc=<v> val_r2=<v>`.
inline TrainResult train_fold(const BagRefs& train, const BagRefs& val, const TrainConfig& config,
                              std::ostream* log = nullptr) {
  config.validate();
  if (train.empty()) throw ValidationError("train set is empty");
  if (val.empty()) throw ValidationError("validation set is empty");
  const std::size_t h_dim = train.front().get().h_dim;
  for (const BagRefs* set : {&train, &val})
    for (const FeatureBag& bag : *set) {
      if (bag.h_dim != h_dim) throw ValidationError("bag '" + bag.slide_id + "' has a different H");
      if (bag.tiles.empty()) throw ValidationError("bag '" + bag.slide_id + "' has no tiles");
    }

  std::vector<TilClass> val_classes;
  std::vector<double> val_truth;
  for (const FeatureBag& bag : val) {
    val_classes.push_back(binarize(bag.label, config.binarize_threshold));
    val_truth.push_back(bag.label);
  }
  {
    bool low = false, high = false;
    for (TilClass c : val_classes) (c == TilClass::Low ? low : high) = true;
    if (!low || !high)
      throw ValidationError("validation set needs both classes at threshold " +
                            format_fixed(config.binarize_threshold, 4));
  }

  ModelHead head = init_head(config.head_kind, h_dim, TrainStreams::init(config.seed), config.hidden);
  AdamState state = AdamState::for_head(head, config.adam());
  Rng rng(TrainStreams::data(config.seed));
  HeadGradient grad = head.zeros_like();

  std::vector<TileRows> train_rows;
  train_rows.reserve(train.size());
  for (const FeatureBag& bag : train) train_rows.push_back(all_rows(bag));

  TrainResult result;
  result.best_val_auc = -1.0;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> val_pred(val.size());

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      const FeatureBag& bag = train[idx];
      double l;
      if (config.subsample && bag.tiles.size() > *config.subsample) {
        TileRows rows;
        rows.reserve(*config.subsample);
        for (std::size_t i : subsample_indices(bag.tiles.size(), *config.subsample, rng))
          rows.push_back(train_rows[idx][i]);
        l = detail::backward_rows(head, rows, bag.label, grad);
      } else {
        l = detail::backward_rows(head, train_rows[idx], bag.label, grad);
      }
      if (!std::isfinite(l)) throw Error("non-finite loss on slide '" + bag.slide_id + "'");
      adam_update(head, grad, state);
      loss_sum += l;
    }

    for (std::size_t i = 0; i < val.size(); ++i) val_pred[i] = forward(head, val[i]).bag_score;
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_mse = loss_sum / static_cast<double>(train.size());
    stats.val_auc = auc(val_pred, val_classes);
    stats.val_r2 = detail::defined_or_absent([&] { return r_squared(val_truth, val_pred); });
    result.history.push_back(stats);
    if (stats.val_auc > result.best_val_auc) {
      result.best_val_auc = stats.val_auc;
      result.best_epoch = epoch;
      result.best_head = head;
    }
    if (log) {
      *log << "epoch=" << epoch << " train_mse=" << format_fixed(stats.train_mse, 8)
           << " val_auc=" << format_fixed(stats.val_auc) << " val_r2=" << format_optional(stats.val_r2)
           << '\n';
    }
  }
  result.steps = state.step;
  return result;
}

inline TrainResult train_fold(std::span<const FeatureBag> train, std::span<const FeatureBag> val,
                              const TrainConfig& config, std::ostream* log = nullptr) {
  return train_fold(refs_of(train), refs_of(val), config, log);
}

}  // namespace weakstil
