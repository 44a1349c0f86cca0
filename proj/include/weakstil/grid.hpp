#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "weakstil/metrics.hpp"
#include "weakstil/parallel.hpp"
#include "weakstil/random.hpp"
#include "weakstil/splits.hpp"
#include "weakstil/train.hpp"

namespace weakstil {

/// Learning-rate x L2 lattice, both axes listed in decreasing order.
struct GridSpec {
  std::vector<double> learning_rates;
  std::vector<double> regs;
  TrainConfig base;

  /// The 8 x 6 lattice used for every head architecture, 500-tile subsample.
  static GridSpec paper(HeadKind kind) {
    GridSpec g;
    g.learning_rates = {5e-2, 1e-2, 5e-3, 1e-3, 5e-4, 1e-4, 5e-5, 1e-5};
    g.regs = {5e-3, 1e-3, 5e-4, 1e-4, 5e-5, 1e-5};
    g.base.head_kind = kind;
    g.base.subsample = 500;
    return g;
  }

  void validate() const {
    if (learning_rates.empty() || regs.empty()) throw ValidationError("grid axes must be non-empty");
    for (std::size_t i = 1; i < learning_rates.size(); ++i)
      if (!(learning_rates[i] < learning_rates[i - 1]))
        throw ValidationError("learning rates must be strictly decreasing");
    for (std::size_t i = 1; i < regs.size(); ++i)
      if (!(regs[i] < regs[i - 1])) throw ValidationError("regularization values must be strictly decreasing");
    base.validate();
  }
};

struct GridCell {
  std::size_t lr_index = 0;
  std::size_t reg_index = 0;
  double lr = 0.0;
  double reg = 0.0;
  std::vector<std::optional<double>> fold_auc;  // best validation AUC per fold
  std::vector<std::string> errors;              // per failed fold
  std::optional<double> mean;                   // x100
  std::optional<double> std;                    // x100, sample std

  friend bool operator==(const GridCell&, const GridCell&) = default;
};

struct GridReport {
  HeadKind head_kind = HeadKind::Linear;
  std::vector<double> learning_rates;
  std::vector<double> regs;
  std::vector<GridCell> cells;  // lr-major

  const GridCell& cell(std::size_t lr_index, std::size_t reg_index) const {
    return cells[lr_index * regs.size() + reg_index];
  }

  friend bool operator==(const GridReport&, const GridReport&) = default;
};

/// Seed of one (cell, fold) work unit; independent of scheduling.
inline std::uint64_t grid_seed(std::uint64_t seed, std::size_t lr_index, std::size_t reg_index, std::size_t fold) {
  return derive_seed(seed, lr_index, reg_index, fold);
}

/// Exhaustive grid: every cell trains every fold and records its best
/// validation AUC. A failing fold is recorded in the cell and does not stop
/// the others.
inline GridReport run_grid(const GridSpec& spec, const SplitPlan& plan, std::span<const FeatureBag> bags,
                           std::size_t jobs = 1) {
  spec.validate();
  GridReport report;
  report.head_kind = spec.base.head_kind;
  report.learning_rates = spec.learning_rates;
  report.regs = spec.regs;
  const std::size_t n_lr = spec.learning_rates.size();
  const std::size_t n_reg = spec.regs.size();
  const std::size_t k = plan.k;

  std::vector<FoldSets> folds;
  for (std::size_t f = 0; f < k; ++f) folds.push_back(materialize(plan, f, bags));

  std::vector<std::optional<double>> auc_of(n_lr * n_reg * k);
  std::vector<std::string> error_of(auc_of.size());
  parallel_for(auc_of.size(), jobs, [&](std::size_t unit) {
    const std::size_t fold = unit % k;
    const std::size_t cell = unit / k;
    const std::size_t li = cell / n_reg;
    const std::size_t ri = cell % n_reg;
    TrainConfig cfg = spec.base;
    cfg.lr = spec.learning_rates[li];
    cfg.l2 = spec.regs[ri];
    cfg.seed = grid_seed(spec.base.seed, li, ri, fold);
    try {
      auc_of[unit] = train_fold(folds[fold].train, folds[fold].val, cfg).best_val_auc;
    } catch (const Error& e) {
      error_of[unit] = "fold " + std::to_string(fold) + ": " + e.what();
    }
  });

  for (std::size_t li = 0; li < n_lr; ++li) {
    for (std::size_t ri = 0; ri < n_reg; ++ri) {
      GridCell c;
      c.lr_index = li;
      c.reg_index = ri;
      c.lr = spec.learning_rates[li];
      c.reg = spec.regs[ri];
      std::vector<double> values;
      for (std::size_t f = 0; f < k; ++f) {
        const std::size_t unit = (li * n_reg + ri) * k + f;
        c.fold_auc.push_back(auc_of[unit]);
        if (auc_of[unit]) values.push_back(100.0 * *auc_of[unit]);
        if (!error_of[unit].empty()) c.errors.push_back(error_of[unit]);
      }
      if (!values.empty()) {
        const FoldSummary s = summarize(values);
        c.mean = s.mean;
        if (values.size() > 1) c.std = s.spread;
      }
      report.cells.push_back(std::move(c));
    }
  }
  return report;
}

/// Highest mean AUC; ties go to the lower learning rate, then the lower L2.
inline std::pair<double, double> select_best(const GridReport& report) {
  const GridCell* best = nullptr;
  for (const GridCell& c : report.cells) {
    if (!c.mean) continue;
    if (!best || *c.mean > *best->mean ||
        (*c.mean == *best->mean && (c.lr < best->lr || (c.lr == best->lr && c.reg < best->reg))))
      best = &c;
  }
  if (!best) throw ValidationError("grid report has no successful cell");
  return {best->lr, best->reg};
}

inline std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

/// `lr,reg,fold,best_val_auc`, one row per (cell, fold); failed folds are NA.
inline void write_grid_csv(std::ostream& os, const GridReport& report) {
  os << "lr,reg,fold,best_val_auc\n";
  for (const GridCell& c : report.cells)
    for (std::size_t f = 0; f < c.fold_auc.size(); ++f)
      os << format_g(c.lr) << ',' << format_g(c.reg) << ',' << f << ',' << format_optional(c.fold_auc[f]) << '\n';
}

/// Aligned mean±std matrix, learning rates down, regularization across.
inline void write_grid_table(std::ostream& os, const GridReport& report) {
  constexpr int kWidth = 14;
  auto pad = [](std::string s, int w) {
    // "±" is two bytes but one column
    int visible = 0;
    for (unsigned char ch : s) visible += (ch & 0xC0) != 0x80 ? 1 : 0;
    if (visible < w) s.insert(0, static_cast<std::size_t>(w - visible), ' ');
    return s;
  };
  os << "head: " << to_string(report.head_kind) << "\n";
  os << pad("lr \\ reg", kWidth);
  for (double r : report.regs) os << pad(format_g(r), kWidth);
  os << '\n';
  for (std::size_t li = 0; li < report.learning_rates.size(); ++li) {
    os << pad(format_g(report.learning_rates[li]), kWidth);
    for (std::size_t ri = 0; ri < report.regs.size(); ++ri) {
      const GridCell& c = report.cell(li, ri);
      std::string entry = "NA";
      if (c.mean) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%.1f±%.1f", *c.mean, c.std.value_or(0.0));
        entry = buf;
      }
      os << pad(entry, kWidth);
    }
    os << '\n';
  }
  try {
    const auto [lr, reg] = select_best(report);
    os << "best: lr=" << format_g(lr) << " reg=" << format_g(reg) << '\n';
  } catch (const ValidationError&) {
    os << "best: none\n";
  }
}

}  // namespace weakstil
