#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "weakstil/core.hpp"
#include "weakstil/model.hpp"

namespace weakstil {

enum class TilClass : std::uint8_t { Low = 0, High = 1 };

/// Low iff score <= threshold.
inline TilClass binarize(double score, double threshold) {
  return score <= threshold ? TilClass::Low : TilClass::High;
}

inline std::vector<TilClass> binarize_all(std::span<const double> scores, double threshold) {
  std::vector<TilClass> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(binarize(s, threshold));
  return out;
}

/// Parallel (truth, prediction) series.
struct ScorePairs {
  std::vector<double> truth;
  std::vector<double> predicted;

  std::size_t size() const { return truth.size(); }
};

namespace detail {

inline void check_series(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("series lengths differ");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
      throw ValidationError("non-finite value at index " + std::to_string(i));
  }
}

inline double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

}  // namespace detail

/// Rank-based (Mann-Whitney) AUC with ties scored 1/2.
///
/// Uses doubled average ranks so the U statistic stays an exact integer.
inline double auc(std::span<const double> predicted, std::span<const TilClass> labels) {
  if (predicted.size() != labels.size()) throw ValidationError("auc: series lengths differ");
  const std::size_t n = predicted.size();
  std::uint64_t n_pos = 0;
  for (TilClass c : labels) n_pos += c == TilClass::High ? 1 : 0;
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetric("auc undefined: labels contain a single class");
  for (double p : predicted)
    if (std::isnan(p)) throw ValidationError("auc: NaN prediction");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return predicted[a] < predicted[b]; });

  // Doubled average rank of a tie group spanning 1-based ranks [lo+1, hi] is lo+1+hi.
  std::uint64_t pos_rank2 = 0;
  std::size_t lo = 0;
  while (lo < n) {
    std::size_t hi = lo + 1;
    while (hi < n && predicted[order[hi]] == predicted[order[lo]]) ++hi;
    const std::uint64_t rank2 = lo + 1 + hi;
    for (std::size_t k = lo; k < hi; ++k)
      if (labels[order[k]] == TilClass::High) pos_rank2 += rank2;
    lo = hi;
  }
  const std::uint64_t u2 = pos_rank2 - n_pos * (n_pos + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Sample Pearson correlation.
inline double pearson_r(std::span<const double> x, std::span<const double> y) {
  detail::check_series(x, y);
  if (x.size() < 2) throw UndefinedMetric("pearson r undefined: fewer than 2 samples");
  const double mx = detail::mean_of(x);
  const double my = detail::mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedMetric("pearson r undefined: constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double pearson_r(const ScorePairs& pairs) { return pearson_r(pairs.truth, pairs.predicted); }

/// Coefficient of determination of the predictions as given (no refit).
inline double r_squared(std::span<const double> truth, std::span<const double> predicted) {
  detail::check_series(truth, predicted);
  if (truth.size() < 2) throw UndefinedMetric("R^2 undefined: fewer than 2 samples");
  const double mt = detail::mean_of(truth);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double r = truth[i] - predicted[i];
    const double d = truth[i] - mt;
    ss_res += r * r;
    ss_tot += d * d;
  }
  if (ss_tot == 0.0) throw UndefinedMetric("R^2 undefined: constant true labels");
  return 1.0 - ss_res / ss_tot;
}

inline double r_squared(const ScorePairs& pairs) { return r_squared(pairs.truth, pairs.predicted); }

inline double mse(std::span<const double> truth, std::span<const double> predicted) {
  detail::check_series(truth, predicted);
  if (truth.empty()) throw UndefinedMetric("mse undefined: no samples");
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double r = truth[i] - predicted[i];
    s += r * r;
  }
  return s / static_cast<double>(truth.size());
}

struct PredictionRecord {
  std::string slide_id;
  double true_label = 0.0;
  double predicted = 0.0;
};

/// Predictions of one model on one set, plus the statistics that were defined.
struct EvalReport {
  std::vector<PredictionRecord> records;
  std::optional<double> auc;
  std::optional<double> pearson_r;
  std::optional<double> r2;
  std::optional<double> mse;

  ScorePairs pairs() const {
    ScorePairs p;
    for (const auto& r : records) {
      p.truth.push_back(r.true_label);
      p.predicted.push_back(r.predicted);
    }
    return p;
  }
};

namespace detail {

template <typename F>
std::optional<double> defined_or_absent(F&& f) {
  try {
    return f();
  } catch (const UndefinedMetric&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// Scores an already-predicted set. Undefined statistics are left absent.
inline EvalReport evaluate_records(std::vector<PredictionRecord> records, double threshold) {
  EvalReport report;
  report.records = std::move(records);
  const ScorePairs p = report.pairs();
  const auto classes = binarize_all(p.truth, threshold);
  report.auc = detail::defined_or_absent([&] { return auc(p.predicted, classes); });
  report.pearson_r = detail::defined_or_absent([&] { return pearson_r(p); });
  report.r2 = detail::defined_or_absent([&] { return r_squared(p); });
  report.mse = detail::defined_or_absent([&] { return mse(p.truth, p.predicted); });
  return report;
}

inline EvalReport evaluate(const ModelHead& head, const BagRefs& bags, double threshold) {
  if (bags.empty()) throw ValidationError("evaluate: no bags");
  std::vector<PredictionRecord> records;
  records.reserve(bags.size());
  for (const FeatureBag& bag : bags)
    records.push_back({bag.slide_id, bag.label, forward(head, bag).bag_score});
  return evaluate_records(std::move(records), threshold);
}

inline EvalReport evaluate(const ModelHead& head, std::span<const FeatureBag> bags, double threshold) {
  return evaluate(head, refs_of(bags), threshold);
}

enum class Spread { StdDev, StdError };

/// Mean and spread of a per-fold statistic (sample std, n-1 denominator).
struct FoldSummary {
  double mean = 0.0;
  double spread = 0.0;
  std::size_t count = 0;
};

inline FoldSummary summarize(std::span<const double> values, Spread kind = Spread::StdDev) {
  FoldSummary s;
  s.count = values.size();
  if (values.empty()) return s;
  s.mean = detail::mean_of(values);
  if (values.size() < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  s.spread = kind == Spread::StdDev ? sd : sd / std::sqrt(static_cast<double>(values.size()));
  return s;
}

inline std::string format_fixed(double v, int decimals = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string format_optional(const std::optional<double>& v, int decimals = 6) {
  return v ? format_fixed(*v, decimals) : std::string("NA");
}

/// `slide_id,true_stil,pred_stil`, six decimals.
inline void write_predictions_csv(std::ostream& os, std::span<const PredictionRecord> records) {
  os << "slide_id,true_stil,pred_stil\n";
  for (const auto& r : records)
    os << r.slide_id << ',' << format_fixed(r.true_label) << ',' << format_fixed(r.predicted) << '\n';
}

/// `metric,value` rows; undefined statistics are written as NA.
inline void write_summary_csv(std::ostream& os, const EvalReport& report) {
  os << "metric,value\n";
  os << "n," << report.records.size() << '\n';
  os << "auc," << format_optional(report.auc) << '\n';
  os << "pearson_r," << format_optional(report.pearson_r) << '\n';
  os << "r2," << format_optional(report.r2) << '\n';
  os << "mse," << format_optional(report.mse) << '\n';
}

}  // namespace weakstil
