#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "weakstil/core.hpp"
#include "weakstil/model.hpp"
#include "weakstil/random.hpp"

namespace weakstil {

struct SynthConfig {
  std::size_t num_bags = 200;
  std::size_t tiles_min = 100;
  std::size_t tiles_max = 400;
  std::size_t h_dim = 32;
  double label_noise_sd = 0.02;
  std::vector<std::pair<std::string, double>> strata = {{"all", 1.0}};
  HeadKind planted_kind = HeadKind::Linear;
  std::size_t planted_hidden = kDefaultHidden;
  double nuisance_sd = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_bags < 1) throw ValidationError("num_bags must be ≥ 1");
    if (tiles_min < 1 || tiles_max < tiles_min) throw ValidationError("tile range must satisfy 1 <= min <= max");
    if (h_dim < 1) throw ValidationError("h_dim must be ≥ 1");
    if (!(label_noise_sd >= 0.0)) throw ValidationError("label noise sd must be >= 0");
    if (!(nuisance_sd >= 0.0)) throw ValidationError("nuisance sd must be >= 0");
    if (planted_kind == HeadKind::TwoLinear) throw ValidationError("planted head must be linear or two-linear-tanh");
    if (strata.empty()) throw ValidationError("at least one stratum required");
    double total = 0.0;
    for (const auto& [name, p] : strata) {
      if (name.empty() || !(p >= 0.0)) throw ValidationError("bad stratum '" + name + "'");
      total += p;
    }
    if (std::fabs(total - 1.0) > 1e-9) throw ValidationError("stratum proportions must sum to 1");
  }
};

struct SynthDataset {
  std::vector<FeatureBag> bags;
  ModelHead planted_head;
};

namespace detail {

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Values are stored as the nearest float so a dataset survives the f32 bag format unchanged.
inline double quantize_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

// Largest-remainder apportionment of n items to the given proportions.
inline std::vector<std::size_t> apportion(std::size_t n, const std::vector<std::pair<std::string, double>>& strata) {
  std::vector<std::size_t> counts(strata.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    const double exact = strata[s].second * static_cast<double>(n);
    counts[s] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[s];
    remainders.emplace_back(-(exact - std::floor(exact)), s);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[remainders[i % remainders.size()].second];
  return counts;
}

inline std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04zu", prefix, i);
  return buf;
}

}  // namespace detail

/// Synthetic bags with a planted tile-scoring head.
///
/// Tile features are i.i.d. standard normal around a per-bag mean, so bags
/// differ in their average tile score while tiles within a bag vary. For a
/// Linear planted head the per-bag mean has a component along w*, drawn so
/// the bag's mean tile logit is uniform on [logit 0.05, logit 0.6], plus a
/// nuisance component orthogonal to w* (sd `nuisance_sd` per axis) that a
/// learner has to ignore. For the tanh head the per-bag mean is a standard
/// normal vector and b2 is shifted so the median bag sits near 0.3. Labels
/// are the planted bag score plus Gaussian noise, clipped to [0, 1].
inline SynthDataset generate(const SynthConfig& config) {
  config.validate();
  const std::size_t h = config.h_dim;
  Rng rng(config.seed);
  SynthDataset out;

  const double lo_logit = detail::logit(0.05);
  const double hi_logit = detail::logit(0.6);
  std::vector<double> direction(h);
  double w_norm = 0.0;

  ModelHead& head = out.planted_head;
  if (config.planted_kind == HeadKind::Linear) {
    head = ModelHead::zeros(HeadKind::Linear, h);
    for (double& x : head.w()) {
      x = rng.normal() / std::sqrt(static_cast<double>(h));
      w_norm += x * x;
    }
    w_norm = std::sqrt(w_norm);
    for (std::size_t i = 0; i < h; ++i) direction[i] = head.w()[i] / w_norm;
    head.b() = 0.5 * (lo_logit + hi_logit);
  } else {
    head = ModelHead::zeros(HeadKind::TwoLinearTanh, h, config.planted_hidden);
    for (double& x : head.w1()) x = rng.normal() / std::sqrt(static_cast<double>(h));
    for (double& x : head.w2()) x = 3.0 * rng.normal() / std::sqrt(static_cast<double>(config.planted_hidden));
  }

  std::vector<std::string> stratum_of;
  const auto counts = detail::apportion(config.num_bags, config.strata);
  for (std::size_t s = 0; s < counts.size(); ++s)
    for (std::size_t c = 0; c < counts[s]; ++c) stratum_of.push_back(config.strata[s].first);
  rng.shuffle(stratum_of);

  std::vector<double> offset(h);
  for (std::size_t b = 0; b < config.num_bags; ++b) {
    FeatureBag bag;
    bag.patient_id = detail::numbered("P", b);
    bag.slide_id = detail::numbered("S", b);
    bag.stratum = stratum_of[b];
    bag.h_dim = h;
    const std::size_t n = config.tiles_min + rng.below(config.tiles_max - config.tiles_min + 1);
    if (config.planted_kind == HeadKind::Linear) {
      const double target = rng.uniform(lo_logit, hi_logit);
      const double shift = (target - head.b()) / w_norm;
      // nuisance shift, projected orthogonal to w* so it leaves the score unchanged
      double along = 0.0;
      for (std::size_t i = 0; i < h; ++i) {
        offset[i] = config.nuisance_sd * rng.normal();
        along += offset[i] * direction[i];
      }
      for (std::size_t i = 0; i < h; ++i) offset[i] += (shift - along) * direction[i];
    } else {
      for (double& x : offset) x = rng.normal();
    }
    const auto width = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    bag.tiles.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
      TileFeature& tile = bag.tiles[t];
      tile.col = static_cast<std::uint32_t>(t % width);
      tile.row = static_cast<std::uint32_t>(t / width);
      tile.features.resize(h);
      for (std::size_t i = 0; i < h; ++i) tile.features[i] = detail::quantize_f32(offset[i] + rng.normal());
    }
    out.bags.push_back(std::move(bag));
  }

  if (config.planted_kind == HeadKind::TwoLinearTanh) {
    std::vector<double> mean_logits;
    std::vector<double> act(head.hidden);
    for (const auto& bag : out.bags) {
      double s = 0.0;
      for (const auto& tile : bag.tiles) s += detail::tile_logit(head, tile.features, act);
      mean_logits.push_back(s / static_cast<double>(bag.tiles.size()));
    }
    std::nth_element(mean_logits.begin(), mean_logits.begin() + mean_logits.size() / 2, mean_logits.end());
    head.b2() = detail::logit(0.3) - mean_logits[mean_logits.size() / 2];
  }

  for (auto& bag : out.bags) {
    const double score = forward(head, bag).bag_score;
    const double noise = rng.normal() * config.label_noise_sd;
    bag.label = std::clamp(score + noise, 0.0, 1.0);
  }
  return out;
}

}  // namespace weakstil
