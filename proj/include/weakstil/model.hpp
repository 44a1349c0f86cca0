#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "weakstil/core.hpp"
#include "weakstil/random.hpp"

namespace weakstil {

enum class HeadKind : std::uint8_t { Linear = 0, TwoLinear = 1, TwoLinearTanh = 2 };

inline constexpr std::size_t kDefaultHidden = 128;

inline std::string_view to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::Linear: return "linear";
    case HeadKind::TwoLinear: return "two-linear";
    case HeadKind::TwoLinearTanh: return "two-linear-tanh";
  }
  return "unknown";
}

inline std::optional<HeadKind> parse_head_kind(std::string_view name) {
  if (name == "linear") return HeadKind::Linear;
  if (name == "two-linear") return HeadKind::TwoLinear;
  if (name == "two-linear-tanh") return HeadKind::TwoLinearTanh;
  return std::nullopt;
}

/// Trainable parameters of one tile-scoring head, stored flat.
///
/// Layout (also the checkpoint order):
///   Linear:              w[H], b
///   TwoLinear(+Tanh):    W1[H x hidden] row-major, b1[hidden], w2[hidden], b2
///
/// A gradient has exactly the same shape, so it reuses this type.
struct ModelHead {
  HeadKind kind = HeadKind::Linear;
  std::size_t h_dim = 0;
  std::size_t hidden = 0;
  std::vector<double> params;

  static std::size_t param_count(HeadKind kind, std::size_t h_dim, std::size_t hidden) {
    if (kind == HeadKind::Linear) return h_dim + 1;
    return h_dim * hidden + hidden + hidden + 1;
  }

  static ModelHead zeros(HeadKind kind, std::size_t h_dim, std::size_t hidden = kDefaultHidden) {
    if (kind == HeadKind::Linear) hidden = 0;
    return ModelHead{kind, h_dim, hidden, std::vector<double>(param_count(kind, h_dim, hidden), 0.0)};
  }

  ModelHead zeros_like() const { return ModelHead{kind, h_dim, hidden, std::vector<double>(params.size(), 0.0)}; }

  bool is_mlp() const { return kind != HeadKind::Linear; }

  bool same_shape(const ModelHead& other) const {
    return kind == other.kind && h_dim == other.h_dim && hidden == other.hidden &&
           params.size() == other.params.size();
  }

  bool well_formed() const {
    if (h_dim == 0) return false;
    if (kind == HeadKind::Linear ? hidden != 0 : hidden == 0) return false;
    return params.size() == param_count(kind, h_dim, hidden);
  }

  // Linear
  std::span<double> w() { return {params.data(), h_dim}; }
  std::span<const double> w() const { return {params.data(), h_dim}; }
  double& b() { return params[h_dim]; }
  double b() const { return params[h_dim]; }

  // Two-layer
  std::span<double> w1() { return {params.data(), h_dim * hidden}; }
  std::span<const double> w1() const { return {params.data(), h_dim * hidden}; }
  std::span<double> b1() { return {params.data() + h_dim * hidden, hidden}; }
  std::span<const double> b1() const { return {params.data() + h_dim * hidden, hidden}; }
  std::span<double> w2() { return {params.data() + h_dim * hidden + hidden, hidden}; }
  std::span<const double> w2() const { return {params.data() + h_dim * hidden + hidden, hidden}; }
  double& b2() { return params.back(); }
  double b2() const { return params.back(); }

  friend bool operator==(const ModelHead&, const ModelHead&) = default;
};

using HeadGradient = ModelHead;

struct BagPrediction {
  std::vector<double> tile_scores;
  double bag_score = 0.0;
};

/// Logistic function; only ever exponentiates a non-positive argument.
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Zero init for Linear; fan-in uniform weights and zero biases for the MLP heads.
inline ModelHead init_head(HeadKind kind, std::size_t h_dim, std::uint64_t seed,
                           std::size_t hidden = kDefaultHidden) {
  if (h_dim == 0) throw ValidationError("h_dim must be positive");
  if (kind != HeadKind::Linear && hidden == 0) throw ValidationError("hidden width must be positive");
  ModelHead head = ModelHead::zeros(kind, h_dim, hidden);
  if (kind == HeadKind::Linear) return head;

  Rng rng(seed);
  auto draw = [&rng](double bound) {
    // open interval: reject the (measure-zero) lower endpoint
    double x;
    do {
      x = rng.uniform(-bound, bound);
    } while (x <= -bound);
    return x;
  };
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(h_dim));
  for (double& x : head.w1()) x = draw(bound1);
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (double& x : head.w2()) x = draw(bound2);
  return head;
}

/// Squared error of one bag prediction (batch size 1).
inline double loss(const BagPrediction& pred, double label) {
  const double r = pred.bag_score - label;
  return r * r;
}

/// Borrowed rows of a bag; lets training run on a subsample without copying features.
using TileRows = std::vector<std::span<const double>>;

inline TileRows all_rows(const FeatureBag& bag) {
  TileRows rows;
  rows.reserve(bag.tiles.size());
  for (const auto& t : bag.tiles) rows.emplace_back(t.features);
  return rows;
}

namespace detail {

inline void check_dims(const ModelHead& head, std::size_t h_dim) {
  if (!head.well_formed()) throw ValidationError("malformed model head");
  if (head.h_dim != h_dim)
    throw ValidationError("dimension mismatch: head expects H=" + std::to_string(head.h_dim) +
                          ", bag has H=" + std::to_string(h_dim));
}

// Hidden pre-activation a = W1^T h + b1, written into `a`.
inline void hidden_preact(const ModelHead& head, std::span<const double> h, std::span<double> a) {
  const std::size_t hid = head.hidden;
  const auto w1 = head.w1();
  const auto b1 = head.b1();
  for (std::size_t j = 0; j < hid; ++j) a[j] = b1[j];
  for (std::size_t i = 0; i < head.h_dim; ++i) {
    const double hi = h[i];
    const double* row = w1.data() + i * hid;
    for (std::size_t j = 0; j < hid; ++j) a[j] += hi * row[j];
  }
}

// Tile logit; `act` receives the hidden activations for MLP heads.
inline double tile_logit(const ModelHead& head, std::span<const double> h, std::span<double> act) {
  if (head.kind == HeadKind::Linear) {
    const auto w = head.w();
    double z = head.b();
    for (std::size_t i = 0; i < head.h_dim; ++i) z += w[i] * h[i];
    return z;
  }
  hidden_preact(head, h, act);
  if (head.kind == HeadKind::TwoLinearTanh)
    for (double& x : act) x = std::tanh(x);
  const auto w2 = head.w2();
  double z = head.b2();
  for (std::size_t j = 0; j < head.hidden; ++j) z += w2[j] * act[j];
  return z;
}

inline BagPrediction forward_rows(const ModelHead& head, const TileRows& rows) {
  BagPrediction out;
  out.tile_scores.resize(rows.size());
  std::vector<double> act(head.hidden);
  for (std::size_t n = 0; n < rows.size(); ++n)
    out.tile_scores[n] = sigmoid(tile_logit(head, rows[n], act));
  out.bag_score = rows.empty() ? 0.0 : compensated_sum(out.tile_scores) / static_cast<double>(rows.size());
  return out;
}

// Accumulates d(loss)/d(theta) into `grad` (overwritten) and returns the loss.
inline double backward_rows(const ModelHead& head, const TileRows& rows, double label, ModelHead& grad) {
  const std::size_t n_tiles = rows.size();
  const std::size_t hid = head.hidden;
  if (!grad.same_shape(head)) grad = head.zeros_like();
  std::fill(grad.params.begin(), grad.params.end(), 0.0);

  std::vector<double> acts(n_tiles * hid);
  std::vector<double> scores(n_tiles);
  for (std::size_t n = 0; n < n_tiles; ++n)
    scores[n] = sigmoid(tile_logit(head, rows[n], std::span<double>(acts.data() + n * hid, hid)));
  const double bag_score = compensated_sum(scores) / static_cast<double>(n_tiles);
  const double residual = bag_score - label;
  const double scale = 2.0 * residual / static_cast<double>(n_tiles);

  if (head.kind == HeadKind::Linear) {
    auto gw = grad.w();
    double gb = 0.0;
    for (std::size_t n = 0; n < n_tiles; ++n) {
      const double c = scale * scores[n] * (1.0 - scores[n]);
      const auto h = rows[n];
      for (std::size_t i = 0; i < head.h_dim; ++i) gw[i] += c * h[i];
      gb += c;
    }
    grad.b() = gb;
    return residual * residual;
  }

  auto gw1 = grad.w1();
  auto gb1 = grad.b1();
  auto gw2 = grad.w2();
  const auto w2 = head.w2();
  std::vector<double> delta(hid);
  double gb2 = 0.0;
  for (std::size_t n = 0; n < n_tiles; ++n) {
    const double c = scale * scores[n] * (1.0 - scores[n]);
    const double* u = acts.data() + n * hid;
    for (std::size_t j = 0; j < hid; ++j) {
      gw2[j] += c * u[j];
      delta[j] = c * w2[j];
    }
    if (head.kind == HeadKind::TwoLinearTanh)
      for (std::size_t j = 0; j < hid; ++j) delta[j] *= 1.0 - u[j] * u[j];
    gb2 += c;
    for (std::size_t j = 0; j < hid; ++j) gb1[j] += delta[j];
    const auto h = rows[n];
    for (std::size_t i = 0; i < head.h_dim; ++i) {
      const double hi = h[i];
      double* row = gw1.data() + i * hid;
      for (std::size_t j = 0; j < hid; ++j) row[j] += hi * delta[j];
    }
  }
  grad.b2() = gb2;
  return residual * residual;
}

}  // namespace detail

inline BagPrediction forward(const ModelHead& head, const FeatureBag& bag) {
  detail::check_dims(head, bag.h_dim);
  if (bag.tiles.empty()) throw ValidationError("bag '" + bag.slide_id + "' has no tiles");
  return detail::forward_rows(head, all_rows(bag));
}

/// Analytic gradient of the squared-error loss for one bag. L2 is not included.
inline HeadGradient backward(const ModelHead& head, const FeatureBag& bag, double label) {
  detail::check_dims(head, bag.h_dim);
  if (bag.tiles.empty()) throw ValidationError("bag '" + bag.slide_id + "' has no tiles");
  HeadGradient grad = head.zeros_like();
  detail::backward_rows(head, all_rows(bag), label, grad);
  return grad;
}

}  // namespace weakstil
