#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "weakstil/core.hpp"
#include "weakstil/model.hpp"

namespace weakstil {

/// How the L2 strength enters the update.
enum class L2Mode {
  Coupled,    ///< l2 * theta is added to the gradient before the moment estimates
  Decoupled,  ///< AdamW: theta -= lr * l2 * theta after the adaptive step
};

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double l2 = 0.0;
  L2Mode l2_mode = L2Mode::Coupled;

  friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  AdamHyper hyper;

  static AdamState for_head(const ModelHead& head, const AdamHyper& hyper) {
    return AdamState{0, std::vector<double>(head.params.size(), 0.0),
                     std::vector<double>(head.params.size(), 0.0), hyper};
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// In-place Adam update. Leaves head and state untouched if any gradient
/// component is non-finite.
inline void adam_update(ModelHead& head, const HeadGradient& grads, AdamState& state) {
  const std::size_t p = head.params.size();
  if (!grads.same_shape(head)) throw ValidationError("gradient shape does not match head");
  if (state.m.size() != p || state.v.size() != p)
    throw ValidationError("optimizer state shape does not match head");
  for (std::size_t i = 0; i < p; ++i) {
    if (!std::isfinite(grads.params[i]))
      throw Error("non-finite gradient at parameter " + std::to_string(i) + "; step rejected");
  }

  const AdamHyper& hp = state.hyper;
  const std::uint64_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
  const bool coupled = hp.l2_mode == L2Mode::Coupled;
  for (std::size_t i = 0; i < p; ++i) {
    double& theta = head.params[i];
    const double g = coupled ? grads.params[i] + hp.l2 * theta : grads.params[i];
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    double update = m_hat / (std::sqrt(v_hat) + hp.eps);
    if (!coupled) update += hp.l2 * theta;
    theta -= hp.lr * update;
  }
  state.step = t;
}

/// Value-semantic Adam step: returns the updated head and state.
inline std::pair<ModelHead, AdamState> adam_step(const ModelHead& head, const HeadGradient& grads,
                                                 const AdamState& state) {
  std::pair<ModelHead, AdamState> out{head, state};
  adam_update(out.first, grads, out.second);
  return out;
}

}  // namespace weakstil
