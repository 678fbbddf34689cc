#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "msdm/error.hpp"
#include "msdm/layers.hpp"
#include "msdm/tensor.hpp"

namespace msdm {

inline constexpr double kProbabilityClamp = 1e-7;

/// Positively reweighted binary cross-entropy, averaged over all N·S terms:
///   -[w·y·log p + (1 - y)·log(1 - p)],  p clamped to [1e-7, 1 - 1e-7].
/// Every label that is not a recorded presence counts as a negative.
inline double weighted_loss(std::span<const float> pred, std::span<const std::uint8_t> labels, double pos_weight) {
  if (pred.size() != labels.size()) throw ShapeMismatch("prediction and label counts differ");
  if (pred.empty()) throw ShapeMismatch("empty prediction set");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double raw = pred[i];
    if (!(raw >= 0.0 && raw <= 1.0)) throw NumericalDomain("prediction outside [0, 1]: " + std::to_string(raw));
    const double p = std::clamp(raw, kProbabilityClamp, 1.0 - kProbabilityClamp);
    total -= labels[i] ? pos_weight * std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(pred.size());
}

/// d(weighted_loss(sigmoid(z)))/dz for the unclamped loss, which is the
/// exact derivative wherever clamping is inactive and keeps saturated
/// logits trainable.
inline Tensor weighted_loss_grad(const Tensor& logits, std::span<const std::uint8_t> labels, double pos_weight) {
  if (logits.size() != labels.size()) throw ShapeMismatch("logit and label counts differ");
  Tensor g(logits.shape);
  const double scale = 1.0 / static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = sigmoid(logits.values[i]);
    const double d = labels[i] ? -pos_weight * (1.0 - p) : p;
    g.values[i] = static_cast<float>(d * scale);
  }
  return g;
}

}  // namespace msdm
