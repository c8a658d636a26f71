#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "frcap/linalg.hpp"

namespace frcap {

enum class LossKind { Absolute, Squared, Hinge, CrossEntropy };

// Absolute, squared and hinge losses act on a scalar output (K = 1);
// cross-entropy takes K >= 2 logits and an integer class label in [0, K).
struct Loss {
  LossKind kind = LossKind::Squared;
  std::size_t classes = 1;

  static Loss absolute() { return {LossKind::Absolute, 1}; }
  static Loss squared() { return {LossKind::Squared, 1}; }
  static Loss hinge() { return {LossKind::Hinge, 1}; }
  static Loss cross_entropy(std::size_t k);

  std::size_t output_dim() const { return kind == LossKind::CrossEntropy ? classes : 1; }
  std::string name() const;
  static Loss parse(const std::string& name, std::size_t classes = 1);

  friend bool operator==(const Loss&, const Loss&) = default;
};

// Max-shifted softmax.
Vector softmax(std::span<const double> z);

// Absolute |f - y|, squared (f - y)^2 / 2, hinge max(0, 1 - y f),
// cross-entropy -log softmax(f)_y.
double loss_value(const Loss& loss, std::span<const double> f, double y);

// d loss / d f. Kinks: hinge at y f = 1 and absolute at f = y give 0.
Vector loss_output_grad(const Loss& loss, std::span<const double> f, double y);

// Validates output length and label range; throws ShapeError / InvalidParameter.
void check_loss_arguments(const Loss& loss, std::span<const double> f, double y);

}  // namespace frcap
