#include "frcap/losses.hpp"

#include <algorithm>
#include <cmath>

#include "frcap/error.hpp"

namespace frcap {

Loss Loss::cross_entropy(std::size_t k) {
  if (k < 2) throw InvalidParameter("cross-entropy needs at least two classes");
  return {LossKind::CrossEntropy, k};
}

std::string Loss::name() const {
  switch (kind) {
    case LossKind::Absolute: return "absolute";
    case LossKind::Squared: return "squared";
    case LossKind::Hinge: return "hinge";
    case LossKind::CrossEntropy: return "cross_entropy";
  }
  return "squared";
}

Loss Loss::parse(const std::string& name, std::size_t classes) {
  if (name == "absolute") return absolute();
  if (name == "squared") return squared();
  if (name == "hinge") return hinge();
  if (name == "cross_entropy") return cross_entropy(classes);
  throw ValidationError("unknown loss '" + name + "'");
}

Vector softmax(std::span<const double> z) {
  if (z.empty()) throw ShapeError("softmax of an empty vector");
  const double zmax = *std::max_element(z.begin(), z.end());
  Vector g(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    g[i] = std::exp(z[i] - zmax);
    s += g[i];
  }
  for (double& x : g) x /= s;
  return g;
}

void check_loss_arguments(const Loss& loss, std::span<const double> f, double y) {
  if (f.size() != loss.output_dim()) {
    throw ShapeError(loss.name() + " loss expects " + std::to_string(loss.output_dim()) + " outputs, got " +
                     std::to_string(f.size()));
  }
  if (loss.kind == LossKind::CrossEntropy) {
    if (!(y >= 0.0) || y != std::floor(y) || y >= static_cast<double>(loss.classes)) {
      throw InvalidParameter("class label " + std::to_string(y) + " outside [0, " +
                             std::to_string(loss.classes) + ")");
    }
  } else if (!std::isfinite(y)) {
    throw InvalidParameter("label must be finite");
  }
}

double loss_value(const Loss& loss, std::span<const double> f, double y) {
  check_loss_arguments(loss, f, y);
  switch (loss.kind) {
    case LossKind::Absolute: return std::abs(f[0] - y);
    case LossKind::Squared: return 0.5 * (f[0] - y) * (f[0] - y);
    case LossKind::Hinge: return std::max(0.0, 1.0 - y * f[0]);
    case LossKind::CrossEntropy: {
      const double zmax = *std::max_element(f.begin(), f.end());
      double s = 0.0;
      for (double z : f) s += std::exp(z - zmax);
      return zmax + std::log(s) - f[static_cast<std::size_t>(y)];
    }
  }
  return 0.0;
}

Vector loss_output_grad(const Loss& loss, std::span<const double> f, double y) {
  check_loss_arguments(loss, f, y);
  switch (loss.kind) {
    case LossKind::Absolute: {
      const double d = f[0] - y;
      return {d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)};
    }
    case LossKind::Squared: return {f[0] - y};
    case LossKind::Hinge: return {y * f[0] < 1.0 ? -y : 0.0};
    case LossKind::CrossEntropy: {
      Vector g = softmax(f);
      g[static_cast<std::size_t>(y)] -= 1.0;
      return g;
    }
  }
  return {};
}

}  // namespace frcap
