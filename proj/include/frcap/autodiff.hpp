#pragma once

// Reverse-mode gradients specialised to the bias-free feedforward
// architecture, plus finite-difference checkers.

#include <cstddef>
#include <span>
#include <vector>

#include "frcap/dataset.hpp"
#include "frcap/linalg.hpp"
#include "frcap/losses.hpp"
#include "frcap/network.hpp"

namespace frcap {

struct GradientSet {
  // layers[t] has the shape of W^t.
  std::vector<Matrix> layers;

  Vector flat() const { return flatten_layers(layers); }
};

// Gradient of <output_grad, f(x)> with respect to every W^t, using the masks
// stored in the trace.
GradientSet backprop(const Network& net, const ForwardTrace& trace, std::span<const double> output_grad);
GradientSet backprop(const Network& net, std::span<const double> x, std::span<const double> output_grad);

// Gradient of <seed, O^{layer}(x)> with respect to W^0..W^{layer-1}
// (1 <= layer <= L+1). Entries for deeper layers are left at zero.
GradientSet backprop_from_layer(const Network& net, const ForwardTrace& trace, std::size_t layer,
                                std::span<const double> seed);

// Flattened gradient of loss(f(x), y).
Vector loss_gradient(const Network& net, std::span<const double> x, double y, const Loss& loss);

double mean_loss(const Network& net, const Dataset& data, const Loss& loss);
double mean_loss(const Network& net, const Dataset& data, const Loss& loss, std::span<const std::size_t> rows);
Vector mean_loss_gradient(const Network& net, const Dataset& data, const Loss& loss);
Vector mean_loss_gradient(const Network& net, const Dataset& data, const Loss& loss,
                          std::span<const std::size_t> rows);

// One flattened gradient per example; throws InvalidParameter on an empty batch.
std::vector<Vector> per_sample_grads(const Network& net, const Dataset& data, const Loss& loss);
std::vector<Vector> per_sample_grads(const Network& net, const Dataset& data, const Loss& loss,
                                     std::span<const std::size_t> rows);

struct ContractionEntry {
  std::size_t t = 0;  // weight layer W^t
  std::size_t s = 0;  // target layer O^{s+1}
  std::size_t l = 0;  // unit within O^{s+1}
  double contraction = 0.0;  // sum_ij dO^{s+1}_l / dW^t_ij * W^t_ij
  double output = 0.0;       // O^{s+1}_l(x)
};

struct Contraction {
  std::vector<ContractionEntry> per_pair;  // every 0 <= t <= s <= L and unit l
  Vector total;                            // sum over t of the s = L entries
  Vector output;                           // f(x)
};

// One reverse sweep per (s+1, l).
Contraction output_jacobian_contraction(const Network& net, std::span<const double> x);

// (f_{(1+h)theta} - 2 f_theta + f_{(1-h)theta}) / h^2, which tends to L(L+1) f.
Vector directional_second_derivative(const Network& net, std::span<const double> x, double h);

// Central differences of loss(f(x), y) in every parameter.
Vector numerical_gradient(const Network& net, std::span<const double> x, double y, const Loss& loss,
                          double h = 1e-5);

// Smallest |N^t_i| over hidden and output pre-activations; used to keep
// finite-difference checks away from ReLU kinks.
double min_abs_preactivation(const Network& net, std::span<const double> x);

}  // namespace frcap
