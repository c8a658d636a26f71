#pragma once

// Bias-free feedforward networks f(x) = s_{L+1}(... s_1(x^T W^0) W^1 ...) W^L)
// with activations satisfying s(z) = s'(z) z.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "frcap/linalg.hpp"

namespace frcap {

enum class ActivationKind { ReLU, LeakyReLU, Linear };

class Activation {
 public:
  static Activation relu() { return Activation(ActivationKind::ReLU, 0.0); }
  // alpha in (0, 1]; alpha = 1 is the identity.
  static Activation leaky_relu(double alpha);
  static Activation linear() { return Activation(ActivationKind::Linear, 1.0); }

  ActivationKind kind() const { return kind_; }
  double alpha() const { return alpha_; }

  double value(double z) const {
    switch (kind_) {
      case ActivationKind::ReLU: return z > 0.0 ? z : 0.0;
      case ActivationKind::LeakyReLU: return z > 0.0 ? z : alpha_ * z;
      case ActivationKind::Linear: return z;
    }
    return z;
  }
  // s'(0) is 0 for ReLU, alpha for leaky ReLU and 1 for linear.
  double derivative(double z) const {
    switch (kind_) {
      case ActivationKind::ReLU: return z > 0.0 ? 1.0 : 0.0;
      case ActivationKind::LeakyReLU: return z > 0.0 ? 1.0 : alpha_;
      case ActivationKind::Linear: return 1.0;
    }
    return 1.0;
  }

  std::string name() const;
  // Accepts "relu", "leaky_relu" (with alpha) and "linear".
  static Activation parse(const std::string& name, double alpha = 0.01);

  friend bool operator==(const Activation&, const Activation&) = default;

 private:
  Activation(ActivationKind kind, double alpha) : kind_(kind), alpha_(alpha) {}
  ActivationKind kind_;
  double alpha_;
};

class Network {
 public:
  Network() = default;
  // weights[t] is W^t with shape k_t x k_{t+1}; hidden layers use `hidden`
  // and the output layer uses `output`.
  Network(std::vector<Matrix> weights, Activation hidden, Activation output = Activation::linear());
  // One activation per layer t = 1..L+1.
  Network(std::vector<Matrix> weights, std::vector<Activation> layer_activations);

  // L: number of hidden layers.
  std::size_t depth() const { return weights_.size() - 1; }
  std::size_t num_layers() const { return weights_.size(); }
  std::size_t input_dim() const { return weights_.front().rows(); }
  std::size_t output_dim() const { return weights_.back().cols(); }
  // (p, k_1, ..., k_L, K)
  std::vector<std::size_t> dims() const;
  std::size_t parameter_count() const;

  const std::vector<Matrix>& weights() const { return weights_; }
  const Matrix& weight(std::size_t t) const { return weights_.at(t); }
  Matrix& weight(std::size_t t) { return weights_.at(t); }
  // Activation s_t for t = 1..L+1.
  const Activation& activation(std::size_t t) const { return activations_.at(t - 1); }
  const std::vector<Activation>& activations() const { return activations_; }
  bool uniform_hidden() const;

  // 1 marks a trainable entry, 0 a hard-coded zero. Empty when all are trainable.
  const std::vector<Matrix>& trainable_mask() const { return trainable_; }
  void set_trainable_mask(std::vector<Matrix> mask);
  bool has_frozen_entries() const { return !trainable_.empty(); }

  Network scaled(double c) const;

  friend bool operator==(const Network&, const Network&) = default;

 private:
  void validate() const;

  std::vector<Matrix> weights_;
  std::vector<Activation> activations_;
  std::vector<Matrix> trainable_;
};

struct LayerTrace {
  Vector pre;          // N^t (equals the input for t = 0)
  Vector post;         // O^t
  DiagonalMask mask;   // D^t = diag(s'(N^t)); all ones for t = 0
};

struct ForwardTrace {
  // layers[t] for t = 0..L+1; layers[0] holds the input.
  std::vector<LayerTrace> layers;
  const Vector& output() const { return layers.back().post; }
  const Vector& input() const { return layers.front().post; }
};

ForwardTrace forward(const Network& net, std::span<const double> x);
Vector predict(const Network& net, std::span<const double> x);

// Multiplies the incoming column of hidden unit `node` in layer `layer`
// (1 <= layer <= L) by c > 0 and divides its outgoing row by c.
Network nodewise_rescale(const Network& net, std::size_t layer, std::size_t node, double c);

// Depth L+1 network with net1 and net2 side by side (cross weights frozen at 0)
// and a linear output layer (lambda, 1 - lambda). Both nets need K = 1 and
// equal depth and input dimension.
Network convex_combine(const Network& net1, const Network& net2, double lambda);

// Layer-major; inside a layer column-major (for j, for i: W(i, j)).
Vector flatten(const Network& net);
Network unflatten(const Network& like, std::span<const double> theta);
// Same traversal for a list of per-layer matrices shaped like `like`.
Vector flatten_layers(const std::vector<Matrix>& layers);
std::vector<Matrix> unflatten_layers(const Network& like, std::span<const double> theta);

// Per-layer uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights from a seed.
Network init_network(const std::vector<std::size_t>& dims, Activation hidden, std::uint64_t seed,
                     Activation output = Activation::linear());

// Network document, schema 1:
// {"schema":1,"dims":[p,...,K],"activation":"relu","alpha":a,
//  "output_activation":"linear","weights":[[...],...]}
// with each layer flattened column-major. Optional "layer_activations" lists
// one activation per layer when hidden layers differ, and "trainable_mask"
// mirrors "weights".
nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& doc);
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

}  // namespace frcap
