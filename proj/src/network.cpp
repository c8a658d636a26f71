#include "frcap/network.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "frcap/error.hpp"

namespace frcap {

using nlohmann::json;

Activation Activation::leaky_relu(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw InvalidParameter("leaky ReLU slope must lie in (0, 1] (got " + std::to_string(alpha) + ")");
  }
  return Activation(ActivationKind::LeakyReLU, alpha);
}

std::string Activation::name() const {
  switch (kind_) {
    case ActivationKind::ReLU: return "relu";
    case ActivationKind::LeakyReLU: return "leaky_relu";
    case ActivationKind::Linear: return "linear";
  }
  return "linear";
}

Activation Activation::parse(const std::string& name, double alpha) {
  if (name == "relu") return relu();
  if (name == "leaky_relu") return leaky_relu(alpha);
  if (name == "linear") return linear();
  throw ValidationError("unknown activation '" + name + "'");
}

Network::Network(std::vector<Matrix> weights, Activation hidden, Activation output)
    : weights_(std::move(weights)) {
  if (weights_.empty()) throw ShapeError("a network needs at least one weight matrix");
  activations_.assign(weights_.size() - 1, hidden);
  activations_.push_back(output);
  validate();
}

Network::Network(std::vector<Matrix> weights, std::vector<Activation> layer_activations)
    : weights_(std::move(weights)), activations_(std::move(layer_activations)) {
  if (weights_.empty()) throw ShapeError("a network needs at least one weight matrix");
  if (activations_.size() != weights_.size()) {
    throw ShapeError("need one activation per layer (" + std::to_string(weights_.size()) + "), got " +
                     std::to_string(activations_.size()));
  }
  validate();
}

void Network::validate() const {
  for (std::size_t t = 0; t < weights_.size(); ++t) {
    if (weights_[t].empty()) throw ShapeError("weight matrix W^" + std::to_string(t) + " is empty");
    if (!weights_[t].all_finite()) throw InvalidParameter("weight matrix W^" + std::to_string(t) + " is not finite");
    if (t + 1 < weights_.size() && weights_[t].cols() != weights_[t + 1].rows()) {
      throw ShapeError("W^" + std::to_string(t) + " has " + std::to_string(weights_[t].cols()) +
                       " columns but W^" + std::to_string(t + 1) + " has " +
                       std::to_string(weights_[t + 1].rows()) + " rows");
    }
  }
}

std::vector<std::size_t> Network::dims() const {
  std::vector<std::size_t> d{input_dim()};
  for (const auto& w : weights_) d.push_back(w.cols());
  return d;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : weights_) n += w.size();
  return n;
}

bool Network::uniform_hidden() const {
  for (std::size_t t = 1; t + 1 < activations_.size(); ++t)
    if (!(activations_[t] == activations_[0])) return false;
  return true;
}

void Network::set_trainable_mask(std::vector<Matrix> mask) {
  if (mask.empty()) {
    trainable_.clear();
    return;
  }
  if (mask.size() != weights_.size()) throw ShapeError("trainable mask needs one matrix per layer");
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (mask[t].rows() != weights_[t].rows() || mask[t].cols() != weights_[t].cols())
      throw ShapeError("trainable mask layer " + std::to_string(t) + " has the wrong shape");
    for (double v : mask[t].data())
      if (v != 0.0 && v != 1.0) throw InvalidParameter("trainable mask entries must be 0 or 1");
  }
  trainable_ = std::move(mask);
}

Network Network::scaled(double c) const {
  Network out = *this;
  for (auto& w : out.weights_) w = w.scaled(c);
  return out;
}

ForwardTrace forward(const Network& net, std::span<const double> x) {
  if (x.size() != net.input_dim()) {
    throw ShapeError("input has length " + std::to_string(x.size()) + ", network expects " +
                     std::to_string(net.input_dim()));
  }
  ForwardTrace trace;
  trace.layers.reserve(net.num_layers() + 1);
  Vector input(x.begin(), x.end());
  trace.layers.push_back({input, input, DiagonalMask(Vector(x.size(), 1.0))});
  for (std::size_t t = 0; t < net.num_layers(); ++t) {
    const Activation& act = net.activation(t + 1);
    Vector pre = row_times(trace.layers.back().post, net.weight(t));
    Vector post(pre.size());
    Vector d(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) {
      post[i] = act.value(pre[i]);
      d[i] = act.derivative(pre[i]);
    }
    trace.layers.push_back({std::move(pre), std::move(post), DiagonalMask(std::move(d))});
  }
  return trace;
}

Vector predict(const Network& net, std::span<const double> x) { return forward(net, x).output(); }

Network nodewise_rescale(const Network& net, std::size_t layer, std::size_t node, double c) {
  if (layer < 1 || layer > net.depth()) {
    throw InvalidParameter("rescaling applies to hidden layers 1.." + std::to_string(net.depth()) + " (got " +
                           std::to_string(layer) + ")");
  }
  if (!(c > 0.0) || !std::isfinite(c)) throw InvalidParameter("rescaling factor must be positive");
  Network out = net;
  Matrix& incoming = out.weight(layer - 1);
  Matrix& outgoing = out.weight(layer);
  if (node >= incoming.cols()) throw InvalidParameter("node index out of range");
  for (std::size_t i = 0; i < incoming.rows(); ++i) incoming(i, node) *= c;
  for (std::size_t j = 0; j < outgoing.cols(); ++j) outgoing(node, j) /= c;
  return out;
}

Network convex_combine(const Network& net1, const Network& net2, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidParameter("lambda must lie in [0, 1]");
  if (net1.depth() != net2.depth()) throw ShapeError("convex_combine needs networks of equal depth");
  if (net1.input_dim() != net2.input_dim()) throw ShapeError("convex_combine needs equal input dimension");
  if (net1.output_dim() != 1 || net2.output_dim() != 1) throw ShapeError("convex_combine needs scalar outputs");
  for (std::size_t t = 1; t <= net1.num_layers(); ++t) {
    if (!(net1.activation(t) == net2.activation(t)))
      throw UnsupportedConfiguration("convex_combine needs matching activations at every layer");
  }

  const std::size_t layers = net1.num_layers();
  std::vector<Matrix> weights;
  std::vector<Matrix> mask;
  for (std::size_t t = 0; t < layers; ++t) {
    const Matrix& a = net1.weight(t);
    const Matrix& b = net2.weight(t);
    if (t == 0) {
      // Shared input: [W1 | W2].
      Matrix w(a.rows(), a.cols() + b.cols());
      Matrix m(a.rows(), a.cols() + b.cols(), 1.0);
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) w(i, j) = a(i, j);
        for (std::size_t j = 0; j < b.cols(); ++j) w(i, a.cols() + j) = b(i, j);
      }
      weights.push_back(std::move(w));
      mask.push_back(std::move(m));
    } else {
      Matrix w(a.rows() + b.rows(), a.cols() + b.cols());
      Matrix m(a.rows() + b.rows(), a.cols() + b.cols());
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) {
          w(i, j) = a(i, j);
          m(i, j) = 1.0;
        }
      for (std::size_t i = 0; i < b.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
          w(a.rows() + i, a.cols() + j) = b(i, j);
          m(a.rows() + i, a.cols() + j) = 1.0;
        }
      weights.push_back(std::move(w));
      mask.push_back(std::move(m));
    }
  }
  weights.push_back(Matrix::from_rows({{lambda}, {1.0 - lambda}}));
  mask.emplace_back(2, 1, 1.0);

  std::vector<Activation> acts = net1.activations();
  acts.push_back(Activation::linear());
  Network out(std::move(weights), std::move(acts));
  out.set_trainable_mask(std::move(mask));
  return out;
}

Vector flatten_layers(const std::vector<Matrix>& layers) {
  Vector theta;
  for (const auto& w : layers)
    for (std::size_t j = 0; j < w.cols(); ++j)
      for (std::size_t i = 0; i < w.rows(); ++i) theta.push_back(w(i, j));
  return theta;
}

Vector flatten(const Network& net) { return flatten_layers(net.weights()); }

std::vector<Matrix> unflatten_layers(const Network& like, std::span<const double> theta) {
  if (theta.size() != like.parameter_count()) {
    throw ShapeError("parameter vector has length " + std::to_string(theta.size()) + ", network has " +
                     std::to_string(like.parameter_count()) + " parameters");
  }
  std::vector<Matrix> layers;
  std::size_t k = 0;
  for (const auto& w : like.weights()) {
    Matrix m(w.rows(), w.cols());
    for (std::size_t j = 0; j < w.cols(); ++j)
      for (std::size_t i = 0; i < w.rows(); ++i) m(i, j) = theta[k++];
    if (!m.all_finite()) throw InvalidParameter("parameter vector is not finite");
    layers.push_back(std::move(m));
  }
  return layers;
}

Network unflatten(const Network& like, std::span<const double> theta) {
  Network out(unflatten_layers(like, theta), like.activations());
  out.set_trainable_mask(like.trainable_mask());
  return out;
}

Network init_network(const std::vector<std::size_t>& dims, Activation hidden, std::uint64_t seed,
                     Activation output) {
  if (dims.size() < 2) throw ShapeError("network dims need at least input and output sizes");
  for (auto d : dims)
    if (d == 0) throw ShapeError("layer widths must be positive");
  std::mt19937_64 rng(seed);
  std::vector<Matrix> weights;
  for (std::size_t t = 0; t + 1 < dims.size(); ++t) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[t]));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix w(dims[t], dims[t + 1]);
    for (double& x : w.data()) x = u(rng);
    weights.push_back(std::move(w));
  }
  return Network(std::move(weights), hidden, output);
}

namespace {

json activation_to_json(const Activation& a) {
  json j{{"activation", a.name()}};
  if (a.kind() == ActivationKind::LeakyReLU) j["alpha"] = a.alpha();
  return j;
}

Activation activation_from_json(const json& j) {
  if (j.is_string()) return Activation::parse(j.get<std::string>());
  return Activation::parse(j.at("activation").get<std::string>(), j.value("alpha", 0.01));
}

}  // namespace

json network_to_json(const Network& net) {
  json doc;
  doc["schema"] = 1;
  doc["dims"] = net.dims();
  const Activation& hidden = net.activation(1);
  const Activation& output = net.activation(net.num_layers());
  doc["activation"] = hidden.name();
  if (hidden.kind() == ActivationKind::LeakyReLU) doc["alpha"] = hidden.alpha();
  doc["output_activation"] = output.name();
  if (output.kind() == ActivationKind::LeakyReLU) doc["output_alpha"] = output.alpha();
  if (!net.uniform_hidden()) {
    json acts = json::array();
    for (const auto& a : net.activations()) acts.push_back(activation_to_json(a));
    doc["layer_activations"] = acts;
  }
  json weights = json::array();
  for (const auto& w : net.weights()) weights.push_back(flatten_layers({w}));
  doc["weights"] = weights;
  if (net.has_frozen_entries()) {
    json mask = json::array();
    for (const auto& m : net.trainable_mask()) mask.push_back(flatten_layers({m}));
    doc["trainable_mask"] = mask;
  }
  return doc;
}

Network network_from_json(const json& doc) {
  try {
    if (doc.value("schema", 0) != 1) throw ValidationError("network document must declare \"schema\": 1");
    const auto dims = doc.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() < 2) throw ValidationError("network \"dims\" needs at least two entries");
    const auto& wj = doc.at("weights");
    if (!wj.is_array() || wj.size() + 1 != dims.size())
      throw ValidationError("network \"weights\" must hold one array per layer");

    auto read_layers = [&](const json& arr) {
      std::vector<Matrix> layers;
      for (std::size_t t = 0; t + 1 < dims.size(); ++t) {
        const auto flat = arr.at(t).get<std::vector<double>>();
        if (flat.size() != dims[t] * dims[t + 1])
          throw ValidationError("layer " + std::to_string(t) + " has " + std::to_string(flat.size()) +
                                " entries, expected " + std::to_string(dims[t] * dims[t + 1]));
        Matrix m(dims[t], dims[t + 1]);
        std::size_t k = 0;
        for (std::size_t j = 0; j < dims[t + 1]; ++j)
          for (std::size_t i = 0; i < dims[t]; ++i) m(i, j) = flat[k++];
        if (!m.all_finite()) throw ValidationError("layer " + std::to_string(t) + " has non-finite weights");
        layers.push_back(std::move(m));
      }
      return layers;
    };

    std::vector<Matrix> weights = read_layers(wj);
    std::vector<Activation> acts;
    if (doc.contains("layer_activations")) {
      for (const auto& a : doc.at("layer_activations")) acts.push_back(activation_from_json(a));
    } else {
      const Activation hidden = Activation::parse(doc.value("activation", std::string("relu")), doc.value("alpha", 0.01));
      const Activation output =
          Activation::parse(doc.value("output_activation", std::string("linear")), doc.value("output_alpha", 0.01));
      acts.assign(weights.size() - 1, hidden);
      acts.push_back(output);
    }
    Network net(std::move(weights), std::move(acts));
    if (doc.contains("trainable_mask")) net.set_trainable_mask(read_layers(doc.at("trainable_mask")));
    return net;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed network document: ") + e.what());
  } catch (const ShapeError& e) {
    throw ValidationError(std::string("malformed network document: ") + e.what());
  } catch (const InvalidParameter& e) {
    throw ValidationError(std::string("malformed network document: ") + e.what());
  }
}

void save_network(const Network& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write network file " + path);
  out << network_to_json(net).dump(2) << '\n';
}

Network load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open network file " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError("network file " + path + " is not valid JSON: " + e.what());
  }
  return network_from_json(doc);
}

}  // namespace frcap
