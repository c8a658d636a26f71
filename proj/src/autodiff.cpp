#include "frcap/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "frcap/error.hpp"

namespace frcap {

namespace {

std::vector<std::size_t> all_rows(const Dataset& data) {
  std::vector<std::size_t> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

std::vector<Matrix> zero_like(const Network& net) {
  std::vector<Matrix> out;
  out.reserve(net.num_layers());
  for (const auto& w : net.weights()) out.emplace_back(w.rows(), w.cols());
  return out;
}

}  // namespace

GradientSet backprop_from_layer(const Network& net, const ForwardTrace& trace, std::size_t layer,
                                std::span<const double> seed) {
  if (layer < 1 || layer > net.num_layers()) throw InvalidParameter("backprop layer out of range");
  if (trace.layers.size() != net.num_layers() + 1) throw ShapeError("trace does not match network depth");
  const auto mask = trace.layers[layer].mask.entries();
  if (seed.size() != mask.size()) {
    throw ShapeError("seed gradient has length " + std::to_string(seed.size()) + ", layer " +
                     std::to_string(layer) + " has " + std::to_string(mask.size()) + " units");
  }

  GradientSet grads{zero_like(net)};
  // delta = d(objective)/dN^{t+1}
  Vector delta(seed.size());
  for (std::size_t j = 0; j < seed.size(); ++j) delta[j] = seed[j] * mask[j];

  for (std::size_t t = layer; t-- > 0;) {
    const Vector& o = trace.layers[t].post;
    Matrix& g = grads.layers[t];
    for (std::size_t i = 0; i < o.size(); ++i) {
      if (o[i] == 0.0) continue;
      auto row = g.row(i);
      for (std::size_t j = 0; j < delta.size(); ++j) row[j] = o[i] * delta[j];
    }
    if (t == 0) break;
    Vector next = times_col(net.weight(t), delta);
    const auto d = trace.layers[t].mask.entries();
    for (std::size_t i = 0; i < next.size(); ++i) next[i] *= d[i];
    delta = std::move(next);
  }
  return grads;
}

GradientSet backprop(const Network& net, const ForwardTrace& trace, std::span<const double> output_grad) {
  if (output_grad.size() != net.output_dim()) {
    throw ShapeError("loss gradient has length " + std::to_string(output_grad.size()) + ", network has " +
                     std::to_string(net.output_dim()) + " outputs");
  }
  return backprop_from_layer(net, trace, net.num_layers(), output_grad);
}

GradientSet backprop(const Network& net, std::span<const double> x, std::span<const double> output_grad) {
  return backprop(net, forward(net, x), output_grad);
}

Vector loss_gradient(const Network& net, std::span<const double> x, double y, const Loss& loss) {
  const ForwardTrace trace = forward(net, x);
  const Vector g = loss_output_grad(loss, trace.output(), y);
  return backprop(net, trace, g).flat();
}

double mean_loss(const Network& net, const Dataset& data, const Loss& loss, std::span<const std::size_t> rows) {
  if (rows.empty()) throw InvalidParameter("mean_loss over an empty batch");
  double s = 0.0;
  for (std::size_t r : rows) s += loss_value(loss, predict(net, data.input(r)), data.label(r));
  return s / static_cast<double>(rows.size());
}

double mean_loss(const Network& net, const Dataset& data, const Loss& loss) {
  const auto rows = all_rows(data);
  return mean_loss(net, data, loss, rows);
}

Vector mean_loss_gradient(const Network& net, const Dataset& data, const Loss& loss,
                          std::span<const std::size_t> rows) {
  if (rows.empty()) throw InvalidParameter("gradient over an empty batch");
  Vector mean(net.parameter_count(), 0.0);
  for (std::size_t r : rows) {
    const Vector g = loss_gradient(net, data.input(r), data.label(r), loss);
    for (std::size_t k = 0; k < g.size(); ++k) mean[k] += g[k];
  }
  for (double& x : mean) x /= static_cast<double>(rows.size());
  return mean;
}

Vector mean_loss_gradient(const Network& net, const Dataset& data, const Loss& loss) {
  const auto rows = all_rows(data);
  return mean_loss_gradient(net, data, loss, rows);
}

std::vector<Vector> per_sample_grads(const Network& net, const Dataset& data, const Loss& loss,
                                     std::span<const std::size_t> rows) {
  if (rows.empty()) throw InvalidParameter("per_sample_grads over an empty batch");
  std::vector<Vector> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(loss_gradient(net, data.input(r), data.label(r), loss));
  return out;
}

std::vector<Vector> per_sample_grads(const Network& net, const Dataset& data, const Loss& loss) {
  const auto rows = all_rows(data);
  return per_sample_grads(net, data, loss, rows);
}

Contraction output_jacobian_contraction(const Network& net, std::span<const double> x) {
  const ForwardTrace trace = forward(net, x);
  Contraction out;
  out.output = trace.output();
  out.total.assign(net.output_dim(), 0.0);
  const std::size_t last = net.depth();
  for (std::size_t s = 0; s <= last; ++s) {
    const std::size_t units = net.weight(s).cols();
    for (std::size_t l = 0; l < units; ++l) {
      Vector seed(units, 0.0);
      seed[l] = 1.0;
      const GradientSet g = backprop_from_layer(net, trace, s + 1, seed);
      for (std::size_t t = 0; t <= s; ++t) {
        const auto gd = g.layers[t].data();
        const auto wd = net.weight(t).data();
        double c = 0.0;
        for (std::size_t k = 0; k < gd.size(); ++k) c += gd[k] * wd[k];
        out.per_pair.push_back({t, s, l, c, trace.layers[s + 1].post[l]});
        if (s == last) out.total[l] += c;
      }
    }
  }
  return out;
}

Vector directional_second_derivative(const Network& net, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw InvalidParameter("step h must be positive");
  const Vector up = predict(net.scaled(1.0 + h), x);
  const Vector mid = predict(net, x);
  const Vector down = predict(net.scaled(1.0 - h), x);
  Vector out(mid.size());
  for (std::size_t i = 0; i < mid.size(); ++i) out[i] = (up[i] - 2.0 * mid[i] + down[i]) / (h * h);
  return out;
}

Vector numerical_gradient(const Network& net, std::span<const double> x, double y, const Loss& loss, double h) {
  if (!(h > 0.0)) throw InvalidParameter("step h must be positive");
  Vector theta = flatten(net);
  Vector grad(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double saved = theta[k];
    theta[k] = saved + h;
    const double up = loss_value(loss, predict(unflatten(net, theta), x), y);
    theta[k] = saved - h;
    const double down = loss_value(loss, predict(unflatten(net, theta), x), y);
    theta[k] = saved;
    grad[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

double min_abs_preactivation(const Network& net, std::span<const double> x) {
  const ForwardTrace trace = forward(net, x);
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t < trace.layers.size(); ++t)
    for (double z : trace.layers[t].pre) m = std::min(m, std::abs(z));
  return m;
}

}  // namespace frcap
