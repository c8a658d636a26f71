#include "frcap/optimize.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <limits>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "frcap/autodiff.hpp"
#include "frcap/error.hpp"

namespace frcap {

namespace {

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

void apply_mask(const Network& net, Vector& g) {
  if (!net.has_frozen_entries()) return;
  const Vector mask = flatten_layers(net.trainable_mask());
  for (std::size_t k = 0; k < g.size(); ++k) g[k] *= mask[k];
}

Network shifted(const Network& net, std::span<const double> step, double scale) {
  Vector theta = flatten(net);
  for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= scale * step[k];
  return unflatten(net, theta);
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Network first_order_update(const Network& net, const Vector& g, const TrainConfig& c, OptimizerState& s,
                           double lr) {
  switch (c.optimizer) {
    case OptimizerKind::SGD:
      return shifted(net, g, lr);
    case OptimizerKind::Momentum: {
      if (s.velocity.size() != g.size()) s.velocity.assign(g.size(), 0.0);
      for (std::size_t k = 0; k < g.size(); ++k) s.velocity[k] = c.momentum * s.velocity[k] + g[k];
      ++s.step;
      return shifted(net, s.velocity, lr);
    }
    case OptimizerKind::Adam: {
      if (s.m.size() != g.size()) {
        s.m.assign(g.size(), 0.0);
        s.v.assign(g.size(), 0.0);
      }
      ++s.step;
      const double t = static_cast<double>(s.step);
      const double c1 = 1.0 - std::pow(c.beta1, t);
      const double c2 = 1.0 - std::pow(c.beta2, t);
      Vector step(g.size());
      for (std::size_t k = 0; k < g.size(); ++k) {
        s.m[k] = c.beta1 * s.m[k] + (1.0 - c.beta1) * g[k];
        s.v[k] = c.beta2 * s.v[k] + (1.0 - c.beta2) * g[k] * g[k];
        step[k] = (s.m[k] / c1) / (std::sqrt(s.v[k] / c2) + c.adam_eps);
      }
      return shifted(net, step, lr);
    }
    case OptimizerKind::NaturalGradient:
      break;
  }
  throw InvalidParameter("natural gradient is not a first-order update");
}

NaturalGradientDirection solve_damped(const std::vector<Vector>& fisher_grads, Vector rhs,
                                      std::optional<double> damping, double tol, std::size_t max_iter,
                                      std::size_t max_retries) {
  if (fisher_grads.empty()) throw InvalidParameter("natural gradient over an empty batch");
  const std::size_t d = rhs.size();
  const double n = static_cast<double>(fisher_grads.size());
  NaturalGradientDirection out;
  out.gradient = std::move(rhs);
  if (damping && !(*damping >= 0.0)) throw InvalidParameter("damping must be >= 0");
  double lambda = 0.0;
  if (damping) {
    lambda = *damping;
  } else {
    double trace = 0.0;
    for (const auto& g : fisher_grads) trace += dot(g, g);
    lambda = 1e-3 * (trace / n) / static_cast<double>(d);
    if (lambda == 0.0) lambda = 1e-12;
  }
  if (max_iter == 0) max_iter = 2 * d + 10;

  for (std::size_t attempt = 0;; ++attempt) {
    auto apply = [&](std::span<const double> v) {
      Vector out_v(d, 0.0);
      for (const auto& g : fisher_grads) {
        const double c = dot(g, v) / n;
        if (c == 0.0) continue;
        for (std::size_t k = 0; k < d; ++k) out_v[k] += c * g[k];
      }
      for (std::size_t k = 0; k < d; ++k) out_v[k] += lambda * v[k];
      return out_v;
    };
    CgResult cg = conjugate_gradient(apply, out.gradient, tol, max_iter);
    out.cg_iterations += cg.iterations;
    out.damping = lambda;
    if (cg.converged) {
      out.delta = std::move(cg.x);
      out.converged = true;
      return out;
    }
    if (attempt == max_retries) {
      out.delta = std::move(cg.x);
      out.warnings.push_back("conjugate gradient did not converge at damping " + std::to_string(lambda));
      return out;
    }
    out.warnings.push_back("conjugate gradient did not converge at damping " + std::to_string(lambda) +
                           ", retrying with " + std::to_string(lambda * 10.0));
    lambda = lambda > 0.0 ? lambda * 10.0 : 1e-12;
    ++out.retries;
  }
}

}  // namespace

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::SGD;
  if (name == "momentum") return OptimizerKind::Momentum;
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "natural_gradient" || name == "ng") return OptimizerKind::NaturalGradient;
  throw InvalidParameter("unknown optimizer '" + name + "'");
}

std::string optimizer_name(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::SGD: return "sgd";
    case OptimizerKind::Momentum: return "momentum";
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::NaturalGradient: return "natural_gradient";
  }
  return "sgd";
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidParameter("lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidParameter("momentum must lie in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidParameter("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw InvalidParameter("adam_eps must be positive");
  if (ng_damping && !(*ng_damping >= 0.0)) throw InvalidParameter("ng_damping must be >= 0");
  if (!(ng_tol > 0.0)) throw InvalidParameter("ng_tol must be positive");
  if (!(lr_decay > 0.0)) throw InvalidParameter("lr_decay must be positive");
  if (!(grad_tol >= 0.0)) throw InvalidParameter("grad_tol must be >= 0");
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    c.lr = j.value("lr", c.lr);
    c.momentum = j.value("momentum", c.momentum);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    if (j.contains("ng_damping") && !j.at("ng_damping").is_null()) c.ng_damping = j.at("ng_damping").get<double>();
    c.ng_tol = j.value("ng_tol", c.ng_tol);
    c.ng_max_iter = j.value("ng_max_iter", c.ng_max_iter);
    c.ng_model_fisher = j.value("ng_model_fisher", c.ng_model_fisher);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.lr_decay = j.value("lr_decay", c.lr_decay);
    c.lr_decay_every = j.value("lr_decay_every", c.lr_decay_every);
    c.seed = j.value("seed", c.seed);
    if (j.contains("loss")) {
      c.loss = Loss::parse(j.at("loss").get<std::string>(), j.value("classes", std::size_t{1}));
    }
    c.grad_tol = j.value("grad_tol", c.grad_tol);
    c.record_every = j.value("record_every", c.record_every);
    if (j.contains("record_norms")) {
      for (const auto& n : j.at("record_norms")) c.record_norms.push_back(NormSpec::parse(n.get<std::string>()));
    }
    c.record_wall_clock = j.value("record_wall_clock", c.record_wall_clock);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  } catch (const InvalidParameter& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["optimizer"] = optimizer_name(c.optimizer);
  j["lr"] = c.lr;
  j["momentum"] = c.momentum;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["adam_eps"] = c.adam_eps;
  j["ng_damping"] = c.ng_damping ? nlohmann::json(*c.ng_damping) : nlohmann::json(nullptr);
  j["ng_tol"] = c.ng_tol;
  j["ng_max_iter"] = c.ng_max_iter;
  j["ng_model_fisher"] = c.ng_model_fisher;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["lr_decay"] = c.lr_decay;
  j["lr_decay_every"] = c.lr_decay_every;
  j["seed"] = c.seed;
  j["loss"] = c.loss.name();
  j["classes"] = c.loss.classes;
  j["grad_tol"] = c.grad_tol;
  j["record_every"] = c.record_every;
  auto& norms = j["record_norms"] = nlohmann::json::array();
  for (const auto& n : c.record_norms) norms.push_back(n.label());
  j["record_wall_clock"] = c.record_wall_clock;
  return j;
}

Vector batch_gradient(const Network& net, const Dataset& data, const Loss& loss, std::span<const std::size_t> rows) {
  Vector g = mean_loss_gradient(net, data, loss, rows);
  apply_mask(net, g);
  return g;
}

Network sgd_step(const Network& net, const Dataset& data, std::span<const std::size_t> rows,
                 const TrainConfig& config) {
  return shifted(net, batch_gradient(net, data, config.loss, rows), config.lr);
}

Network momentum_step(const Network& net, const Dataset& data, std::span<const std::size_t> rows,
                      const TrainConfig& config, OptimizerState& state) {
  TrainConfig c = config;
  c.optimizer = OptimizerKind::Momentum;
  return first_order_update(net, batch_gradient(net, data, config.loss, rows), c, state, config.lr);
}

Network adam_step(const Network& net, const Dataset& data, std::span<const std::size_t> rows,
                  const TrainConfig& config, OptimizerState& state) {
  TrainConfig c = config;
  c.optimizer = OptimizerKind::Adam;
  return first_order_update(net, batch_gradient(net, data, config.loss, rows), c, state, config.lr);
}

CgResult conjugate_gradient(const std::function<Vector(std::span<const double>)>& apply, std::span<const double> b,
                            double tol, std::size_t max_iter) {
  const std::size_t d = b.size();
  CgResult out;
  out.x.assign(d, 0.0);
  Vector r(b.begin(), b.end());
  const double bnorm = norm2(b);
  if (bnorm == 0.0) {
    out.converged = true;
    return out;
  }
  Vector p = r;
  double rr = dot(r, r);
  for (std::size_t it = 0; it < max_iter; ++it) {
    const Vector ap = apply(p);
    const double pap = dot(p, ap);
    if (!(pap > 0.0) || !std::isfinite(pap)) break;
    const double alpha = rr / pap;
    for (std::size_t k = 0; k < d; ++k) {
      out.x[k] += alpha * p[k];
      r[k] -= alpha * ap[k];
    }
    out.iterations = it + 1;
    const double rr_new = dot(r, r);
    if (std::sqrt(rr_new) <= tol * bnorm) {
      out.converged = true;
      return out;
    }
    const double beta = rr_new / rr;
    for (std::size_t k = 0; k < d; ++k) p[k] = r[k] + beta * p[k];
    rr = rr_new;
  }
  return out;
}

NaturalGradientDirection natural_gradient_direction(const std::vector<Vector>& grads, std::optional<double> damping,
                                                    double tol, std::size_t max_iter, std::size_t max_retries) {
  if (grads.empty()) throw InvalidParameter("natural gradient over an empty batch");
  Vector mean(grads.front().size(), 0.0);
  for (const auto& g : grads) {
    if (g.size() != mean.size()) throw ShapeError("per-sample gradients differ in length");
    for (std::size_t k = 0; k < g.size(); ++k) mean[k] += g[k];
  }
  for (double& x : mean) x /= static_cast<double>(grads.size());
  return solve_damped(grads, std::move(mean), damping, tol, max_iter, max_retries);
}

Network natural_gradient_step(const Network& net, const Dataset& data, std::span<const std::size_t> rows,
                              const TrainConfig& config, NaturalGradientDirection* info) {
  std::vector<Vector> grads = per_sample_grads(net, data, config.loss, rows);
  for (auto& g : grads) apply_mask(net, g);
  NaturalGradientDirection dir;
  if (config.ng_model_fisher) {
    const Dataset batch = data.subset(rows);
    const auto samples = DataDistribution::model_sampled(batch, 1, config.seed).materialize(net, config.loss);
    std::vector<Vector> fisher;
    fisher.reserve(samples.size());
    for (const auto& s : samples) {
      fisher.push_back(loss_gradient(net, batch.input(s.row), s.label, config.loss));
      apply_mask(net, fisher.back());
    }
    Vector mean(grads.front().size(), 0.0);
    for (const auto& g : grads)
      for (std::size_t k = 0; k < g.size(); ++k) mean[k] += g[k];
    for (double& x : mean) x /= static_cast<double>(grads.size());
    dir = solve_damped(fisher, std::move(mean), config.ng_damping, config.ng_tol, config.ng_max_iter, 6);
  } else {
    dir = natural_gradient_direction(grads, config.ng_damping, config.ng_tol, config.ng_max_iter);
  }
  Network out = shifted(net, dir.delta, config.lr);
  if (info) *info = std::move(dir);
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

std::vector<std::string> TrainHistory::csv_header() const {
  std::vector<std::string> h{"epoch", "loss", "grad_norm", "lr", "fr_natural"};
  const EpochRecord* widest = nullptr;
  bool wall = false;
  for (const auto& e : epochs) {
    if (!widest || e.norms.size() > widest->norms.size()) widest = &e;
    wall = wall || e.wall_seconds.has_value();
  }
  if (widest)
    for (const auto& [name, _] : widest->norms) h.push_back(name);
  if (wall) h.emplace_back("wall_seconds");
  return h;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::vector<std::vector<std::string>> TrainHistory::csv_rows() const {
  const auto header = csv_header();
  const bool wall = !header.empty() && header.back() == "wall_seconds";
  const std::size_t norm_cols = header.size() - 5 - (wall ? 1 : 0);
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : epochs) {
    std::vector<std::string> r{std::to_string(e.epoch), fmt(e.loss), fmt(e.grad_norm), fmt(e.lr),
                               e.fr_natural ? fmt(*e.fr_natural) : ""};
    for (std::size_t k = 0; k < norm_cols; ++k) r.push_back(k < e.norms.size() ? fmt(e.norms[k].second) : "");
    if (wall) r.push_back(e.wall_seconds ? fmt(*e.wall_seconds) : "");
    rows.push_back(std::move(r));
  }
  return rows;
}

nlohmann::json TrainHistory::summary() const {
  nlohmann::json j;
  j["status"] = status;
  j["diagnostic"] = diagnostic;
  j["warnings"] = warnings;
  j["epochs_run"] = epochs.empty() ? 0 : epochs.back().epoch;
  if (!epochs.empty()) {
    const auto& last = epochs.back();
    j["final_loss"] = std::isfinite(last.loss) ? nlohmann::json(last.loss) : nlohmann::json(nullptr);
    j["final_grad_norm"] = std::isfinite(last.grad_norm) ? nlohmann::json(last.grad_norm) : nlohmann::json(nullptr);
    if (last.fr_natural) j["final_fr_natural"] = *last.fr_natural;
  }
  return j;
}

TrainResult train(const Network& initial, const Dataset& data, const TrainConfig& config) {
  config.validate();
  if (data.size() == 0) throw InvalidParameter("training on an empty dataset");
  if (config.loss.output_dim() != initial.output_dim()) {
    throw ShapeError("loss " + config.loss.name() + " expects " + std::to_string(config.loss.output_dim()) +
                     " outputs, network has " + std::to_string(initial.output_dim()));
  }
  const auto start = std::chrono::steady_clock::now();
  TrainResult result{initial, {}};
  Network& net = result.net;
  TrainHistory& hist = result.history;
  OptimizerState state;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order = all_rows(data.size());
  const std::size_t bs =
      config.batch_size == 0 || config.batch_size >= data.size() ? data.size() : config.batch_size;
  const bool full_batch = bs == data.size();

  Vector full_grad;
  auto record = [&](std::size_t epoch, double lr) {
    EpochRecord e;
    e.epoch = epoch;
    e.lr = lr;
    e.loss = mean_loss(net, data, config.loss);
    full_grad = batch_gradient(net, data, config.loss, order);
    e.grad_norm = norm2(full_grad);
    if (config.record_every > 0 && epoch % config.record_every == 0 && std::isfinite(e.loss)) {
      e.fr_natural = fr_norm_identity(net, config.loss, DataDistribution::empirical(data)) /
                     static_cast<double>(net.depth() + 1);
      for (const auto& spec : config.record_norms) e.norms.emplace_back(spec.label(), flat_norm(net, spec).value);
    }
    if (config.record_wall_clock) {
      e.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    hist.epochs.push_back(std::move(e));
    return hist.epochs.back();
  };

  auto finished = [&](const EpochRecord& e) {
    if (!std::isfinite(e.loss) || !std::isfinite(e.grad_norm)) {
      hist.status = "diverged";
      hist.diagnostic = "non-finite loss or gradient at epoch " + std::to_string(e.epoch);
      return true;
    }
    if (config.grad_tol > 0.0 && e.grad_norm <= config.grad_tol) {
      hist.status = "converged";
      return true;
    }
    return false;
  };

  if (finished(record(0, config.lr))) return result;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double lr = config.lr;
    if (config.lr_decay_every > 0) {
      lr *= std::pow(config.lr_decay, static_cast<double>((epoch - 1) / config.lr_decay_every));
    }
    if (!full_batch) std::shuffle(order.begin(), order.end(), rng);
    try {
      for (std::size_t b = 0; b < data.size(); b += bs) {
        const std::span<const std::size_t> rows(order.data() + b, std::min(bs, data.size() - b));
        if (config.optimizer == OptimizerKind::NaturalGradient) {
          TrainConfig c = config;
          c.lr = lr;
          c.seed = config.seed + 0x9e3779b97f4a7c15ULL * (epoch * data.size() + b + 1);
          NaturalGradientDirection info;
          net = natural_gradient_step(net, data, rows, c, &info);
          for (auto& w : info.warnings) hist.warnings.push_back("epoch " + std::to_string(epoch) + ": " + w);
        } else {
          const Vector g = full_batch ? full_grad : batch_gradient(net, data, config.loss, rows);
          net = first_order_update(net, g, config, state, lr);
        }
      }
    } catch (const InvalidParameter& e) {
      // Non-finite weights are rejected on construction.
      hist.status = "diverged";
      hist.diagnostic = "epoch " + std::to_string(epoch) + ": " + e.what();
      return result;
    }
    if (finished(record(epoch, lr))) return result;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Stationarity checks

MarginCheck check_large_margin(const Network& net, const Dataset& data, double eps_grad, double delta_margin) {
  if (net.output_dim() != 1) throw UnsupportedConfiguration("margin check needs a single output");
  if (data.size() == 0) throw InvalidParameter("margin check on an empty dataset");
  for (double y : data.labels) {
    if (y != 1.0 && y != -1.0) throw InvalidParameter("margin check needs labels in {-1, +1}");
  }
  MarginCheck out;
  out.grad_norm = norm2(batch_gradient(net, data, Loss::hinge(), all_rows(data.size())));
  out.stationary = out.grad_norm <= eps_grad;
  out.min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double m = data.label(i) * predict(net, data.input(i))[0];
    out.margins.push_back(m);
    out.min_margin = std::min(out.min_margin, m);
  }
  out.separating = out.min_margin > 0.0;
  out.applicable = out.stationary && out.separating;
  if (!out.applicable) {
    out.passed = true;
    out.message = !out.separating ? "not applicable: network does not separate the data"
                                  : "not applicable: gradient norm above threshold";
    return out;
  }
  out.passed = out.min_margin >= 1.0 - delta_margin;
  out.message = out.passed ? "stationary separating network has large margin"
                           : "stationary separating network has a margin below 1";
  return out;
}

LinearStationarity check_linear_stationarity(const Network& net, const Dataset& data) {
  if (net.output_dim() != 1) throw UnsupportedConfiguration("linear stationarity needs a single output");
  for (const auto& a : net.activations()) {
    if (a.kind() != ActivationKind::Linear && !(a.kind() == ActivationKind::LeakyReLU && a.alpha() == 1.0)) {
      throw UnsupportedConfiguration("linear stationarity needs linear activations");
    }
  }
  if (data.size() == 0) throw InvalidParameter("stationarity check on an empty dataset");
  Matrix prod = net.weight(0);
  for (std::size_t t = 1; t < net.num_layers(); ++t) prod = matmul(prod, net.weight(t));
  LinearStationarity out;
  out.w = prod.col(0);
  // X^T (X w - Y)
  Vector r(data.dim(), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.input(i);
    const double e = dot(x, out.w) - data.label(i);
    for (std::size_t k = 0; k < x.size(); ++k) r[k] += x[k] * e;
  }
  out.residual = dot(out.w, r);
  out.scale = norm2(r) * norm2(out.w);
  out.relative = out.scale == 0.0 ? 0.0 : std::abs(out.residual) / out.scale;
  return out;
}

// ---------------------------------------------------------------------------
// Natural gradient on explicit parametrizations

FisherSystem scalar_model_fisher(const ScalarModel& model, std::span<const double> theta, const Dataset& data) {
  if (theta.size() != model.dim) throw ShapeError("parameter length does not match the model");
  if (data.size() == 0) throw InvalidParameter("Fisher over an empty dataset");
  const std::size_t d = model.dim;
  FisherSystem out{Matrix(d, d), Vector(d, 0.0)};
  const double n = static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.input(i);
    const double res = model.value(theta, x) - data.label(i);
    Vector g = model.gradient(theta, x);
    for (double& v : g) v *= res;
    for (std::size_t a = 0; a < d; ++a) {
      out.gradient[a] += g[a] / n;
      for (std::size_t b = 0; b < d; ++b) out.fisher(a, b) += g[a] * g[b] / n;
    }
  }
  return out;
}

Vector scalar_model_ng_step(const ScalarModel& model, std::span<const double> theta, const Dataset& data, double lr,
                            double damping, double tol) {
  const FisherSystem sys = scalar_model_fisher(model, theta, data);
  const std::size_t d = model.dim;
  auto apply = [&](std::span<const double> v) {
    Vector out = times_col(sys.fisher, v);
    for (std::size_t k = 0; k < d; ++k) out[k] += damping * v[k];
    return out;
  };
  const CgResult cg = conjugate_gradient(apply, sys.gradient, tol, 10 * d + 10);
  if (!cg.converged) throw DecompositionError("Fisher system could not be solved; is the Fisher singular?");
  Vector next(theta.begin(), theta.end());
  for (std::size_t k = 0; k < d; ++k) next[k] -= lr * cg.x[k];
  return next;
}

ReparametrizationGap reparametrization_gap(const ScalarModel& theta_model, const ScalarModel& xi_model,
                                           const std::function<Vector(std::span<const double>)>& xi_of_theta,
                                           std::span<const double> theta0, const Dataset& data, double lr,
                                           double horizon, double damping) {
  if (!(lr > 0.0) || !(horizon > 0.0)) throw InvalidParameter("lr and horizon must be positive");
  ReparametrizationGap out;
  out.lr = lr;
  out.steps = static_cast<std::size_t>(std::llround(horizon / lr));
  Vector theta(theta0.begin(), theta0.end());
  Vector xi = xi_of_theta(theta);
  for (std::size_t s = 0; s < out.steps; ++s) {
    theta = scalar_model_ng_step(theta_model, theta, data, lr, damping);
    xi = scalar_model_ng_step(xi_model, xi, data, lr, damping);
  }
  const Vector mapped = xi_of_theta(theta);
  double g = 0.0;
  for (std::size_t k = 0; k < xi.size(); ++k) g += (mapped[k] - xi[k]) * (mapped[k] - xi[k]);
  out.gap = std::sqrt(g);
  return out;
}

OverparametrizationCheck check_overparametrization(
    const ScalarModel& theta_model, const ScalarModel& xi_model,
    const std::function<Vector(std::span<const double>)>& xi_of_theta,
    const std::function<Matrix(std::span<const double>)>& jacobian, std::span<const double> theta,
    const Dataset& data, double dt) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const std::size_t p = theta_model.dim;
  const std::size_t q = xi_model.dim;
  if (q <= p) throw InvalidParameter("over-parametrization needs dim(xi) > dim(theta)");
  const Vector xi = xi_of_theta(theta);
  const Matrix j = jacobian(theta);
  if (j.rows() != q || j.cols() != p) throw ShapeError("Jacobian must be dim(xi) x dim(theta)");

  const FisherSystem sys = scalar_model_fisher(xi_model, xi, data);
  MatrixXd fisher(q, q);
  for (std::size_t a = 0; a < q; ++a)
    for (std::size_t b = 0; b < q; ++b) fisher(a, b) = sys.fisher(a, b);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(fisher);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0.0) {
    throw DecompositionError("Fisher in the over-parametrized coordinates is not positive definite");
  }
  const VectorXd root = eig.eigenvalues().cwiseSqrt();
  const MatrixXd half = eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
  const MatrixXd inv_half = eig.eigenvectors() * root.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();

  MatrixXd jac(q, p);
  for (std::size_t a = 0; a < q; ++a)
    for (std::size_t b = 0; b < p; ++b) jac(a, b) = j(a, b);
  const MatrixXd a_mat = half * jac;
  // Orthogonal complement of range(A) from the zero eigenvalues of A A^T.
  Eigen::SelfAdjointEigenSolver<MatrixXd> gram(a_mat * a_mat.transpose());
  const double top = gram.eigenvalues().maxCoeff();
  MatrixXd proj = MatrixXd::Identity(q, q);
  for (std::size_t k = 0; k < q; ++k) {
    if (gram.eigenvalues()(k) <= 1e-10 * top) {
      const VectorXd u = gram.eigenvectors().col(k);
      proj -= u * u.transpose();
    }
  }
  const MatrixXd m = inv_half * proj * half;

  OverparametrizationCheck out;
  out.projection = Matrix(q, q);
  for (std::size_t a = 0; a < q; ++a)
    for (std::size_t b = 0; b < q; ++b) out.projection(a, b) = m(a, b);
  Eigen::EigenSolver<MatrixXd> general(m);
  for (std::size_t k = 0; k < q; ++k) {
    const auto lam = general.eigenvalues()(k);
    out.eigenvalues.push_back(lam.real());
    out.max_imag = std::max(out.max_imag, std::abs(lam.imag()));
    out.max_eigen_defect = std::max(out.max_eigen_defect, std::min(std::abs(lam.real()), std::abs(lam.real() - 1.0)));
  }
  std::sort(out.eigenvalues.begin(), out.eigenvalues.end());

  const Vector theta_next = scalar_model_ng_step(theta_model, theta, data, dt, 0.0);
  const Vector xi_next = scalar_model_ng_step(xi_model, xi, data, dt, 0.0);
  const Vector mapped_next = xi_of_theta(theta_next);
  Vector dxi(q);
  for (std::size_t k = 0; k < q; ++k) dxi[k] = xi_next[k] - xi[k];
  const Vector predicted = times_col(out.projection, dxi);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < q; ++k) {
    const double moved = mapped_next[k] - xi[k];
    num += (moved - predicted[k]) * (moved - predicted[k]);
    den += moved * moved;
  }
  out.step_mismatch = den == 0.0 ? 0.0 : std::sqrt(num / den);
  return out;
}

}  // namespace frcap
