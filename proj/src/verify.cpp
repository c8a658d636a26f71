#include "frcap/verify.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <thread>

#include "frcap/autodiff.hpp"
#include "frcap/capacity.hpp"
#include "frcap/error.hpp"
#include "frcap/rademacher.hpp"

namespace frcap {

namespace {

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Activation random_activation(std::mt19937_64& rng, const std::vector<ActivationKind>& kinds) {
  const std::vector<ActivationKind> all{ActivationKind::ReLU, ActivationKind::LeakyReLU, ActivationKind::Linear};
  const auto& pool = kinds.empty() ? all : kinds;
  switch (pool[uniform_index(rng, 0, pool.size() - 1)]) {
    case ActivationKind::ReLU: return Activation::relu();
    case ActivationKind::LeakyReLU: return Activation::leaky_relu(uniform(rng, 0.05, 0.5));
    case ActivationKind::Linear: return Activation::linear();
  }
  return Activation::relu();
}

void note_failure(SuiteResult& r, nlohmann::json item) {
  ++r.failures;
  auto& list = r.detail["failures"];
  if (list.size() < 10) list.push_back(std::move(item));
}

SuiteResult start(const std::string& name) {
  SuiteResult r;
  r.name = name;
  r.detail = nlohmann::json::object();
  r.detail["failures"] = nlohmann::json::array();
  return r;
}

void finish(SuiteResult& r) { r.passed = r.failures == 0 && r.cases > 0; }

Dataset with_labels(Dataset d, const Loss& loss, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  for (double& y : d.labels) {
    switch (loss.kind) {
      case LossKind::Absolute:
      case LossKind::Squared: y = normal(rng); break;
      case LossKind::Hinge: y = uniform_index(rng, 0, 1) ? 1.0 : -1.0; break;
      case LossKind::CrossEntropy: y = static_cast<double>(uniform_index(rng, 0, loss.classes - 1)); break;
    }
  }
  if (loss.kind == LossKind::CrossEntropy) d.num_classes = loss.classes;
  return d;
}

// Scale theta so that ||theta||_fr / (L+1) under the absolute loss equals `target`.
Network scale_to_fr(const Network& net, const Dataset& data, double target) {
  const double fr = fr_norm_identity(net, Loss::absolute(), DataDistribution::empirical(data)) /
                    static_cast<double>(net.depth() + 1);
  if (fr == 0.0) return net;
  return net.scaled(std::pow(target / fr, 1.0 / static_cast<double>(net.depth() + 1)));
}

}  // namespace

Network random_network(std::mt19937_64& rng, const RandomNetSpec& spec) {
  const std::size_t depth = uniform_index(rng, spec.min_depth, spec.max_depth);
  std::vector<std::size_t> dims;
  dims.push_back(spec.input_dim ? spec.input_dim : uniform_index(rng, 1, spec.max_width));
  for (std::size_t t = 0; t < depth; ++t) dims.push_back(uniform_index(rng, 1, spec.max_width));
  dims.push_back(spec.output_dim);
  std::vector<Activation> acts;
  const Activation hidden = random_activation(rng, spec.kinds);
  for (std::size_t t = 0; t < depth; ++t) acts.push_back(hidden);
  acts.push_back(Activation::linear());
  const Network init = init_network(dims, hidden, rng());
  // Spread the weights a little so layers are not uniformly contracting.
  std::vector<Matrix> weights = init.weights();
  for (auto& w : weights) w = w.scaled(uniform(rng, 0.8, 1.6));
  return Network(std::move(weights), std::move(acts));
}

Dataset random_inputs(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  std::normal_distribution<double> normal;
  Dataset d;
  d.inputs = Matrix(n, dim);
  for (double& v : d.inputs.data()) v = normal(rng);
  d.labels.assign(n, 0.0);
  d.provenance = "random";
  return d;
}

Vector input_away_from_kinks(std::mt19937_64& rng, const Network& net, double margin) {
  std::normal_distribution<double> normal;
  Vector x(net.input_dim());
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (double& v : x) v = normal(rng);
    if (min_abs_preactivation(net, x) >= margin) return x;
  }
  return x;
}

ReparametrizationInstance reparametrization_instance(std::uint64_t seed) {
  SyntheticParams sp;
  sp.n = 40;
  sp.dim = 2;
  sp.noise = 0.5;
  sp.weights = {1.0, -0.5};
  ReparametrizationInstance inst;
  inst.data = make_synthetic(SyntheticKind::GaussianLinear, sp, seed);
  inst.theta_model = {2, [](auto t, auto x) { return t[0] * x[0] + t[1] * x[1]; },
                      [](auto, auto x) { return Vector{x[0], x[1]}; }};
  // theta = (xi0, xi1 - xi0^2 / 2)
  inst.xi_model = {2, [](auto s, auto x) { return s[0] * x[0] + (s[1] - 0.5 * s[0] * s[0]) * x[1]; },
                   [](auto s, auto x) { return Vector{x[0] - s[0] * x[1], x[1]}; }};
  inst.xi_of_theta = [](std::span<const double> t) { return Vector{t[0], t[1] + 0.5 * t[0] * t[0]}; };
  inst.jacobian = [](std::span<const double> t) { return Matrix::from_rows({{1.0, 0.0}, {t[0], 1.0}}); };
  inst.theta0 = {0.2, 0.3};
  return inst;
}

ReparametrizationInstance overparametrization_instance(std::uint64_t seed) {
  SyntheticParams sp;
  sp.n = 40;
  sp.dim = 3;
  sp.noise = 0.5;
  ReparametrizationInstance inst;
  inst.data = make_synthetic(SyntheticKind::GaussianLinear, sp, seed);
  inst.theta_model = {2, [](auto t, auto x) { return t[0] * x[0] + t[1] * x[1] + t[0] * t[1] * x[2]; },
                      [](auto t, auto x) { return Vector{x[0] + t[1] * x[2], x[1] + t[0] * x[2]}; }};
  inst.xi_model = {3, [](auto s, auto x) { return s[0] * x[0] + s[1] * x[1] + s[2] * x[2]; },
                   [](auto, auto x) { return Vector{x[0], x[1], x[2]}; }};
  inst.xi_of_theta = [](std::span<const double> t) { return Vector{t[0], t[1], t[0] * t[1]}; };
  inst.jacobian = [](std::span<const double> t) { return Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}, {t[1], t[0]}}); };
  inst.theta0 = {0.4, -0.7};
  return inst;
}

SuiteResult verify_gradient_structure(std::size_t count, std::uint64_t seed) {
  SuiteResult r = start("gradient_structure");
  std::mt19937_64 rng(seed);
  RandomNetSpec spec;
  for (std::size_t i = 0; i < count; ++i) {
    spec.output_dim = uniform_index(rng, 1, 3);
    const Network net = random_network(rng, spec);
    const Vector x = input_away_from_kinks(rng, net);
    const Contraction c = output_jacobian_contraction(net, x);
    double worst = 0.0;
    for (const auto& e : c.per_pair) worst = std::max(worst, relative_error(e.contraction, e.output));
    const double l1 = static_cast<double>(net.depth() + 1);
    for (std::size_t l = 0; l < c.total.size(); ++l) worst = std::max(worst, relative_error(c.total[l], l1 * c.output[l]));
    ++r.cases;
    r.worst = std::max(r.worst, worst);
    if (worst > 1e-8) note_failure(r, {{"case", i}, {"rel_err", worst}, {"depth", net.depth()}});
  }
  r.detail["tolerance"] = 1e-8;
  finish(r);
  return r;
}

SuiteResult verify_fr_identity(std::size_t count, std::uint64_t seed) {
  SuiteResult r = start("fr_identity");
  std::mt19937_64 rng(seed);
  const std::vector<Loss> losses{Loss::absolute(), Loss::squared(), Loss::hinge(), Loss::cross_entropy(3)};
  for (std::size_t i = 0; i < count; ++i) {
    Loss loss = losses[i % losses.size()];
    if (loss.kind == LossKind::CrossEntropy) loss = Loss::cross_entropy(uniform_index(rng, 2, 5));
    RandomNetSpec spec;
    spec.max_depth = 3;
    spec.max_width = 8;
    spec.output_dim = loss.output_dim();
    const Network net = random_network(rng, spec);
    const Dataset data = with_labels(random_inputs(rng, 20, net.input_dim()), loss, rng);

    std::vector<std::pair<std::string, double>> errs;
    const auto emp = DataDistribution::empirical(data);
    errs.emplace_back("empirical", relative_error(fr_norm_identity(net, loss, emp), fr_norm_fisher(net, loss, emp)));
    if (loss.kind == LossKind::CrossEntropy) {
      const auto model = DataDistribution::model_enumerated(data);
      const double fisher_model = fr_norm_fisher(net, loss, model);
      errs.emplace_back("model", relative_error(fr_norm_identity(net, loss, model), fisher_model));
      errs.emplace_back("closed_empirical",
                        relative_error(fr_norm_crossentropy(net, data, CrossEntropyVariant::Empirical),
                                       fr_norm_fisher(net, loss, emp)));
      errs.emplace_back("closed_model",
                        relative_error(fr_norm_crossentropy(net, data, CrossEntropyVariant::Model), fisher_model));
    } else if (loss.kind != LossKind::Hinge) {
      const auto model = DataDistribution::model_sampled(data, 3, rng());
      errs.emplace_back("model_sampled",
                        relative_error(fr_norm_identity(net, loss, model), fr_norm_fisher(net, loss, model)));
    }
    for (const auto& [what, e] : errs) {
      ++r.cases;
      r.worst = std::max(r.worst, e);
      if (e > 1e-8) note_failure(r, {{"case", i}, {"loss", loss.name()}, {"distribution", what}, {"rel_err", e}});
    }
  }
  r.detail["tolerance"] = 1e-8;
  finish(r);
  return r;
}

SuiteResult verify_norm_comparison(std::size_t count, std::uint64_t seed) {
  SuiteResult r = start("norm_comparison");
  std::mt19937_64 rng(seed);
  RandomNetSpec spec;
  spec.max_depth = 3;
  spec.max_width = 8;
  spec.kinds = {ActivationKind::ReLU};
  std::size_t skipped = 0;
  double min_slack = kInf;
  const double choices[3] = {1.0, 2.0, kInf};
  for (std::size_t i = 0; i < count; ++i) {
    const Network net = random_network(rng, spec);
    const Dataset data = with_labels(random_inputs(rng, 50, net.input_dim()), Loss::absolute(), rng);
    auto specs = default_comparison_specs(net);
    std::vector<double> chain(net.num_layers() + 1);
    for (double& p : chain) p = choices[uniform_index(rng, 0, 2)];
    specs.push_back(NormSpec::chain_of(chain));
    const NormReport rep = norm_comparison_report(net, data, specs);
    for (const auto& c : rep.comparisons) {
      if (!c.exact) {
        ++skipped;
        continue;
      }
      ++r.cases;
      min_slack = std::min(min_slack, c.slack);
      if (!c.verdict) note_failure(r, {{"case", i}, {"norm", c.spec.label()}, {"slack", c.slack}});
    }
  }
  r.worst = min_slack;
  r.detail["min_slack"] = min_slack;
  r.detail["inexact_skipped"] = skipped;
  finish(r);
  return r;
}

SuiteResult verify_rescaling_invariance(std::size_t count, std::uint64_t seed) {
  SuiteResult r = start("rescaling_invariance");
  std::mt19937_64 rng(seed);
  RandomNetSpec spec;
  spec.max_depth = 3;
  spec.max_width = 8;
  spec.kinds = {ActivationKind::ReLU, ActivationKind::LeakyReLU};
  for (std::size_t i = 0; i < count; ++i) {
    const Network net = random_network(rng, spec);
    const Dataset data = with_labels(random_inputs(rng, 30, net.input_dim()), Loss::absolute(), rng);
    Network moved = net;
    for (int k = 0; k < 10; ++k) {
      const std::size_t layer = uniform_index(rng, 1, net.depth());
      const std::size_t node = uniform_index(rng, 0, net.weight(layer).rows() - 1);
      moved = nodewise_rescale(moved, layer, node, std::exp(uniform(rng, -1.5, 1.5)));
    }
    const auto emp = DataDistribution::empirical(data);
    for (const Loss& loss : {Loss::absolute(), Loss::squared()}) {
      const double e = relative_error(fr_norm_identity(net, loss, emp), fr_norm_identity(moved, loss, emp));
      const double ef = relative_error(fr_norm_fisher(net, loss, emp), fr_norm_fisher(moved, loss, emp));
      ++r.cases;
      r.worst = std::max({r.worst, e, ef});
      if (std::max(e, ef) > 1e-8) note_failure(r, {{"case", i}, {"loss", loss.name()}, {"rel_err", std::max(e, ef)}});
    }
  }
  // Path norms are blind to nodewise rescaling, so the constructed case adds
  // a cancelling pair of units: relu(x) a - relu(x) a contributes nothing to
  // f but weighs on every product-of-layers norm.
  const Matrix w0 = Matrix::from_rows({{1.0, -1.0, 1.0, 1.0}, {0.5, -0.5, 0.5, 0.5}});
  const Network plain({w0, Matrix::from_rows({{1.0}, {-1.0}, {0.0}, {0.0}})}, Activation::relu());
  const Network padded({w0, Matrix::from_rows({{1.0}, {-1.0}, {2.0}, {-2.0}})}, Activation::relu());
  const Dataset probe = with_labels(random_inputs(rng, 30, 2), Loss::absolute(), rng);
  const auto emp = DataDistribution::empirical(probe);
  const double fr_err = relative_error(fr_norm_identity(plain, Loss::absolute(), emp),
                                       fr_norm_identity(padded, Loss::absolute(), emp));
  const double spectral_ratio =
      flat_norm(padded, NormSpec::spectral()).value / flat_norm(plain, NormSpec::spectral()).value;
  const double path_ratio = path_norm(padded, 1.0) / path_norm(plain, 1.0);
  r.detail["constructed_fr_rel_err"] = fr_err;
  r.detail["constructed_spectral_ratio"] = spectral_ratio;
  r.detail["constructed_path_ratio"] = path_ratio;
  if (!(spectral_ratio > 1.5 && path_ratio > 1.5) || fr_err > 1e-8) {
    note_failure(r, {{"constructed", true}, {"fr_rel_err", fr_err}, {"spectral_ratio", spectral_ratio},
                     {"path_ratio", path_ratio}});
  }
  ++r.cases;
  finish(r);
  return r;
}

SuiteResult verify_star_shape(std::uint64_t seed) {
  SuiteResult r = start("star_shape");
  std::mt19937_64 rng(seed);
  for (std::size_t depth = 1; depth <= 3; ++depth) {
    RandomNetSpec spec;
    spec.min_depth = spec.max_depth = depth;
    spec.max_width = 8;
    spec.kinds = {ActivationKind::ReLU};
    const Network net = random_network(rng, spec);
    const Dataset data = with_labels(random_inputs(rng, 30, net.input_dim()), Loss::absolute(), rng);
    for (double radius : {0.5, 2.0, 5.0}) {
      const auto c = star_shape_check(net, radius, DataDistribution::empirical(data));
      ++r.cases;
      r.worst = std::max(r.worst, c.rel_err);
      if (c.rel_err > 1e-8) note_failure(r, {{"depth", depth}, {"r", radius}, {"rel_err", c.rel_err}});
    }
  }
  finish(r);
  return r;
}

SuiteResult verify_convex_combination(std::size_t count, std::uint64_t seed) {
  SuiteResult r = start("convex_combination");
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    RandomNetSpec spec;
    spec.max_depth = 3;
    spec.max_width = 6;
    spec.kinds = {ActivationKind::ReLU};
    const Network a0 = random_network(rng, spec);
    spec.min_depth = spec.max_depth = a0.depth();
    spec.input_dim = a0.input_dim();
    const Network b0 = random_network(rng, spec);
    const Dataset data = with_labels(random_inputs(rng, 40, a0.input_dim()), Loss::absolute(), rng);
    const Network a = scale_to_fr(a0, data, uniform(rng, 0.3, 1.0));
    const Network b = scale_to_fr(b0, data, uniform(rng, 0.3, 1.0));
    const double lambda = uniform(rng, 0.0, 1.0);
    const Network c = convex_combine(a, b, lambda);

    double worst = 0.0;
    for (std::size_t k = 0; k < data.size(); ++k) {
      const auto x = data.input(k);
      const double want = lambda * predict(a, x)[0] + (1.0 - lambda) * predict(b, x)[0];
      worst = std::max(worst, std::abs(predict(c, x)[0] - want) / std::max(1.0, std::abs(want)));
    }
    const double fr = fr_norm_identity(c, Loss::absolute(), DataDistribution::empirical(data)) /
                      static_cast<double>(c.depth() + 1);
    const Vector x = input_away_from_kinks(rng, c);
    const Contraction con = output_jacobian_contraction(c, x);
    const double contraction = relative_error(con.total[0], static_cast<double>(c.depth() + 1) * con.output[0]);
    ++r.cases;
    r.worst = std::max(r.worst, worst);
    if (worst > 1e-12 || fr > 1.0 + 1e-9 || contraction > 1e-8) {
      note_failure(r, {{"case", i}, {"output_err", worst}, {"fr_natural", fr}, {"contraction_err", contraction}});
    }
  }
  finish(r);
  return r;
}

SuiteResult verify_large_margin(std::uint64_t seed) {
  SuiteResult r = start("large_margin");
  SyntheticParams sp;
  sp.n = 100;
  sp.dim = 2;
  sp.separation = 4.0;
  sp.spread = 0.5;
  sp.signed_labels = true;
  const Dataset data = make_synthetic(SyntheticKind::TwoBlobs, sp, seed);
  const Network net = init_network({2, 16, 1}, Activation::relu(), seed + 1);
  TrainConfig cfg;
  cfg.loss = Loss::hinge();
  cfg.lr = 0.05;
  cfg.epochs = 50000;
  cfg.grad_tol = 1e-6;
  const TrainResult res = train(net, data, cfg);
  const MarginCheck m = check_large_margin(res.net, data, 1e-6, 1e-3);
  r.cases = 1;
  r.worst = m.min_margin;
  r.detail["status"] = res.history.status;
  r.detail["epochs"] = res.history.epochs.back().epoch;
  r.detail["grad_norm"] = m.grad_norm;
  r.detail["min_margin"] = m.min_margin;
  r.detail["message"] = m.message;
  if (!m.applicable || !m.passed) note_failure(r, {{"message", m.message}});
  finish(r);
  return r;
}

SuiteResult verify_linear_stationarity(std::uint64_t seed) {
  SuiteResult r = start("linear_stationarity");
  SyntheticParams sp;
  sp.n = 200;
  sp.dim = 3;
  const Dataset data = make_synthetic(SyntheticKind::GaussianLinear, sp, seed);
  const Network net = init_network({3, 4, 4, 1}, Activation::linear(), seed + 1);
  TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.epochs = 20000;
  cfg.grad_tol = 1e-12;
  const TrainResult res = train(net, data, cfg);
  const LinearStationarity s = check_linear_stationarity(res.net, data);
  // Natural magnitude of the two terms of <w, X^T X w - X^T Y>.
  Vector xxw(data.dim(), 0.0), xy(data.dim(), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.input(i);
    const double f = dot(x, s.w);
    for (std::size_t k = 0; k < x.size(); ++k) {
      xxw[k] += x[k] * f;
      xy[k] += x[k] * data.label(i);
    }
  }
  const double wn = std::sqrt(dot(s.w, s.w));
  const double magnitude = (std::sqrt(dot(xxw, xxw)) + std::sqrt(dot(xy, xy))) * wn;
  const double normalized = magnitude == 0.0 ? 0.0 : std::abs(s.residual) / magnitude;
  r.cases = 1;
  r.worst = normalized;
  r.detail["grad_norm"] = res.history.epochs.back().grad_norm;
  r.detail["residual"] = s.residual;
  r.detail["residual_over_term_magnitude"] = normalized;
  r.detail["cosine_w_r"] = s.relative;
  if (normalized > 1e-6) note_failure(r, {{"residual_over_term_magnitude", normalized}});

  // The zero first layer is stationary and satisfies the identity trivially.
  std::vector<Matrix> w = net.weights();
  w[0] = Matrix(w[0].rows(), w[0].cols());
  const LinearStationarity zero = check_linear_stationarity(Network(w, Activation::linear()), data);
  ++r.cases;
  if (zero.residual != 0.0) note_failure(r, {{"zero_layer_residual", zero.residual}});
  finish(r);
  return r;
}

SuiteResult verify_rademacher(std::uint64_t seed, std::size_t trials) {
  SuiteResult r = start("rademacher");
  const RademacherEstimate base = linear_fr_rademacher(200, 1.0, Matrix::identity(5), trials, seed);
  r.detail["mean"] = base.mean;
  r.detail["std_error"] = base.std_error;
  r.detail["bound"] = base.bound;
  ++r.cases;
  if (!base.within_bound()) note_failure(r, {{"check", "bound"}, {"mean", base.mean}, {"bound", base.bound}});

  const RademacherEstimate doubled = linear_fr_rademacher(200, 2.0, Matrix::identity(5), trials, seed);
  const double hom = relative_error(doubled.mean, 2.0 * base.mean);
  ++r.cases;
  r.detail["homogeneity_rel_err"] = hom;
  if (hom > 1e-12) note_failure(r, {{"check", "homogeneity"}, {"rel_err", hom}});

  std::vector<RademacherEstimate> by_n;
  for (std::size_t n : {50, 200, 800}) by_n.push_back(linear_fr_rademacher(n, 1.0, Matrix::identity(5), trials, seed));
  auto& scaling = r.detail["sqrt_n_scaling"] = nlohmann::json::array();
  for (std::size_t k = 0; k + 1 < by_n.size(); ++k) {
    // mean_N1 ~ 2 mean_N2 when N2 = 4 N1.
    const double diff = by_n[k].mean - 2.0 * by_n[k + 1].mean;
    const double se = std::sqrt(by_n[k].std_error * by_n[k].std_error + 4.0 * by_n[k + 1].std_error * by_n[k + 1].std_error);
    scaling.push_back({{"N1", by_n[k].n}, {"N2", by_n[k + 1].n}, {"diff", diff}, {"se", se}});
    ++r.cases;
    if (std::abs(diff) > 3.0 * se) note_failure(r, {{"check", "scaling"}, {"N1", by_n[k].n}, {"diff", diff}, {"se", se}});
  }

  // p = 1: E (1/N)|sum eps_i X_i| = sqrt(2 / (pi N)).
  const RademacherEstimate scalar = linear_fr_rademacher(100, 1.0, Matrix::identity(1), trials, seed + 1);
  const double expected = std::sqrt(2.0 / (std::numbers::pi * 100.0));
  ++r.cases;
  r.detail["scalar_mean"] = scalar.mean;
  r.detail["scalar_expected"] = expected;
  if (std::abs(scalar.mean - expected) > 3.0 * scalar.std_error) {
    note_failure(r, {{"check", "scalar_moment"}, {"mean", scalar.mean}, {"expected", expected}});
  }
  finish(r);
  return r;
}

SuiteResult verify_natural_gradient_invariance(std::uint64_t seed) {
  SuiteResult r = start("natural_gradient_invariance");
  const auto inst = reparametrization_instance(seed);
  std::vector<double> gaps;
  for (double lr : {1e-2, 1e-3, 1e-4}) {
    gaps.push_back(reparametrization_gap(inst.theta_model, inst.xi_model, inst.xi_of_theta, inst.theta0, inst.data, lr, 0.5).gap);
  }
  r.detail["gaps"] = gaps;
  for (std::size_t k = 0; k + 1 < gaps.size(); ++k) {
    const double ratio = gaps[k] / gaps[k + 1];
    ++r.cases;
    if (!(ratio >= 8.0)) note_failure(r, {{"check", "shrink"}, {"ratio", ratio}});
  }

  // Linear reparametrization: the discrete iterations agree exactly.
  ScalarModel linear_xi{2, [](auto s, auto x) { return (s[0] - s[1]) * x[0] + 2.0 * s[1] * x[1]; },
                        [](auto, auto x) { return Vector{x[0], -x[0] + 2.0 * x[1]}; }};
  // theta = (xi0 - xi1, 2 xi1), so xi = (t0 + t1 / 2, t1 / 2).
  auto lin_map = [](std::span<const double> t) { return Vector{t[0] + 0.5 * t[1], 0.5 * t[1]}; };
  const double lin_gap = reparametrization_gap(inst.theta_model, linear_xi, lin_map, inst.theta0, inst.data, 1e-2, 0.5).gap;
  r.detail["linear_gap"] = lin_gap;
  ++r.cases;
  if (lin_gap > 1e-10) note_failure(r, {{"check", "linear"}, {"gap", lin_gap}});

  const auto over = overparametrization_instance(seed + 1);
  const auto c = check_overparametrization(over.theta_model, over.xi_model, over.xi_of_theta, over.jacobian,
                                           over.theta0, over.data, 1e-4);
  r.detail["overparam_eigenvalues"] = c.eigenvalues;
  r.detail["overparam_step_mismatch"] = c.step_mismatch;
  ++r.cases;
  r.worst = c.max_eigen_defect;
  if (c.max_eigen_defect > 1e-6 || c.max_imag > 1e-6) note_failure(r, {{"check", "eigenvalues"}, {"defect", c.max_eigen_defect}});
  finish(r);
  return r;
}

SuiteResult verify_finite_differences(std::size_t count, std::uint64_t seed) {
  SuiteResult r = start("finite_differences");
  std::mt19937_64 rng(seed);
  double worst_grad = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const bool ce = i % 2 == 1;
    const Loss loss = ce ? Loss::cross_entropy(3) : Loss::squared();
    RandomNetSpec spec;
    spec.output_dim = loss.output_dim();
    const Network net = random_network(rng, spec);
    // Leave room for the 1e-5 parameter perturbation.
    const Vector x = input_away_from_kinks(rng, net, 1e-3);
    const double y = ce ? static_cast<double>(uniform_index(rng, 0, 2)) : std::normal_distribution<double>()(rng);
    const Vector g = loss_gradient(net, x, y, loss);
    const Vector fd = numerical_gradient(net, x, y, loss);
    double scale = 0.0, err = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      scale = std::max(scale, std::abs(fd[k]));
      err = std::max(err, std::abs(g[k] - fd[k]));
    }
    const double rel = scale == 0.0 ? err : err / scale;
    ++r.cases;
    worst_grad = std::max(worst_grad, rel);
    if (rel > 1e-5) note_failure(r, {{"case", i}, {"check", "gradient"}, {"rel_err", rel}});
  }
  r.detail["worst_gradient_rel_err"] = worst_grad;

  // Second derivative along theta: L(L+1) f, exact for L <= 2 and with an
  // O(h^2) error from L = 3 on.
  double worst_tower = 0.0;
  auto& rates = r.detail["convergence_ratios"] = nlohmann::json::array();
  for (std::size_t depth = 0; depth <= 4; ++depth) {
    RandomNetSpec spec;
    spec.min_depth = spec.max_depth = depth;
    spec.max_width = 8;
    spec.kinds = {ActivationKind::ReLU};
    // A dead ReLU net gives f = 0 and an undefined error ratio; redraw.
    Network net;
    Vector x;
    double f = 0.0;
    for (int attempt = 0; attempt < 100 && std::abs(f) < 1e-2; ++attempt) {
      net = random_network(rng, spec);
      x = input_away_from_kinks(rng, net);
      f = predict(net, x)[0];
    }
    const double want = static_cast<double>(depth * (depth + 1)) * f;
    const double scale = std::max(std::abs(f), 1e-300);
    const double e1 = std::abs(directional_second_derivative(net, x, 1e-2)[0] - want) / scale;
    const double e2 = std::abs(directional_second_derivative(net, x, 5e-3)[0] - want) / scale;
    ++r.cases;
    if (depth >= 3) {
      const double ratio = e1 / e2;
      rates.push_back({{"depth", depth}, {"ratio", ratio}});
      if (!(ratio > 3.5 && ratio < 4.5)) note_failure(r, {{"check", "rate"}, {"depth", depth}, {"ratio", ratio}});
    }
    const double e3 = std::abs(directional_second_derivative(net, x, 1e-4)[0] - want) / scale;
    worst_tower = std::max(worst_tower, e3);
    if (e3 > 1e-4) note_failure(r, {{"check", "tower"}, {"depth", depth}, {"rel_err", e3}});
  }
  r.detail["worst_tower_rel_err"] = worst_tower;
  r.worst = worst_grad;
  finish(r);
  return r;
}

SuiteResult verify_flatness(std::uint64_t seed) {
  SuiteResult r = start("flatness");
  std::mt19937_64 rng(seed);
  RandomNetSpec spec;
  spec.min_depth = 1;
  spec.max_depth = 2;
  spec.max_width = 6;
  spec.kinds = {ActivationKind::ReLU};
  const Network net = random_network(rng, spec);
  const Dataset data = random_inputs(rng, 50, net.input_dim());
  const FlatnessCheck c = flatness_check(net, data, 40, rng());
  r.cases = 1;
  r.worst = c.diff_std_error == 0.0 ? 0.0 : std::abs(c.diff_mean) / c.diff_std_error;
  r.detail["hessian_mean"] = c.hessian_mean;
  r.detail["fr_squared"] = c.fr_squared;
  r.detail["diff_mean"] = c.diff_mean;
  r.detail["diff_std_error"] = c.diff_std_error;
  r.detail["note"] = "Monte-Carlo check, passes when within 3 standard errors";
  if (!c.within_3se) note_failure(r, {{"diff_mean", c.diff_mean}, {"std_error", c.diff_std_error}});
  finish(r);
  return r;
}

std::vector<std::string> verify_suite_names() {
  return {"gradient_structure", "fr_identity",         "norm_comparison",     "rescaling_invariance",
          "star_shape",         "convex_combination",  "large_margin",        "linear_stationarity",
          "rademacher",         "natural_gradient_invariance", "finite_differences", "flatness"};
}

std::vector<SuiteResult> run_verify_suites(const std::vector<std::string>& names, std::size_t count,
                                           std::uint64_t seed, std::size_t threads) {
  std::vector<std::string> selected;
  const auto known = verify_suite_names();
  for (const auto& n : names) {
    if (n == "all") {
      selected = known;
      break;
    }
    if (std::find(known.begin(), known.end(), n) == known.end()) throw InvalidParameter("unknown verify suite '" + n + "'");
    selected.push_back(n);
  }
  if (count == 0) throw InvalidParameter("verify count must be positive");

  auto run_one = [&](const std::string& n) -> SuiteResult {
    if (n == "gradient_structure") return verify_gradient_structure(count, seed);
    if (n == "fr_identity") return verify_fr_identity(count, seed);
    if (n == "norm_comparison") return verify_norm_comparison(count, seed);
    if (n == "rescaling_invariance") return verify_rescaling_invariance(count, seed);
    if (n == "star_shape") return verify_star_shape(seed);
    if (n == "convex_combination") return verify_convex_combination(count, seed);
    if (n == "large_margin") return verify_large_margin(seed);
    if (n == "linear_stationarity") return verify_linear_stationarity(seed);
    if (n == "rademacher") return verify_rademacher(seed, std::max<std::size_t>(100, count * 20));
    if (n == "natural_gradient_invariance") return verify_natural_gradient_invariance(seed);
    if (n == "finite_differences") return verify_finite_differences(count, seed);
    return verify_flatness(seed);
  };

  std::vector<SuiteResult> results(selected.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < selected.size(); k = next++) {
      try {
        results[k] = run_one(selected[k]);
      } catch (const std::exception& e) {
        results[k] = start(selected[k]);
        results[k].detail["error"] = e.what();
        results[k].passed = false;
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, selected.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  return results;
}

nlohmann::json suite_to_json(const SuiteResult& r) {
  return {{"suite", r.name},         {"passed", r.passed}, {"cases", r.cases},
          {"failures", r.failures},  {"worst", r.worst},   {"detail", r.detail}};
}

}  // namespace frcap
