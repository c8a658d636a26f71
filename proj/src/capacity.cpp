#include "frcap/capacity.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include "frcap/autodiff.hpp"
#include "frcap/error.hpp"

namespace frcap {

namespace {

void require_nonempty(const Dataset& data) {
  if (data.size() == 0) throw InvalidParameter("distribution over an empty dataset");
}

void require_scalar_output(const Network& net, const char* what) {
  if (net.output_dim() != 1) {
    throw UnsupportedConfiguration(std::string(what) + " needs a single output unit, network has " +
                                   std::to_string(net.output_dim()));
  }
}

double checked_exponent(double p, const char* what) {
  if (!(p >= 1.0)) throw InvalidParameter(std::string(what) + " exponent must be >= 1");
  return p;
}

std::string format_exponent(double p) {
  if (std::isinf(p)) return "inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, p);
  return std::string(buf, res.ptr);
}

double parse_exponent(const std::string& s) {
  if (s == "inf" || s == "Inf" || s == "infinity") return kInf;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw InvalidParameter("cannot parse norm exponent '" + s + "'");
  }
  return checked_exponent(v, "norm");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

// sum_i d_i^r, with r = inf meaning max_i d_i.
double mask_power_sum(std::span<const double> d, double r) {
  if (std::isinf(r)) {
    double m = 0.0;
    for (double x : d) m = std::max(m, x);
    return m;
  }
  double s = 0.0;
  for (double x : d) s += std::pow(x, r);
  return s;
}

double max_entry(std::span<const double> d) {
  double m = 0.0;
  for (double x : d) m = std::max(m, x);
  return m;
}

// Squared bracket of the data-dependent prefactor for one input.
double prefactor_term(const NormSpec& spec, const ForwardTrace& trace) {
  const auto& x = trace.input();
  const std::size_t last = trace.layers.size() - 1;
  switch (spec.kind) {
    case NormSpec::Kind::Spectral: {
      double v = vec_pnorm(x, 2.0);
      for (std::size_t t = 1; t <= last; ++t) v *= max_entry(trace.layers[t].mask.entries());
      return v * v;
    }
    case NormSpec::Kind::Group: {
      const double ps = conjugate_exponent(spec.p);
      double v = vec_pnorm(x, ps);
      for (std::size_t t = 1; t <= last; ++t) v *= diagonal_induced_norm(trace.layers[t].mask, spec.q, ps);
      return v * v;
    }
    case NormSpec::Kind::Induced: {
      double v = vec_pnorm(x, spec.p);
      for (std::size_t t = 1; t <= last; ++t) v *= diagonal_induced_norm(trace.layers[t].mask, spec.q, spec.p);
      return v * v;
    }
    case NormSpec::Kind::Chain: {
      double v = vec_pnorm(x, spec.chain.front());
      for (std::size_t t = 1; t <= last; ++t) {
        v *= diagonal_induced_norm(trace.layers[t].mask, spec.chain[t], spec.chain[t]);
      }
      return v * v;
    }
    case NormSpec::Kind::Path: {
      // sum over paths of |x_{i0} prod_t d_{t,i_t}|^{q*} factorizes into
      // ||x||_{q*}^{q*} prod_t sum_i d_{t,i}^{q*}.
      const double qs = conjugate_exponent(spec.q);
      if (std::isinf(qs)) {
        double v = vec_pnorm(x, kInf);
        for (std::size_t t = 1; t <= last; ++t) v *= max_entry(trace.layers[t].mask.entries());
        return v * v;
      }
      double s = std::pow(vec_pnorm(x, qs), qs);
      for (std::size_t t = 1; t <= last; ++t) s *= mask_power_sum(trace.layers[t].mask.entries(), qs);
      return std::pow(s, 2.0 / qs);
    }
  }
  return 0.0;
}

void validate_spec(const Network& net, const NormSpec& spec) {
  switch (spec.kind) {
    case NormSpec::Kind::Spectral:
      break;
    case NormSpec::Kind::Group:
    case NormSpec::Kind::Induced:
      checked_exponent(spec.p, "p");
      checked_exponent(spec.q, "q");
      break;
    case NormSpec::Kind::Path:
      checked_exponent(spec.q, "path");
      break;
    case NormSpec::Kind::Chain:
      if (spec.chain.size() != net.num_layers() + 1) {
        throw InvalidParameter("chain needs " + std::to_string(net.num_layers() + 1) + " exponents for depth " +
                               std::to_string(net.depth()) + ", got " + std::to_string(spec.chain.size()));
      }
      for (double p : spec.chain) checked_exponent(p, "chain");
      break;
  }
}

double output_inner(const Loss& loss, std::span<const double> f, double y) {
  const Vector g = loss_output_grad(loss, f, y);
  return dot(g, f);
}

double sample_laplace(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  double v = u(rng);
  while (v == -0.5) v = u(rng);
  return -scale * (v < 0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::abs(v));
}

}  // namespace

double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale == 0.0) return 0.0;
  return std::abs(a - b) / scale;
}

// ---------------------------------------------------------------------------
// Distributions

DataDistribution DataDistribution::empirical(const Dataset& data) { return DataDistribution(Mode::Empirical, data); }

DataDistribution DataDistribution::model_sampled(const Dataset& data, std::size_t samples_per_input,
                                                 std::uint64_t seed, double noise) {
  if (samples_per_input == 0) throw InvalidParameter("samples_per_input must be positive");
  if (!(noise > 0.0)) throw InvalidParameter("model noise must be positive");
  DataDistribution d(Mode::ModelSampled, data);
  d.samples_ = samples_per_input;
  d.seed_ = seed;
  d.noise_ = noise;
  return d;
}

DataDistribution DataDistribution::model_enumerated(const Dataset& data) {
  return DataDistribution(Mode::ModelEnumerated, data);
}

std::vector<WeightedSample> DataDistribution::materialize(const Network& net, const Loss& loss) const {
  const Dataset& data = *data_;
  require_nonempty(data);
  const double n = static_cast<double>(data.size());
  std::vector<WeightedSample> out;

  if (mode_ == Mode::Empirical) {
    out.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.push_back({i, data.label(i), 1.0 / n});
    return out;
  }

  if (mode_ == Mode::ModelEnumerated) {
    if (loss.kind != LossKind::CrossEntropy) {
      throw UnsupportedConfiguration("label enumeration needs a cross-entropy loss");
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Vector g = softmax(predict(net, data.input(i)));
      for (std::size_t y = 0; y < g.size(); ++y) out.push_back({i, static_cast<double>(y), g[y] / n});
    }
    return out;
  }

  if (loss.kind == LossKind::Hinge) {
    throw UnsupportedConfiguration("hinge loss has no predictive distribution to sample labels from");
  }
  std::mt19937_64 rng(seed_);
  const double w = 1.0 / (n * static_cast<double>(samples_));
  out.reserve(data.size() * samples_);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector f = predict(net, data.input(i));
    for (std::size_t s = 0; s < samples_; ++s) {
      double y = 0.0;
      switch (loss.kind) {
        case LossKind::CrossEntropy: {
          const Vector g = softmax(f);
          std::discrete_distribution<std::size_t> pick(g.begin(), g.end());
          y = static_cast<double>(pick(rng));
          break;
        }
        case LossKind::Squared:
          y = f[0] + noise_ * std::normal_distribution<double>(0.0, 1.0)(rng);
          break;
        case LossKind::Absolute:
          y = f[0] + sample_laplace(rng, noise_);
          break;
        case LossKind::Hinge:
          break;
      }
      out.push_back({i, y, w});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fisher-Rao norm

double fr_norm_identity(const Network& net, const Loss& loss, const std::vector<WeightedSample>& samples,
                        const Dataset& data) {
  if (samples.empty()) throw InvalidParameter("Fisher-Rao norm over an empty distribution");
  double acc = 0.0;
  for (const auto& s : samples) {
    const double c = output_inner(loss, predict(net, data.input(s.row)), s.label);
    acc += s.weight * c * c;
  }
  return static_cast<double>(net.depth() + 1) * std::sqrt(acc);
}

double fr_norm_identity(const Network& net, const Loss& loss, const DataDistribution& dist) {
  return fr_norm_identity(net, loss, dist.materialize(net, loss), dist.data());
}

double fr_norm_fisher(const Network& net, const Loss& loss, const std::vector<WeightedSample>& samples,
                      const Dataset& data) {
  if (samples.empty()) throw InvalidParameter("Fisher-Rao norm over an empty distribution");
  const Vector theta = flatten(net);
  double acc = 0.0;
  for (const auto& s : samples) {
    const double c = dot(loss_gradient(net, data.input(s.row), s.label, loss), theta);
    acc += s.weight * c * c;
  }
  return std::sqrt(acc);
}

double fr_norm_fisher(const Network& net, const Loss& loss, const DataDistribution& dist) {
  return fr_norm_fisher(net, loss, dist.materialize(net, loss), dist.data());
}

double fr_norm_crossentropy(const Network& net, const Dataset& data, CrossEntropyVariant variant) {
  require_nonempty(data);
  const std::size_t k = net.output_dim();
  if (k < 2) throw UnsupportedConfiguration("cross-entropy Fisher-Rao norm needs K >= 2 outputs");
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector f = predict(net, data.input(i));
    const Vector g = softmax(f);
    const double gf = dot(g, f);
    if (variant == CrossEntropyVariant::Empirical) {
      const double y = data.label(i);
      if (y != std::floor(y) || y < 0.0 || y >= static_cast<double>(k)) {
        throw InvalidParameter("label " + std::to_string(y) + " out of range for " + std::to_string(k) +
                               " classes");
      }
      const double c = gf - f[static_cast<std::size_t>(y)];
      acc += c * c;
    } else {
      for (std::size_t y = 0; y < k; ++y) {
        const double c = gf - f[y];
        acc += g[y] * c * c;
      }
    }
  }
  const double l1 = static_cast<double>(net.depth() + 1);
  return l1 * std::sqrt(acc / static_cast<double>(data.size()));
}

// ---------------------------------------------------------------------------
// Flat norms

std::string NormSpec::label() const {
  switch (kind) {
    case Kind::Spectral: return "spectral";
    case Kind::Group: return "group:" + format_exponent(p) + "," + format_exponent(q);
    case Kind::Induced: return "induced:" + format_exponent(p) + "," + format_exponent(q);
    case Kind::Path: return "path:" + format_exponent(q);
    case Kind::Chain: {
      std::string s = "chain:";
      for (std::size_t i = 0; i < chain.size(); ++i) s += (i ? "," : "") + format_exponent(chain[i]);
      return s;
    }
  }
  return "";
}

std::string NormSpec::key() const {
  std::string s = label();
  std::replace(s.begin(), s.end(), ':', '_');
  std::replace(s.begin(), s.end(), ',', '_');
  return s;
}

NormSpec NormSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  std::vector<double> args;
  if (colon != std::string::npos) {
    for (const auto& part : split(text.substr(colon + 1), ',')) args.push_back(parse_exponent(part));
  }
  auto want = [&](std::size_t n) {
    if (args.size() != n) {
      throw InvalidParameter("norm '" + text + "' needs " + std::to_string(n) + " exponent(s)");
    }
  };
  if (head == "spectral") {
    want(0);
    return spectral();
  }
  if (head == "group") {
    want(2);
    return group(args[0], args[1]);
  }
  if (head == "induced") {
    want(2);
    return induced(args[0], args[1]);
  }
  if (head == "path") {
    want(1);
    return path(args[0]);
  }
  if (head == "chain") {
    if (args.empty()) throw InvalidParameter("chain norm needs exponents");
    return chain_of(args);
  }
  throw InvalidParameter("unknown norm '" + text + "'");
}

double path_norm(const Network& net, double q) {
  checked_exponent(q, "path");
  Vector acc(net.input_dim(), 1.0);
  for (const auto& w : net.weights()) {
    Vector next(w.cols(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i) {
      if (acc[i] == 0.0) continue;
      for (std::size_t j = 0; j < w.cols(); ++j) {
        const double a = std::abs(w(i, j));
        if (std::isinf(q)) {
          next[j] = std::max(next[j], acc[i] * a);
        } else {
          next[j] += acc[i] * std::pow(a, q);
        }
      }
    }
    acc = std::move(next);
  }
  if (std::isinf(q)) return max_entry(acc);
  double total = 0.0;
  for (double v : acc) total += v;
  return std::pow(total, 1.0 / q);
}

FlatNorm flat_norm(const Network& net, const NormSpec& spec) {
  validate_spec(net, spec);
  FlatNorm out{1.0, true};
  switch (spec.kind) {
    case NormSpec::Kind::Spectral:
      for (const auto& w : net.weights()) out.value *= spectral_norm(w).value;
      break;
    case NormSpec::Kind::Group:
      for (const auto& w : net.weights()) out.value *= group_norm(w, spec.p, spec.q);
      break;
    case NormSpec::Kind::Induced:
      for (const auto& w : net.weights()) {
        const InducedNorm n = induced_norm(w, spec.p, spec.q);
        out.value *= n.value;
        out.exact = out.exact && n.exact;
      }
      break;
    case NormSpec::Kind::Chain:
      for (std::size_t t = 0; t < net.num_layers(); ++t) {
        const InducedNorm n = induced_norm(net.weight(t), spec.chain[t], spec.chain[t + 1]);
        out.value *= n.value;
        out.exact = out.exact && n.exact;
      }
      break;
    case NormSpec::Kind::Path:
      out.value = path_norm(net, spec.q);
      break;
  }
  return out;
}

double data_prefactor(const Network& net, const NormSpec& spec, const Dataset& data) {
  validate_spec(net, spec);
  require_nonempty(data);
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) acc += prefactor_term(spec, forward(net, data.input(i)));
  return std::sqrt(acc / static_cast<double>(data.size()));
}

// ---------------------------------------------------------------------------
// Reports

bool NormReport::all_verdicts() const {
  return std::all_of(comparisons.begin(), comparisons.end(),
                     [](const NormComparison& c) { return !c.compared || !c.exact || c.verdict; });
}

bool NormReport::verdicts_consistent() const {
  if (!fr_absolute) return true;
  const double lhs = *fr_absolute / static_cast<double>(depth + 1);
  return std::all_of(comparisons.begin(), comparisons.end(), [&](const NormComparison& c) {
    if (!c.compared) return true;
    return c.verdict == (lhs <= c.prefactor * c.flat + kComparisonSlack);
  });
}

std::vector<NormSpec> default_comparison_specs(const Network& net) {
  std::vector<NormSpec> specs{NormSpec::spectral(),      NormSpec::group(1, 1),        NormSpec::group(2, 2),
                              NormSpec::group(1, kInf),  NormSpec::path(1),            NormSpec::path(2),
                              NormSpec::induced(1, 2),   NormSpec::induced(2, 2),      NormSpec::induced(2, kInf)};
  const std::size_t n = net.num_layers() + 1;
  const double cycle[3] = {2.0, 1.0, kInf};
  for (double p : {1.0, 2.0, kInf}) specs.push_back(NormSpec::chain_of(std::vector<double>(n, p)));
  std::vector<double> mixed(n);
  for (std::size_t i = 0; i < n; ++i) mixed[i] = cycle[i % 3];
  specs.push_back(NormSpec::chain_of(mixed));
  return specs;
}

namespace {

std::vector<NormComparison> compare(const Network& net, const Dataset& data, const std::vector<NormSpec>& specs,
                                    std::optional<double> fr_abs) {
  std::vector<NormComparison> out;
  const double lhs = fr_abs ? *fr_abs / static_cast<double>(net.depth() + 1) : 0.0;
  std::size_t widest = 0;
  const auto dims = net.dims();
  for (std::size_t t = 1; t + 1 < dims.size(); ++t) widest = std::max(widest, dims[t]);

  for (const auto& spec : specs) {
    NormComparison c;
    c.spec = spec;
    const FlatNorm flat = flat_norm(net, spec);
    c.flat = flat.value;
    c.exact = flat.exact;
    if (spec.kind == NormSpec::Kind::Group && widest > 0) {
      const double e = std::max(0.0, 1.0 / conjugate_exponent(spec.p) - 1.0 / spec.q);
      c.combinatorial_factor = std::pow(std::pow(static_cast<double>(widest), e), static_cast<double>(net.depth()));
    }
    if (fr_abs) {
      c.prefactor = data_prefactor(net, spec, data);
      c.triple_bar = c.prefactor * c.flat;
      c.slack = c.triple_bar - lhs;
      c.verdict = lhs <= c.triple_bar + kComparisonSlack;
    } else {
      c.compared = false;
    }
    out.push_back(std::move(c));
  }
  return out;
}

NormReport report_skeleton(const Network& net, const Dataset& data, const Loss& loss) {
  NormReport r;
  r.depth = net.depth();
  r.dims = net.dims();
  r.loss = loss.name();
  r.dataset = data.provenance;
  r.l2 = vec_pnorm(flatten(net), 2.0);
  return r;
}

}  // namespace

NormReport norm_comparison_report(const Network& net, const Dataset& data, const std::vector<NormSpec>& specs) {
  require_scalar_output(net, "norm comparison");
  require_nonempty(data);
  const Loss loss = Loss::absolute();
  NormReport r = report_skeleton(net, data, loss);
  const auto dist = DataDistribution::empirical(data);
  const auto samples = dist.materialize(net, loss);
  r.fr_identity = fr_norm_identity(net, loss, samples, data);
  r.fr_fisher = fr_norm_fisher(net, loss, samples, data);
  r.fr_natural = r.fr_identity / static_cast<double>(net.depth() + 1);
  r.fr_absolute = r.fr_identity;
  r.comparisons = compare(net, data, specs.empty() ? default_comparison_specs(net) : specs, r.fr_absolute);
  return r;
}

NormReport compute_norm_report(const Network& net, const Dataset& data, const Loss& loss,
                               const std::vector<NormSpec>& specs) {
  require_nonempty(data);
  if (loss.output_dim() != net.output_dim()) {
    throw ShapeError("loss " + loss.name() + " expects " + std::to_string(loss.output_dim()) +
                     " outputs, network has " + std::to_string(net.output_dim()));
  }
  NormReport r = report_skeleton(net, data, loss);
  const auto dist = DataDistribution::empirical(data);
  const auto samples = dist.materialize(net, loss);
  r.fr_identity = fr_norm_identity(net, loss, samples, data);
  r.fr_fisher = fr_norm_fisher(net, loss, samples, data);
  r.fr_natural = r.fr_identity / static_cast<double>(net.depth() + 1);
  if (loss.kind == LossKind::CrossEntropy) {
    r.fr_empirical_ce = fr_norm_crossentropy(net, data, CrossEntropyVariant::Empirical);
    r.fr_model_ce = fr_norm_crossentropy(net, data, CrossEntropyVariant::Model);
  }
  if (net.output_dim() == 1) {
    const Loss abs = Loss::absolute();
    r.fr_absolute = fr_norm_identity(net, abs, DataDistribution::empirical(data));
  }
  r.comparisons = compare(net, data, specs.empty() ? default_comparison_specs(net) : specs, r.fr_absolute);
  return r;
}

namespace {

nlohmann::json number_or_null(std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string csv_number(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string csv_optional(std::optional<double> v) { return v ? csv_number(*v) : ""; }

std::string join_dims(const std::vector<std::size_t>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "x" : "") + std::to_string(dims[i]);
  return s;
}

}  // namespace

nlohmann::json norm_report_to_json(const NormReport& r) {
  nlohmann::json j;
  j["schema"] = 1;
  j["depth"] = r.depth;
  j["dims"] = r.dims;
  j["loss"] = r.loss;
  j["dataset"] = r.dataset;
  j["seed"] = r.seed;
  j["fr_identity"] = r.fr_identity;
  j["fr_fisher"] = r.fr_fisher;
  j["fr_natural"] = r.fr_natural;
  j["fr_empirical_ce"] = number_or_null(r.fr_empirical_ce);
  j["fr_model_ce"] = number_or_null(r.fr_model_ce);
  j["fr_absolute"] = number_or_null(r.fr_absolute);
  j["l2"] = r.l2;
  auto& comps = j["comparisons"] = nlohmann::json::array();
  for (const auto& c : r.comparisons) {
    nlohmann::json e;
    e["norm"] = c.spec.label();
    e["flat"] = c.flat;
    e["exact"] = c.exact;
    e["compared"] = c.compared;
    if (c.compared) {
      e["prefactor"] = c.prefactor;
      e["triple_bar"] = c.triple_bar;
      e["slack"] = c.slack;
      e["verdict"] = c.verdict;
    }
    e["combinatorial_factor"] = number_or_null(c.combinatorial_factor);
    comps.push_back(std::move(e));
  }
  j["all_verdicts"] = r.all_verdicts();
  return j;
}

std::vector<std::string> norm_report_csv_header(const NormReport& r) {
  std::vector<std::string> h{"depth",       "dims",        "loss",        "dataset",         "seed",
                             "fr_identity", "fr_fisher",   "fr_natural",  "fr_empirical_ce", "fr_model_ce",
                             "fr_absolute", "l2"};
  for (const auto& c : r.comparisons) {
    const std::string k = c.spec.key();
    h.push_back(k + "_flat");
    h.push_back(k + "_prefactor");
    h.push_back(k + "_triple_bar");
    h.push_back(k + "_verdict");
  }
  return h;
}

std::vector<std::string> norm_report_csv_row(const NormReport& r) {
  std::vector<std::string> row{std::to_string(r.depth),
                               join_dims(r.dims),
                               r.loss,
                               r.dataset,
                               std::to_string(r.seed),
                               csv_number(r.fr_identity),
                               csv_number(r.fr_fisher),
                               csv_number(r.fr_natural),
                               csv_optional(r.fr_empirical_ce),
                               csv_optional(r.fr_model_ce),
                               csv_optional(r.fr_absolute),
                               csv_number(r.l2)};
  for (const auto& c : r.comparisons) {
    row.push_back(csv_number(c.flat));
    row.push_back(c.compared ? csv_number(c.prefactor) : "");
    row.push_back(c.compared ? csv_number(c.triple_bar) : "");
    row.push_back(c.compared ? (c.verdict ? "1" : "0") : "");
  }
  return row;
}

// ---------------------------------------------------------------------------
// Geometry checks

StarShapeCheck star_shape_check(const Network& net, double r, const DataDistribution& dist) {
  if (!(r > 0.0)) throw InvalidParameter("star-shape radius must be positive");
  require_scalar_output(net, "star-shape check");
  const Loss loss = Loss::absolute();
  StarShapeCheck out;
  const Network scaled = net.scaled(r);
  out.lhs = fr_norm_identity(scaled, loss, dist);
  out.rhs = std::pow(r, static_cast<double>(net.depth() + 1)) * fr_norm_identity(net, loss, dist);
  out.rel_err = relative_error(out.lhs, out.rhs);
  return out;
}

FlatnessCheck flatness_check(const Network& net, const Dataset& data, std::size_t samples_per_input,
                             std::uint64_t seed, double h) {
  require_scalar_output(net, "flatness check");
  if (!(h > 0.0)) throw InvalidParameter("step h must be positive");
  const Loss loss = Loss::squared();
  const auto dist = DataDistribution::model_sampled(data, samples_per_input, seed);
  const auto samples = dist.materialize(net, loss);
  const Vector theta = flatten(net);
  const Network up = net.scaled(1.0 + h);
  const Network down = net.scaled(1.0 - h);

  std::vector<double> diffs;
  diffs.reserve(samples.size());
  FlatnessCheck out;
  for (const auto& s : samples) {
    const auto x = data.input(s.row);
    const double mid = loss_value(loss, predict(net, x), s.label);
    const double hess =
        (loss_value(loss, predict(up, x), s.label) - 2.0 * mid + loss_value(loss, predict(down, x), s.label)) /
        (h * h);
    const double c = dot(loss_gradient(net, x, s.label, loss), theta);
    out.hessian_mean += hess;
    out.fr_squared += c * c;
    diffs.push_back(hess - c * c);
  }
  const double n = static_cast<double>(samples.size());
  out.samples = samples.size();
  out.hessian_mean /= n;
  out.fr_squared /= n;
  double mean = 0.0;
  for (double d : diffs) mean += d;
  mean /= n;
  double var = 0.0;
  for (double d : diffs) var += (d - mean) * (d - mean);
  var /= std::max(1.0, n - 1.0);
  out.diff_mean = mean;
  out.diff_std_error = std::sqrt(var / n);
  out.within_3se = std::abs(mean) <= 3.0 * out.diff_std_error;
  return out;
}

}  // namespace frcap
