#include "frcap/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string_view>
#include <thread>

#include "frcap/autodiff.hpp"
#include "frcap/error.hpp"
#include "frcap/json_schema.hpp"
#include "frcap/rademacher.hpp"
#include "frcap/verify.hpp"

namespace frcap::detail {
extern const std::string_view kConfigSchemaText;
extern const std::string_view kNetworkSchemaText;
}  // namespace frcap::detail

namespace frcap {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Small defaults so every experiment finishes in seconds on a laptop.
json base_defaults() {
  json train = train_config_to_json(TrainConfig{});
  train.erase("seed");  // derived from the root seed unless given
  train.erase("classes");
  train["lr"] = 0.05;
  train["epochs"] = 200;
  train["loss"] = "cross_entropy";

  return {
      {"schema", 1},
      {"seed", 0},
      {"threads", 1},
      {"output_dir", "frcap-out"},
      {"dataset",
       {{"source", "synthetic"},
        {"kind", "two_blobs"},
        {"n", 200},
        {"dim", 2},
        {"noise", 0.1},
        {"separation", 4.0},
        {"spread", 1.0},
        {"signed_labels", false},
        {"pieces", 6},
        {"covariance", nullptr},
        {"weights", nullptr},
        {"path", ""},
        {"label_column", "label"},
        {"classes", 0},
        {"images", ""},
        {"labels", ""},
        {"limit", 0},
        {"label_noise", 0.0},
        {"test_fraction", 0.25}}},
      {"network",
       {{"hidden", {16, 16}},
        {"activation", "relu"},
        {"alpha", 0.01},
        {"output_activation", "linear"},
        {"path", nullptr}}},
      {"train", train},
      {"norms", json::array()},
      {"verify", {{"suites", {"all"}}, {"count", 200}}},
      {"rademacher",
       {{"p", 5}, {"N", 200}, {"gamma", 1.0}, {"trials", 10000}, {"covariance", "identity"}, {"grid", nullptr}}},
      {"sweep", {{"parameter", "width"}, {"values", {8, 16, 32, 64}}, {"width", 16}, {"depth", 2}}},
      {"conditioning",
       {{"optimizers", {"sgd", "adam", "natural_gradient"}},
        {"lr", {{"sgd", 0.05}, {"momentum", 0.01}, {"adam", 0.01}, {"natural_gradient", 0.003}}}}},
  };
}

std::string join_errors(const std::string& what, const std::vector<std::string>& errors) {
  std::string msg = what;
  for (const auto& e : errors) msg += "\n  " + e;
  return msg;
}

void require_valid(const json& doc, const std::string& what) {
  const auto errors = validate_against_schema(doc, config_schema());
  if (!errors.empty()) throw ValidationError(join_errors(what + " does not match the config schema:", errors));
}

std::size_t size_at(const json& j, const char* key) { return j.at(key).get<std::size_t>(); }

Matrix matrix_from_json(const json& rows, const std::string& what) {
  const std::size_t r = rows.size();
  const std::size_t c = rows.at(0).size();
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    if (rows[i].size() != c) throw ValidationError(what + " is ragged");
    for (std::size_t j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
  }
  return m;
}

// --- run plumbing ----------------------------------------------------------

struct Prepared {
  Dataset train;
  Dataset test;
  Loss loss;
  json seeds;
};

Prepared prepare(const ExperimentConfig& cfg, std::optional<double> label_noise = std::nullopt) {
  const json& ds = cfg.doc.at("dataset");
  Dataset full = build_dataset(ds, cfg.seed);
  Prepared p;
  const double tf = ds.at("test_fraction").get<double>();
  if (tf > 0.0) {
    Split s = train_test_split(full, tf, derive_seed(cfg.seed, SeedStream::Split));
    p.train = std::move(s.train);
    p.test = std::move(s.test);
  } else {
    p.train = std::move(full);
  }
  const double alpha = label_noise.value_or(ds.at("label_noise").get<double>());
  if (alpha > 0.0) {
    if (p.train.num_classes < 2) throw ValidationError("label_noise needs a classification dataset");
    // Only training labels are corrupted; the held-out split keeps true labels.
    p.train = corrupt_labels(p.train, alpha, derive_seed(cfg.seed, SeedStream::Corruption));
  }
  p.loss = loss_from_config(cfg.doc, p.train);
  p.seeds = {{"root", cfg.seed},
             {"data", derive_seed(cfg.seed, SeedStream::Data)},
             {"split", derive_seed(cfg.seed, SeedStream::Split)},
             {"corruption", derive_seed(cfg.seed, SeedStream::Corruption)},
             {"init", derive_seed(cfg.seed, SeedStream::Init)},
             {"train", cfg.doc.at("train").contains("seed") ? cfg.doc["train"]["seed"].get<std::uint64_t>()
                                                             : derive_seed(cfg.seed, SeedStream::Train)}};
  return p;
}

Network initial_network(const ExperimentConfig& cfg, const Prepared& p, const std::vector<std::size_t>& hidden,
                        std::uint64_t point = 0) {
  const json& nj = cfg.doc.at("network");
  if (nj.contains("path") && nj["path"].is_string()) {
    Network net = load_network(nj["path"].get<std::string>());
    if (net.input_dim() != p.train.dim()) {
      throw ValidationError("network input dimension " + std::to_string(net.input_dim()) +
                            " does not match the dataset dimension " + std::to_string(p.train.dim()));
    }
    if (net.output_dim() != p.loss.output_dim()) {
      throw ValidationError("network has " + std::to_string(net.output_dim()) + " outputs, loss " + p.loss.name() +
                            " needs " + std::to_string(p.loss.output_dim()));
    }
    return net;
  }
  const double alpha = nj.at("alpha").get<double>();
  const Activation hid = Activation::parse(nj.at("activation").get<std::string>(), alpha);
  const Activation out = Activation::parse(nj.at("output_activation").get<std::string>(), alpha);
  std::vector<std::size_t> dims{p.train.dim()};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(p.loss.output_dim());
  return init_network(dims, hid, derive_seed(cfg.seed, SeedStream::Init, point), out);
}

std::vector<std::size_t> configured_hidden(const ExperimentConfig& cfg) {
  return cfg.doc.at("network").at("hidden").get<std::vector<std::size_t>>();
}

TrainConfig train_config(const ExperimentConfig& cfg, const Loss& loss) {
  json tj = cfg.doc.at("train");
  if (!tj.contains("seed")) tj["seed"] = derive_seed(cfg.seed, SeedStream::Train);
  tj["classes"] = loss.classes;
  TrainConfig tc = train_config_from_json(tj);
  tc.loss = loss;
  return tc;
}

json optional_number(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? json(*v) : json(nullptr);
}

std::string csv_optional(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

// Train/test metrics of a fitted network.
struct Metrics {
  double train_loss = 0.0;
  std::optional<double> test_loss;
  std::optional<double> train_acc;
  std::optional<double> test_acc;
  std::optional<double> gen_gap;  // train minus test accuracy
  std::optional<double> loss_gap;  // test minus train loss
};

Metrics evaluate(const Network& net, const Prepared& p) {
  Metrics m;
  m.train_loss = mean_loss(net, p.train, p.loss);
  m.train_acc = accuracy(net, p.train);
  if (p.test.size() > 0) {
    m.test_loss = mean_loss(net, p.test, p.loss);
    m.test_acc = accuracy(net, p.test);
    m.loss_gap = *m.test_loss - m.train_loss;
    if (m.train_acc && m.test_acc) m.gen_gap = *m.train_acc - *m.test_acc;
  }
  return m;
}

json metrics_json(const Metrics& m) {
  return {{"train_loss", optional_number(m.train_loss)}, {"test_loss", optional_number(m.test_loss)},
          {"train_accuracy", optional_number(m.train_acc)}, {"test_accuracy", optional_number(m.test_acc)},
          {"generalization_gap", optional_number(m.gen_gap)}, {"loss_gap", optional_number(m.loss_gap)}};
}

// Empirical FR under the training loss: the cross-entropy closed form when
// available, the identity form over observed labels otherwise.
double empirical_fr(const NormReport& r) { return r.fr_empirical_ce.value_or(r.fr_identity); }

NormReport report_for(const Network& net, const Prepared& p, const ExperimentConfig& cfg) {
  NormReport r = compute_norm_report(net, p.train, p.loss, norm_specs_from_config(cfg.doc));
  r.seed = cfg.seed;
  return r;
}

json base_summary(const ExperimentConfig& cfg) {
  return {{"schema", 1}, {"experiment", cfg.experiment}, {"config", cfg.doc},
          {"defaults_note", "training defaults are small-scale choices of this tool"}};
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
  return (fs::path(cfg.output_dir) / name).string();
}

// Column-union CSV: rows given as (column, value) pairs; columns appear in
// first-seen order and missing cells stay empty.
void write_union_csv(const std::string& path, const std::vector<std::vector<std::pair<std::string, std::string>>>& rows) {
  std::vector<std::string> header;
  for (const auto& r : rows)
    for (const auto& [k, _] : r)
      if (std::find(header.begin(), header.end(), k) == header.end()) header.push_back(k);
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    std::vector<std::string> line(header.size());
    for (const auto& [k, v] : r) line[std::find(header.begin(), header.end(), k) - header.begin()] = v;
    cells.push_back(std::move(line));
  }
  write_csv_file(path, header, cells);
}

void append_report_cells(std::vector<std::pair<std::string, std::string>>& row, const NormReport& r) {
  const auto h = norm_report_csv_header(r);
  const auto v = norm_report_csv_row(r);
  for (std::size_t i = 0; i < h.size(); ++i) row.emplace_back(h[i], v[i]);
  const double units = static_cast<double>(r.depth + 1);
  row.emplace_back("fr_empirical_natural", format_number(empirical_fr(r) / units));
  row.emplace_back("fr_model_natural", r.fr_model_ce ? format_number(*r.fr_model_ce / units) : "");
}

std::optional<double> flat_norm_from(const NormReport& r, const std::string& label) {
  for (const auto& c : r.comparisons)
    if (c.spec.label() == label) return c.flat;
  return std::nullopt;
}

template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
}

// --- experiments -----------------------------------------------------------

RunReport run_train(const ExperimentConfig& cfg) {
  const Prepared p = prepare(cfg);
  const TrainConfig tc = train_config(cfg, p.loss);
  const TrainResult res = train(initial_network(cfg, p, configured_hidden(cfg)), p.train, tc);

  RunReport out;
  write_csv_file(out_path(cfg, "history.csv"), res.history.csv_header(), res.history.csv_rows());
  save_network(res.net, out_path(cfg, "network.json"));
  json s = base_summary(cfg);
  s["seeds"] = p.seeds;
  s["history"] = res.history.summary();
  s["metrics"] = metrics_json(evaluate(res.net, p));
  if (res.history.status != "diverged") s["norms"] = norm_report_to_json(report_for(res.net, p, cfg));
  write_json_file(out_path(cfg, "summary.json"), s);
  out.files = {"history.csv", "network.json", "summary.json"};
  out.ok = res.history.status != "diverged";
  out.message = res.history.status + (res.history.diagnostic.empty() ? "" : ": " + res.history.diagnostic);
  out.summary = s;
  return out;
}

// The network from network.path, or one trained under the config.
std::pair<Network, json> network_for_analysis(const ExperimentConfig& cfg, const Prepared& p) {
  const json& nj = cfg.doc.at("network");
  if (nj.contains("path") && nj["path"].is_string()) {
    return {initial_network(cfg, p, {}), json{{"source", nj["path"]}}};
  }
  const TrainResult res = train(initial_network(cfg, p, configured_hidden(cfg)), p.train, train_config(cfg, p.loss));
  json info{{"source", "trained"}, {"history", res.history.summary()}};
  if (res.history.status == "diverged") throw RunFailure("training diverged: " + res.history.diagnostic);
  return {res.net, info};
}

RunReport run_norms(const ExperimentConfig& cfg) {
  const Prepared p = prepare(cfg);
  const auto [net, info] = network_for_analysis(cfg, p);
  const NormReport r = report_for(net, p, cfg);
  json s = base_summary(cfg);
  s["seeds"] = p.seeds;
  s["network"] = info;
  s["report"] = norm_report_to_json(r);
  s["fr_empirical_natural"] = empirical_fr(r) / static_cast<double>(r.depth + 1);
  write_json_file(out_path(cfg, "norms.json"), s);
  write_csv_file(out_path(cfg, "norms.csv"), norm_report_csv_header(r), {norm_report_csv_row(r)});
  RunReport out;
  out.files = {"norms.json", "norms.csv"};
  // The comparison verdicts are facts about the bound; a violated exact one
  // is a failure of the run, not of the config.
  out.ok = r.all_verdicts();
  out.message = out.ok ? "all comparison verdicts hold" : "a norm comparison verdict failed";
  out.summary = s;
  return out;
}

RunReport run_verify(const ExperimentConfig& cfg) {
  const json& vj = cfg.doc.at("verify");
  std::vector<SuiteResult> results;
  try {
    results = run_verify_suites(vj.at("suites").get<std::vector<std::string>>(), size_at(vj, "count"), cfg.seed,
                                cfg.threads);
  } catch (const InvalidParameter& e) {
    throw ValidationError(e.what());
  }
  json s = base_summary(cfg);
  s["suites"] = json::array();
  std::vector<std::vector<std::string>> rows;
  RunReport out;
  for (const auto& r : results) {
    s["suites"].push_back(suite_to_json(r));
    rows.push_back({r.name, r.passed ? "1" : "0", std::to_string(r.cases), std::to_string(r.failures),
                    format_number(r.worst)});
    out.ok = out.ok && r.passed;
    if (!r.passed) out.message += (out.message.empty() ? "failed suites: " : ", ") + r.name;
  }
  s["all_passed"] = out.ok;
  write_json_file(out_path(cfg, "verify.json"), s);
  write_csv_file(out_path(cfg, "verify.csv"), {"suite", "passed", "cases", "failures", "worst"}, rows);
  out.files = {"verify.json", "verify.csv"};
  out.summary = s;
  return out;
}

RunReport run_rademacher(const ExperimentConfig& cfg) {
  const json& rj = cfg.doc.at("rademacher");
  const std::size_t trials = size_at(rj, "trials");
  std::vector<RademacherEstimate> ests;
  if (rj.contains("grid") && rj["grid"].is_object()) {
    std::vector<SweepPoint> grid;
    for (auto p : rj["grid"]["p"])
      for (auto n : rj["grid"]["N"])
        for (auto g : rj["grid"]["gamma"]) grid.push_back({p.get<std::size_t>(), n.get<std::size_t>(), g.get<double>()});
    ests = rademacher_sweep(grid, trials, cfg.seed, cfg.threads);
  } else {
    Matrix cov;
    std::string id;
    const json& c = rj.at("covariance");
    if (c.is_string() && c.get<std::string>() == "identity") {
      cov = Matrix::identity(size_at(rj, "p"));
      id = "identity";
    } else if (c.is_string()) {
      const Dataset d = build_dataset(cfg.doc.at("dataset"), cfg.seed);
      if (!d.covariance) throw ValidationError("covariance \"dataset\" needs a generator that records it (gaussian_linear)");
      cov = *d.covariance;
      id = "dataset";
    } else {
      cov = matrix_from_json(c, "rademacher.covariance");
      id = "explicit";
    }
    try {
      ests.push_back(linear_fr_rademacher(size_at(rj, "N"), rj.at("gamma").get<double>(), cov, trials, cfg.seed,
                                          cfg.threads, id));
    } catch (const DecompositionError& e) {
      throw ValidationError(std::string("rademacher covariance: ") + e.what());
    } catch (const ShapeError& e) {
      throw ValidationError(std::string("rademacher covariance: ") + e.what());
    }
  }
  json s = base_summary(cfg);
  s["estimates"] = json::array();
  std::vector<std::vector<std::string>> rows;
  RunReport out;
  for (const auto& e : ests) {
    s["estimates"].push_back(rademacher_to_json(e));
    rows.push_back(rademacher_csv_row(e));
  }
  write_json_file(out_path(cfg, "rademacher.json"), s);
  write_csv_file(out_path(cfg, "rademacher.csv"), rademacher_csv_header(), rows);
  out.files = {"rademacher.json", "rademacher.csv"};
  out.summary = s;
  return out;
}

json quantiles(std::vector<double> v) {
  if (v.empty()) return nullptr;
  std::sort(v.begin(), v.end());
  auto at = [&](double q) { return v[static_cast<std::size_t>(std::floor(q * static_cast<double>(v.size() - 1)))]; };
  return {{"min", v.front()}, {"q10", at(0.1)}, {"median", at(0.5)}, {"q90", at(0.9)}, {"max", v.back()}};
}

RunReport run_margins(const ExperimentConfig& cfg) {
  const Prepared p = prepare(cfg);
  const auto [net, info] = network_for_analysis(cfg, p);
  const NormReport r = report_for(net, p, cfg);
  const double fr = empirical_fr(r);
  const double spectral = flat_norm(net, NormSpec::spectral()).value;

  std::vector<std::vector<std::string>> rows;
  json s = base_summary(cfg);
  s["seeds"] = p.seeds;
  s["network"] = info;
  s["fr_empirical"] = fr;
  s["spectral"] = spectral;
  s["metrics"] = metrics_json(evaluate(net, p));
  auto emit = [&](const std::string& split, const Dataset& d) {
    if (d.size() == 0) return;
    const auto m = margins(net, d);
    std::vector<double> by_fr, by_spec;
    for (std::size_t i = 0; i < m.size(); ++i) {
      by_fr.push_back(fr > 0.0 ? m[i] / fr : std::nan(""));
      by_spec.push_back(spectral > 0.0 ? m[i] / spectral : std::nan(""));
      rows.push_back({split, std::to_string(i), format_number(d.label(i)), format_number(m[i]),
                      format_number(by_fr.back()), format_number(by_spec.back())});
    }
    s["distributions"][split] = {{"raw", quantiles(m)}, {"fr_normalized", quantiles(by_fr)},
                                 {"spectral_normalized", quantiles(by_spec)}};
  };
  emit("train", p.train);
  emit("test", p.test);
  write_csv_file(out_path(cfg, "margins.csv"),
                 {"split", "index", "label", "margin", "margin_fr_normalized", "margin_spectral_normalized"}, rows);
  write_json_file(out_path(cfg, "summary.json"), s);
  RunReport out;
  out.files = {"margins.csv", "summary.json"};
  out.summary = s;
  return out;
}

struct PointResult {
  std::vector<std::pair<std::string, std::string>> row;
  json detail;
  bool ok = true;
  std::optional<NormReport> report;
};

RunReport run_sweep(const ExperimentConfig& cfg) {
  const json& sj = cfg.doc.at("sweep");
  const std::string param = sj.at("parameter").get<std::string>();
  const auto values = sj.at("values").get<std::vector<double>>();
  const std::size_t width = size_at(sj, "width");
  const std::size_t depth = size_at(sj, "depth");
  for (double v : values) {
    if (param != "label_noise" && (v != std::floor(v) || (param == "width" && v < 1.0))) {
      throw ValidationError("sweep over " + param + " needs positive integer values");
    }
    if (param == "label_noise" && v > 1.0) throw ValidationError("label_noise values must lie in [0, 1]");
  }
  if (cfg.doc.at("network").contains("path") && cfg.doc["network"]["path"].is_string()) {
    throw ValidationError("a sweep trains its own networks; unset network.path");
  }
  // Fail fast on config problems shared by all points.
  prepare(cfg, param == "label_noise" ? std::optional<double>(values.front()) : std::nullopt);

  std::vector<PointResult> results(values.size());
  parallel_for(values.size(), cfg.threads, [&](std::size_t k) {
    PointResult& pr = results[k];
    const double v = values[k];
    pr.row = {{"point", std::to_string(k)}, {"parameter", param}, {"value", format_number(v)}};
    try {
      const Prepared p = prepare(cfg, param == "label_noise" ? std::optional<double>(v) : std::nullopt);
      std::vector<std::size_t> hidden;
      if (param == "width") hidden.assign(depth, static_cast<std::size_t>(v));
      else if (param == "depth") hidden.assign(static_cast<std::size_t>(v), width);
      else hidden = configured_hidden(cfg);
      const TrainResult res = train(initial_network(cfg, p, hidden, k), p.train, train_config(cfg, p.loss));
      pr.row.emplace_back("status", res.history.status);
      pr.row.emplace_back("diagnostic", res.history.diagnostic);
      pr.detail = {{"value", v}, {"seeds", p.seeds}, {"history", res.history.summary()}};
      if (res.history.status == "diverged") {
        pr.ok = false;
        return;
      }
      const Metrics m = evaluate(res.net, p);
      pr.row.emplace_back("epochs_run", std::to_string(res.history.epochs.back().epoch));
      pr.row.emplace_back("train_loss", format_number(m.train_loss));
      pr.row.emplace_back("test_loss", csv_optional(m.test_loss));
      pr.row.emplace_back("train_accuracy", csv_optional(m.train_acc));
      pr.row.emplace_back("test_accuracy", csv_optional(m.test_acc));
      pr.row.emplace_back("generalization_gap", csv_optional(m.gen_gap));
      pr.row.emplace_back("loss_gap", csv_optional(m.loss_gap));
      pr.report = report_for(res.net, p, cfg);
      append_report_cells(pr.row, *pr.report);
      pr.detail["metrics"] = metrics_json(m);
      pr.detail["report"] = norm_report_to_json(*pr.report);
    } catch (const std::exception& e) {
      pr.ok = false;
      pr.row.emplace_back("status", "failed");
      pr.row.emplace_back("diagnostic", e.what());
      pr.detail = {{"value", v}, {"error", e.what()}};
    }
  });

  RunReport out;
  json s = base_summary(cfg);
  s["points"] = json::array();
  std::vector<std::vector<std::pair<std::string, std::string>>> rows;
  std::size_t failed = 0;
  for (const auto& pr : results) {
    rows.push_back(pr.row);
    s["points"].push_back(pr.detail);
    failed += pr.ok ? 0 : 1;
  }
  write_union_csv(out_path(cfg, "sweep.csv"), rows);
  out.files = {"sweep.csv", "summary.json"};

  // alpha = 1 against alpha = 0, in the format of a model-FR / empirical-FR /
  // spectral comparison table.
  if (param == "label_noise") {
    const auto i0 = std::find(values.begin(), values.end(), 0.0) - values.begin();
    const auto i1 = std::find(values.begin(), values.end(), 1.0) - values.begin();
    if (i0 < std::ssize(values) && i1 < std::ssize(values) && results[i0].report && results[i1].report) {
      const NormReport& a = *results[i0].report;
      const NormReport& b = *results[i1].report;
      const double units = static_cast<double>(a.depth + 1);
      std::vector<std::vector<std::string>> ratio;
      auto add = [&](const std::string& q, std::optional<double> x0, std::optional<double> x1) {
        ratio.push_back({q, csv_optional(x0), csv_optional(x1),
                         x0 && x1 && *x0 != 0.0 ? format_number(*x1 / *x0) : ""});
      };
      auto nat = [&](std::optional<double> x) -> std::optional<double> {
        return x ? std::optional<double>(*x / units) : std::nullopt;
      };
      add("model_fr", nat(a.fr_model_ce), nat(b.fr_model_ce));
      add("empirical_fr", empirical_fr(a) / units, empirical_fr(b) / units);
      add("spectral", flat_norm_from(a, "spectral"), flat_norm_from(b, "spectral"));
      write_csv_file(out_path(cfg, "sweep_ratio.csv"), {"quantity", "alpha_0", "alpha_1", "ratio"}, ratio);
      out.files.push_back("sweep_ratio.csv");
    }
  }
  s["failed_points"] = failed;
  write_json_file(out_path(cfg, "summary.json"), s);
  out.ok = failed == 0;
  out.message = std::to_string(values.size() - failed) + "/" + std::to_string(values.size()) + " points completed";
  out.summary = s;
  return out;
}

RunReport run_conditioning(const ExperimentConfig& cfg) {
  const Prepared p = prepare(cfg);
  const json& cj = cfg.doc.at("conditioning");
  const Network init = initial_network(cfg, p, configured_hidden(cfg));
  const auto names = cj.at("optimizers").get<std::vector<std::string>>();

  std::vector<TrainResult> results(names.size(), TrainResult{init, {}});
  std::vector<std::string> errors(names.size());
  parallel_for(names.size(), cfg.threads, [&](std::size_t k) {
    TrainConfig tc = train_config(cfg, p.loss);
    tc.optimizer = parse_optimizer(names[k]);
    const std::string canonical = optimizer_name(tc.optimizer);
    if (cj.at("lr").contains(canonical)) tc.lr = cj["lr"][canonical].get<double>();
    try {
      results[k] = train(init, p.train, tc);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  });

  RunReport out;
  json s = base_summary(cfg);
  s["seeds"] = p.seeds;
  std::vector<std::vector<std::string>> rows;
  for (std::size_t k = 0; k < names.size(); ++k) {
    const std::string name = optimizer_name(parse_optimizer(names[k]));
    if (!errors[k].empty()) {
      s["optimizers"][name] = {{"error", errors[k]}};
      out.ok = false;
      continue;
    }
    s["optimizers"][name] = results[k].history.summary();
    if (results[k].history.status == "diverged") out.ok = false;
    for (const auto& e : results[k].history.epochs) {
      rows.push_back({name, std::to_string(e.epoch), format_number(e.loss), format_number(e.grad_norm)});
    }
  }
  write_csv_file(out_path(cfg, "conditioning.csv"), {"optimizer", "epoch", "loss", "grad_norm"}, rows);

  // Fitted curves, ordered by the first input coordinate.
  std::vector<std::size_t> order(p.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p.train.input(a)[0] < p.train.input(b)[0]; });
  std::vector<std::string> header{"x", "target"};
  for (const auto& n : names) header.push_back(optimizer_name(parse_optimizer(n)));
  std::vector<std::vector<std::string>> fit;
  for (std::size_t i : order) {
    std::vector<std::string> r{format_number(p.train.input(i)[0]), format_number(p.train.label(i))};
    for (std::size_t k = 0; k < names.size(); ++k) {
      r.push_back(errors[k].empty() && p.loss.output_dim() == 1 ? format_number(predict(results[k].net, p.train.input(i))[0])
                                                                : "");
    }
    fit.push_back(std::move(r));
  }
  write_csv_file(out_path(cfg, "fit.csv"), header, fit);
  write_json_file(out_path(cfg, "summary.json"), s);
  out.files = {"conditioning.csv", "fit.csv", "summary.json"};
  out.message = out.ok ? "all optimizers completed" : "some optimizers failed or diverged";
  out.summary = s;
  return out;
}

}  // namespace

const nlohmann::json& config_schema() {
  static const json schema = json::parse(detail::kConfigSchemaText);
  return schema;
}

const nlohmann::json& network_schema() {
  static const json schema = json::parse(detail::kNetworkSchemaText);
  return schema;
}

nlohmann::json default_config(const std::string& experiment) {
  if (std::find(kExperiments.begin(), kExperiments.end(), experiment) == kExperiments.end()) {
    throw ValidationError("unknown experiment '" + experiment + "'");
  }
  json d = base_defaults();
  d["experiment"] = experiment;
  d["output_dir"] = "frcap-out/" + experiment;
  if (experiment == "conditioning") {
    d["dataset"]["kind"] = "piecewise_linear_curve";
    d["dataset"]["test_fraction"] = 0.0;
    d["train"]["loss"] = "squared";
    d["train"]["epochs"] = 500;
  } else if (experiment == "sweep") {
    d["network"]["hidden"] = {16, 16};
  }
  return d;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ValidationError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ValidationError("override '" + assignment + "' has an empty key segment");
    if (!node->is_object()) {
      if (!node->is_null()) throw ValidationError("override '" + path + "' descends into a non-object");
      *node = json::object();
    }
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

std::optional<std::uint64_t> seed_from_environment() {
  const char* v = std::getenv("FRCAP_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  std::uint64_t seed = 0;
  const std::string_view s(v);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("FRCAP_SEED must be an unsigned integer, got '" + std::string(s) + "'");
  }
  return seed;
}

ExperimentConfig make_config(const nlohmann::json& user, const std::string& experiment,
                             const std::vector<std::string>& overrides, std::optional<std::uint64_t> env_seed) {
  if (!user.is_object()) throw ValidationError("config must be a JSON object");
  require_valid(user, "config");
  std::string kind = experiment;
  if (user.contains("experiment")) {
    const std::string declared = user["experiment"].get<std::string>();
    if (!kind.empty() && declared != kind) {
      throw ValidationError("config is for experiment '" + declared + "' but '" + kind + "' was requested");
    }
    kind = declared;
  }
  if (kind.empty()) throw ValidationError("no experiment given");

  json doc = default_config(kind);
  doc.merge_patch(user);
  for (const auto& o : overrides) apply_override(doc, o);
  if (env_seed) doc["seed"] = *env_seed;
  require_valid(doc, "config after defaults and overrides");
  if (doc["experiment"].get<std::string>() != kind) throw ValidationError("overrides may not change the experiment");

  ExperimentConfig cfg;
  cfg.doc = doc;
  cfg.experiment = kind;
  cfg.seed = doc["seed"].get<std::uint64_t>();
  cfg.threads = doc["threads"].get<std::size_t>();
  cfg.output_dir = doc["output_dir"].get<std::string>();
  // Catch semantic problems (unknown norm labels, bad train settings) before any run.
  norm_specs_from_config(doc);
  json tj = doc["train"];
  if (!tj.contains("classes")) tj["classes"] = 2;  // the dataset decides later
  try {
    train_config_from_json(tj);
  } catch (const InvalidParameter& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  return cfg;
}

std::uint64_t derive_seed(std::uint64_t root, SeedStream stream, std::uint64_t index) {
  return trial_seed(trial_seed(root, static_cast<std::uint64_t>(stream)), index);
}

Dataset build_dataset(const nlohmann::json& spec, std::uint64_t root_seed) {
  const std::string source = spec.value("source", "synthetic");
  Dataset d;
  if (source == "synthetic") {
    SyntheticParams sp;
    sp.n = spec.value("n", sp.n);
    sp.dim = spec.value("dim", sp.dim);
    sp.noise = spec.value("noise", sp.noise);
    sp.separation = spec.value("separation", sp.separation);
    sp.spread = spec.value("spread", sp.spread);
    sp.signed_labels = spec.value("signed_labels", sp.signed_labels);
    sp.pieces = spec.value("pieces", sp.pieces);
    if (spec.contains("covariance") && spec["covariance"].is_array()) {
      sp.covariance = matrix_from_json(spec["covariance"], "dataset.covariance");
    }
    if (spec.contains("weights") && spec["weights"].is_array()) sp.weights = spec["weights"].get<Vector>();
    try {
      d = make_synthetic(parse_synthetic_kind(spec.value("kind", "two_blobs")), sp,
                         derive_seed(root_seed, SeedStream::Data));
    } catch (const InvalidParameter& e) {
      throw ValidationError(std::string("dataset: ") + e.what());
    } catch (const ShapeError& e) {
      throw ValidationError(std::string("dataset: ") + e.what());
    } catch (const DecompositionError& e) {
      throw ValidationError(std::string("dataset: ") + e.what());
    }
  } else if (source == "csv") {
    const std::string path = spec.value("path", "");
    if (path.empty()) throw ValidationError("dataset.path is required for csv input");
    d = load_csv(path, spec.value("label_column", "label"));
    const std::size_t classes = spec.value("classes", std::size_t{0});
    if (classes >= 2) d.num_classes = classes;
    d.validate();
  } else {
    const std::string images = spec.value("images", "");
    const std::string labels = spec.value("labels", "");
    if (images.empty() || labels.empty()) throw ValidationError("dataset.images and dataset.labels are required for idx input");
    d = load_idx(images, labels, spec.value("limit", std::size_t{0}));
  }
  return d;
}

Loss loss_from_config(const nlohmann::json& doc, const Dataset& data) {
  const json& tj = doc.at("train");
  const std::string name = tj.at("loss").get<std::string>();
  if (name != "cross_entropy") return Loss::parse(name);
  const std::size_t classes = tj.contains("classes") ? tj["classes"].get<std::size_t>() : data.num_classes;
  if (classes < 2) throw ValidationError("cross_entropy needs a dataset with at least two classes");
  if (data.num_classes >= 2 && classes != data.num_classes) {
    throw ValidationError("train.classes = " + std::to_string(classes) + " but the dataset has " +
                          std::to_string(data.num_classes) + " classes");
  }
  return Loss::cross_entropy(classes);
}

std::vector<NormSpec> norm_specs_from_config(const nlohmann::json& doc) {
  std::vector<NormSpec> specs;
  if (!doc.contains("norms")) return specs;
  for (const auto& n : doc["norms"]) {
    try {
      specs.push_back(NormSpec::parse(n.get<std::string>()));
    } catch (const InvalidParameter& e) {
      throw ValidationError(std::string("norms: ") + e.what());
    }
  }
  return specs;
}

namespace {

// +-1 labels from {-1, +1} or {0, 1}; empty for anything else.
std::optional<std::vector<double>> binary_signs(const Dataset& data) {
  std::vector<double> s(data.size());
  bool pm = true, zo = true;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double y = data.label(i);
    pm = pm && (y == 1.0 || y == -1.0);
    zo = zo && (y == 0.0 || y == 1.0);
  }
  if (!pm && !zo) return std::nullopt;
  for (std::size_t i = 0; i < data.size(); ++i) s[i] = pm ? data.label(i) : 2.0 * data.label(i) - 1.0;
  return s;
}

}  // namespace

std::optional<double> accuracy(const Network& net, const Dataset& data) {
  if (data.size() == 0) return std::nullopt;
  std::size_t correct = 0;
  if (net.output_dim() >= 2) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Vector f = predict(net, data.input(i));
      const auto arg = static_cast<double>(std::max_element(f.begin(), f.end()) - f.begin());
      correct += arg == data.label(i) ? 1 : 0;
    }
  } else {
    const auto signs = binary_signs(data);
    if (!signs) return std::nullopt;
    for (std::size_t i = 0; i < data.size(); ++i) correct += (*signs)[i] * predict(net, data.input(i))[0] > 0.0 ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::vector<double> margins(const Network& net, const Dataset& data) {
  std::vector<double> m(data.size());
  if (net.output_dim() >= 2) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Vector f = predict(net, data.input(i));
      const auto y = static_cast<std::size_t>(data.label(i));
      if (y >= f.size()) throw ValidationError("label out of range for the network's outputs");
      double other = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < f.size(); ++c)
        if (c != y) other = std::max(other, f[c]);
      m[i] = f[y] - other;
    }
    return m;
  }
  const auto signs = binary_signs(data);
  if (!signs) throw ValidationError("margins need class labels ({-1, +1} or {0, 1} for one output)");
  for (std::size_t i = 0; i < data.size(); ++i) m[i] = (*signs)[i] * predict(net, data.input(i))[0];
  return m;
}

RunReport run_experiment(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw ValidationError("cannot create output directory " + cfg.output_dir + ": " + ec.message());
  const auto& e = cfg.experiment;
  if (e == "train") return run_train(cfg);
  if (e == "norms") return run_norms(cfg);
  if (e == "verify") return run_verify(cfg);
  if (e == "rademacher") return run_rademacher(cfg);
  if (e == "margins") return run_margins(cfg);
  if (e == "sweep") return run_sweep(cfg);
  if (e == "conditioning") return run_conditioning(cfg);
  throw ValidationError("unknown experiment '" + e + "'");
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RunFailure("cannot write " + path);
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << csv_escape(cells[i]);
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  if (!out) throw RunFailure("error writing " + path);
}

void write_json_file(const std::string& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RunFailure("cannot write " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw RunFailure("error writing " + path);
}

}  // namespace frcap
