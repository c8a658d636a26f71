// Runs every acceptance criterion at its stated tolerance and prints one
// PASS/FAIL line per criterion. Exit status is nonzero when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "frcap/autodiff.hpp"
#include "frcap/capacity.hpp"
#include "frcap/harness.hpp"
#include "frcap/optimize.hpp"
#include "frcap/rademacher.hpp"
#include "frcap/verify.hpp"

using namespace frcap;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;  // 0: no runtime requirement
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome from_suite(const SuiteResult& r, const std::string& extra = "") {
  std::string d = fmt("%zu cases, %zu failures, worst %.3g", r.cases, r.failures, r.worst);
  if (!extra.empty()) d += ", " + extra;
  if (!r.passed) d += ", failures: " + r.detail["failures"].dump();
  return {r.passed, d};
}

Outcome contraction_identity() {
  return from_suite(verify_gradient_structure(240, 101));
}

Outcome fr_identity() {
  return from_suite(verify_fr_identity(120, 202));
}

Outcome norm_comparison() {
  std::mt19937_64 rng(303);
  RandomNetSpec spec;
  spec.max_depth = 3;
  spec.max_width = 8;
  spec.kinds = {ActivationKind::ReLU};
  const double choices[3] = {1.0, 2.0, kInf};
  std::size_t nets = 0, checks = 0, violations = 0, inexact_required = 0;
  double min_slack = kInf;
  for (; nets < 200; ++nets) {
    const Network net = random_network(rng, spec);
    Dataset data = random_inputs(rng, 50, net.input_dim());
    std::vector<NormSpec> specs{NormSpec::spectral(), NormSpec::group(1, 1),   NormSpec::group(2, 2),
                                NormSpec::group(1, kInf), NormSpec::path(1), NormSpec::path(2)};
    for (double p : choices) specs.push_back(NormSpec::chain_of(std::vector<double>(net.num_layers() + 1, p)));
    std::vector<double> mixed(net.num_layers() + 1);
    for (double& p : mixed) p = choices[std::uniform_int_distribution<int>(0, 2)(rng)];
    specs.push_back(NormSpec::chain_of(mixed));
    const NormReport rep = norm_comparison_report(net, data, specs);
    for (const auto& c : rep.comparisons) {
      if (!c.exact) {
        ++inexact_required;
        continue;
      }
      ++checks;
      min_slack = std::min(min_slack, c.slack);
      if (!c.verdict) ++violations;
    }
  }
  return {violations == 0 && inexact_required == 0 && checks > 0,
          fmt("%zu nets, %zu comparisons, %zu violations, %zu inexact, min slack %.3g", nets, checks, violations,
              inexact_required, min_slack)};
}

Outcome rescaling_invariance() {
  const SuiteResult r = verify_rescaling_invariance(50, 404);
  return from_suite(r, fmt("constructed spectral ratio %.3g, path ratio %.3g",
                           r.detail["constructed_spectral_ratio"].get<double>(),
                           r.detail["constructed_path_ratio"].get<double>()));
}

Outcome star_shape() { return from_suite(verify_star_shape(505)); }

Outcome convex_combination() { return from_suite(verify_convex_combination(100, 606)); }

Outcome large_margin() {
  const SuiteResult r = verify_large_margin(707);
  return from_suite(r, fmt("grad %.3g, min margin %.6f", r.detail["grad_norm"].get<double>(),
                           r.detail["min_margin"].get<double>()));
}

// Literal reading: scale = ||X^T X w - X^T Y|| ||w||, i.e. the cosine between
// w and the normal-equation residual, on a gradient-descent limit point.
Outcome linear_stationarity() {
  SyntheticParams sp;
  sp.n = 200;
  sp.dim = 3;
  const Dataset data = make_synthetic(SyntheticKind::GaussianLinear, sp, 808);
  const Network net = init_network({3, 4, 4, 1}, Activation::linear(), 809);
  TrainConfig cfg;
  cfg.loss = Loss::squared();
  cfg.lr = 0.05;
  cfg.epochs = 20000;
  cfg.grad_tol = 1e-12;
  const TrainResult res = train(net, data, cfg);
  const LinearStationarity s = check_linear_stationarity(res.net, data);
  // The same residual against the size of its two terms, for the record.
  Vector xxw(data.dim(), 0.0), xy(data.dim(), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.input(i);
    const double f = dot(x, s.w);
    for (std::size_t k = 0; k < x.size(); ++k) {
      xxw[k] += x[k] * f;
      xy[k] += x[k] * data.label(i);
    }
  }
  const double terms = (std::sqrt(dot(xxw, xxw)) + std::sqrt(dot(xy, xy))) * std::sqrt(dot(s.w, s.w));
  return {s.relative <= 1e-6,
          fmt("grad %.3g, |residual| %.3g, scale %.3g, |residual|/scale %.3g (tolerance 1e-6); "
              "|residual| / (term magnitude) %.3g",
              res.history.epochs.back().grad_norm, std::abs(s.residual), s.scale, s.relative,
              terms == 0.0 ? 0.0 : std::abs(s.residual) / terms)};
}

Outcome rademacher() {
  const SuiteResult r = verify_rademacher(909, 10000);
  return from_suite(r, fmt("mean %.5f, SE %.2g, bound %.5f", r.detail["mean"].get<double>(),
                           r.detail["std_error"].get<double>(), r.detail["bound"].get<double>()));
}

Outcome natural_gradient() {
  const SuiteResult r = verify_natural_gradient_invariance(1010);
  const auto& g = r.detail["gaps"];
  return from_suite(r, fmt("gaps %.3g / %.3g / %.3g, eigenvalue defect %.3g", g[0].get<double>(), g[1].get<double>(),
                           g[2].get<double>(), r.worst));
}

Outcome gradients() {
  const SuiteResult r = verify_finite_differences(200, 1111);
  return from_suite(r, "rate ratios " + r.detail["convergence_ratios"].dump() + ", worst second-derivative err " +
                           fmt("%.3g", r.detail["worst_tower_rel_err"].get<double>()));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(cell);
      cell.clear();
    } else {
      cell += ch;
    }
  }
  out.push_back(cell);
  return out;
}

Outcome width_sweep() {
  const auto dir = std::filesystem::temp_directory_path() / "frcap_acceptance_width_sweep";
  std::filesystem::remove_all(dir);
  const auto cfg = make_config({{"schema", 1}}, "sweep", {"output_dir=" + dir.string(), "threads=4"});
  const RunReport rep = run_experiment(cfg);
  if (!rep.ok) return {false, "sweep did not complete: " + rep.message};

  std::ifstream in(dir / "sweep.csv");
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  const std::vector<std::string> tracked{"fr_empirical_natural", "spectral_flat", "path_1_flat", "path_2_flat"};
  for (const auto& t : tracked) {
    if (column(t) == header.size()) return {false, "missing column " + t};
  }
  std::vector<std::vector<double>> values(tracked.size());
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) return {false, fmt("row %zu has %zu cells, header %zu", rows, cells.size(), header.size())};
    if (cells[column("status")] != "completed") return {false, "point " + cells[0] + " did not complete"};
    for (std::size_t k = 0; k < tracked.size(); ++k) {
      const double v = std::stod(cells[column(tracked[k])]);
      if (!std::isfinite(v)) return {false, "non-finite " + tracked[k]};
      values[k].push_back(v);
    }
    ++rows;
  }
  const std::size_t expected = cfg.doc["sweep"]["values"].size();
  if (rows != expected) return {false, fmt("%zu rows, expected %zu", rows, expected)};

  // Report-only trend: relative range (max - min) / mean across widths.
  std::string trend;
  for (std::size_t k = 0; k < tracked.size(); ++k) {
    const auto [lo, hi] = std::minmax_element(values[k].begin(), values[k].end());
    double mean = 0.0;
    for (double v : values[k]) mean += v / static_cast<double>(rows);
    trend += (k ? ", " : "") + tracked[k] + fmt(" %.3g", (*hi - *lo) / mean);
  }
  return {true, fmt("%zu widths, well-formed CSV; relative range (report only): ", rows) + trend};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "contraction identity", 30, contraction_identity},
      {2, "FR identity across losses", 60, fr_identity},
      {3, "FR below data-dependent norms", 120, norm_comparison},
      {4, "rescaling invariance", 0, rescaling_invariance},
      {5, "star shape", 0, star_shape},
      {6, "convex combination", 0, convex_combination},
      {7, "hinge stationary points have margin", 60, large_margin},
      {8, "deep linear stationarity", 0, linear_stationarity},
      {9, "Rademacher estimate under bound", 30, rademacher},
      {10, "natural-gradient invariance", 0, natural_gradient},
      {11, "gradient correctness", 0, gradients},
      {12, "width sweep report (non-binding trend)", 0, width_sweep},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      o.passed = false;
      o.detail += fmt(", over the %.0f s budget", c.budget_s);
    }
    if (!o.passed) ++failed;
    std::printf("%s criterion %2d: %s [%.2f s] %s\n", o.passed ? "PASS" : "FAIL", c.id, c.name.c_str(), secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
