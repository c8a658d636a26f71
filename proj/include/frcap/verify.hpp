#pragma once

// Property suites over randomly drawn networks and datasets. Each suite is a
// self-contained executable check of one structural fact, used by
// `frcap verify`.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "frcap/dataset.hpp"
#include "frcap/network.hpp"
#include "frcap/optimize.hpp"

namespace frcap {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::size_t cases = 0;
  std::size_t failures = 0;
  double worst = 0.0;  // worst observed error or slack, suite specific
  nlohmann::json detail;
};

struct RandomNetSpec {
  std::size_t min_depth = 1;
  std::size_t max_depth = 4;
  std::size_t max_width = 16;
  std::size_t input_dim = 0;  // 0: random in [1, max_width]
  std::size_t output_dim = 1;
  // Empty: pick uniformly among ReLU, leaky ReLU and linear.
  std::vector<ActivationKind> kinds;
};

Network random_network(std::mt19937_64& rng, const RandomNetSpec& spec);
// Standard normal rows; labels left at zero.
Dataset random_inputs(std::mt19937_64& rng, std::size_t n, std::size_t dim);
// An input whose pre-activations all stay at least `margin` away from zero.
Vector input_away_from_kinks(std::mt19937_64& rng, const Network& net, double margin = 1e-6);

// The canned 2-parameter reparametrization xi = (t0, t1 + t0^2 / 2) of a
// linear model, and the over-parametrization theta -> (t0, t1, t0 t1) of a
// 3-feature linear model.
struct ReparametrizationInstance {
  ScalarModel theta_model;
  ScalarModel xi_model;
  std::function<Vector(std::span<const double>)> xi_of_theta;
  std::function<Matrix(std::span<const double>)> jacobian;
  Vector theta0;
  Dataset data;
};
ReparametrizationInstance reparametrization_instance(std::uint64_t seed);
ReparametrizationInstance overparametrization_instance(std::uint64_t seed);

SuiteResult verify_gradient_structure(std::size_t count, std::uint64_t seed);
SuiteResult verify_fr_identity(std::size_t count, std::uint64_t seed);
SuiteResult verify_norm_comparison(std::size_t count, std::uint64_t seed);
SuiteResult verify_rescaling_invariance(std::size_t count, std::uint64_t seed);
SuiteResult verify_star_shape(std::uint64_t seed);
SuiteResult verify_convex_combination(std::size_t count, std::uint64_t seed);
SuiteResult verify_large_margin(std::uint64_t seed);
SuiteResult verify_linear_stationarity(std::uint64_t seed);
SuiteResult verify_rademacher(std::uint64_t seed, std::size_t trials);
SuiteResult verify_natural_gradient_invariance(std::uint64_t seed);
SuiteResult verify_finite_differences(std::size_t count, std::uint64_t seed);
SuiteResult verify_flatness(std::uint64_t seed);

std::vector<std::string> verify_suite_names();
// `names` may contain "all".
std::vector<SuiteResult> run_verify_suites(const std::vector<std::string>& names, std::size_t count,
                                           std::uint64_t seed, std::size_t threads = 1);

nlohmann::json suite_to_json(const SuiteResult& r);

}  // namespace frcap
