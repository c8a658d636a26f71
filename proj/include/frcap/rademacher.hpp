#pragma once

// Monte-Carlo Rademacher complexity of the Fisher-Rao ball of deep linear
// networks, which reduces to a Mahalanobis norm of sum_i eps_i X_i.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "frcap/linalg.hpp"
#include "frcap/network.hpp"

namespace frcap {

struct RademacherEstimate {
  double mean = 0.0;
  double std_error = 0.0;  // sample std / sqrt(trials)
  std::size_t trials = 0;
  double bound = 0.0;  // gamma * sqrt(p / N)
  std::size_t p = 0;
  std::size_t n = 0;
  double gamma = 0.0;
  std::string covariance_id;
  std::uint64_t seed = 0;

  bool within_bound(double sigmas = 3.0) const { return mean <= bound + sigmas * std_error; }
};

// Seed of trial `index`, derived from the root seed by a counter-based mix so
// results do not depend on how trials are spread over threads.
std::uint64_t trial_seed(std::uint64_t root, std::uint64_t index);

// Each trial draws X_1..X_N ~ N(0, cov) and Rademacher signs and evaluates
// (gamma / N) ||sum_i eps_i X_i||_{cov^{-1}}. Throws DecompositionError when
// cov is not SPD.
RademacherEstimate linear_fr_rademacher(std::size_t n, double gamma, const Matrix& cov, std::size_t trials,
                                        std::uint64_t seed, std::size_t threads = 1,
                                        const std::string& covariance_id = "");

// sup { <s, v> : v^T gram v <= gamma^2 } = gamma ||s||_{gram^{-1}}.
double fr_ball_supremum_linear(const Matrix& gram, std::span<const double> s, double gamma);

// Maximizer of the above; zero when s = 0.
Vector fr_ball_maximizer_linear(const Matrix& gram, std::span<const double> s, double gamma);

struct SweepPoint {
  std::size_t p = 0;
  std::size_t n = 0;
  double gamma = 0.0;
};

// Identity covariance at every point; point k uses trial_seed(seed, k) as its root.
std::vector<RademacherEstimate> rademacher_sweep(const std::vector<SweepPoint>& grid, std::size_t trials,
                                                 std::uint64_t seed, std::size_t threads = 1);

nlohmann::json rademacher_to_json(const RademacherEstimate& e);
std::vector<std::string> rademacher_csv_header();
std::vector<std::string> rademacher_csv_row(const RademacherEstimate& e);

// Depth-2 linear network (p -> k -> k -> 1) whose end-to-end vector
// W^0 W^1 W^2 equals v; the hidden factors are seeded and otherwise arbitrary.
Network realize_depth2(std::span<const double> v, std::size_t width, std::uint64_t seed);

struct RealizationCheck {
  double supremum = 0.0;        // gamma ||s||_{gram^{-1}}
  double realized_inner = 0.0;  // <s, W^0 W^1 W^2> for the realized maximizer
  double fr_natural = 0.0;      // sqrt(w^T gram w), the population FR norm / (L+1)
  Vector w;
};

// Realizes the FR-ball maximizer for direction s as explicit depth-2 weights
// and evaluates it, showing the supremum is attained by a network.
RealizationCheck depth2_realization_check(const Matrix& gram, std::span<const double> s, double gamma,
                                          std::size_t width, std::uint64_t seed);

}  // namespace frcap
