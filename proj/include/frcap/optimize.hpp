#pragma once

// First-order trainers, damped natural gradient, training loop and the
// stationarity / natural-gradient invariance checks.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "frcap/capacity.hpp"
#include "frcap/dataset.hpp"
#include "frcap/losses.hpp"
#include "frcap/network.hpp"

namespace frcap {

enum class OptimizerKind { SGD, Momentum, Adam, NaturalGradient };

OptimizerKind parse_optimizer(const std::string& name);
std::string optimizer_name(OptimizerKind kind);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::SGD;
  double lr = 0.01;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // Natural gradient: damping lambda (unset means 1e-3 * trace(I) / d),
  // CG relative tolerance and iteration cap (0 means 2d + 10), and whether
  // the Fisher uses labels drawn from the model instead of observed ones.
  std::optional<double> ng_damping;
  double ng_tol = 1e-10;
  std::size_t ng_max_iter = 0;
  bool ng_model_fisher = false;
  // 0 means full batch.
  std::size_t batch_size = 0;
  std::size_t epochs = 100;
  // Multiply lr by lr_decay every lr_decay_every epochs (0 disables).
  double lr_decay = 1.0;
  std::size_t lr_decay_every = 0;
  std::uint64_t seed = 0;
  Loss loss = Loss::squared();
  // Stop once the full-data gradient norm drops to this value (0 disables).
  double grad_tol = 0.0;
  // Record capacity norms every this many epochs (0 disables).
  std::size_t record_every = 0;
  std::vector<NormSpec> record_norms;
  bool record_wall_clock = false;

  void validate() const;
};

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& config);

struct OptimizerState {
  Vector velocity;  // momentum
  Vector m, v;      // Adam moments
  std::size_t step = 0;
};

// Gradient of the mean loss over `rows` with frozen entries zeroed.
Vector batch_gradient(const Network& net, const Dataset& data, const Loss& loss, std::span<const std::size_t> rows);

Network sgd_step(const Network& net, const Dataset& data, std::span<const std::size_t> rows,
                 const TrainConfig& config);
Network momentum_step(const Network& net, const Dataset& data, std::span<const std::size_t> rows,
                      const TrainConfig& config, OptimizerState& state);
Network adam_step(const Network& net, const Dataset& data, std::span<const std::size_t> rows,
                  const TrainConfig& config, OptimizerState& state);

struct CgResult {
  Vector x;
  std::size_t iterations = 0;
  bool converged = false;
};

// Solves A x = b for symmetric positive (semi-)definite A given as a
// matrix-vector product; stops when ||r|| <= tol * ||b||.
CgResult conjugate_gradient(const std::function<Vector(std::span<const double>)>& apply, std::span<const double> b,
                            double tol, std::size_t max_iter);

struct NaturalGradientDirection {
  Vector delta;
  Vector gradient;  // mean of the per-sample gradients
  double damping = 0.0;
  std::size_t cg_iterations = 0;
  std::size_t retries = 0;  // times the damping was raised tenfold
  bool converged = false;
  std::vector<std::string> warnings;
};

// delta solving ((1/n) sum_i g_i g_i^T + lambda I) delta = (1/n) sum_i g_i,
// matrix-free. Damping defaults to 1e-3 * trace / d; on CG failure it is
// multiplied by 10, at most `max_retries` times.
NaturalGradientDirection natural_gradient_direction(const std::vector<Vector>& grads, std::optional<double> damping,
                                                    double tol, std::size_t max_iter, std::size_t max_retries = 6);

// theta <- theta - lr * delta. Per-sample gradients use the observed labels,
// or with ng_model_fisher a label drawn from the model for the Fisher while
// the right-hand side stays the observed-label gradient.
Network natural_gradient_step(const Network& net, const Dataset& data, std::span<const std::size_t> rows,
                              const TrainConfig& config, NaturalGradientDirection* info = nullptr);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;
  // Filled on recording epochs.
  std::optional<double> fr_natural;
  std::vector<std::pair<std::string, double>> norms;
  std::optional<double> wall_seconds;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  // "completed", "converged" (grad_tol reached) or "diverged".
  std::string status = "completed";
  std::string diagnostic;
  std::vector<std::string> warnings;

  std::vector<std::string> csv_header() const;
  std::vector<std::vector<std::string>> csv_rows() const;
  nlohmann::json summary() const;
};

struct TrainResult {
  Network net;
  TrainHistory history;
};

// Deterministic given config.seed (minibatch shuffling). Epoch 0 is the
// state before any update.
TrainResult train(const Network& net, const Dataset& data, const TrainConfig& config);

struct MarginCheck {
  bool applicable = false;  // stationary and separating
  bool stationary = false;
  bool separating = false;
  bool passed = false;  // vacuously true when not applicable
  double grad_norm = 0.0;
  double min_margin = 0.0;
  std::vector<double> margins;  // y_i f(x_i)
  std::string message;
};

// Hinge loss, K = 1, labels in {-1, +1}: a stationary (||grad|| <= eps_grad)
// separating network must have every margin >= 1 - delta_margin.
MarginCheck check_large_margin(const Network& net, const Dataset& data, double eps_grad, double delta_margin);

struct LinearStationarity {
  Vector w;  // W^0 W^1 ... W^L
  double residual = 0.0;  // <w, X^T X w - X^T Y>
  double scale = 0.0;     // ||X^T X w - X^T Y|| * ||w||
  double relative = 0.0;  // |residual| / scale, 0 when scale = 0
};

// Linear activations, K = 1.
LinearStationarity check_linear_stationarity(const Network& net, const Dataset& data);

// A differentiable scalar model f(theta, x), used to run natural gradient on
// explicit parametrizations.
struct ScalarModel {
  std::size_t dim = 0;
  std::function<double(std::span<const double>, std::span<const double>)> value;
  std::function<Vector(std::span<const double>, std::span<const double>)> gradient;
};

// Empirical-Fisher natural gradient step for squared loss on a ScalarModel.
Vector scalar_model_ng_step(const ScalarModel& model, std::span<const double> theta, const Dataset& data, double lr,
                            double damping, double tol = 1e-14);

// Empirical Fisher (1/n) sum g_i g_i^T and mean gradient of a ScalarModel
// under squared loss.
struct FisherSystem {
  Matrix fisher;
  Vector gradient;
};
FisherSystem scalar_model_fisher(const ScalarModel& model, std::span<const double> theta, const Dataset& data);

struct ReparametrizationGap {
  double lr = 0.0;
  std::size_t steps = 0;
  double gap = 0.0;  // ||xi(theta_T) - xi_T||
};

// Runs natural gradient for horizon / lr steps in both parametrizations from
// xi_0 = xi(theta_0) and reports the terminal mismatch.
ReparametrizationGap reparametrization_gap(const ScalarModel& theta_model, const ScalarModel& xi_model,
                                           const std::function<Vector(std::span<const double>)>& xi_of_theta,
                                           std::span<const double> theta0, const Dataset& data, double lr,
                                           double horizon, double damping = 0.0);

struct OverparametrizationCheck {
  Matrix projection;           // M_t
  Vector eigenvalues;          // real parts, ascending
  double max_eigen_defect = 0.0;  // max distance of an eigenvalue from {0, 1}
  double max_imag = 0.0;
  // ||xi(theta + d theta) - xi(theta) - M (d xi)|| / ||xi(theta + d theta) - xi(theta)||
  double step_mismatch = 0.0;
};

// theta in R^p, xi(theta) in R^q with q > p, Jacobian J (q x p); xi_model is
// the model on the q coordinates. M_t = I^{-1/2} (I - U U^T) I^{1/2} with U
// spanning the orthogonal complement of range(I^{1/2} J), built from
// eigendecompositions. The one-step mismatch uses a natural gradient step of
// size dt in each parametrization.
OverparametrizationCheck check_overparametrization(
    const ScalarModel& theta_model, const ScalarModel& xi_model,
    const std::function<Vector(std::span<const double>)>& xi_of_theta,
    const std::function<Matrix(std::span<const double>)>& jacobian, std::span<const double> theta,
    const Dataset& data, double dt);

}  // namespace frcap
