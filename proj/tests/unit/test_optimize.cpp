#include <doctest.h>

#include <numeric>

#include "frcap/autodiff.hpp"
#include "frcap/error.hpp"
#include "frcap/optimize.hpp"
#include "frcap/verify.hpp"
#include "helpers.hpp"

using namespace frcap;
using testing::dataset_from;

namespace {

std::vector<std::size_t> all_rows(const Dataset& d) {
  std::vector<std::size_t> r(d.size());
  std::iota(r.begin(), r.end(), 0);
  return r;
}

Dataset linear_data(std::uint64_t seed, std::size_t n = 60) {
  SyntheticParams sp;
  sp.n = n;
  sp.dim = 3;
  return make_synthetic(SyntheticKind::GaussianLinear, sp, seed);
}

}  // namespace

TEST_SUITE("optimize") {
  TEST_CASE("SGD leaves a stationary net alone") {
    const Network net({Matrix::column(Vector{1, 2})}, Activation::linear());
    const Dataset d = dataset_from(Matrix::from_rows({{1, 0}, {0, 1}}), {1, 2});
    TrainConfig c;
    CHECK(sgd_step(net, d, all_rows(d), c) == net);
  }

  TEST_CASE("SGD on a 1-D quadratic decreases the loss monotonically") {
    // loss(w) = mean (w x - y)^2 / 2 with curvature E x^2.
    const Dataset d = dataset_from(Matrix::from_rows({{1}, {2}, {-1}}), {0.5, 1.5, -0.2});
    const double curvature = (1 + 4 + 1) / 3.0;
    TrainConfig c;
    c.lr = 1.9 / curvature;
    Network net({Matrix(1, 1, 5.0)}, Activation::linear());
    double prev = mean_loss(net, d, c.loss);
    for (int k = 0; k < 50; ++k) {
      net = sgd_step(net, d, all_rows(d), c);
      const double cur = mean_loss(net, d, c.loss);
      CHECK(cur <= prev);
      prev = cur;
    }
  }

  TEST_CASE("momentum 0 is SGD") {
    std::mt19937_64 rng(31);
    const Network net = init_network({3, 4, 1}, Activation::relu(), 2);
    const Dataset d = linear_data(3);
    TrainConfig c;
    c.momentum = 0.0;
    OptimizerState st;
    Network a = net, b = net;
    for (int k = 0; k < 5; ++k) {
      a = momentum_step(a, d, all_rows(d), c, st);
      b = sgd_step(b, d, all_rows(d), c);
    }
    CHECK(flatten(a) == flatten(b));
  }

  TEST_CASE("Adam moves against the gradient sign on the first step") {
    const Network net({Matrix::column(Vector{1.0, -1.0})}, Activation::linear());
    const Dataset d = dataset_from(Matrix::from_rows({{1, 0}, {0, 1}}), {0, 0});
    TrainConfig c;
    c.lr = 0.1;
    OptimizerState st;
    const Network next = adam_step(net, d, all_rows(d), c, st);
    CHECK(next.weight(0)(0, 0) == doctest::Approx(0.9));
    CHECK(next.weight(0)(1, 0) == doctest::Approx(-0.9));
  }

  TEST_CASE("conjugate gradient solves an SPD system") {
    const Matrix a = Matrix::from_rows({{4, 1, 0}, {1, 3, 1}, {0, 1, 2}});
    const Vector b{1, 2, 3};
    const auto res = conjugate_gradient([&](std::span<const double> v) { return times_col(a, v); }, b, 1e-14, 10);
    CHECK(res.converged);
    const Vector ax = times_col(a, res.x);
    for (std::size_t i = 0; i < 3; ++i) CHECK(ax[i] == doctest::Approx(b[i]));
  }

  TEST_CASE("natural gradient direction") {
    // One parameter, one sample: delta = g / (g^2 + lambda).
    const auto one = natural_gradient_direction({Vector{0.6}}, 0.1, 1e-14, 0);
    CHECK(one.delta[0] == doctest::Approx(0.6 / (0.36 + 0.1)));

    // Heavy damping recovers the scaled gradient.
    std::mt19937_64 rng(32);
    std::vector<Vector> grads;
    for (int i = 0; i < 5; ++i) grads.push_back(testing::random_vector(rng, 4));
    const double lam = 1e8;
    const auto heavy = natural_gradient_direction(grads, lam, 1e-14, 0);
    for (std::size_t k = 0; k < 4; ++k) CHECK(heavy.delta[k] == doctest::Approx(heavy.gradient[k] / lam).epsilon(1e-6));

    // Default damping is 1e-3 trace / d.
    const auto def = natural_gradient_direction(grads, std::nullopt, 1e-12, 0);
    double trace = 0.0;
    for (const auto& g : grads) trace += dot(g, g) / 5.0;
    CHECK(def.damping == doctest::Approx(1e-3 * trace / 4.0));
  }

  TEST_CASE("natural gradient is invariant under a linear reparametrization") {
    const auto inst = reparametrization_instance(3);
    // xi = A theta with A = [[2, 1], [0, 1]].
    const Matrix a = Matrix::from_rows({{2, 1}, {0, 1}});
    ScalarModel xi_model;
    xi_model.dim = 2;
    const Matrix a_inv = Matrix::from_rows({{0.5, -0.5}, {0, 1}});
    xi_model.value = [&](std::span<const double> xi, std::span<const double> x) {
      return inst.theta_model.value(times_col(a_inv, xi), x);
    };
    xi_model.gradient = [&](std::span<const double> xi, std::span<const double> x) {
      return row_times(inst.theta_model.gradient(times_col(a_inv, xi), x), a_inv);
    };
    const auto gap = reparametrization_gap(
        inst.theta_model, xi_model, [&](std::span<const double> t) { return times_col(a, t); }, inst.theta0,
        inst.data, 1e-2, 0.5);
    CHECK(gap.gap < 1e-10);
  }

  TEST_CASE("training is deterministic") {
    const Dataset d = linear_data(4);
    TrainConfig c;
    c.batch_size = 8;
    c.epochs = 10;
    c.seed = 77;
    const Network init = init_network({3, 4, 1}, Activation::relu(), 5);
    const auto a = train(init, d, c);
    const auto b = train(init, d, c);
    CHECK(a.net == b.net);
    CHECK(a.history.csv_rows() == b.history.csv_rows());
  }

  TEST_CASE("hinge training on separable blobs reaches zero loss") {
    SyntheticParams sp;
    sp.n = 60;
    sp.spread = 0.5;
    sp.signed_labels = true;
    const Dataset d = make_synthetic(SyntheticKind::TwoBlobs, sp, 6);
    TrainConfig c;
    c.loss = Loss::hinge();
    c.lr = 0.05;
    c.epochs = 3000;
    c.grad_tol = 1e-9;
    const auto res = train(init_network({2, 8, 1}, Activation::relu(), 7), d, c);
    CHECK(mean_loss(res.net, d, c.loss) == doctest::Approx(0.0));
  }

  TEST_CASE("deep linear net on linear data reaches a tiny gradient") {
    const Dataset d = linear_data(8);
    TrainConfig c;
    c.lr = 0.05;
    c.epochs = 20000;
    c.grad_tol = 1e-6;
    const auto res = train(init_network({3, 3, 3, 1}, Activation::linear(), 9), d, c);
    CHECK(res.history.status == "converged");
    CHECK(res.history.epochs.back().grad_norm <= 1e-6);
  }

  TEST_CASE("divergence is reported, not thrown") {
    const Dataset d = linear_data(10);
    TrainConfig c;
    c.lr = 50.0;
    c.epochs = 200;
    const auto res = train(init_network({3, 8, 8, 1}, Activation::linear(), 11), d, c);
    CHECK(res.history.status == "diverged");
    CHECK_FALSE(res.history.diagnostic.empty());
  }

  TEST_CASE("large-margin check") {
    // f(x) = x with labels sign(x) and |x| >= 1: hinge gradient is zero, margins >= 1.
    const Network net({Matrix(1, 1, 1.0)}, Activation::linear());
    const Dataset sep = dataset_from(Matrix::from_rows({{1}, {-2}, {3}}), {1, -1, 1});
    const auto ok = check_large_margin(net, sep, 1e-12, 1e-3);
    CHECK(ok.applicable);
    CHECK(ok.passed);
    CHECK(ok.min_margin == doctest::Approx(1.0));

    const Dataset mixed = dataset_from(Matrix::from_rows({{1}, {2}}), {1, -1});
    const auto na = check_large_margin(net, mixed, 1e-12, 1e-3);
    CHECK_FALSE(na.separating);
    CHECK_FALSE(na.applicable);
    CHECK(na.passed);
    CHECK(na.margins.size() == 2);
  }

  TEST_CASE("linear stationarity residual") {
    // Global least-squares optimum in a one-layer model: normal equations vanish.
    const Dataset d = dataset_from(Matrix::from_rows({{1, 0}, {0, 1}, {1, 1}}), {1, 2, 3});
    const Network opt({Matrix::column(Vector{1, 2})}, Activation::linear());
    CHECK(std::abs(check_linear_stationarity(opt, d).residual) < 1e-12);
    const Network dead({Matrix(2, 2, 0.0), Matrix(2, 1, 1.0)}, Activation::linear());
    CHECK(check_linear_stationarity(dead, d).residual == 0);
  }

  TEST_CASE("config validation") {
    TrainConfig c;
    c.lr = 0;
    CHECK_THROWS_AS(c.validate(), InvalidParameter);
    CHECK_THROWS(train_config_from_json({{"optimizer", "lbfgs"}}));
    const auto j = train_config_to_json(train_config_from_json({{"optimizer", "ng"}, {"lr", 0.2}}));
    CHECK(j["optimizer"] == "natural_gradient");
    CHECK(j["lr"] == 0.2);
  }
}
