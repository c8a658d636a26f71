#include <doctest.h>

#include "frcap/autodiff.hpp"
#include "frcap/verify.hpp"
#include "helpers.hpp"

using namespace frcap;

TEST_SUITE("autodiff") {
  TEST_CASE("linear model, squared loss: gradient is (<w,x> - y) x") {
    const Vector w{0.5, -2, 1};
    const Network net({Matrix::column(w)}, Activation::linear());
    const Vector x{1, 2, 3};
    const double y = 0.25;
    const Vector g = loss_gradient(net, x, y, Loss::squared());
    const double r = dot(w, x) - y;
    for (std::size_t i = 0; i < 3; ++i) CHECK(g[i] == doctest::Approx(r * x[i]));
    const Vector fd = numerical_gradient(net, x, y, Loss::squared());
    for (std::size_t i = 0; i < 3; ++i) CHECK(fd[i] == doctest::Approx(g[i]).epsilon(1e-8));
  }

  TEST_CASE("zero gradient at an exact fit") {
    const Network net({Matrix::column(Vector{1, 2})}, Activation::linear());
    const Vector x{3, -1};
    const Vector g = loss_gradient(net, x, 1.0, Loss::squared());
    for (double v : g) CHECK(v == 0.0);
  }

  TEST_CASE("backprop matches central differences on random nets") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
      const Network net = random_network(rng, {});
      const Vector x = input_away_from_kinks(rng, net, 1e-3);
      for (const Loss& loss : {Loss::squared(), Loss::absolute()}) {
        const double y = predict(net, x)[0] + 0.7;
        const Vector g = loss_gradient(net, x, y, loss);
        const Vector fd = numerical_gradient(net, x, y, loss, 1e-5);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          num += (g[i] - fd[i]) * (g[i] - fd[i]);
          den += g[i] * g[i];
        }
        CHECK(std::sqrt(num) <= 1e-5 * std::max(1.0, std::sqrt(den)));
      }
    }
  }

  TEST_CASE("contraction: linear L = 0 gives f") {
    const Network net({Matrix::column(Vector{1.5, -0.5})}, Activation::linear());
    const Contraction c = output_jacobian_contraction(net, Vector{2, 4});
    CHECK(c.total[0] == doctest::Approx(1.0));
    CHECK(c.output[0] == doctest::Approx(1.0));
  }

  TEST_CASE("contraction: scalar chain w0 w1 x") {
    const double w0 = 1.5, w1 = -0.7, x = 2.0;
    const Network net({Matrix(1, 1, w0), Matrix(1, 1, w1)}, Activation::linear());
    const Contraction c = output_jacobian_contraction(net, Vector{x});
    CHECK(c.total[0] == doctest::Approx(2 * w0 * w1 * x));
  }

  TEST_CASE("contraction: every (t, s, l) entry equals the unit output") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      RandomNetSpec spec;
      spec.min_depth = spec.max_depth = 3;
      const Network net = random_network(rng, spec);
      const Vector x = input_away_from_kinks(rng, net);
      const Contraction c = output_jacobian_contraction(net, x);
      for (const auto& e : c.per_pair) CHECK(e.contraction == doctest::Approx(e.output).epsilon(1e-9));
      CHECK(c.total[0] / 4.0 == doctest::Approx(c.output[0]).epsilon(1e-9));
    }
  }

  TEST_CASE("second derivative along theta") {
    std::mt19937_64 rng(9);
    for (std::size_t depth = 0; depth <= 2; ++depth) {
      RandomNetSpec spec;
      spec.min_depth = spec.max_depth = depth;
      spec.kinds = {ActivationKind::Linear};
      const Network net = random_network(rng, spec);
      const Vector x = testing::random_vector(rng, net.input_dim());
      const double f = predict(net, x)[0];
      const double d2 = directional_second_derivative(net, x, 1e-3)[0];
      const double want = static_cast<double>(depth * (depth + 1)) * f;
      CHECK(std::abs(d2 - want) <= 1e-4 * std::max(1.0, std::abs(want)));
    }
  }

  TEST_CASE("per-sample gradients") {
    std::mt19937_64 rng(10);
    const Network net = init_network({3, 5, 1}, Activation::relu(), 3);
    Dataset data = random_inputs(rng, 12, 3);
    for (std::size_t i = 0; i < data.size(); ++i) data.labels[i] = static_cast<double>(i % 3) - 1.0;
    const auto grads = per_sample_grads(net, data, Loss::squared());
    const Vector mean = mean_loss_gradient(net, data, Loss::squared());
    Vector acc(mean.size(), 0.0);
    for (const auto& g : grads)
      for (std::size_t k = 0; k < g.size(); ++k) acc[k] += g[k] / static_cast<double>(grads.size());
    for (std::size_t k = 0; k < acc.size(); ++k) CHECK(std::abs(acc[k] - mean[k]) <= 1e-12);
    const std::vector<std::size_t> one{4};
    CHECK(per_sample_grads(net, data, Loss::squared(), one)[0] ==
          loss_gradient(net, data.input(4), data.label(4), Loss::squared()));
  }
}
