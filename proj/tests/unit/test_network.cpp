#include <doctest.h>

#include "frcap/capacity.hpp"
#include "frcap/error.hpp"
#include "frcap/json_schema.hpp"
#include "frcap/harness.hpp"
#include "frcap/network.hpp"
#include "frcap/verify.hpp"
#include "helpers.hpp"

using namespace frcap;

TEST_SUITE("network") {
  TEST_CASE("forward: linear L = 0 is an inner product") {
    const Network net({Matrix::column(Vector{2, -1, 0.5})}, Activation::linear());
    CHECK(predict(net, Vector{1, 2, 4})[0] == doctest::Approx(2 - 2 + 2));
  }

  TEST_CASE("forward: hand-evaluated one-hidden-layer ReLU") {
    const Network net({Matrix::from_rows({{1, -1}}), Matrix::from_rows({{1}, {1}})}, Activation::relu());
    const ForwardTrace tr = forward(net, Vector{1});
    CHECK(tr.layers[1].pre == Vector{1, -1});
    CHECK(tr.layers[1].post == Vector{1, 0});
    CHECK(tr.output()[0] == 1);
  }

  TEST_CASE("leaky ReLU with alpha = 1 equals linear") {
    std::mt19937_64 rng(1);
    RandomNetSpec spec;
    spec.kinds = {ActivationKind::Linear};
    const Network lin = random_network(rng, spec);
    const Network leaky(lin.weights(), Activation::leaky_relu(1.0));
    for (int k = 0; k < 20; ++k) {
      const Vector x = testing::random_vector(rng, lin.input_dim());
      CHECK(predict(lin, x)[0] == doctest::Approx(predict(leaky, x)[0]));
    }
  }

  TEST_CASE("nodewise rescaling keeps the function") {
    std::mt19937_64 rng(2);
    RandomNetSpec spec;
    spec.min_depth = 2;
    spec.kinds = {ActivationKind::ReLU};
    const Network net = random_network(rng, spec);
    CHECK(nodewise_rescale(net, 1, 0, 1.0) == net);
    const Network r = nodewise_rescale(net, 1, 0, 3.0);
    CHECK_FALSE(r == net);
    for (int k = 0; k < 100; ++k) {
      const Vector x = testing::random_vector(rng, net.input_dim());
      CHECK(std::abs(predict(net, x)[0] - predict(r, x)[0]) <= 1e-10 * (1 + std::abs(predict(net, x)[0])));
    }
    CHECK_THROWS_AS(nodewise_rescale(net, 0, 0, 2.0), InvalidParameter);
    CHECK_THROWS_AS(nodewise_rescale(net, 1, 0, -2.0), InvalidParameter);
  }

  TEST_CASE("nodewise rescaling keeps the Fisher-Rao norm") {
    std::mt19937_64 rng(3);
    RandomNetSpec spec;
    spec.min_depth = 2;
    spec.kinds = {ActivationKind::ReLU};
    const Network net = random_network(rng, spec);
    const Dataset data = random_inputs(rng, 30, net.input_dim());
    const auto dist = DataDistribution::empirical(data);
    const double before = fr_norm_identity(net, Loss::absolute(), dist);
    const double after = fr_norm_identity(nodewise_rescale(net, 2, 1 % net.dims()[2], 0.2), Loss::absolute(), dist);
    CHECK(testing::rel(before, after) < 1e-10);
  }

  TEST_CASE("convex combination") {
    std::mt19937_64 rng(4);
    RandomNetSpec spec;
    spec.min_depth = spec.max_depth = 2;
    spec.input_dim = 3;
    spec.kinds = {ActivationKind::ReLU};
    const Network a = random_network(rng, spec);
    const Network b = random_network(rng, spec);
    const Network one = convex_combine(a, b, 1.0);
    const Network half = convex_combine(a, b, 0.5);
    CHECK(half.depth() == 3);
    for (int k = 0; k < 100; ++k) {
      const Vector x = testing::random_vector(rng, 3);
      const double fa = predict(a, x)[0], fb = predict(b, x)[0];
      CHECK(std::abs(predict(one, x)[0] - fa) <= 1e-12 * (1 + std::abs(fa)));
      CHECK(std::abs(predict(half, x)[0] - 0.5 * (fa + fb)) <= 1e-12 * (1 + std::abs(fa) + std::abs(fb)));
    }
    CHECK_THROWS(convex_combine(a, b, 1.5));
  }

  TEST_CASE("flatten and unflatten") {
    std::mt19937_64 rng(5);
    const Network net = init_network({3, 4, 2}, Activation::relu(), 9);
    CHECK(net.parameter_count() == 3 * 4 + 4 * 2);
    const Vector theta = flatten(net);
    CHECK(theta.size() == 20);
    CHECK(unflatten(net, theta) == net);
    // Column-major inside a layer.
    CHECK(theta[1] == net.weight(0)(1, 0));
    CHECK(theta[3] == net.weight(0)(0, 1));
    const Network zero = net.scaled(0.0);
    for (double v : flatten(zero)) CHECK(v == 0.0);
    CHECK_THROWS_AS(unflatten(net, Vector(19)), ShapeError);
  }

  TEST_CASE("network JSON round trip matches the published schema") {
    const Network net = init_network({3, 5, 2}, Activation::leaky_relu(0.2), 11);
    const auto doc = network_to_json(net);
    CHECK(validate_against_schema(doc, network_schema()).empty());
    CHECK(network_from_json(doc) == net);
    // Mixed activations and a frozen mask.
    const auto j = network_to_json(convex_combine(init_network({2, 3, 1}, Activation::relu(), 1),
                                                  init_network({2, 3, 1}, Activation::relu(), 2), 0.3));
    CHECK(validate_against_schema(j, network_schema()).empty());
    CHECK(network_from_json(j).has_frozen_entries());
  }

  TEST_CASE("malformed networks are rejected") {
    CHECK_THROWS_AS(Network({Matrix(2, 3), Matrix(2, 1)}, Activation::relu()), ShapeError);
    auto doc = network_to_json(init_network({2, 2, 1}, Activation::relu(), 1));
    doc["schema"] = 2;
    CHECK_THROWS_AS(network_from_json(doc), ValidationError);
    CHECK_THROWS_AS(Activation::leaky_relu(0.0), InvalidParameter);
  }
}
