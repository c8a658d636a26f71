#include <doctest.h>

#include <numbers>

#include "frcap/error.hpp"
#include "frcap/rademacher.hpp"
#include "helpers.hpp"

using namespace frcap;

TEST_SUITE("rademacher") {
  TEST_CASE("scalar case against the Gaussian first absolute moment") {
    // sum_i eps_i X_i ~ N(0, N), so E = (gamma / N) sqrt(N) sqrt(2 / pi).
    const std::size_t n = 50;
    const double gamma = 1.5;
    const auto e = linear_fr_rademacher(n, gamma, Matrix::identity(1), 20000, 3);
    const double want = gamma / std::sqrt(static_cast<double>(n)) * std::sqrt(2.0 / std::numbers::pi);
    CHECK(std::abs(e.mean - want) < 4.0 * e.std_error);
    CHECK(e.mean <= gamma / std::sqrt(static_cast<double>(n)));
  }

  TEST_CASE("zero radius gives exactly zero") {
    const auto e = linear_fr_rademacher(10, 0.0, Matrix::identity(3), 100, 1);
    CHECK(e.mean == 0.0);
    CHECK(e.std_error == 0.0);
  }

  TEST_CASE("p = 5, N = 200 stays under gamma sqrt(p / N)") {
    const auto e = linear_fr_rademacher(200, 1.0, Matrix::identity(5), 10000, 4);
    CHECK(e.bound == doctest::Approx(std::sqrt(5.0 / 200.0)));
    CHECK(e.within_bound(3.0));
  }

  TEST_CASE("the estimate does not depend on the thread count") {
    const Matrix cov = Matrix::from_rows({{2, 0.3}, {0.3, 1}});
    const auto a = linear_fr_rademacher(40, 1.0, cov, 999, 8, 1);
    const auto b = linear_fr_rademacher(40, 1.0, cov, 999, 8, 4);
    CHECK(a.mean == b.mean);
    CHECK(a.std_error == b.std_error);
  }

  TEST_CASE("the covariance cancels: any SPD covariance gives the same law") {
    const Matrix cov = Matrix::from_rows({{4, 1, 0}, {1, 2, 0.5}, {0, 0.5, 1}});
    const auto a = linear_fr_rademacher(100, 1.0, cov, 4000, 12);
    const auto b = linear_fr_rademacher(100, 1.0, Matrix::identity(3), 4000, 13);
    CHECK(std::abs(a.mean - b.mean) < 4.0 * std::hypot(a.std_error, b.std_error));
    CHECK_THROWS_AS(linear_fr_rademacher(10, 1.0, Matrix::from_rows({{1, 2}, {2, 1}}), 10, 1), DecompositionError);
  }

  TEST_CASE("FR-ball supremum") {
    const Vector s{3, -4};
    CHECK(fr_ball_supremum_linear(Matrix::identity(2), s, 2.0) == doctest::Approx(10));
    CHECK(fr_ball_supremum_linear(Matrix::from_rows({{4, 0}, {0, 1}}), Vector{1, 0}, 1.0) == doctest::Approx(0.5));
    CHECK(fr_ball_supremum_linear(Matrix::identity(2), Vector{0, 0}, 1.0) == 0);
  }

  TEST_CASE("the maximizer is feasible and attains the supremum") {
    std::mt19937_64 rng(5);
    const Matrix b = testing::random_matrix(rng, 3, 3);
    Matrix gram = matmul(b, b.transposed());
    for (std::size_t i = 0; i < 3; ++i) gram(i, i) += 0.5;
    const Vector s = testing::random_vector(rng, 3);
    const double gamma = 1.7;
    const Vector v = fr_ball_maximizer_linear(gram, s, gamma);
    CHECK(std::sqrt(dot(v, times_col(gram, v))) == doctest::Approx(gamma));
    CHECK(dot(s, v) == doctest::Approx(fr_ball_supremum_linear(gram, s, gamma)));
    // No random feasible point beats it.
    for (int k = 0; k < 500; ++k) {
      Vector u = testing::random_vector(rng, 3);
      const double scale = gamma / std::sqrt(dot(u, times_col(gram, u)));
      for (double& x : u) x *= scale;
      CHECK(dot(s, u) <= dot(s, v) + 1e-12);
    }
  }

  TEST_CASE("a depth-2 linear network realizes the maximizer") {
    const Matrix gram = Matrix::from_rows({{2, 0.5, 0}, {0.5, 1, 0.2}, {0, 0.2, 3}});
    const Vector s{1, -2, 0.5};
    const auto r = depth2_realization_check(gram, s, 1.0, 4, 9);
    CHECK(r.realized_inner == doctest::Approx(r.supremum));
    CHECK(r.fr_natural == doctest::Approx(1.0));
  }

  TEST_CASE("sweep seeds points independently") {
    const auto pts = rademacher_sweep({{2, 50, 1.0}, {2, 50, 2.0}}, 500, 3);
    REQUIRE(pts.size() == 2);
    CHECK(pts[0].bound * 2 == doctest::Approx(pts[1].bound));
    CHECK(rademacher_csv_header() == std::vector<std::string>{"p", "N", "gamma", "mean", "se", "bound"});
  }
}
