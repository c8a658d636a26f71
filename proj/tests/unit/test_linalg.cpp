#include <doctest.h>

#include <numbers>

#include <Eigen/Dense>

#include "frcap/error.hpp"
#include "frcap/linalg.hpp"
#include "helpers.hpp"

using namespace frcap;
using testing::random_matrix;

TEST_SUITE("linalg") {
  TEST_CASE("vector p-norms") {
    CHECK(vec_pnorm(Vector{3, 4}, 2) == doctest::Approx(5));
    CHECK(vec_pnorm(Vector{1, -1}, 1) == doctest::Approx(2));
    CHECK(vec_pnorm(Vector{1, -7, 2}, kInf) == 7);
    CHECK_THROWS_AS(vec_pnorm(Vector{1}, 0.5), InvalidParameter);
  }

  TEST_CASE("conjugate exponents") {
    CHECK(conjugate_exponent(2) == 2);
    CHECK(conjugate_exponent(1) == kInf);
    CHECK(conjugate_exponent(kInf) == 1);
    CHECK(conjugate_exponent(3) == doctest::Approx(1.5));
  }

  TEST_CASE("spectral norm small cases") {
    CHECK(spectral_norm(Matrix::identity(3)).value == doctest::Approx(1));
    CHECK(spectral_norm(Matrix::from_rows({{3, 0}, {0, -4}})).value == doctest::Approx(4));
    const Vector u{1, 2, 2}, v{3, 4};
    Matrix r1(3, 2);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j) r1(i, j) = u[i] * v[j];
    CHECK(spectral_norm(r1).value == doctest::Approx(3.0 * 5.0));
  }

  TEST_CASE("spectral norm against a full SVD") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix m = random_matrix(rng, 5, 4);
      Eigen::MatrixXd e(5, 4);
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j) e(i, j) = m(i, j);
      const double want = Eigen::JacobiSVD<Eigen::MatrixXd>(e).singularValues()(0);
      const auto got = spectral_norm(m);
      CHECK(got.converged);
      CHECK(testing::rel(got.value, want) < 1e-10);
    }
  }

  TEST_CASE("group norm") {
    CHECK(group_norm(Matrix(2, 2, 1.0), 2, 2) == doctest::Approx(2));
    CHECK(group_norm(Matrix(3, 3), 1, 2) == 0);
    std::mt19937_64 rng(2);
    const Matrix m = random_matrix(rng, 3, 3);
    double acc = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < 3; ++i) col += std::abs(m(i, j));
      acc += col * col;
    }
    CHECK(group_norm(m, 1, 2) == doctest::Approx(std::sqrt(acc)));
    double mx = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < 3; ++i) col += std::abs(m(i, j));
      mx = std::max(mx, col);
    }
    CHECK(group_norm(m, 1, kInf) == doctest::Approx(mx));
  }

  TEST_CASE("induced norm closed forms") {
    const auto id = induced_norm(Matrix::identity(4), 2, 2);
    CHECK(id.value == doctest::Approx(1));
    CHECK(id.exact);

    // p = 1: the l1 ball is the hull of +-e_i, so the max is over rows.
    std::mt19937_64 rng(3);
    const Matrix m = random_matrix(rng, 4, 3);
    double best = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      Vector e(4, 0.0);
      for (double s : {1.0, -1.0}) {
        e[i] = s;
        best = std::max(best, vec_pnorm(row_times(e, m), 2));
      }
    }
    const auto got = induced_norm(m, 1, 2);
    CHECK(got.exact);
    CHECK(got.value == doctest::Approx(best));
  }

  TEST_CASE("induced norm is never beaten by a probe") {
    std::mt19937_64 rng(4);
    for (auto [p, q] : {std::pair{3.0, 1.5}, {2.0, 1.0}, {kInf, 2.0}, {1.5, 4.0}}) {
      const Matrix m = random_matrix(rng, 4, 5);
      const auto got = induced_norm(m, p, q);
      for (int k = 0; k < 200; ++k) {
        const Vector v = testing::random_vector(rng, 4);
        CHECK(got.value >= vec_pnorm(row_times(v, m), q) / vec_pnorm(v, p) - 1e-12);
      }
    }
  }

  TEST_CASE("diagonal induced norm of a 0/1 mask") {
    const DiagonalMask d({1, 1, 1, 0, 0});
    CHECK(diagonal_induced_norm(d, 2, 1) == doctest::Approx(std::sqrt(3.0)));
    CHECK(diagonal_induced_norm(DiagonalMask({0, 0, 0}), 2, 1) == 0);
    for (auto [q, p] : {std::pair{1.0, 2.0}, {2.0, kInf}, {1.0, kInf}, {2.0, 2.0}}) {
      CHECK(diagonal_induced_norm(d, q, p) == doctest::Approx(1));
    }

    // Brute force: maximize ||v_S||_1 over the unit l2 sphere in R^3 on a grid.
    double best = 0.0;
    const int n = 400;
    for (int a = 0; a <= n; ++a) {
      const double th = std::numbers::pi * a / n;
      for (int b = 0; b < 2 * n; ++b) {
        const double ph = std::numbers::pi * b / n;
        const double v = std::abs(std::sin(th) * std::cos(ph)) + std::abs(std::sin(th) * std::sin(ph)) +
                         std::abs(std::cos(th));
        best = std::max(best, v);
      }
    }
    CHECK(std::abs(best - diagonal_induced_norm(d, 2, 1)) < 1e-4);
  }

  TEST_CASE("diagonal induced norm matches the general routine") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto [q, p] : {std::pair{2.0, 1.0}, {1.0, 2.0}, {kInf, 1.0}, {2.0, kInf}, {1.0, 1.0}, {kInf, 2.0}}) {
      Vector e(6);
      for (double& x : e) x = u(rng) < 0.3 ? 0.0 : u(rng);
      const auto general = induced_norm(Matrix::diagonal(e), q, p);
      REQUIRE(general.exact);
      CHECK(diagonal_induced_norm(DiagonalMask(e), q, p) == doctest::Approx(general.value));
    }
  }

  TEST_CASE("cholesky and triangular solves") {
    std::mt19937_64 rng(6);
    const Matrix b = random_matrix(rng, 4, 4);
    Matrix a = matmul(b, b.transposed());
    for (std::size_t i = 0; i < 4; ++i) a(i, i) += 1.0;
    const Matrix l = cholesky(a);
    const Matrix back = matmul(l, l.transposed());
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(back(i, j) == doctest::Approx(a(i, j)));
    const Vector rhs{1, 2, 3, 4};
    const Vector x = backward_substitute_transposed(l, forward_substitute(l, rhs));
    const Vector ax = times_col(a, x);
    for (std::size_t i = 0; i < 4; ++i) CHECK(ax[i] == doctest::Approx(rhs[i]));
    CHECK_THROWS_AS(cholesky(Matrix::from_rows({{1, 2}, {2, 1}})), DecompositionError);
  }

  TEST_CASE("shape errors") {
    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
    CHECK_THROWS_AS(row_times(Vector{1, 2}, Matrix(3, 1)), ShapeError);
  }
}
