#pragma once

// Dense kernels and the matrix norm catalogue.
//
// Convention: matrices act on row vectors from the left, so the induced norm
// is ||M||_{p->q} = max_{v != 0} ||v^T M||_q / ||v||_p with v in R^{rows}.
// Exponents use +infinity for the max norm; see kInf.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <vector>

namespace frcap {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Row-major entries; throws ShapeError on size mismatch and
  // InvalidParameter on non-finite values.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> d);
  static Matrix column(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  Vector col(std::size_t j) const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  Matrix transposed() const;
  Matrix scaled(double c) const;
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Nonnegative diagonal, D = diag(entries). For ReLU masks the entries are 0/1.
class DiagonalMask {
 public:
  DiagonalMask() = default;
  explicit DiagonalMask(std::vector<double> entries);

  std::span<const double> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  double operator[](std::size_t i) const { return entries_[i]; }

 private:
  std::vector<double> entries_;
};

// v^T M
Vector row_times(std::span<const double> v, const Matrix& m);
// M v
Vector times_col(const Matrix& m, std::span<const double> v);
Matrix matmul(const Matrix& a, const Matrix& b);
double dot(std::span<const double> a, std::span<const double> b);

// Hoelder conjugate: 1/p + 1/p* = 1 with 1* = inf and inf* = 1.
double conjugate_exponent(double p);

double vec_pnorm(std::span<const double> v, double p);

struct SpectralNorm {
  double value = 0.0;
  bool converged = true;
  int iterations = 0;
};

// Largest singular value by power iteration on M^T M from the normalized
// all-ones vector (one seeded restart if that start lies in the null space).
SpectralNorm spectral_norm(const Matrix& m, double tol = 1e-15, int max_iter = 100000);

// [sum_j (sum_i |M_ij|^p)^{q/p}]^{1/q}: l_p inside each column, l_q across.
double group_norm(const Matrix& m, double p, double q);

struct InducedNorm {
  double value = 0.0;
  // false means value is a lower bound from a maximizer search.
  bool exact = false;
};

// Largest dimension for which sign-vector enumeration is used.
inline constexpr std::size_t kMaxEnumerationDim = 20;

// Exact for p = 1, q = inf, p = q = 2, p = inf (rows <= 20) and
// q = 1 (cols <= 20). Otherwise a nonlinear power-method ascent over
// `restarts` seeded starts plus all basis vectors; the result is a lower
// bound flagged exact = false.
InducedNorm induced_norm(const Matrix& m, double p, double q, int restarts = 16,
                         std::uint64_t seed = 0x5eed);

// ||D||_{q->p} for D = diag(d), d >= 0: max_i d_i when p >= q, otherwise
// ||d||_r with 1/r = 1/p - 1/q.
double diagonal_induced_norm(const DiagonalMask& d, double q, double p);

// Lower-triangular L with A = L L^T; throws DecompositionError unless A is SPD.
Matrix cholesky(const Matrix& a);
// Solves L y = b for lower-triangular L.
Vector forward_substitute(const Matrix& lower, std::span<const double> b);
// Solves L^T x = y for lower-triangular L.
Vector backward_substitute_transposed(const Matrix& lower, std::span<const double> y);

}  // namespace frcap
