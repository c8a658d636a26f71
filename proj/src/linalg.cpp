#include "frcap/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "frcap/error.hpp"

namespace frcap {

namespace {

void check_exponent(double p, const char* name) {
  if (!(p >= 1.0)) {
    throw InvalidParameter(std::string(name) + " must be >= 1 (got " + std::to_string(p) + ")");
  }
}

// Unit-norm (in l_p) maximizer of <z, x>; the dual map used by the power method.
Vector dual_direction(std::span<const double> z, double p) {
  Vector x(z.size(), 0.0);
  if (std::isinf(p)) {
    for (std::size_t i = 0; i < z.size(); ++i) x[i] = z[i] > 0 ? 1.0 : (z[i] < 0 ? -1.0 : 0.0);
    return x;
  }
  const double ps = conjugate_exponent(p);
  const double zn = vec_pnorm(z, ps);
  if (zn == 0.0) return x;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double a = std::abs(z[i]) / zn;
    x[i] = std::copysign(std::pow(a, ps - 1.0), z[i]);
  }
  return x;
}

double induced_ratio(const Matrix& m, std::span<const double> v, double p, double q) {
  const double vn = vec_pnorm(v, p);
  if (vn == 0.0) return 0.0;
  return vec_pnorm(row_times(v, m), q) / vn;
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (!std::isfinite(fill)) throw InvalidParameter("matrix entries must be finite");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major)
    : rows_(rows), cols_(cols), data_(std::move(row_major)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix " + std::to_string(rows) + "x" + std::to_string(cols) + " given " +
                     std::to_string(data_.size()) + " entries");
  }
  if (!all_finite()) throw InvalidParameter("matrix entries must be finite");
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged initializer for Matrix");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> d) {
  Matrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  if (!m.all_finite()) throw InvalidParameter("matrix entries must be finite");
  return m;
}

Matrix Matrix::column(std::span<const double> v) {
  return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

Vector Matrix::col(std::size_t j) const {
  Vector out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
  return out;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix Matrix::scaled(double c) const {
  Matrix out = *this;
  for (double& x : out.data_) x *= c;
  return out;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

DiagonalMask::DiagonalMask(std::vector<double> entries) : entries_(std::move(entries)) {
  for (double e : entries_) {
    if (!(e >= 0.0) || !std::isfinite(e)) throw InvalidParameter("diagonal mask entries must be finite and >= 0");
  }
}

Vector row_times(std::span<const double> v, const Matrix& m) {
  if (v.size() != m.rows()) {
    throw ShapeError("row vector of length " + std::to_string(v.size()) + " times " +
                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + " matrix");
  }
  Vector out(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double vi = v[i];
    if (vi == 0.0) continue;
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += vi * r[j];
  }
  return out;
}

Vector times_col(const Matrix& m, std::span<const double> v) {
  if (v.size() != m.cols()) {
    throw ShapeError("matrix " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                     " times column of length " + std::to_string(v.size()));
  }
  Vector out(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = dot(m.row(i), v);
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto row = row_times(a.row(i), b);
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot product of vectors with different lengths");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double conjugate_exponent(double p) {
  check_exponent(p, "exponent");
  if (p == 1.0) return kInf;
  if (std::isinf(p)) return 1.0;
  return p / (p - 1.0);
}

double vec_pnorm(std::span<const double> v, double p) {
  check_exponent(p, "p");
  if (v.empty()) throw ShapeError("vec_pnorm of an empty vector");
  double amax = 0.0;
  for (double x : v) amax = std::max(amax, std::abs(x));
  if (std::isinf(p) || amax == 0.0) return amax;
  if (p == 1.0) {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s;
  }
  if (p == 2.0) {
    double s = 0.0;
    for (double x : v) s += (x / amax) * (x / amax);
    return amax * std::sqrt(s);
  }
  double s = 0.0;
  for (double x : v) s += std::pow(std::abs(x) / amax, p);
  return amax * std::pow(s, 1.0 / p);
}

SpectralNorm spectral_norm(const Matrix& m, double tol, int max_iter) {
  if (m.empty()) throw ShapeError("spectral_norm of an empty matrix");
  const auto data = m.data();
  if (std::all_of(data.begin(), data.end(), [](double x) { return x == 0.0; })) return {0.0, true, 0};

  const std::size_t n = m.cols();
  Vector v(n, 1.0 / std::sqrt(static_cast<double>(n)));
  std::mt19937_64 rng(0x9e3779b97f4a7c15ULL);
  bool restarted = false;

  SpectralNorm out;
  double lambda = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    Vector u = row_times(times_col(m, v), m);  // M^T M v, as (M v)^T M
    const double rq = dot(v, u);
    const double un = vec_pnorm(u, 2.0);
    if (un == 0.0) {
      if (restarted) return {0.0, false, it};
      std::normal_distribution<double> gauss;
      for (double& x : v) x = gauss(rng);
      const double vn = vec_pnorm(v, 2.0);
      for (double& x : v) x /= vn;
      restarted = true;
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) v[i] = u[i] / un;
    out.iterations = it;
    // Rayleigh quotients of power iterates are nondecreasing for PSD operators.
    if (it > 1 && rq - lambda <= tol * rq) {
      lambda = std::max(lambda, rq);
      out.value = std::sqrt(lambda);
      out.converged = true;
      return out;
    }
    lambda = std::max(lambda, rq);
  }
  out.value = std::sqrt(lambda);
  out.converged = false;
  return out;
}

double group_norm(const Matrix& m, double p, double q) {
  check_exponent(p, "p");
  check_exponent(q, "q");
  if (m.empty()) throw ShapeError("group_norm of an empty matrix");
  Vector col_norms(m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) col_norms[j] = vec_pnorm(m.col(j), p);
  return vec_pnorm(col_norms, q);
}

InducedNorm induced_norm(const Matrix& m, double p, double q, int restarts, std::uint64_t seed) {
  check_exponent(p, "p");
  check_exponent(q, "q");
  if (m.empty()) throw ShapeError("induced_norm of an empty matrix");

  if (p == 1.0) {
    // The l_1 ball is the convex hull of +-e_i.
    double best = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) best = std::max(best, vec_pnorm(m.row(i), q));
    return {best, true};
  }
  if (std::isinf(q)) {
    // max_j max_v <v, M_.j> / ||v||_p = max_j ||M_.j||_{p*}
    const double ps = conjugate_exponent(p);
    double best = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) best = std::max(best, vec_pnorm(m.col(j), ps));
    return {best, true};
  }
  if (p == 2.0 && q == 2.0) {
    const auto s = spectral_norm(m);
    return {s.value, s.converged};
  }
  if (std::isinf(p) && m.rows() <= kMaxEnumerationDim) {
    // Convex objective over the l_inf ball peaks at a vertex; fix the first sign.
    const std::size_t r = m.rows();
    Vector s(r);
    double best = 0.0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << (r - 1)); ++mask) {
      s[0] = 1.0;
      for (std::size_t i = 1; i < r; ++i) s[i] = (mask >> (i - 1)) & 1U ? -1.0 : 1.0;
      best = std::max(best, vec_pnorm(row_times(s, m), q));
    }
    return {best, true};
  }
  if (q == 1.0 && m.cols() <= kMaxEnumerationDim) {
    // ||M||_{p->1} = max_{u in {+-1}^cols} ||M u||_{p*}
    const double ps = conjugate_exponent(p);
    const std::size_t c = m.cols();
    Vector u(c);
    double best = 0.0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << (c - 1)); ++mask) {
      u[0] = 1.0;
      for (std::size_t j = 1; j < c; ++j) u[j] = (mask >> (j - 1)) & 1U ? -1.0 : 1.0;
      best = std::max(best, vec_pnorm(times_col(m, u), ps));
    }
    return {best, true};
  }

  // Nonlinear power method: v <- dual_p(M (dual_q-ish gradient of ||v^T M||_q)).
  std::vector<Vector> starts;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    Vector e(m.rows(), 0.0);
    e[i] = 1.0;
    starts.push_back(std::move(e));
  }
  starts.emplace_back(m.rows(), 1.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  for (int r = 0; r < restarts; ++r) {
    Vector v(m.rows());
    for (double& x : v) x = gauss(rng);
    starts.push_back(std::move(v));
  }

  double best = 0.0;
  for (Vector v : starts) {
    for (int it = 0; it < 200; ++it) {
      const double ratio = induced_ratio(m, v, p, q);
      best = std::max(best, ratio);
      Vector y = row_times(v, m);
      const double yn = vec_pnorm(y, q);
      if (yn == 0.0) break;
      Vector g(y.size());
      for (std::size_t j = 0; j < y.size(); ++j) {
        g[j] = std::copysign(std::pow(std::abs(y[j]) / yn, q - 1.0), y[j]);
      }
      Vector next = dual_direction(times_col(m, g), p);
      if (vec_pnorm(next, p) == 0.0) break;
      double change = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) change = std::max(change, std::abs(next[i] - v[i]));
      v = std::move(next);
      if (change < 1e-13) break;
    }
    best = std::max(best, induced_ratio(m, v, p, q));
  }
  return {best, false};
}

double diagonal_induced_norm(const DiagonalMask& d, double q, double p) {
  check_exponent(q, "q");
  check_exponent(p, "p");
  if (d.size() == 0) throw ShapeError("diagonal_induced_norm of an empty mask");
  if (p >= q) {
    const auto e = d.entries();
    return *std::max_element(e.begin(), e.end());
  }
  // p < q, so p is finite.
  const double inv_r = 1.0 / p - (std::isinf(q) ? 0.0 : 1.0 / q);
  return vec_pnorm(d.entries(), 1.0 / inv_r);
}

Matrix cholesky(const Matrix& a) {
  if (a.rows() != a.cols() || a.empty()) throw ShapeError("cholesky requires a nonempty square matrix");
  const std::size_t n = a.rows();
  double scale = 0.0;
  for (double x : a.data()) scale = std::max(scale, std::abs(x));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-12 * std::max(scale, 1.0))
        throw DecompositionError("matrix is not symmetric");
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0)) throw DecompositionError("matrix is not positive definite");
    l(j, j) = std::sqrt(diag);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

Vector forward_substitute(const Matrix& lower, std::span<const double> b) {
  const std::size_t n = lower.rows();
  if (b.size() != n) throw ShapeError("forward_substitute length mismatch");
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= lower(i, k) * y[k];
    y[i] = s / lower(i, i);
  }
  return y;
}

Vector backward_substitute_transposed(const Matrix& lower, std::span<const double> y) {
  const std::size_t n = lower.rows();
  if (y.size() != n) throw ShapeError("backward_substitute length mismatch");
  Vector x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= lower(k, ii) * x[k];
    x[ii] = s / lower(ii, ii);
  }
  return x;
}

}  // namespace frcap
