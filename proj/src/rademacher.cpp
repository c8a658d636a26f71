#include "frcap/rademacher.hpp"

#include <charconv>
#include <cmath>
#include <random>
#include <thread>

#include "frcap/error.hpp"

namespace frcap {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double mahalanobis(const Matrix& chol, std::span<const double> s) {
  const Vector y = forward_substitute(chol, s);
  return std::sqrt(dot(y, y));
}

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::uint64_t trial_seed(std::uint64_t root, std::uint64_t index) { return splitmix64(splitmix64(root) ^ index); }

RademacherEstimate linear_fr_rademacher(std::size_t n, double gamma, const Matrix& cov, std::size_t trials,
                                        std::uint64_t seed, std::size_t threads, const std::string& covariance_id) {
  if (n == 0) throw InvalidParameter("sample size N must be positive");
  if (trials == 0) throw InvalidParameter("need at least one trial");
  if (!(gamma >= 0.0)) throw InvalidParameter("radius gamma must be >= 0");
  if (cov.rows() != cov.cols() || cov.rows() == 0) throw ShapeError("covariance must be square and nonempty");
  const Matrix chol = cholesky(cov);
  const std::size_t p = cov.rows();

  std::vector<double> values(trials);
  auto run = [&](std::size_t begin, std::size_t end) {
    Vector z(p), x(p), s(p);
    for (std::size_t t = begin; t < end; ++t) {
      std::mt19937_64 rng(trial_seed(seed, t));
      std::normal_distribution<double> normal(0.0, 1.0);
      std::fill(s.begin(), s.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (double& v : z) v = normal(rng);
        const double eps = (rng() >> 63) ? 1.0 : -1.0;
        // X = chol z
        for (std::size_t a = 0; a < p; ++a) {
          double acc = 0.0;
          for (std::size_t b = 0; b <= a; ++b) acc += chol(a, b) * z[b];
          s[a] += eps * acc;
        }
      }
      values[t] = gamma / static_cast<double>(n) * mahalanobis(chol, s);
    }
  };

  threads = std::max<std::size_t>(1, std::min(threads, trials));
  if (threads == 1) {
    run(0, trials);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (trials + threads - 1) / threads;
    for (std::size_t w = 0; w < threads; ++w) {
      const std::size_t b = w * chunk;
      const std::size_t e = std::min(trials, b + chunk);
      if (b < e) pool.emplace_back(run, b, e);
    }
  }

  RademacherEstimate est;
  double sum = 0.0;
  for (double v : values) sum += v;
  est.mean = sum / static_cast<double>(trials);
  double var = 0.0;
  for (double v : values) var += (v - est.mean) * (v - est.mean);
  if (trials > 1) var /= static_cast<double>(trials - 1);
  est.std_error = std::sqrt(var / static_cast<double>(trials));
  est.trials = trials;
  est.p = p;
  est.n = n;
  est.gamma = gamma;
  est.bound = gamma * std::sqrt(static_cast<double>(p) / static_cast<double>(n));
  est.covariance_id = covariance_id;
  est.seed = seed;
  return est;
}

double fr_ball_supremum_linear(const Matrix& gram, std::span<const double> s, double gamma) {
  if (gram.rows() != s.size() || gram.cols() != s.size()) throw ShapeError("Gram matrix does not match s");
  if (!(gamma >= 0.0)) throw InvalidParameter("radius gamma must be >= 0");
  return gamma * mahalanobis(cholesky(gram), s);
}

Vector fr_ball_maximizer_linear(const Matrix& gram, std::span<const double> s, double gamma) {
  if (gram.rows() != s.size() || gram.cols() != s.size()) throw ShapeError("Gram matrix does not match s");
  const Matrix chol = cholesky(gram);
  const double norm = mahalanobis(chol, s);
  Vector v(s.size(), 0.0);
  if (norm == 0.0) return v;
  // gram^{-1} s via the two triangular solves.
  v = backward_substitute_transposed(chol, forward_substitute(chol, s));
  for (double& x : v) x *= gamma / norm;
  return v;
}

std::vector<RademacherEstimate> rademacher_sweep(const std::vector<SweepPoint>& grid, std::size_t trials,
                                                 std::uint64_t seed, std::size_t threads) {
  std::vector<RademacherEstimate> out;
  out.reserve(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto& g = grid[k];
    out.push_back(linear_fr_rademacher(g.n, g.gamma, Matrix::identity(g.p), trials, trial_seed(seed, k), threads,
                                       "identity"));
  }
  return out;
}

nlohmann::json rademacher_to_json(const RademacherEstimate& e) {
  return {{"schema", 1},          {"p", e.p},         {"N", e.n},
          {"gamma", e.gamma},     {"mean", e.mean},   {"std_error", e.std_error},
          {"trials", e.trials},   {"bound", e.bound}, {"covariance", e.covariance_id},
          {"seed", e.seed},       {"within_bound", e.within_bound()}};
}

std::vector<std::string> rademacher_csv_header() { return {"p", "N", "gamma", "mean", "se", "bound"}; }

std::vector<std::string> rademacher_csv_row(const RademacherEstimate& e) {
  return {std::to_string(e.p), std::to_string(e.n), fmt(e.gamma), fmt(e.mean), fmt(e.std_error), fmt(e.bound)};
}

Network realize_depth2(std::span<const double> v, std::size_t width, std::uint64_t seed) {
  if (v.empty()) throw InvalidParameter("target vector must be nonempty");
  if (width == 0) throw InvalidParameter("width must be positive");
  const std::size_t p = v.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix w1(width, width);
  for (double& x : w1.data()) x = normal(rng) / std::sqrt(static_cast<double>(width));
  Matrix w2(width, 1);
  w2(0, 0) = 1.0;
  // u = W^1 W^2 is the first column of W^1; pick W^0 with W^0 u = v.
  Vector u = w1.col(0);
  double uu = dot(u, u);
  if (uu == 0.0) {
    w1(0, 0) = 1.0;
    u = w1.col(0);
    uu = dot(u, u);
  }
  Matrix w0(p, width);
  for (double& x : w0.data()) x = normal(rng) / std::sqrt(static_cast<double>(p));
  const Vector r = times_col(w0, u);
  for (std::size_t i = 0; i < p; ++i) {
    const double c = (v[i] - r[i]) / uu;
    for (std::size_t j = 0; j < width; ++j) w0(i, j) += c * u[j];
  }
  return Network({w0, w1, w2}, Activation::linear());
}

RealizationCheck depth2_realization_check(const Matrix& gram, std::span<const double> s, double gamma,
                                          std::size_t width, std::uint64_t seed) {
  RealizationCheck out;
  out.supremum = fr_ball_supremum_linear(gram, s, gamma);
  const Vector target = fr_ball_maximizer_linear(gram, s, gamma);
  const Network net = realize_depth2(target, width, seed);
  Matrix prod = matmul(matmul(net.weight(0), net.weight(1)), net.weight(2));
  out.w = prod.col(0);
  out.realized_inner = dot(s, out.w);
  out.fr_natural = std::sqrt(std::max(0.0, dot(out.w, times_col(gram, out.w))));
  return out;
}

}  // namespace frcap
