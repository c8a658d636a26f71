#pragma once

#include <cmath>
#include <random>

#include "frcap/dataset.hpp"
#include "frcap/linalg.hpp"
#include "frcap/network.hpp"

namespace testing {

inline double rel(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

inline frcap::Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::normal_distribution<double> g;
  frcap::Matrix m(r, c);
  for (double& x : m.data()) x = g(rng);
  return m;
}

inline frcap::Vector random_vector(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g;
  frcap::Vector v(n);
  for (double& x : v) x = g(rng);
  return v;
}

inline frcap::Dataset dataset_from(const frcap::Matrix& x, frcap::Vector y, std::size_t classes = 0) {
  frcap::Dataset d;
  d.inputs = x;
  d.labels = std::move(y);
  d.num_classes = classes;
  return d;
}

}  // namespace testing
