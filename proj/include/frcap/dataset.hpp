#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "frcap/linalg.hpp"

namespace frcap {

// Inputs are rows of an N x p matrix. Labels are class indices when
// num_classes >= 2, otherwise real targets (or +-1 for binary margins).
struct Dataset {
  Matrix inputs;
  Vector labels;
  std::size_t num_classes = 0;
  // Population covariance E[X X^T] when the generator knows it.
  std::optional<Matrix> covariance;
  double label_noise = 0.0;
  std::string provenance;

  std::size_t size() const { return inputs.rows(); }
  std::size_t dim() const { return inputs.cols(); }
  std::span<const double> input(std::size_t i) const { return inputs.row(i); }
  double label(std::size_t i) const { return labels[i]; }

  Dataset subset(std::span<const std::size_t> rows) const;
  // Throws ValidationError on NaN/Inf, label count mismatch or class labels out of range.
  void validate() const;
};

// Rectangular numeric CSV with a header row; `label_column` names the target.
Dataset load_csv(const std::string& path, const std::string& label_column);
void write_csv(const Dataset& data, const std::string& path, const std::string& label_column = "label");

// IDX (big-endian) images (magic 0x00000803, dims n, rows, cols) and labels
// (magic 0x00000801, dims n). Keeps the first `limit` examples (0 = all),
// pixels divided by 255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t limit = 0);

enum class SyntheticKind { GaussianLinear, TwoBlobs, PiecewiseLinearCurve };

struct SyntheticParams {
  std::size_t n = 200;
  std::size_t dim = 2;
  // gaussian_linear: covariance of X (identity when empty), true weights
  // (all ones / sqrt(dim) when empty) and Gaussian target noise.
  std::optional<Matrix> covariance;
  Vector weights;
  double noise = 0.1;
  // two_blobs: centres at +-(separation / 2) e_1 with isotropic std `spread`;
  // labels {0, 1} or, with signed_labels, {-1, +1}.
  double separation = 4.0;
  double spread = 1.0;
  bool signed_labels = false;
  // piecewise_linear_curve: number of kinks on [0, 1].
  std::size_t pieces = 6;
};

SyntheticKind parse_synthetic_kind(const std::string& name);
Dataset make_synthetic(SyntheticKind kind, const SyntheticParams& params, std::uint64_t seed);

// Relabels each example with probability alpha to a uniformly drawn class
// (which may coincide with the original label).
Dataset corrupt_labels(const Dataset& data, double alpha, std::uint64_t seed);

struct Split {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

// Seeded shuffle into disjoint train/test index sets.
Split train_test_split(const Dataset& data, double test_fraction, std::uint64_t seed);

}  // namespace frcap
