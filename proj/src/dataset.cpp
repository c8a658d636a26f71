#include "frcap/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "frcap/error.hpp"

namespace frcap {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& cell, std::size_t line_no, std::size_t col) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw ValidationError("line " + std::to_string(line_no) + ", column " + std::to_string(col + 1) +
                          ": '" + cell + "' is not a finite number");
  }
  return value;
}

std::string format_number(double x) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), ptr);
}

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw ValidationError(path + ": truncated IDX header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.inputs = Matrix(rows.size(), dim());
  out.labels.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto src = input(rows[k]);
    std::copy(src.begin(), src.end(), out.inputs.row(k).begin());
    out.labels.push_back(labels[rows[k]]);
  }
  out.num_classes = num_classes;
  out.covariance = covariance;
  out.label_noise = label_noise;
  out.provenance = provenance;
  return out;
}

void Dataset::validate() const {
  if (labels.size() != inputs.rows()) {
    throw ValidationError("dataset has " + std::to_string(inputs.rows()) + " inputs but " +
                          std::to_string(labels.size()) + " labels");
  }
  if (!inputs.all_finite()) throw ValidationError("dataset inputs contain NaN or Inf");
  for (double y : labels) {
    if (!std::isfinite(y)) throw ValidationError("dataset labels contain NaN or Inf");
    if (num_classes >= 2 && (y < 0.0 || y != std::floor(y) || y >= static_cast<double>(num_classes))) {
      throw ValidationError("class label " + format_number(y) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

Dataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open CSV file " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path + ": missing header row");
  const auto header = split_csv_line(line);
  const auto it = std::find(header.begin(), header.end(), label_column);
  if (it == header.end()) throw ValidationError(path + ": no column named '" + label_column + "'");
  const std::size_t label_idx = static_cast<std::size_t>(it - header.begin());
  const std::size_t width = header.size();

  std::vector<double> features;
  Vector labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != width) {
      throw ValidationError(path + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " cells, header has " + std::to_string(width));
    }
    for (std::size_t c = 0; c < width; ++c) {
      const double v = parse_number(cells[c], line_no, c);
      if (c == label_idx) {
        labels.push_back(v);
      } else {
        features.push_back(v);
      }
    }
  }
  Dataset data;
  data.inputs = Matrix(labels.size(), width - 1, std::move(features));
  data.labels = std::move(labels);
  data.provenance = path;
  return data;
}

void write_csv(const Dataset& data, const std::string& path, const std::string& label_column) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write CSV file " + path);
  for (std::size_t j = 0; j < data.dim(); ++j) out << 'x' << j << ',';
  out << label_column << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.input(i)) out << format_number(v) << ',';
    out << format_number(data.label(i)) << '\n';
  }
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t limit) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw ValidationError("cannot open IDX images " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw ValidationError("cannot open IDX labels " + labels_path);

  const std::uint32_t img_magic = read_be32(img, images_path);
  if (img_magic != 0x00000803U) {
    throw ValidationError(images_path + ": bad IDX image magic (expected 0x00000803)");
  }
  const std::uint32_t n_img = read_be32(img, images_path);
  const std::uint32_t rows = read_be32(img, images_path);
  const std::uint32_t cols = read_be32(img, images_path);

  const std::uint32_t lab_magic = read_be32(lab, labels_path);
  if (lab_magic != 0x00000801U) {
    throw ValidationError(labels_path + ": bad IDX label magic (expected 0x00000801)");
  }
  const std::uint32_t n_lab = read_be32(lab, labels_path);
  if (n_img != n_lab) {
    throw ValidationError("IDX count mismatch: " + std::to_string(n_img) + " images, " + std::to_string(n_lab) +
                          " labels");
  }

  const std::size_t n = limit == 0 ? n_img : std::min<std::size_t>(limit, n_img);
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> raw(n * pixels);
  if (n > 0 && !img.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw ValidationError(images_path + ": truncated image data");
  }
  std::vector<unsigned char> raw_labels(n);
  if (n > 0 && !lab.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(n))) {
    throw ValidationError(labels_path + ": truncated label data");
  }

  std::vector<double> features(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) features[k] = static_cast<double>(raw[k]) / 255.0;
  Dataset data;
  data.inputs = Matrix(n, pixels, std::move(features));
  data.labels.assign(raw_labels.begin(), raw_labels.end());
  unsigned char max_label = 0;
  for (auto l : raw_labels) max_label = std::max(max_label, l);
  data.num_classes = std::max<std::size_t>(2, std::size_t{max_label} + 1);
  data.provenance = images_path;
  return data;
}

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "gaussian_linear") return SyntheticKind::GaussianLinear;
  if (name == "two_blobs") return SyntheticKind::TwoBlobs;
  if (name == "piecewise_linear_curve") return SyntheticKind::PiecewiseLinearCurve;
  throw ValidationError("unknown synthetic dataset '" + name + "'");
}

Dataset make_synthetic(SyntheticKind kind, const SyntheticParams& params, std::uint64_t seed) {
  if (params.n == 0) throw InvalidParameter("synthetic dataset needs n >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Dataset data;

  switch (kind) {
    case SyntheticKind::GaussianLinear: {
      const std::size_t p = params.covariance ? params.covariance->rows() : params.dim;
      if (p == 0) throw InvalidParameter("gaussian_linear needs dim >= 1");
      const Matrix cov = params.covariance ? *params.covariance : Matrix::identity(p);
      const Matrix chol = cholesky(cov);
      Vector w = params.weights;
      if (w.empty()) w.assign(p, 1.0 / std::sqrt(static_cast<double>(p)));
      if (w.size() != p) throw InvalidParameter("gaussian_linear weights must have length dim");
      if (!(params.noise >= 0.0)) throw InvalidParameter("noise must be >= 0");
      data.inputs = Matrix(params.n, p);
      for (std::size_t i = 0; i < params.n; ++i) {
        Vector z(p);
        for (double& v : z) v = gauss(rng);
        const Vector x = times_col(chol, z);
        std::copy(x.begin(), x.end(), data.inputs.row(i).begin());
        data.labels.push_back(dot(x, w) + params.noise * gauss(rng));
      }
      data.covariance = cov;
      data.provenance = "synthetic:gaussian_linear:seed=" + std::to_string(seed);
      break;
    }
    case SyntheticKind::TwoBlobs: {
      if (params.dim == 0) throw InvalidParameter("two_blobs needs dim >= 1");
      if (!(params.spread > 0.0)) throw InvalidParameter("two_blobs spread must be positive");
      data.inputs = Matrix(params.n, params.dim);
      for (std::size_t i = 0; i < params.n; ++i) {
        const bool positive = (i % 2) == 1;
        auto row = data.inputs.row(i);
        for (double& v : row) v = params.spread * gauss(rng);
        row[0] += (positive ? 0.5 : -0.5) * params.separation;
        data.labels.push_back(params.signed_labels ? (positive ? 1.0 : -1.0) : (positive ? 1.0 : 0.0));
      }
      data.num_classes = params.signed_labels ? 0 : 2;
      data.provenance = "synthetic:two_blobs:seed=" + std::to_string(seed);
      break;
    }
    case SyntheticKind::PiecewiseLinearCurve: {
      if (params.pieces == 0) throw InvalidParameter("piecewise_linear_curve needs pieces >= 1");
      // Knot values of the target curve on an even grid of [0, 1].
      Vector knots(params.pieces + 1);
      for (double& v : knots) v = gauss(rng);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      // (t, 1): the constant coordinate stands in for a bias.
      data.inputs = Matrix(params.n, 2);
      for (std::size_t i = 0; i < params.n; ++i) {
        const double t = unit(rng);
        const double pos = t * static_cast<double>(params.pieces);
        const std::size_t k = std::min(static_cast<std::size_t>(pos), params.pieces - 1);
        const double frac = pos - static_cast<double>(k);
        data.inputs(i, 0) = t;
        data.inputs(i, 1) = 1.0;
        data.labels.push_back((1.0 - frac) * knots[k] + frac * knots[k + 1]);
      }
      data.provenance = "synthetic:piecewise_linear_curve:seed=" + std::to_string(seed);
      break;
    }
  }
  return data;
}

Dataset corrupt_labels(const Dataset& data, double alpha, std::uint64_t seed) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidParameter("label noise alpha must lie in [0, 1]");
  if (data.num_classes < 2) throw UnsupportedConfiguration("label corruption needs a classification dataset");
  Dataset out = data;
  out.label_noise = alpha;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> cls(0, data.num_classes - 1);
  for (double& y : out.labels) {
    const double u = unit(rng);
    const std::size_t c = cls(rng);
    if (u < alpha) y = static_cast<double>(c);
  }
  return out;
}

Split train_test_split(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InvalidParameter("test fraction must lie in (0, 1)");
  if (data.size() < 2) throw InvalidParameter("train/test split needs at least two examples");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_test = static_cast<std::size_t>(std::round(test_fraction * static_cast<double>(data.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, data.size() - 1);
  Split s;
  s.test_rows.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train_rows.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  std::sort(s.test_rows.begin(), s.test_rows.end());
  std::sort(s.train_rows.begin(), s.train_rows.end());
  s.train = data.subset(s.train_rows);
  s.test = data.subset(s.test_rows);
  return s;
}

}  // namespace frcap
