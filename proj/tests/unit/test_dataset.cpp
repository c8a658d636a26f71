#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "frcap/dataset.hpp"
#include "frcap/error.hpp"

using namespace frcap;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "frcap_unit";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

// n images of 2x2 pixels with pixel value (i * 50 + j) mod 256, labels i mod 10.
void write_idx(const fs::path& images, const fs::path& labels, std::uint32_t n, std::uint32_t image_magic = 0x803,
               std::uint32_t label_count = 0) {
  std::ofstream im(images, std::ios::binary);
  put_be32(im, image_magic);
  put_be32(im, n);
  put_be32(im, 2);
  put_be32(im, 2);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < 4; ++j) im.put(static_cast<char>(i == 0 && j == 0 ? 255 : (i * 50 + j) % 256));
  std::ofstream lb(labels, std::ios::binary);
  put_be32(lb, 0x801);
  const std::uint32_t m = label_count ? label_count : n;
  put_be32(lb, m);
  for (std::uint32_t i = 0; i < m; ++i) lb.put(static_cast<char>(i % 10));
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("csv loading") {
    const auto p = scratch("three.csv");
    write_text(p, "a,b,label\n1,2,0\n3.5,-4,1\n0,0,2\n");
    const Dataset d = load_csv(p.string(), "label");
    CHECK(d.size() == 3);
    CHECK(d.dim() == 2);
    CHECK(d.input(1)[0] == 3.5);
    CHECK(d.label(2) == 2);

    try {
      load_csv(p.string(), "target");
      FAIL("missing column accepted");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("target") != std::string::npos);
    }
    write_text(p, "a,label\n1,2\n3\n");
    CHECK_THROWS_AS(load_csv(p.string(), "label"), ValidationError);
    write_text(p, "a,label\n1,x\n");
    CHECK_THROWS_AS(load_csv(p.string(), "label"), ValidationError);
  }

  TEST_CASE("csv round trip keeps full precision") {
    const Dataset d = make_synthetic(SyntheticKind::GaussianLinear, {}, 3);
    const auto p = scratch("round.csv");
    write_csv(d, p.string());
    const Dataset back = load_csv(p.string(), "label");
    CHECK(back.inputs == d.inputs);
    CHECK(back.labels == d.labels);
  }

  TEST_CASE("idx loading") {
    const auto im = scratch("img.idx"), lb = scratch("lab.idx");
    write_idx(im, lb, 25);
    const Dataset all = load_idx(im.string(), lb.string());
    CHECK(all.size() == 25);
    CHECK(all.dim() == 4);
    CHECK(all.input(0)[0] == 1.0);
    CHECK(all.input(1)[2] == 52.0 / 255.0);
    CHECK(all.label(13) == 3);
    CHECK(load_idx(im.string(), lb.string(), 10).size() == 10);

    write_idx(im, lb, 5, 0x801);
    CHECK_THROWS_AS(load_idx(im.string(), lb.string()), ValidationError);
    write_idx(im, lb, 5, 0x803, 4);
    CHECK_THROWS_AS(load_idx(im.string(), lb.string()), ValidationError);
    write_idx(im, lb, 5);
    fs::resize_file(im, fs::file_size(im) - 3);
    CHECK_THROWS_AS(load_idx(im.string(), lb.string()), ValidationError);
  }

  TEST_CASE("synthetic generators are seeded") {
    SyntheticParams sp;
    const Dataset a = make_synthetic(SyntheticKind::TwoBlobs, sp, 5);
    const Dataset b = make_synthetic(SyntheticKind::TwoBlobs, sp, 5);
    const Dataset c = make_synthetic(SyntheticKind::TwoBlobs, sp, 6);
    CHECK(a.inputs == b.inputs);
    CHECK(a.labels == b.labels);
    CHECK_FALSE(a.inputs == c.inputs);
  }

  TEST_CASE("gaussian_linear stores the requested covariance") {
    SyntheticParams sp;
    sp.dim = 2;
    sp.covariance = Matrix::from_rows({{2, 0.5}, {0.5, 1}});
    const Dataset d = make_synthetic(SyntheticKind::GaussianLinear, sp, 1);
    REQUIRE(d.covariance.has_value());
    CHECK(*d.covariance == *sp.covariance);
    sp.covariance = Matrix::from_rows({{1, 2}, {2, 1}});
    CHECK_THROWS(make_synthetic(SyntheticKind::GaussianLinear, sp, 1));
  }

  TEST_CASE("two_blobs at separation 4 sigma is linearly separable") {
    SyntheticParams sp;
    sp.separation = 4.0;
    sp.spread = 0.5;
    sp.n = 100;
    const Dataset d = make_synthetic(SyntheticKind::TwoBlobs, sp, 2);
    // Perceptron with a bias coordinate; it terminates only on separable data.
    Vector w(3, 0.0);
    bool separated = false;
    for (int epoch = 0; epoch < 1000 && !separated; ++epoch) {
      separated = true;
      for (std::size_t i = 0; i < d.size(); ++i) {
        const double y = d.label(i) == 1.0 ? 1.0 : -1.0;
        const double s = w[0] * d.input(i)[0] + w[1] * d.input(i)[1] + w[2];
        if (y * s <= 0.0) {
          w[0] += y * d.input(i)[0];
          w[1] += y * d.input(i)[1];
          w[2] += y;
          separated = false;
        }
      }
    }
    CHECK(separated);
  }

  TEST_CASE("label corruption") {
    SyntheticParams sp;
    const Dataset d = make_synthetic(SyntheticKind::TwoBlobs, sp, 3);
    const Dataset same = corrupt_labels(d, 0.0, 9);
    CHECK(same.labels == d.labels);
    const Dataset a = corrupt_labels(d, 1.0, 9);
    const Dataset b = corrupt_labels(d, 1.0, 9);
    CHECK(a.labels == b.labels);
    CHECK(a.label_noise == 1.0);
    // Every label is redrawn uniformly over 2 classes: about half change.
    std::size_t changed = 0;
    for (std::size_t i = 0; i < d.size(); ++i) changed += a.label(i) != d.label(i) ? 1 : 0;
    CHECK(changed > 60);
    CHECK(changed < 140);
    CHECK_THROWS(corrupt_labels(make_synthetic(SyntheticKind::GaussianLinear, sp, 1), 0.5, 1));
  }

  TEST_CASE("train/test split is a seeded partition") {
    const Dataset d = make_synthetic(SyntheticKind::TwoBlobs, {}, 4);
    const Split s = train_test_split(d, 0.25, 7);
    CHECK(s.test.size() == 50);
    CHECK(s.train.size() == 150);
    std::vector<int> seen(d.size(), 0);
    for (auto i : s.train_rows) ++seen[i];
    for (auto i : s.test_rows) ++seen[i];
    for (int v : seen) CHECK(v == 1);
    CHECK(train_test_split(d, 0.25, 7).test_rows == s.test_rows);
  }

  TEST_CASE("validation") {
    Dataset d;
    CHECK_THROWS_AS(Matrix::from_rows({{1, std::nan("")}}), InvalidParameter);
    d.inputs = Matrix::from_rows({{1, 2}});
    d.labels = {3};
    d.num_classes = 2;
    CHECK_THROWS_AS(d.validate(), ValidationError);
  }
}
