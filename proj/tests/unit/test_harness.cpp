#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "frcap/error.hpp"
#include "frcap/harness.hpp"
#include "frcap/json_schema.hpp"
#include "helpers.hpp"

using namespace frcap;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "frcap_unit_harness" / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("schema validator keywords") {
    const json schema = {{"type", "object"},
                         {"required", {"a"}},
                         {"additionalProperties", false},
                         {"properties",
                          {{"a", {{"type", "integer"}, {"minimum", 1}}},
                           {"b", {{"enum", {"x", "y"}}}},
                           {"c", {{"type", "array"}, {"minItems", 1}, {"items", {{"type", "number"}}}}},
                           {"d", {{"anyOf", {{{"type", "null"}}, {{"type", "number"}, {"exclusiveMinimum", 0}}}}}}}}};
    CHECK(validate_against_schema({{"a", 2}, {"b", "x"}, {"c", {1.5}}, {"d", nullptr}}, schema).empty());
    CHECK(validate_against_schema({{"a", 2.0}}, schema).empty());
    CHECK(validate_against_schema({{"a", 0}}, schema).size() == 1);
    CHECK(validate_against_schema({{"b", "x"}}, schema).size() == 1);
    CHECK(validate_against_schema({{"a", 1}, {"z", 1}}, schema).size() == 1);
    CHECK(validate_against_schema({{"a", 1}, {"b", "q"}}, schema).size() == 1);
    CHECK(validate_against_schema({{"a", 1}, {"c", json::array()}}, schema).size() == 1);
    CHECK(validate_against_schema({{"a", 1}, {"c", {"s"}}}, schema).size() == 1);
    CHECK(validate_against_schema({{"a", 1}, {"d", 0}}, schema).size() == 1);
    const auto errs = validate_against_schema({{"a", 1}, {"c", {1, "s"}}}, schema);
    REQUIRE(errs.size() == 1);
    CHECK(errs[0].rfind("/c/1", 0) == 0);
    CHECK_THROWS_AS(validate_against_schema(1, {{"pattern", "x"}}), InvalidParameter);
  }

  TEST_CASE("every default config validates") {
    for (const auto& e : kExperiments) {
      CHECK(validate_against_schema(default_config(e), config_schema()).empty());
    }
  }

  TEST_CASE("dotted overrides") {
    json doc = default_config("train");
    apply_override(doc, "train.lr=0.5");
    apply_override(doc, "network.hidden=[4,4,4]");
    apply_override(doc, "output_dir=some/where");
    apply_override(doc, "dataset.kind=gaussian_linear");
    apply_override(doc, "new.branch.leaf=true");
    CHECK(doc["train"]["lr"] == 0.5);
    CHECK(doc["network"]["hidden"] == json({4, 4, 4}));
    CHECK(doc["output_dir"] == "some/where");
    CHECK(doc["dataset"]["kind"] == "gaussian_linear");
    CHECK(doc["new"]["branch"]["leaf"] == true);
    CHECK_THROWS_AS(apply_override(doc, "novalue"), ValidationError);
    CHECK_THROWS_AS(apply_override(doc, "train.lr.x=1"), ValidationError);
  }

  TEST_CASE("make_config merges, overrides and validates") {
    const auto cfg = make_config({{"schema", 1}, {"train", {{"epochs", 3}}}}, "train", {"seed=9"}, 42);
    CHECK(cfg.seed == 42);
    CHECK(cfg.doc["train"]["epochs"] == 3);
    CHECK(cfg.doc["train"]["lr"] == 0.05);
    CHECK_THROWS_AS(make_config({{"schema", 2}}, "train"), ValidationError);
    CHECK_THROWS_AS(make_config({{"schema", 1}, {"experiment", "sweep"}}, "train"), ValidationError);
    CHECK_THROWS_AS(make_config({{"schema", 1}}, "train", {"train.lr=-1"}), ValidationError);
    CHECK_THROWS_AS(make_config({{"schema", 1}, {"norms", {"frobenius"}}}, "norms"), ValidationError);
    CHECK_THROWS_AS(make_config(json::array(), "train"), ValidationError);
  }

  TEST_CASE("FRCAP_SEED") {
    ::setenv("FRCAP_SEED", "17", 1);
    CHECK(seed_from_environment() == std::optional<std::uint64_t>(17));
    ::setenv("FRCAP_SEED", "-3", 1);
    CHECK_THROWS_AS(seed_from_environment(), ValidationError);
    ::unsetenv("FRCAP_SEED");
    CHECK_FALSE(seed_from_environment().has_value());
  }

  TEST_CASE("margins and accuracy") {
    const Network multi({Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}})}, Activation::linear());
    const Dataset d = testing::dataset_from(Matrix::from_rows({{3, 1, 2}, {0, 5, 1}}), {0, 2}, 3);
    const auto m = margins(multi, d);
    CHECK(m[0] == doctest::Approx(1.0));   // 3 - max(1, 2)
    CHECK(m[1] == doctest::Approx(-4.0));  // 1 - max(0, 5)
    CHECK(*accuracy(multi, d) == doctest::Approx(0.5));

    const Network one({Matrix(1, 1, 2.0)}, Activation::linear());
    const Dataset pm = testing::dataset_from(Matrix::from_rows({{1}, {-1}, {1}}), {1, 1, -1});
    CHECK(margins(one, pm) == std::vector<double>{2, -2, -2});
    const Dataset zo = testing::dataset_from(Matrix::from_rows({{1}, {-1}}), {1, 0});
    CHECK(margins(one, zo) == std::vector<double>{2, 2});
    const Dataset reg = testing::dataset_from(Matrix::from_rows({{1}}), {0.3});
    CHECK_FALSE(accuracy(one, reg).has_value());
    CHECK_THROWS_AS(margins(one, reg), ValidationError);
  }

  TEST_CASE("reports are byte-reproducible") {
    const auto dir_a = fresh_dir("repro_a"), dir_b = fresh_dir("repro_b");
    const json user = {{"schema", 1}, {"train", {{"epochs", 15}}}, {"dataset", {{"n", 60}}}};
    auto a = make_config(user, "train", {"output_dir=" + dir_a.string()});
    auto b = make_config(user, "train", {"output_dir=" + dir_b.string()});
    REQUIRE(run_experiment(a).ok);
    REQUIRE(run_experiment(b).ok);
    CHECK(slurp(dir_a / "history.csv") == slurp(dir_b / "history.csv"));
    CHECK(slurp(dir_a / "network.json") == slurp(dir_b / "network.json"));
    // The config echo differs only in output_dir.
    auto sa = json::parse(slurp(dir_a / "summary.json"));
    auto sb = json::parse(slurp(dir_b / "summary.json"));
    sa["config"].erase("output_dir");
    sb["config"].erase("output_dir");
    CHECK(sa == sb);
  }

  TEST_CASE("width sweep emits one row per width") {
    const auto dir = fresh_dir("sweep");
    auto cfg = make_config({{"schema", 1}, {"train", {{"epochs", 10}}}, {"dataset", {{"n", 60}}}}, "sweep",
                           {"output_dir=" + dir.string(), "threads=2"});
    const auto rep = run_experiment(cfg);
    CHECK(rep.ok);
    std::ifstream in(dir / "sweep.csv");
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 5);
    CHECK(lines[0].find("spectral_flat") != std::string::npos);
    CHECK(lines[0].find("path_1_flat") != std::string::npos);
    CHECK(lines[0].find("fr_empirical_natural") != std::string::npos);
    CHECK(lines[0].find("generalization_gap") != std::string::npos);
  }

  TEST_CASE("a failing sweep point is recorded and the sweep continues") {
    const auto dir = fresh_dir("sweep_fail");
    // lr 0.5 is stable for the plain linear model but not for a wide depth-1 net.
    auto cfg = make_config({{"schema", 1},
                            {"train", {{"epochs", 200}, {"lr", 0.5}, {"loss", "squared"}}},
                            {"network", {{"activation", "linear"}}},
                            {"dataset", {{"kind", "gaussian_linear"}, {"n", 60}, {"dim", 3}}},
                            {"sweep", {{"parameter", "depth"}, {"values", {0, 1}}, {"width", 64}}}},
                           "sweep", {"output_dir=" + dir.string()});
    const auto rep = run_experiment(cfg);
    CHECK_FALSE(rep.ok);
    CHECK(rep.summary["points"].size() == 2);
    CHECK(rep.summary["failed_points"] == 1);
    const std::string csv = slurp(dir / "sweep.csv");
    CHECK(csv.find("completed") != std::string::npos);
    CHECK(csv.find("diverged") != std::string::npos);
  }

  TEST_CASE("label-noise sweep writes the ratio table") {
    const auto dir = fresh_dir("noise");
    auto cfg = make_config({{"schema", 1},
                            {"train", {{"epochs", 10}}},
                            {"dataset", {{"n", 60}}},
                            {"sweep", {{"parameter", "label_noise"}, {"values", {0, 1}}}}},
                           "sweep", {"output_dir=" + dir.string()});
    REQUIRE(run_experiment(cfg).ok);
    const std::string ratio = slurp(dir / "sweep_ratio.csv");
    CHECK(ratio.rfind("quantity,alpha_0,alpha_1,ratio\nmodel_fr,", 0) == 0);
    CHECK(ratio.find("\nempirical_fr,") != std::string::npos);
    CHECK(ratio.find("\nspectral,") != std::string::npos);
  }

  TEST_CASE("csv escaping") {
    CHECK(csv_escape("plain") == "plain");
    CHECK(csv_escape("a,b") == "\"a,b\"");
    CHECK(csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(format_number(0.1) == "0.1");
  }
}
