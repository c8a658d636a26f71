#pragma once

// Experiment configuration, dataset ingestion from a config, the experiment
// runners behind the `frcap` subcommands, and report emission.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "frcap/capacity.hpp"
#include "frcap/dataset.hpp"
#include "frcap/losses.hpp"
#include "frcap/network.hpp"
#include "frcap/optimize.hpp"

namespace frcap {

inline const std::vector<std::string> kExperiments{"train",   "norms", "verify",      "rademacher",
                                                   "margins", "sweep", "conditioning"};

// The published config schema (schemas/config.schema.json), embedded at build time.
const nlohmann::json& config_schema();
const nlohmann::json& network_schema();

// Full config with every default filled in. Defaults differ per experiment
// (e.g. conditioning trains on the piecewise-linear curve).
nlohmann::json default_config(const std::string& experiment);

// "a.b.c=value": value is parsed as JSON when possible, else kept as a string.
// Missing intermediate objects are created.
void apply_override(nlohmann::json& doc, const std::string& assignment);

struct ExperimentConfig {
  nlohmann::json doc;  // merged and validated
  std::string experiment;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string output_dir;
};

// Validates `user` against the schema, merges it over the defaults for the
// experiment (`experiment` wins over the document's own field when nonempty),
// applies the overrides, then `env_seed`, and validates the result again.
// Throws ValidationError listing every violation.
ExperimentConfig make_config(const nlohmann::json& user, const std::string& experiment,
                             const std::vector<std::string>& overrides = {},
                             std::optional<std::uint64_t> env_seed = std::nullopt);

// FRCAP_SEED, when set; throws ValidationError when it is not an unsigned integer.
std::optional<std::uint64_t> seed_from_environment();

// Every random stream in a run is derived from the root seed.
enum class SeedStream : std::uint64_t { Data = 1, Split, Corruption, Init, Train, Sampling };
std::uint64_t derive_seed(std::uint64_t root, SeedStream stream, std::uint64_t index = 0);

Dataset build_dataset(const nlohmann::json& spec, std::uint64_t root_seed);
Loss loss_from_config(const nlohmann::json& doc, const Dataset& data);
std::vector<NormSpec> norm_specs_from_config(const nlohmann::json& doc);

// Fraction of correct predictions: argmax for K >= 2, sign for K = 1 with
// labels in {-1, +1} or {0, 1}; empty for regression targets.
std::optional<double> accuracy(const Network& net, const Dataset& data);

// f(x)_y - max_{y' != y} f(x)_{y'} for K >= 2; y f(x) for K = 1 with labels
// mapped to {-1, +1}. Throws ValidationError for regression targets.
std::vector<double> margins(const Network& net, const Dataset& data);

struct RunReport {
  bool ok = true;
  std::string message;
  std::vector<std::string> files;  // written, relative to the output directory
  nlohmann::json summary;
};

// Throws ValidationError for configs that cannot run (bad paths, mismatched
// shapes); a run that starts but fails returns ok = false.
RunReport run_experiment(const ExperimentConfig& config);

std::string csv_escape(const std::string& field);
std::string format_number(double v);
void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows);
void write_json_file(const std::string& path, const nlohmann::json& doc);

}  // namespace frcap
