// frcap <subcommand> --config <file> [--set key=value]...
// Exit codes: 0 success, 1 validation error, 2 run failure.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "frcap/error.hpp"
#include "frcap/harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRunFailure = 2;

nlohmann::json read_config(const std::string& path) {
  if (path.empty()) return {{"schema", 1}};
  std::ifstream in(path);
  if (!in) throw frcap::ValidationError("cannot open config file " + path);
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw frcap::ValidationError("config file " + path + " is not valid JSON");
  return doc;
}

int run(const std::string& experiment, const std::string& config_path, const std::vector<std::string>& overrides,
        bool dry_run) {
  frcap::ExperimentConfig cfg;
  try {
    cfg = frcap::make_config(read_config(config_path), experiment, overrides, frcap::seed_from_environment());
  } catch (const frcap::Error& e) {
    std::cerr << "frcap: " << e.what() << '\n';
    return kValidation;
  }
  if (dry_run) {
    std::cout << cfg.doc.dump(2) << '\n';
    return kOk;
  }
  try {
    const frcap::RunReport report = frcap::run_experiment(cfg);
    for (const auto& f : report.files) std::cout << cfg.output_dir << '/' << f << '\n';
    if (!report.ok) {
      std::cerr << "frcap " << experiment << ": " << report.message << '\n';
      return kRunFailure;
    }
    if (!report.message.empty()) std::cerr << "frcap " << experiment << ": " << report.message << '\n';
    return kOk;
  } catch (const frcap::ValidationError& e) {
    std::cerr << "frcap: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "frcap " << experiment << " failed: " << e.what() << '\n';
    return kRunFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fisher-Rao norm and capacity-measure experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  bool dry_run = false;
  std::string chosen;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"train", "train a network and record its history and norms"},
      {"norms", "norm report (FR, flat and data-dependent norms) for a network"},
      {"verify", "run the property suites on random networks"},
      {"rademacher", "Monte-Carlo Rademacher complexity of the linear FR ball"},
      {"margins", "raw and norm-normalized margin distributions"},
      {"sweep", "width / depth / label-noise sweeps with norm reports"},
      {"conditioning", "first-order methods against natural gradient on a piecewise-linear curve"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config,-c", config_path, "config JSON (schema 1); defaults are used when omitted")
        ->check(CLI::ExistingFile);
    sub->add_option("--set,-s", overrides, "override a config leaf, e.g. --set train.lr=0.1")->take_all();
    sub->add_flag("--dry-run", dry_run, "print the merged, validated config and exit");
    sub->callback([&chosen, name = name] { chosen = name; });
  }
  auto* schema = app.add_subcommand("schema", "print the config JSON schema");
  std::string which = "config";
  schema->add_option("kind", which, "config or network")->check(CLI::IsMember({"config", "network"}));
  schema->callback([&] { chosen = "schema"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }
  if (chosen == "schema") {
    std::cout << (which == "network" ? frcap::network_schema() : frcap::config_schema()).dump(2) << '\n';
    return kOk;
  }
  return run(chosen, config_path, overrides, dry_run);
}
