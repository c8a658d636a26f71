// JSON crosses the boundary as text; the Python side parses it with the
// standard json module.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "frcap/capacity.hpp"
#include "frcap/error.hpp"
#include "frcap/harness.hpp"
#include "frcap/rademacher.hpp"
#include "frcap/verify.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

frcap::Dataset dataset_from(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                            std::size_t classes) {
  if (x.size() != y.size()) throw frcap::ShapeError("inputs and labels differ in length");
  frcap::Dataset d;
  d.inputs = frcap::Matrix(x.size(), x.empty() ? 0 : x[0].size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != d.inputs.cols()) throw frcap::ShapeError("ragged input rows");
    for (std::size_t j = 0; j < x[i].size(); ++j) d.inputs(i, j) = x[i][j];
  }
  d.labels = y;
  d.num_classes = classes;
  d.provenance = "python";
  d.validate();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  // Translators run most recent first, so the base class goes first.
  py::register_exception<frcap::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<frcap::ValidationError>(m, "ValidationError", PyExc_ValueError);

  m.def("config_schema", [] { return frcap::config_schema().dump(); });
  m.def("network_schema", [] { return frcap::network_schema().dump(); });
  m.def("default_config", [](const std::string& e) { return frcap::default_config(e).dump(); });
  m.def("experiments", [] { return frcap::kExperiments; });

  m.def(
      "merged_config",
      [](const std::string& user, const std::string& experiment, const std::vector<std::string>& overrides) {
        return frcap::make_config(json::parse(user), experiment, overrides, frcap::seed_from_environment()).doc.dump();
      },
      py::arg("user"), py::arg("experiment"), py::arg("overrides") = std::vector<std::string>{});

  m.def(
      "run_experiment",
      [](const std::string& user, const std::string& experiment, const std::vector<std::string>& overrides) {
        const auto cfg = frcap::make_config(json::parse(user), experiment, overrides, frcap::seed_from_environment());
        frcap::RunReport rep;
        {
          py::gil_scoped_release release;
          rep = frcap::run_experiment(cfg);
        }
        return json{{"ok", rep.ok}, {"message", rep.message}, {"files", rep.files}, {"summary", rep.summary}}.dump();
      },
      py::arg("user"), py::arg("experiment"), py::arg("overrides") = std::vector<std::string>{});

  m.def(
      "norm_report",
      [](const std::string& network, const std::vector<std::vector<double>>& x, const std::vector<double>& y,
         const std::string& loss, std::size_t classes, const std::vector<std::string>& norms) {
        const auto net = frcap::network_from_json(json::parse(network));
        const auto data = dataset_from(x, y, loss == "cross_entropy" ? classes : 0);
        std::vector<frcap::NormSpec> specs;
        for (const auto& n : norms) specs.push_back(frcap::NormSpec::parse(n));
        return frcap::norm_report_to_json(
                   frcap::compute_norm_report(net, data, frcap::Loss::parse(loss, classes), specs))
            .dump();
      },
      py::arg("network"), py::arg("x"), py::arg("y"), py::arg("loss") = "squared", py::arg("classes") = 1,
      py::arg("norms") = std::vector<std::string>{});

  m.def(
      "predict",
      [](const std::string& network, const std::vector<double>& x) {
        return frcap::predict(frcap::network_from_json(json::parse(network)), x);
      },
      py::arg("network"), py::arg("x"));

  m.def(
      "init_network",
      [](const std::vector<std::size_t>& dims, const std::string& activation, std::uint64_t seed) {
        return frcap::network_to_json(frcap::init_network(dims, frcap::Activation::parse(activation), seed)).dump();
      },
      py::arg("dims"), py::arg("activation") = "relu", py::arg("seed") = 0);

  m.def(
      "linear_fr_rademacher",
      [](std::size_t n, double gamma, std::size_t p, std::size_t trials, std::uint64_t seed, std::size_t threads) {
        frcap::RademacherEstimate e;
        {
          py::gil_scoped_release release;
          e = frcap::linear_fr_rademacher(n, gamma, frcap::Matrix::identity(p), trials, seed, threads, "identity");
        }
        return frcap::rademacher_to_json(e).dump();
      },
      py::arg("n"), py::arg("gamma"), py::arg("p"), py::arg("trials"), py::arg("seed") = 0, py::arg("threads") = 1);

  m.def(
      "verify",
      [](const std::vector<std::string>& suites, std::size_t count, std::uint64_t seed) {
        json out = json::array();
        for (const auto& r : frcap::run_verify_suites(suites, count, seed)) out.push_back(frcap::suite_to_json(r));
        return out.dump();
      },
      py::arg("suites"), py::arg("count") = 50, py::arg("seed") = 0);
}
