#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "playrec/beta.hpp"
#include "playrec/betamix.hpp"
#include "playrec/metrics.hpp"
#include "playrec/pipeline.hpp"

namespace py = pybind11;
using namespace playrec;

namespace {

EmConfig::Estimator estimator_from(const std::string& name) {
  if (name == "weighted_mle") return EmConfig::Estimator::weighted_mle;
  if (name == "weighted_moments") return EmConfig::Estimator::weighted_moments;
  if (name == "paper_closed_form") return EmConfig::Estimator::paper_closed_form;
  throw py::value_error("unknown estimator: " + name);
}

Command command_from(const std::string& name) {
  static const std::map<std::string, Command> names{
      {"fit", Command::fit},         {"walk", Command::walk},
      {"train", Command::train},     {"eval", Command::eval},
      {"analyze", Command::analyze}, {"verify-theory", Command::verify_theory},
      {"sweep", Command::sweep}};
  const auto it = names.find(name);
  if (it == names.end()) throw py::value_error("unknown command: " + name);
  return it->second;
}

py::dict fit_mixture(const std::vector<double>& samples, const std::string& estimator) {
  EmConfig cfg;
  cfg.estimator = estimator_from(estimator);
  EmResult r;
  {
    py::gil_scoped_release release;
    r = em_fit(samples, cfg);
  }
  const KsResult ks = ks_test(samples, r.model);
  py::dict d;
  d["pi"] = r.model.pi;
  d["strong"] = py::make_tuple(r.model.strong.alpha, r.model.strong.beta);
  d["weak"] = py::make_tuple(r.model.weak.alpha, r.model.weak.beta);
  d["gamma"] = r.gamma;
  d["log_likelihood"] = r.log_likelihood;
  d["iterations"] = r.iterations;
  d["converged"] = r.converged;
  d["ks_statistic"] = ks.statistic;
  d["ks_p_value"] = ks.p_value;
  return d;
}

// Metrics for one ranked list; categories[i] lists the categories of item i.
py::dict ranking_metrics(const std::vector<ItemId>& ranked, const std::vector<ItemId>& test,
                         const std::vector<std::vector<CategoryId>>& categories, std::size_t K) {
  std::vector<std::pair<ItemId, CategoryId>> members;
  CategoryId num_categories = 0;
  for (ItemId i = 0; i < categories.size(); ++i)
    for (CategoryId c : categories[i]) {
      members.emplace_back(i, c);
      num_categories = std::max<CategoryId>(num_categories, c + 1);
    }
  const CategoryIndex index(categories.size(), num_categories, members);
  const MetricValues m = user_metrics(ranked, test, index, K);
  py::dict d;
  d["ndcg"] = m.ndcg;
  d["recall"] = m.recall;
  d["hit_ratio"] = m.hit_ratio;
  d["precision"] = m.precision;
  d["coverage"] = m.coverage;
  return d;
}

std::string run(const std::string& command, const std::string& out, const std::string& config_json,
                const std::vector<double>& alphas, const std::vector<std::size_t>& Qs,
                const std::vector<std::uint64_t>& seeds) {
  const PipelineConfig config = parse_config(config_json);
  SweepGrid grid{alphas, Qs, seeds};
  if (grid.seeds.empty()) grid.seeds = {config.seed};
  py::gil_scoped_release release;
  return run_command(command_from(command), config, out, grid);
}

}  // namespace

PYBIND11_MODULE(_playrec, m) {
  m.doc() = "Bindings for the playrec recommendation pipeline";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);

  m.def("beta_pdf", [](double x, double a, double b) { return beta_pdf(x, {a, b}); }, py::arg("x"),
        py::arg("a"), py::arg("b"));
  m.def("beta_cdf", [](double x, double a, double b) { return beta_cdf(x, {a, b}); }, py::arg("x"),
        py::arg("a"), py::arg("b"));
  m.def("fit_mixture", &fit_mixture, py::arg("samples"), py::arg("estimator") = "weighted_mle",
        "Fit a two-component Beta mixture to normalized playtimes in (0, 1).");
  m.def("ranking_metrics", &ranking_metrics, py::arg("ranked"), py::arg("test"),
        py::arg("categories"), py::arg("k"));
  m.def("default_config", [] { return config_to_json(PipelineConfig{}); },
        "Default pipeline configuration as JSON text.");
  m.def("run_command", &run, py::arg("command"), py::arg("out"), py::arg("config_json") = "{}",
        py::arg("alphas") = std::vector<double>{}, py::arg("qs") = std::vector<std::size_t>{},
        py::arg("seeds") = std::vector<std::uint64_t>{},
        "Run a pipeline command writing artifacts under `out`; returns the JSON summary.");
}
