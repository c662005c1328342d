// Python bindings.  Structured values (configs, episodes, models, results)
// cross the boundary as JSON text; the Python package turns them into dicts.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "deta/adapt.hpp"
#include "deta/bench.hpp"
#include "deta/episode_io.hpp"
#include "deta/error.hpp"
#include "deta/friedman.hpp"
#include "deta/metrics.hpp"
#include "deta/model_io.hpp"
#include "deta/synth.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

json parse_or_empty(const std::string& text) { return text.empty() ? json::object() : json::parse(text); }

std::string generate_episode(const std::string& config) {
  return deta::episode_to_json(deta::generate_episode(deta::gen_config_from_json(parse_or_empty(config)))).dump();
}

std::string adapt(const std::string& episode, const std::string& config) {
  const deta::Episode ep = deta::episode_from_json(json::parse(episode));
  const deta::AdaptConfig cfg = deta::adapt_config_from_json(parse_or_empty(config));
  deta::AdaptResult r;
  {
    py::gil_scoped_release release;
    r = deta::adapt_task(ep, cfg);
  }
  return deta::model_to_json({cfg, std::move(r.head), std::move(r.bank), std::move(r.accumulator)}).dump();
}

std::string evaluate(const std::string& model, const std::string& episode, const std::string& head,
                     double temperature) {
  const auto results = deta::evaluate_queries(deta::model_from_json(json::parse(model)),
                                              deta::episode_from_json(json::parse(episode)),
                                              deta::head_from_string(head), temperature);
  std::string out;
  for (const auto& r : results) out += deta::to_jsonl(r) + "\n";
  return out;
}

std::string bench_summary(const std::string& config) {
  const deta::BenchConfig cfg = deta::bench_config_from_json(parse_or_empty(config));
  deta::BenchResult r;
  {
    py::gil_scoped_release release;
    r = deta::run_benchmark(cfg);
  }
  return deta::bench_summary(r).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Noise-robust few-shot adaptation on synthetic patch-feature episodes";

  py::register_exception<deta::Error>(m, "DetaError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const json::exception& e) {
      py::set_error(PyExc_ValueError, e.what());
    }
  });

  m.def("generate_episode", &generate_episode, py::arg("config") = "");
  m.def("adapt", &adapt, py::arg("episode"), py::arg("config") = "");
  m.def("evaluate", &evaluate, py::arg("model"), py::arg("episode"), py::arg("head") = "localncc",
        py::arg("temperature") = 1.0);
  m.def("bench_summary", &bench_summary, py::arg("config") = "");

  m.def("friedman", [](const std::vector<double>& mean_ranks, int n) {
    const deta::FriedmanResult r = deta::friedman(mean_ranks, n);
    return py::make_tuple(r.chi2, r.ff);
  }, py::arg("mean_ranks"), py::arg("n"));
  m.def("auroc", [](const std::vector<double>& id, const std::vector<double>& ood) { return deta::auroc(id, ood); },
        py::arg("id_scores"), py::arg("ood_scores"));
  m.def("fpr_at_95_tpr",
        [](const std::vector<double>& id, const std::vector<double>& ood) { return deta::fpr_at_95_tpr(id, ood); },
        py::arg("id_scores"), py::arg("ood_scores"));
  m.def("accuracy_ci", [](const std::vector<double>& values) {
    const deta::MeanCi ci = deta::accuracy_ci(values);
    return py::make_tuple(ci.mean, ci.half_width);
  }, py::arg("values"));
}
