#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "square/dataset.hpp"
#include "square/error.hpp"
#include "square/extraction.hpp"
#include "square/harness.hpp"
#include "square/metrics.hpp"
#include "square/prompt.hpp"

namespace py = pybind11;

namespace {

std::vector<std::pair<std::string, std::string>> as_pairs(const square::ChatPrompt& prompt) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& m : prompt.messages) out.emplace_back(square::role_name(m.role), m.content);
  return out;
}

square::ChatPrompt from_pairs(const std::vector<std::pair<std::string, std::string>>& messages) {
  square::ChatPrompt prompt;
  for (const auto& [role, content] : messages) {
    prompt.messages.push_back({square::parse_role(role), content});
  }
  return prompt;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "SQuARE evaluation harness core";

  py::register_exception<square::Error>(m, "SquareError", PyExc_RuntimeError);

  py::class_<square::ExtractionResult>(m, "ExtractionResult")
      .def_readonly("answer", &square::ExtractionResult::answer)
      .def_readonly("captured", &square::ExtractionResult::captured)
      .def_readonly("raw_match", &square::ExtractionResult::raw_match)
      .def("__repr__", [](const square::ExtractionResult& r) {
        return "ExtractionResult(answer=" + py::repr(py::str(r.answer)).cast<std::string>() +
               ", captured=" + (r.captured ? "True" : "False") + ")";
      });

  m.def("extract_answer", &square::extract_answer, py::arg("text"));
  m.def("capture_rate",
        [](const std::vector<square::ExtractionResult>& results) {
          return square::capture_rate(results);
        },
        py::arg("results"));

  m.def("normalize_text", &square::normalize_text, py::arg("text"));
  m.def("sub_em",
        [](const std::string& prediction, const std::vector<std::string>& aliases) {
          return square::sub_em(prediction, aliases);
        },
        py::arg("prediction"), py::arg("aliases"));
  m.def("recall_em",
        [](const std::string& prediction, const std::vector<std::vector<std::string>>& aspects) {
          return square::recall_em(prediction, aspects);
        },
        py::arg("prediction"), py::arg("aspects"));
  m.def("render_percent", &square::render_percent, py::arg("percent"));
  m.def("aggregate_percent",
        [](const std::vector<double>& scores) {
          std::vector<square::ScoredRecord> rows;
          for (double s : scores) rows.push_back({"", s, true, "", s});
          return square::aggregate(square::MetricName::kSubEm, rows).aggregate_percent;
        },
        py::arg("scores"));

  py::class_<square::ContextPassage>(m, "ContextPassage")
      .def_readonly("text", &square::ContextPassage::text)
      .def_readonly("title", &square::ContextPassage::title)
      .def_readonly("score", &square::ContextPassage::score)
      .def_readonly("source_id", &square::ContextPassage::source_id);

  py::class_<square::QueryRecord>(m, "QueryRecord")
      .def_readonly("id", &square::QueryRecord::id)
      .def_readonly("question", &square::QueryRecord::question)
      .def_readonly("contexts", &square::QueryRecord::contexts)
      .def_property_readonly("aliases", [](const square::QueryRecord& r) { return r.gold.aliases; })
      .def_property_readonly("aspects", [](const square::QueryRecord& r) { return r.gold.aspects; })
      .def("to_json", &square::serialize_record);

  m.def("load_dataset",
        [](const std::filesystem::path& path, const std::string& gold_kind) {
          return square::load_dataset(path, square::parse_gold_kind(gold_kind));
        },
        py::arg("path"), py::arg("gold_kind") = "aliases");
  m.def("sample_records", &square::sample_records, py::arg("records"), py::arg("n"),
        py::arg("seed"));
  m.def("take_top_k_contexts", &square::take_top_k_contexts, py::arg("record"), py::arg("k") = 5);

  m.def("strategy_label",
        [](const std::string& label) { return square::parse_strategy(label).label(); },
        py::arg("label"));
  m.def("build_system_prompt",
        [](const std::string& label, const std::filesystem::path& templates_dir) {
          const auto store = square::TemplateStore::load(templates_dir);
          return square::build_system_prompt(store, square::parse_strategy(label));
        },
        py::arg("strategy"), py::arg("templates_dir"));
  m.def("assemble_prompt",
        [](const std::string& label, const square::QueryRecord& record,
           const std::filesystem::path& templates_dir) {
          const auto store = square::TemplateStore::load(templates_dir);
          return as_pairs(square::assemble_prompt(store, square::parse_strategy(label), record));
        },
        py::arg("strategy"), py::arg("record"), py::arg("templates_dir"));
  m.def("cache_key",
        [](const std::string& model, const std::vector<std::pair<std::string, std::string>>& messages,
           int max_output_tokens) {
          square::DecodingParams params;
          params.max_output_tokens = max_output_tokens;
          return square::CacheKey::of(model, params, from_pairs(messages)).digest;
        },
        py::arg("model"), py::arg("messages"), py::arg("max_output_tokens") = 1024);

  m.def("run_config",
        [](const std::filesystem::path& config_path, std::optional<std::string> strategy,
           bool allow_partial) {
          const auto config = square::load_config(config_path);
          square::RunOptions options;
          options.allow_partial = allow_partial;
          std::vector<square::ExperimentResult> results;
          {
            py::gil_scoped_release release;
            results = square::run_grid(config, strategy, options);
          }
          std::vector<py::dict> out;
          for (const auto& r : results) {
            py::dict d;
            d["strategy"] = r.strategy.label();
            d["aggregate_percent"] = r.report.aggregate_percent;
            d["rendered"] = r.report.rendered();
            d["capture_rate"] = r.report.capture_rate;
            d["n_records"] = r.report.n_records;
            d["failures"] = r.failures.size();
            d["backend_calls"] = r.backend_calls;
            d["cache_hits"] = r.cache_hits;
            d["fingerprint"] = r.config_fingerprint;
            out.push_back(std::move(d));
          }
          return out;
        },
        py::arg("config"), py::arg("strategy") = py::none(), py::arg("allow_partial") = false);
}
