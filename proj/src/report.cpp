#include "square/report.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>

#include "square/error.hpp"

namespace square {
namespace {

struct RowKey {
  std::string dataset;
  std::string model;
  int shots = 0;
  int n = 0;

  bool operator==(const RowKey&) const = default;
};

struct Row {
  RowKey key;
  std::optional<MetricName> metric;
  std::map<std::size_t, double> cells;  // column index -> percent
};

const std::vector<std::string>& column_names(ReportLayout layout) {
  static const std::vector<std::string> by_strategy = {"Baseline", "RAG", "CoT", "RaR", "SQuARE"};
  static const std::vector<std::string> ablation = {"SQuARE", "+Summarize", "+Vote"};
  return layout == ReportLayout::kDatasetByStrategy ? by_strategy : ablation;
}

std::optional<std::size_t> column_of(const StrategyConfig& s, ReportLayout layout) {
  if (layout == ReportLayout::kDatasetByStrategy) {
    switch (s.kind) {
      case StrategyKind::kBaseline: return 0;
      case StrategyKind::kRag: return 1;
      case StrategyKind::kCot: return 2;
      case StrategyKind::kRar: return 3;
      case StrategyKind::kSquare:
        if (s.aggregation == Aggregation::kNone && s.n_questions == kDefaultSquareQuestions) return 4;
        return std::nullopt;
    }
    return std::nullopt;
  }
  if (s.kind != StrategyKind::kSquare) return std::nullopt;
  switch (s.aggregation) {
    case Aggregation::kNone: return 0;
    case Aggregation::kSummarize: return 1;
    case Aggregation::kVote: return 2;
  }
  return std::nullopt;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string_view layout_name(ReportLayout layout) {
  return layout == ReportLayout::kDatasetByStrategy ? "dataset_by_strategy" : "n_ablation";
}

ReportLayout parse_layout(std::string_view name) {
  if (name == "dataset_by_strategy") return ReportLayout::kDatasetByStrategy;
  if (name == "n_ablation") return ReportLayout::kNAblation;
  throw Error(ErrorCode::kLayoutMismatch, "unknown layout \"" + std::string(name) + "\"");
}

bool layout_applies(std::span<const ExperimentResult> results, ReportLayout layout) {
  return std::any_of(results.begin(), results.end(), [&](const ExperimentResult& r) {
    return column_of(r.strategy, layout).has_value();
  });
}

RenderedReport render_report(std::span<const ExperimentResult> results, ReportLayout layout) {
  const auto& names = column_names(layout);
  std::vector<Row> rows;
  std::set<std::size_t> used_columns;
  std::set<std::string> models;
  std::set<int> shots;

  for (const ExperimentResult& r : results) {
    const auto col = column_of(r.strategy, layout);
    if (!col) continue;
    RowKey key{r.dataset_name, r.model_name, r.strategy.fewshot_k,
               layout == ReportLayout::kNAblation ? r.strategy.n_questions : 0};
    auto it = std::find_if(rows.begin(), rows.end(), [&](const Row& row) { return row.key == key; });
    if (it == rows.end()) {
      rows.push_back(Row{key, std::nullopt, {}});
      it = std::prev(rows.end());
    }
    if (it->metric && *it->metric != r.report.metric) {
      throw Error(ErrorCode::kLayoutMismatch,
                  "row " + key.dataset + "/" + key.model + " mixes metrics");
    }
    it->metric = r.report.metric;
    if (!it->cells.emplace(*col, r.report.aggregate_percent).second) {
      throw Error(ErrorCode::kLayoutMismatch, "two results for " + r.strategy.label() + " in row " +
                                                  key.dataset + "/" + key.model);
    }
    used_columns.insert(*col);
    models.insert(key.model);
    shots.insert(key.shots);
  }
  if (rows.empty()) {
    throw Error(ErrorCode::kLayoutMismatch,
                "no results fit the " + std::string(layout_name(layout)) + " layout");
  }

  const bool show_model = layout == ReportLayout::kDatasetByStrategy || models.size() > 1;
  const bool show_shots = shots.size() > 1;
  const bool show_n = layout == ReportLayout::kNAblation;

  std::vector<std::string> header = {"Dataset"};
  if (show_model) header.push_back("Model");
  if (show_shots) header.push_back("Shots");
  if (show_n) header.push_back("N");
  const std::size_t n_keys = header.size();
  for (std::size_t c : used_columns) header.push_back(names[c]);

  std::vector<std::vector<std::string>> text_cells;
  std::string csv;
  {
    std::vector<std::string> h = header;
    h.push_back("best");
    for (std::size_t i = 0; i < h.size(); ++i) csv += (i ? "," : "") + csv_field(h[i]);
    csv += "\n";
  }

  for (const Row& row : rows) {
    std::vector<std::string> keys = {row.key.dataset};
    if (show_model) keys.push_back(row.key.model);
    if (show_shots) keys.push_back(std::to_string(row.key.shots));
    if (show_n) keys.push_back(std::to_string(row.key.n));

    double best = -1.0;
    for (const auto& [_, v] : row.cells) best = std::max(best, round_percent(v));

    std::vector<std::string> text_row = keys;
    std::vector<std::string> csv_row = keys;
    std::string best_names;
    for (std::size_t c : used_columns) {
      auto it = row.cells.find(c);
      if (it == row.cells.end()) {
        text_row.push_back("-");
        csv_row.push_back("");
        continue;
      }
      const std::string value = render_percent(it->second);
      csv_row.push_back(value);
      if (round_percent(it->second) == best) {
        text_row.push_back("**" + value + "**");
        best_names += (best_names.empty() ? "" : ";") + names[c];
      } else {
        text_row.push_back(value);
      }
    }
    csv_row.push_back(best_names);
    for (std::size_t i = 0; i < csv_row.size(); ++i) csv += (i ? "," : "") + csv_field(csv_row[i]);
    csv += "\n";
    text_cells.push_back(std::move(text_row));
  }

  std::vector<std::size_t> width(header.size(), 3);
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = std::max(width[i], header[i].size());
  for (const auto& row : text_cells) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out = "|";
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const std::string pad(width[i] - cells[i].size(), ' ');
      out += " " + (i < n_keys ? cells[i] + pad : pad + cells[i]) + " |";
    }
    return out + "\n";
  };
  std::string text = line(header);
  text += "|";
  for (std::size_t i = 0; i < header.size(); ++i) {
    text += i < n_keys ? " " + std::string(width[i], '-') + " |"
                       : " " + std::string(width[i] - 1, '-') + ": |";
  }
  text += "\n";
  for (const auto& row : text_cells) text += line(row);
  return {text, csv};
}

}  // namespace square
