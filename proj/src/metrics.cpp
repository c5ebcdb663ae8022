#include "square/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "square/error.hpp"

namespace square {

std::string_view metric_name(MetricName metric) {
  return metric == MetricName::kSubEm ? "subEM" : "recallEM";
}

MetricName parse_metric(std::string_view name) {
  if (name == "subEM" || name == "subem" || name == "sub_em") return MetricName::kSubEm;
  if (name == "recallEM" || name == "recallem" || name == "recall_em") {
    return MetricName::kRecallEm;
  }
  throw Error(ErrorCode::kConfig, "unknown metric \"" + std::string(name) + "\"");
}

std::string normalize_text(std::string_view s) {
  std::string out;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    if (token != "a" && token != "an" && token != "the") {
      if (!out.empty()) out += ' ';
      out += token;
    }
    token.clear();
  };
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      continue;
    } else {
      token += static_cast<char>(std::tolower(c));
    }
  }
  flush();
  return out;
}

int sub_em(std::string_view prediction, std::span<const std::string> aliases) {
  const std::string haystack = " " + normalize_text(prediction) + " ";
  for (const std::string& alias : aliases) {
    const std::string needle = normalize_text(alias);
    if (needle.empty()) continue;
    if (haystack.find(" " + needle + " ") != std::string::npos) return 1;
  }
  return 0;
}

int sub_em(std::string_view prediction, const GoldLabel& gold) {
  if (gold.kind != GoldKind::kAliasList || gold.aliases.empty()) {
    throw Error(ErrorCode::kPrecondition, "subEM needs a non-empty alias list");
  }
  return sub_em(prediction, gold.aliases);
}

double recall_em(std::string_view prediction,
                 std::span<const std::vector<std::string>> aspects) {
  if (aspects.empty()) throw Error(ErrorCode::kPrecondition, "recall-EM needs at least one aspect");
  std::size_t hits = 0;
  for (const auto& aspect : aspects) hits += static_cast<std::size_t>(sub_em(prediction, aspect));
  return static_cast<double>(hits) / static_cast<double>(aspects.size());
}

double recall_em(std::string_view prediction, const GoldLabel& gold) {
  if (gold.kind != GoldKind::kAspectSets) {
    throw Error(ErrorCode::kPrecondition, "recall-EM needs aspect-set gold labels");
  }
  return recall_em(prediction, gold.aspects);
}

double score_prediction(MetricName metric, std::string_view prediction,
                        const GoldLabel& gold) {
  return metric == MetricName::kSubEm ? static_cast<double>(sub_em(prediction, gold))
                                      : recall_em(prediction, gold);
}

double round_percent(double percent) {
  // The epsilon keeps values like 88.45 (stored as 88.4499...) rounding up.
  return std::floor(percent * 10.0 + 0.5 + 1e-9) / 10.0;
}

std::string render_percent(double percent) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", round_percent(percent));
  return buf;
}

std::string MetricReport::rendered() const { return render_percent(aggregate_percent); }

MetricReport aggregate(MetricName metric, std::span<const ScoredRecord> scored) {
  if (scored.empty()) throw Error(ErrorCode::kEmptyInput, "aggregate of no records");
  // Summing in sorted order makes the result independent of record order.
  std::vector<double> scores;
  std::vector<double> raw_scores;
  std::size_t captured = 0;
  for (const ScoredRecord& r : scored) {
    scores.push_back(r.score);
    raw_scores.push_back(r.raw_score);
    captured += r.captured ? 1 : 0;
  }
  std::sort(scores.begin(), scores.end());
  std::sort(raw_scores.begin(), raw_scores.end());
  const double sum = std::accumulate(scores.begin(), scores.end(), 0.0);
  const double raw_sum = std::accumulate(raw_scores.begin(), raw_scores.end(), 0.0);
  const auto n = static_cast<double>(scored.size());
  MetricReport report;
  report.metric = metric;
  report.aggregate_percent = sum * 100.0 / n;
  report.raw_aggregate_percent = raw_sum * 100.0 / n;
  report.capture_rate = static_cast<double>(captured) / n;
  report.n_records = scored.size();
  return report;
}

}  // namespace square
