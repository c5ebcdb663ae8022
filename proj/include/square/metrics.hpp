#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "square/dataset.hpp"

namespace square {

enum class MetricName { kSubEm, kRecallEm };

std::string_view metric_name(MetricName metric);
MetricName parse_metric(std::string_view name);

/// Lowercase, drop ASCII punctuation, drop standalone a/an/the, collapse
/// whitespace.
std::string normalize_text(std::string_view s);

/// 1 iff some alias, normalized, occurs as a contiguous token run inside the
/// normalized prediction. Aliases that normalize to nothing never match.
int sub_em(std::string_view prediction, std::span<const std::string> aliases);
int sub_em(std::string_view prediction, const GoldLabel& gold);

/// Fraction of aspect sets with at least one matching alias.
double recall_em(std::string_view prediction,
                 std::span<const std::vector<std::string>> aspects);
double recall_em(std::string_view prediction, const GoldLabel& gold);

/// Dispatches on the metric; checks the gold kind fits.
double score_prediction(MetricName metric, std::string_view prediction,
                        const GoldLabel& gold);

struct ScoredRecord {
  std::string record_id;
  double score = 0.0;
  bool captured = false;
  std::string extracted_answer;
  double raw_score = 0.0;  // diagnostic: the unextracted generation scored
};

struct MetricReport {
  MetricName metric = MetricName::kSubEm;
  double aggregate_percent = 0.0;
  double raw_aggregate_percent = 0.0;
  double capture_rate = 0.0;
  std::size_t n_records = 0;

  std::string rendered() const;
};

/// One decimal, round-half-up, e.g. 88.5.
std::string render_percent(double percent);
double round_percent(double percent);

MetricReport aggregate(MetricName metric, std::span<const ScoredRecord> scored);

}  // namespace square
