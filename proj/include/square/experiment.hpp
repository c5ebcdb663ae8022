#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "square/backend.hpp"
#include "square/dataset.hpp"
#include "square/metrics.hpp"
#include "square/prompt.hpp"

namespace square {

struct BackendSpec {
  enum class Type { kMock, kRemote };

  Type type = Type::kMock;
  std::string model_name;
  std::string base_url;                        // kRemote
  std::filesystem::path mock_dir;              // kMock
  std::optional<std::string> mock_fallback;    // kMock
  int timeout_seconds = 120;
};

struct ExperimentConfig {
  std::filesystem::path dataset_path;
  std::string dataset_name;
  GoldKind gold_kind = GoldKind::kAliasList;
  MetricName metric = MetricName::kSubEm;
  std::size_t sample_n = 200;
  std::uint64_t sample_seed = 0;
  std::size_t k_contexts = 5;
  std::vector<StrategyConfig> strategies;
  BackendSpec backend;
  DecodingParams decoding;
  std::filesystem::path cache_dir;
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> templates_dir;
  int max_in_flight = 4;

  void validate() const;
};

/// Reads a JSON config. Relative paths resolve against the config file's
/// directory. Any schema problem (including an unknown strategy label) is an
/// Error{kConfig}.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& json_text,
                              const std::filesystem::path& base_dir);

/// Everything persisted for one record: enough to audit a score by hand.
struct RecordRow {
  ScoredRecord scored;
  std::string prompt_digest;
  std::string generation;
  bool cache_hit = false;
};

struct RecordFailure {
  std::string record_id;
  std::string error;
};

struct ExperimentResult {
  std::string config_fingerprint;
  std::string dataset_name;
  std::string model_name;
  StrategyConfig strategy;
  std::vector<RecordRow> rows;
  std::vector<RecordFailure> failures;
  MetricReport report;
  long backend_calls = 0;
  long cache_hits = 0;

  std::vector<ScoredRecord> per_record() const;
};

std::string config_fingerprint(const ExperimentConfig& config,
                               const StrategyConfig& strategy,
                               const TemplateStore& store);

std::unique_ptr<ChatBackend> make_backend(const BackendSpec& backend);

struct RunOptions {
  bool allow_partial = false;
  bool write_outputs = true;
};

/// load -> sample -> top-k -> prompt -> cached completion -> extract ->
/// score -> aggregate. Rows are ordered by the sampled record order no
/// matter which worker finished first. A record whose completion fails is
/// listed in `failures`; unless allow_partial is set the run then throws
/// Error{kRecordFailed} after persisting what it has.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const StrategyConfig& strategy,
                                ChatBackend& backend, const CacheStore& cache,
                                const TemplateStore& store,
                                const RunOptions& options = {});

/// Output directory of one strategy: <output_dir>/<label>.
std::filesystem::path result_dir(const ExperimentConfig& config,
                                 const StrategyConfig& strategy);

void write_result(const ExperimentResult& result,
                  const std::filesystem::path& dir);
ExperimentResult read_result(const std::filesystem::path& result_json);

/// All result.json files under `dir`, sorted by path.
std::vector<ExperimentResult> read_results(const std::filesystem::path& dir);

struct Verdict {
  bool pass = false;
  double observed = 0.0;
  double difference = 0.0;
};

/// Compares the one-decimal rendered aggregate with a table value.
Verdict compare_to_reference(const ExperimentResult& result,
                             double reference_percent, double tolerance);

}  // namespace square
