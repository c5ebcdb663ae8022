#include "square/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "square/digest.hpp"
#include "square/error.hpp"
#include "square/extraction.hpp"
#include "square/log.hpp"

namespace square {
namespace fs = std::filesystem;

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

[[noreturn]] void config_error(const std::string& why) { throw Error(ErrorCode::kConfig, why); }

std::string read_all(const fs::path& path, ErrorCode code) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(code, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_all(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename T>
T get_field(const json& j, const char* key, const char* type_name) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    config_error(std::string("\"") + key + "\" must be " + type_name);
  }
}

std::string iso_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool scores_extracted_answer(StrategyKind kind) {
  return kind == StrategyKind::kCot || kind == StrategyKind::kRar ||
         kind == StrategyKind::kSquare;
}

ordered_json strategy_json(const StrategyConfig& s) {
  ordered_json j;
  j["label"] = s.label();
  j["kind"] = std::string(strategy_kind_name(s.kind));
  j["n_questions"] = s.n_questions;
  j["aggregation"] = std::string(aggregation_name(s.aggregation));
  j["fewshot_k"] = s.fewshot_k;
  return j;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (sample_n < 1) config_error("sample_n must be at least 1");
  if (k_contexts < 1) config_error("k_contexts must be at least 1");
  if (strategies.empty()) config_error("at least one strategy is required");
  if ((metric == MetricName::kSubEm) != (gold_kind == GoldKind::kAliasList)) {
    config_error("metric " + std::string(metric_name(metric)) + " does not fit gold kind " +
                 std::string(gold_kind_name(gold_kind)));
  }
  if (backend.model_name.empty()) config_error("backend.model is required");
  if (backend.type == BackendSpec::Type::kRemote && backend.base_url.empty()) {
    config_error("backend.base_url is required for openai backends");
  }
  if (max_in_flight < 1) config_error("max_in_flight must be at least 1");
  try {
    decoding.validate();
    for (const auto& s : strategies) s.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
}

ExperimentConfig parse_config(const std::string& json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    config_error(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) config_error("config must be an object");

  static const std::set<std::string> kKnown = {
      "dataset_path", "dataset_name", "gold_kind",  "metric",     "sample_n",
      "sample_seed",  "k_contexts",   "fewshot_k",  "strategies", "backend",
      "decoding",     "cache_dir",    "output_dir", "templates_dir", "max_in_flight"};
  for (const auto& [key, _] : j.items()) {
    if (!kKnown.count(key)) config_error("unknown config field \"" + key + "\"");
  }

  ExperimentConfig c;
  c.dataset_path = resolve(base_dir, get_field<std::string>(j, "dataset_path", "a string"));
  c.dataset_name = j.contains("dataset_name") ? get_field<std::string>(j, "dataset_name", "a string")
                                              : c.dataset_path.stem().string();
  c.gold_kind = parse_gold_kind(j.value("gold_kind", std::string("aliases")));
  c.metric = j.contains("metric")
                 ? parse_metric(get_field<std::string>(j, "metric", "a string"))
                 : (c.gold_kind == GoldKind::kAliasList ? MetricName::kSubEm : MetricName::kRecallEm);
  if (j.contains("sample_n")) c.sample_n = get_field<std::size_t>(j, "sample_n", "a count");
  if (j.contains("sample_seed")) c.sample_seed = get_field<std::uint64_t>(j, "sample_seed", "an integer");
  if (j.contains("k_contexts")) c.k_contexts = get_field<std::size_t>(j, "k_contexts", "a count");
  const int default_fewshot = j.contains("fewshot_k") ? get_field<int>(j, "fewshot_k", "0 or 2") : 2;

  if (!j.contains("strategies") || !j["strategies"].is_array()) {
    config_error("\"strategies\" must be an array of strategy labels");
  }
  for (const auto& s : j["strategies"]) {
    if (!s.is_string()) config_error("strategy entries must be strings");
    try {
      c.strategies.push_back(parse_strategy(s.get<std::string>(), default_fewshot));
    } catch (const Error& e) {
      config_error(e.what());
    }
  }

  if (!j.contains("backend") || !j["backend"].is_object()) config_error("\"backend\" object is required");
  const json& b = j["backend"];
  const std::string type = b.value("type", std::string("mock"));
  if (type == "mock") {
    c.backend.type = BackendSpec::Type::kMock;
    if (b.contains("dir")) c.backend.mock_dir = resolve(base_dir, get_field<std::string>(b, "dir", "a string"));
    if (b.contains("fallback")) c.backend.mock_fallback = get_field<std::string>(b, "fallback", "a string");
  } else if (type == "openai") {
    c.backend.type = BackendSpec::Type::kRemote;
    c.backend.base_url = b.value("base_url", std::string());
  } else {
    config_error("backend.type must be \"mock\" or \"openai\"");
  }
  c.backend.model_name = b.value("model", std::string());
  if (b.contains("timeout_seconds")) c.backend.timeout_seconds = get_field<int>(b, "timeout_seconds", "an integer");

  if (j.contains("decoding")) {
    const json& d = j["decoding"];
    if (d.contains("temperature")) c.decoding.temperature = get_field<double>(d, "temperature", "a number");
    if (d.contains("max_output_tokens")) {
      c.decoding.max_output_tokens = get_field<int>(d, "max_output_tokens", "a count");
    }
  }
  c.cache_dir = resolve(base_dir, j.value("cache_dir", std::string("cache")));
  c.output_dir = resolve(base_dir, j.value("output_dir", std::string("results")));
  if (j.contains("templates_dir")) {
    c.templates_dir = resolve(base_dir, get_field<std::string>(j, "templates_dir", "a string"));
  }
  if (j.contains("max_in_flight")) c.max_in_flight = get_field<int>(j, "max_in_flight", "an integer");
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  const std::string text = read_all(path, ErrorCode::kConfig);
  return parse_config(text, path.parent_path());
}

std::vector<ScoredRecord> ExperimentResult::per_record() const {
  std::vector<ScoredRecord> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(row.scored);
  return out;
}

std::string config_fingerprint(const ExperimentConfig& config, const StrategyConfig& strategy,
                               const TemplateStore& store) {
  ordered_json j;
  j["dataset_sha256"] = sha256_hex(read_all(config.dataset_path, ErrorCode::kIo));
  j["dataset_name"] = config.dataset_name;
  j["gold_kind"] = std::string(gold_kind_name(config.gold_kind));
  j["metric"] = std::string(metric_name(config.metric));
  j["sample_n"] = config.sample_n;
  j["sample_seed"] = config.sample_seed;
  j["k_contexts"] = config.k_contexts;
  j["strategy"] = strategy_json(strategy);
  j["backend_type"] = config.backend.type == BackendSpec::Type::kMock ? "mock" : "openai";
  j["model"] = config.backend.model_name;
  if (config.backend.type == BackendSpec::Type::kRemote) j["base_url"] = config.backend.base_url;
  if (config.backend.mock_fallback) j["mock_fallback"] = *config.backend.mock_fallback;
  j["temperature"] = config.decoding.temperature;
  j["max_output_tokens"] = config.decoding.max_output_tokens;
  j["system_prompt"] = build_system_prompt(store, strategy);
  ordered_json shots = ordered_json::array();
  for (const auto& ex : fewshot_examples(store, strategy)) {
    shots.push_back({{"question", ex.question}, {"assistant_reply", ex.assistant_reply}});
  }
  j["fewshot"] = std::move(shots);
  return sha256_hex(j.dump());
}

std::unique_ptr<ChatBackend> make_backend(const BackendSpec& backend) {
  if (backend.type == BackendSpec::Type::kMock) {
    return std::make_unique<MockBackend>(backend.model_name, backend.mock_dir, backend.mock_fallback);
  }
  RetryPolicy retry;
  return std::make_unique<RemoteBackend>(
      backend.base_url, backend.model_name, api_key_from_env(), retry,
      RemoteBackend::httplib_post(std::chrono::seconds(backend.timeout_seconds)));
}

fs::path result_dir(const ExperimentConfig& config, const StrategyConfig& strategy) {
  return config.output_dir / strategy.label();
}

ExperimentResult run_experiment(const ExperimentConfig& config, const StrategyConfig& strategy,
                                ChatBackend& backend, const CacheStore& cache,
                                const TemplateStore& store, const RunOptions& options) {
  config.validate();
  strategy.validate();
  const std::string started = iso_now();

  std::vector<QueryRecord> records = load_dataset(config.dataset_path, config.gold_kind);
  if (records.empty()) throw Error(ErrorCode::kEmptyInput, "dataset " + config.dataset_path.string() + " is empty");
  const std::size_t n = std::min(config.sample_n, records.size());
  records = sample_records(records, n, config.sample_seed);
  for (auto& r : records) r = take_top_k_contexts(r, config.k_contexts);

  // Build every prompt before touching the backend so template problems
  // surface without spending any requests.
  std::vector<ChatPrompt> prompts;
  prompts.reserve(records.size());
  for (const auto& r : records) prompts.push_back(assemble_prompt(store, strategy, r));

  struct Slot {
    std::optional<CachedGeneration> out;
    std::string error;
  };
  std::vector<Slot> slots(records.size());
  const long calls_before = backend.call_count();
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < records.size(); i = next.fetch_add(1)) {
      try {
        slots[i].out = cached_complete(prompts[i], config.decoding, backend, cache);
      } catch (const Error& e) {
        slots[i].error = e.what();
      }
    }
  };
  const std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(config.max_in_flight), records.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
  }

  ExperimentResult result;
  result.config_fingerprint = config_fingerprint(config, strategy, store);
  result.dataset_name = config.dataset_name;
  result.model_name = config.backend.model_name;
  result.strategy = strategy;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!slots[i].out) {
      result.failures.push_back({records[i].id, slots[i].error});
      continue;
    }
    const Generation& g = slots[i].out->generation;
    const ExtractionResult extraction = extract_answer(g.text);
    RecordRow row;
    row.scored.record_id = records[i].id;
    row.scored.captured = extraction.captured;
    row.scored.extracted_answer = extraction.answer;
    row.scored.raw_score = score_prediction(config.metric, g.text, records[i].gold);
    row.scored.score = scores_extracted_answer(strategy.kind)
                           ? score_prediction(config.metric, extraction.answer, records[i].gold)
                           : row.scored.raw_score;
    row.prompt_digest = CacheKey::of(backend.model_name(), config.decoding, prompts[i]).digest;
    row.generation = g.text;
    row.cache_hit = slots[i].out->hit;
    result.cache_hits += row.cache_hit ? 1 : 0;
    result.rows.push_back(std::move(row));
  }
  result.backend_calls = backend.call_count() - calls_before;
  if (!result.rows.empty()) {
    const auto scored = result.per_record();
    result.report = aggregate(config.metric, scored);
  } else {
    result.report.metric = config.metric;
  }

  if (options.write_outputs) {
    const fs::path dir = result_dir(config, strategy);
    write_result(result, dir);
    ordered_json meta;
    meta["config_fingerprint"] = result.config_fingerprint;
    meta["strategy"] = strategy.label();
    meta["backend_id"] = backend.backend_id();
    meta["model"] = backend.model_name();
    meta["temperature"] = config.decoding.temperature;
    meta["max_output_tokens"] = config.decoding.max_output_tokens;
    meta["dataset_path"] = config.dataset_path.string();
    meta["sample_n"] = n;
    meta["sample_seed"] = config.sample_seed;
    meta["backend_calls"] = result.backend_calls;
    meta["cache_hits"] = result.cache_hits;
    meta["failures"] = result.failures.size();
    meta["started_at"] = started;
    meta["finished_at"] = iso_now();
    write_all(dir / "run_metadata.json", meta.dump(2) + "\n");
  }

  if (!result.failures.empty()) {
    for (const auto& f : result.failures) log::warn("record " + f.record_id + " failed: " + f.error);
    if (!options.allow_partial) {
      throw Error(ErrorCode::kRecordFailed,
                  std::to_string(result.failures.size()) + " of " + std::to_string(n) +
                      " records failed for " + strategy.label() + " (first: " +
                      result.failures.front().error + ")");
    }
  }
  return result;
}

void write_result(const ExperimentResult& result, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string());

  std::string lines;
  for (const RecordRow& row : result.rows) {
    ordered_json j;
    j["id"] = row.scored.record_id;
    j["prompt_digest"] = row.prompt_digest;
    j["generation"] = row.generation;
    j["extracted_answer"] = row.scored.extracted_answer;
    j["captured"] = row.scored.captured;
    j["score"] = row.scored.score;
    j["raw_score"] = row.scored.raw_score;
    j["cache_hit"] = row.cache_hit;
    lines += j.dump() + "\n";
  }
  write_all(dir / "records.jsonl", lines);

  ordered_json j;
  j["config_fingerprint"] = result.config_fingerprint;
  j["dataset_name"] = result.dataset_name;
  j["model_name"] = result.model_name;
  j["strategy"] = strategy_json(result.strategy);
  j["report"] = {{"metric", std::string(metric_name(result.report.metric))},
                 {"aggregate_percent", result.report.aggregate_percent},
                 {"rendered", result.report.rendered()},
                 {"raw_aggregate_percent", result.report.raw_aggregate_percent},
                 {"capture_rate", result.report.capture_rate},
                 {"n_records", result.report.n_records}};
  ordered_json failures = ordered_json::array();
  for (const auto& f : result.failures) failures.push_back({{"id", f.record_id}, {"error", f.error}});
  j["failures"] = std::move(failures);
  write_all(dir / "result.json", j.dump(2) + "\n");
}

ExperimentResult read_result(const fs::path& result_json) {
  fs::path path = result_json;
  if (fs::is_directory(path)) path /= "result.json";
  ExperimentResult result;
  try {
    const json j = json::parse(read_all(path, ErrorCode::kIo));
    result.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    result.dataset_name = j.at("dataset_name").get<std::string>();
    result.model_name = j.at("model_name").get<std::string>();
    result.strategy = parse_strategy(j.at("strategy").at("label").get<std::string>());
    const json& r = j.at("report");
    result.report.metric = parse_metric(r.at("metric").get<std::string>());
    result.report.aggregate_percent = r.at("aggregate_percent").get<double>();
    result.report.raw_aggregate_percent = r.at("raw_aggregate_percent").get<double>();
    result.report.capture_rate = r.at("capture_rate").get<double>();
    result.report.n_records = r.at("n_records").get<std::size_t>();
    for (const auto& f : j.at("failures")) {
      result.failures.push_back({f.at("id").get<std::string>(), f.at("error").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, path.string() + ": " + e.what());
  }

  const fs::path records_path = path.parent_path() / "records.jsonl";
  if (fs::exists(records_path)) {
    std::istringstream lines(read_all(records_path, ErrorCode::kIo));
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      try {
        const json j = json::parse(line);
        RecordRow row;
        row.scored.record_id = j.at("id").get<std::string>();
        row.scored.score = j.at("score").get<double>();
        row.scored.raw_score = j.at("raw_score").get<double>();
        row.scored.captured = j.at("captured").get<bool>();
        row.scored.extracted_answer = j.at("extracted_answer").get<std::string>();
        row.prompt_digest = j.at("prompt_digest").get<std::string>();
        row.generation = j.at("generation").get<std::string>();
        row.cache_hit = j.at("cache_hit").get<bool>();
        result.rows.push_back(std::move(row));
      } catch (const json::exception& e) {
        throw Error(ErrorCode::kIo, records_path.string() + ": " + e.what());
      }
    }
  }
  return result;
}

std::vector<ExperimentResult> read_results(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kIo, dir.string() + " is not a directory");
  std::vector<fs::path> found;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "result.json") {
      found.push_back(entry.path());
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<ExperimentResult> results;
  for (const auto& p : found) results.push_back(read_result(p));
  return results;
}

Verdict compare_to_reference(const ExperimentResult& result, double reference_percent,
                             double tolerance) {
  if (!(tolerance >= 0.0)) throw Error(ErrorCode::kPrecondition, "tolerance must be non-negative");
  Verdict v;
  v.observed = round_percent(result.report.aggregate_percent);
  v.difference = std::fabs(v.observed - reference_percent);
  v.pass = v.difference <= tolerance + 1e-9;
  return v;
}

}  // namespace square
