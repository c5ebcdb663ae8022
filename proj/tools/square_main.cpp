// Command-line entry point: run experiment grids, render reports, gate
// results against table values and manage the response cache.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "square/error.hpp"
#include "square/harness.hpp"
#include "square/report.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::optional<std::string>& strategy,
            bool allow_partial) {
  const square::ExperimentConfig config = square::load_config(config_path);
  square::RunOptions options;
  options.allow_partial = allow_partial;
  const auto results = square::run_grid(config, strategy, options);
  for (const auto& r : results) {
    std::printf("%-28s %6s  capture=%.3f  n=%zu  failed=%zu  backend_calls=%ld  cache_hits=%ld\n",
                r.strategy.label().c_str(), r.report.rendered().c_str(), r.report.capture_rate,
                r.report.n_records, r.failures.size(), r.backend_calls, r.cache_hits);
  }
  std::printf("reports written to %s\n", config.output_dir.string().c_str());
  return 0;
}

int cmd_report(const std::string& layout_name, const std::string& inputs,
               const std::optional<std::string>& out_dir) {
  const auto layout = square::parse_layout(layout_name);
  const auto results = square::read_results(inputs);
  const auto rendered = square::render_report(results, layout);
  std::cout << rendered.text;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    std::ofstream(std::filesystem::path(*out_dir) / "report.txt", std::ios::binary) << rendered.text;
    std::ofstream(std::filesystem::path(*out_dir) / "report.csv", std::ios::binary) << rendered.csv;
  }
  return 0;
}

int cmd_check(const std::string& input, double reference, double tol) {
  const auto result = square::read_result(input);
  const auto verdict = square::compare_to_reference(result, reference, tol);
  std::printf("%s: %s observed %.1f reference %.1f |diff| %.2f tol %.2f\n",
              verdict.pass ? "PASS" : "FAIL", result.strategy.label().c_str(), verdict.observed,
              reference, verdict.difference, tol);
  return verdict.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SQuARE prompting evaluation harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::string strategy;
  bool allow_partial = false;
  auto* run = app.add_subcommand("run", "run an experiment grid from a config file");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--strategy", strategy, "run only this strategy label, e.g. square-n5-2shot");
  run->add_flag("--allow-partial", allow_partial, "aggregate over successful records when some fail");

  std::string layout;
  std::string inputs;
  std::string out_dir;
  auto* report = app.add_subcommand("report", "render a results table from result directories");
  report->add_option("--layout", layout, "dataset_by_strategy or n_ablation")->required();
  report->add_option("--inputs", inputs, "directory searched for result.json files")->required();
  report->add_option("--out", out_dir, "also write report.txt and report.csv here");

  std::string input;
  double reference = 0.0;
  double tol = 0.0;
  auto* check = app.add_subcommand("check", "compare one result with a reference value");
  check->add_option("--input", input, "result.json or its directory")->required();
  check->add_option("--reference", reference, "reference percent")->required();
  check->add_option("--tol", tol, "allowed absolute difference in percent points")->required();

  std::string cache_dir;
  auto* cache = app.add_subcommand("cache", "inspect or clear a response cache");
  cache->require_subcommand(1);
  auto* stats = cache->add_subcommand("stats", "entry count and size");
  stats->add_option("--dir", cache_dir, "cache directory")->required();
  auto* clear = cache->add_subcommand("clear", "delete every entry");
  clear->add_option("--dir", cache_dir, "cache directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      return cmd_run(config_path, strategy.empty() ? std::nullopt : std::optional(strategy),
                     allow_partial);
    }
    if (*report) {
      return cmd_report(layout, inputs, out_dir.empty() ? std::nullopt : std::optional(out_dir));
    }
    if (*check) return cmd_check(input, reference, tol);
    if (*cache) {
      const square::CacheStore store(cache_dir);
      if (*stats) {
        const auto s = store.stats();
        std::printf("entries: %zu\nbytes: %ju\n", s.entries, s.bytes);
      } else {
        std::printf("removed %zu entries\n", store.clear());
      }
      return 0;
    }
  } catch (const square::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
