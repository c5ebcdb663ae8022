#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "square/experiment.hpp"
#include "support/test_util.hpp"

namespace square::testing {

// The bundled mini config with cache and outputs redirected into `root`.
inline ExperimentConfig mini_config(const std::filesystem::path& root,
                                    const std::vector<std::string>& strategies,
                                    const std::string& fallback = "Answer: I could not determine the answer.") {
  nlohmann::json j;
  j["dataset_path"] = (source_dir() / "data" / "mini" / "mini.jsonl").string();
  j["dataset_name"] = "MiniTriviaQA";
  j["sample_n"] = 10;
  j["sample_seed"] = 17;
  j["strategies"] = strategies;
  j["backend"] = {{"type", "mock"},
                  {"model", "mock-model"},
                  {"dir", (root / "mock").string()},
                  {"fallback", fallback}};
  j["cache_dir"] = (root / "cache").string();
  j["output_dir"] = (root / "results").string();
  j["templates_dir"] = templates_dir().string();
  std::filesystem::create_directories(root / "mock");
  return parse_config(j.dump(), root);
}

}  // namespace square::testing
