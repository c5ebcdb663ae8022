#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "square/experiment.hpp"
#include "square/report.hpp"

namespace square {

/// Runs every configured strategy (or just `only`) and writes the report
/// files into config.output_dir. A null backend means "build one from the
/// config".
std::vector<ExperimentResult> run_grid(const ExperimentConfig& config,
                                       const std::optional<std::string>& only,
                                       const RunOptions& options,
                                       ChatBackend* backend = nullptr);

/// report.txt holds every applicable table; report.csv is the by-strategy
/// table when it applies; report_n_ablation.csv is written when SQuARE
/// results exist. Returns the files written.
std::vector<std::filesystem::path> write_reports(
    const std::vector<ExperimentResult>& results, const std::filesystem::path& dir);

}  // namespace square
