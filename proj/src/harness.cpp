#include "square/harness.hpp"

#include <fstream>

#include "square/error.hpp"

namespace square {
namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

}  // namespace

std::vector<ExperimentResult> run_grid(const ExperimentConfig& config,
                                       const std::optional<std::string>& only,
                                       const RunOptions& options, ChatBackend* backend) {
  config.validate();
  std::vector<StrategyConfig> strategies = config.strategies;
  if (only) {
    StrategyConfig wanted;
    try {
      wanted = parse_strategy(*only, 2);
    } catch (const Error& e) {
      throw Error(ErrorCode::kConfig, e.what());
    }
    strategies = {wanted};
  }

  const TemplateStore store =
      TemplateStore::load(config.templates_dir.value_or(TemplateStore::default_dir()));
  std::unique_ptr<ChatBackend> owned;
  if (!backend) {
    owned = make_backend(config.backend);
    backend = owned.get();
  }
  const CacheStore cache(config.cache_dir);

  std::vector<ExperimentResult> results;
  for (const StrategyConfig& s : strategies) {
    results.push_back(run_experiment(config, s, *backend, cache, store, options));
  }
  if (options.write_outputs) write_reports(results, config.output_dir);
  return results;
}

std::vector<fs::path> write_reports(const std::vector<ExperimentResult>& results,
                                    const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::vector<fs::path> written;
  std::string text;
  std::string main_csv;
  for (ReportLayout layout : {ReportLayout::kDatasetByStrategy, ReportLayout::kNAblation}) {
    if (!layout_applies(results, layout)) continue;
    const RenderedReport rendered = render_report(results, layout);
    if (!text.empty()) text += "\n";
    text += "## " + std::string(layout_name(layout)) + "\n\n" + rendered.text;
    if (main_csv.empty()) main_csv = rendered.csv;
    if (layout == ReportLayout::kNAblation) {
      write_file(dir / "report_n_ablation.csv", rendered.csv);
      written.push_back(dir / "report_n_ablation.csv");
    }
  }
  if (text.empty()) return written;
  write_file(dir / "report.txt", text);
  write_file(dir / "report.csv", main_csv);
  written.insert(written.begin(), {dir / "report.txt", dir / "report.csv"});
  return written;
}

}  // namespace square
