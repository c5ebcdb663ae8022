#pragma once

#include <span>
#include <string>
#include <string_view>

#include "square/experiment.hpp"

namespace square {

enum class ReportLayout { kDatasetByStrategy, kNAblation };

std::string_view layout_name(ReportLayout layout);
ReportLayout parse_layout(std::string_view name);

struct RenderedReport {
  std::string text;  // pipe table, best cells in **bold**
  std::string csv;
};

/// dataset_by_strategy: rows dataset x model, columns Baseline RAG CoT RaR
/// SQuARE (the N=3, no-aggregation run). n_ablation: rows dataset x N,
/// columns SQuARE +Summarize +Vote. Columns with no result anywhere are
/// dropped; missing cells render "-". All tied maxima in a row are marked.
/// Throws Error{kLayoutMismatch} when nothing fits the layout or a row mixes
/// metrics.
RenderedReport render_report(std::span<const ExperimentResult> results,
                             ReportLayout layout);

bool layout_applies(std::span<const ExperimentResult> results,
                    ReportLayout layout);

}  // namespace square
