#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace square {

struct ExtractionResult {
  std::string answer;
  bool captured = false;
  std::optional<std::string> raw_match;
};

/// Applies `.*answer(.*)` case-insensitively with `.` spanning newlines: the
/// greedy prefix pins the last "answer" in the text and the rest of the text
/// is the capture. An empty span after trimming is not a capture, and the
/// answer then falls back to the full text.
ExtractionResult extract_answer(std::string_view text);

/// Strips leading ':' and whitespace, then trailing whitespace and periods.
std::string trim_answer_span(std::string_view span);

/// Fraction of captured results. Throws Error{kEmptyInput}.
double capture_rate(std::span<const ExtractionResult> results);

}  // namespace square
