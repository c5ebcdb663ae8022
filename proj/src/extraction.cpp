#include "square/extraction.hpp"

#include <algorithm>
#include <cctype>

#include "square/error.hpp"

namespace square {
namespace {

constexpr std::string_view kAnchor = "answer";

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Position of the last case-insensitive "answer", or npos.
std::size_t last_anchor(std::string_view text) {
  if (text.size() < kAnchor.size()) return std::string_view::npos;
  for (std::size_t pos = text.size() - kAnchor.size() + 1; pos-- > 0;) {
    bool match = true;
    for (std::size_t i = 0; i < kAnchor.size(); ++i) {
      if (std::tolower(static_cast<unsigned char>(text[pos + i])) != kAnchor[i]) {
        match = false;
        break;
      }
    }
    if (match) return pos;
  }
  return std::string_view::npos;
}

}  // namespace

std::string trim_answer_span(std::string_view span) {
  std::size_t begin = 0;
  while (begin < span.size() && (span[begin] == ':' || is_space(span[begin]))) ++begin;
  std::size_t end = span.size();
  while (end > begin && (span[end - 1] == '.' || is_space(span[end - 1]))) --end;
  return std::string(span.substr(begin, end - begin));
}

ExtractionResult extract_answer(std::string_view text) {
  ExtractionResult result;
  const std::size_t pos = last_anchor(text);
  if (pos != std::string_view::npos) {
    std::string_view tail = text.substr(pos + kAnchor.size());
    result.raw_match = std::string(tail);
    std::string span = trim_answer_span(tail);
    if (!span.empty()) {
      result.answer = std::move(span);
      result.captured = true;
      return result;
    }
  }
  result.answer = std::string(text);
  return result;
}

double capture_rate(std::span<const ExtractionResult> results) {
  if (results.empty()) throw Error(ErrorCode::kEmptyInput, "capture rate of no results");
  const auto captured = std::count_if(results.begin(), results.end(),
                                      [](const ExtractionResult& r) { return r.captured; });
  return static_cast<double>(captured) / static_cast<double>(results.size());
}

}  // namespace square
