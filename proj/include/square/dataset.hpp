#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace square {

struct ContextPassage {
  std::string text;
  std::optional<std::string> title;
  std::optional<double> score;
  std::optional<std::string> source_id;

  bool operator==(const ContextPassage&) const = default;
};

enum class GoldKind { kAliasList, kAspectSets };

std::string_view gold_kind_name(GoldKind kind);
GoldKind parse_gold_kind(std::string_view name);

/// Gold answers for one question. Alias lists back subEM; aspect sets (one
/// alias set per atomic sub-answer) back recall-EM.
struct GoldLabel {
  GoldKind kind = GoldKind::kAliasList;
  std::vector<std::string> aliases;
  std::vector<std::vector<std::string>> aspects;

  static GoldLabel alias_list(std::vector<std::string> aliases);
  static GoldLabel aspect_sets(std::vector<std::vector<std::string>> aspects);

  bool operator==(const GoldLabel&) const = default;
};

struct QueryRecord {
  std::string id;
  std::string question;
  GoldLabel gold;
  std::vector<ContextPassage> contexts;

  bool operator==(const QueryRecord&) const = default;
};

// Validates a single record against the record invariants. Throws
// Error{kRecordInvalid} with `where` prefixed to the reason.
void validate_record(const QueryRecord& record, std::string_view where);

/// Parses one dataset line. Unknown fields are reported through log::warn.
QueryRecord parse_record(std::string_view line, std::string_view where);

/// Serializes a record to a single line (no trailing newline). Field order is
/// fixed so output is byte-stable.
std::string serialize_record(const QueryRecord& record);

/// Loads a line-delimited dataset file. Blank lines are skipped. Ids must be
/// unique and every record must carry `expected_kind` gold labels.
std::vector<QueryRecord> load_dataset(const std::filesystem::path& path,
                                      GoldKind expected_kind);

/// Draws `n` records without replacement from a generator seeded by `seed`.
/// The result keeps the records' original file order.
std::vector<QueryRecord> sample_records(const std::vector<QueryRecord>& records,
                                        std::size_t n, std::uint64_t seed);

/// Keeps the first min(k, |contexts|) passages. When every passage carries a
/// score they are first stably sorted by descending score.
QueryRecord take_top_k_contexts(const QueryRecord& record, std::size_t k);

}  // namespace square
