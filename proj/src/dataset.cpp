#include "square/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <unordered_set>

#include "json.hpp"
#include "square/error.hpp"
#include "square/log.hpp"

namespace square {
namespace {

using ordered_json = nlohmann::ordered_json;

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isspace(c) != 0;
  });
}

[[noreturn]] void invalid(std::string_view where, const std::string& reason) {
  throw Error(ErrorCode::kRecordInvalid, std::string(where) + ": " + reason);
}

std::vector<std::string> string_array(const nlohmann::json& value,
                                      std::string_view where,
                                      const char* field) {
  if (!value.is_array()) invalid(where, std::string("\"") + field + "\" must be an array of strings");
  std::vector<std::string> out;
  for (const auto& item : value) {
    if (!item.is_string()) invalid(where, std::string("\"") + field + "\" must contain only strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

// Unbiased draw in [0, bound) from a 64-bit engine; avoids the
// implementation-defined std::uniform_int_distribution so samples are
// reproducible across standard libraries.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

}  // namespace

std::string_view gold_kind_name(GoldKind kind) {
  return kind == GoldKind::kAliasList ? "aliases" : "aspects";
}

GoldKind parse_gold_kind(std::string_view name) {
  if (name == "aliases" || name == "alias_list") return GoldKind::kAliasList;
  if (name == "aspects" || name == "aspect_sets") return GoldKind::kAspectSets;
  throw Error(ErrorCode::kConfig, "unknown gold kind \"" + std::string(name) + "\"");
}

GoldLabel GoldLabel::alias_list(std::vector<std::string> aliases) {
  GoldLabel g;
  g.kind = GoldKind::kAliasList;
  g.aliases = std::move(aliases);
  return g;
}

GoldLabel GoldLabel::aspect_sets(std::vector<std::vector<std::string>> aspects) {
  GoldLabel g;
  g.kind = GoldKind::kAspectSets;
  g.aspects = std::move(aspects);
  return g;
}

void validate_record(const QueryRecord& record, std::string_view where) {
  if (record.id.empty()) invalid(where, "empty \"id\"");
  if (is_blank(record.question)) invalid(where, "empty \"question\"");
  const GoldLabel& gold = record.gold;
  if (gold.kind == GoldKind::kAliasList) {
    if (gold.aliases.empty()) invalid(where, "\"answers\" needs at least one alias");
  } else {
    if (gold.aspects.empty()) invalid(where, "\"aspects\" needs at least one aspect");
    for (const auto& aspect : gold.aspects) {
      if (aspect.empty()) invalid(where, "every aspect needs at least one alias");
    }
  }
  bool all_scored = !record.contexts.empty();
  for (const auto& passage : record.contexts) {
    if (is_blank(passage.text)) invalid(where, "context passage with empty \"text\"");
    all_scored = all_scored && passage.score.has_value();
  }
  if (all_scored) {
    for (std::size_t i = 1; i < record.contexts.size(); ++i) {
      if (*record.contexts[i].score > *record.contexts[i - 1].score) {
        invalid(where, "scored contexts must be in non-increasing score order");
      }
    }
  }
}

QueryRecord parse_record(std::string_view line, std::string_view where) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    invalid(where, std::string("not valid JSON (") + e.what() + ")");
  }
  if (!j.is_object()) invalid(where, "record must be an object");

  static const std::set<std::string> kKnown = {"id", "question", "answers",
                                               "aspects", "contexts"};
  for (const auto& [key, _] : j.items()) {
    if (!kKnown.count(key)) {
      log::warn(std::string(where) + ": ignoring unknown field \"" + key + "\"");
    }
  }

  QueryRecord record;
  if (!j.contains("id") || !j["id"].is_string()) invalid(where, "missing string field \"id\"");
  record.id = j["id"].get<std::string>();
  if (!j.contains("question") || !j["question"].is_string()) {
    invalid(where, "missing string field \"question\"");
  }
  record.question = j["question"].get<std::string>();

  const bool has_answers = j.contains("answers");
  const bool has_aspects = j.contains("aspects");
  if (has_answers == has_aspects) {
    invalid(where, "exactly one of \"answers\" or \"aspects\" is required");
  }
  if (has_answers) {
    record.gold = GoldLabel::alias_list(string_array(j["answers"], where, "answers"));
  } else {
    if (!j["aspects"].is_array()) invalid(where, "\"aspects\" must be an array of arrays");
    std::vector<std::vector<std::string>> aspects;
    for (const auto& aspect : j["aspects"]) {
      aspects.push_back(string_array(aspect, where, "aspects"));
    }
    record.gold = GoldLabel::aspect_sets(std::move(aspects));
  }

  if (j.contains("contexts")) {
    if (!j["contexts"].is_array()) invalid(where, "\"contexts\" must be an array");
    for (const auto& c : j["contexts"]) {
      if (!c.is_object() || !c.contains("text") || !c["text"].is_string()) {
        invalid(where, "each context needs a string \"text\"");
      }
      ContextPassage passage;
      passage.text = c["text"].get<std::string>();
      if (c.contains("title") && !c["title"].is_null()) {
        if (!c["title"].is_string()) invalid(where, "context \"title\" must be a string");
        passage.title = c["title"].get<std::string>();
      }
      if (c.contains("score") && !c["score"].is_null()) {
        if (!c["score"].is_number()) invalid(where, "context \"score\" must be a number");
        passage.score = c["score"].get<double>();
      }
      if (c.contains("source_id") && !c["source_id"].is_null()) {
        if (!c["source_id"].is_string()) invalid(where, "context \"source_id\" must be a string");
        passage.source_id = c["source_id"].get<std::string>();
      }
      record.contexts.push_back(std::move(passage));
    }
  }

  // Scored passages are stored best-first; stable so equal scores keep the
  // retriever's order.
  if (!record.contexts.empty() &&
      std::all_of(record.contexts.begin(), record.contexts.end(),
                  [](const ContextPassage& p) { return p.score.has_value(); })) {
    std::stable_sort(record.contexts.begin(), record.contexts.end(),
                     [](const ContextPassage& a, const ContextPassage& b) {
                       return *a.score > *b.score;
                     });
  }

  validate_record(record, where);
  return record;
}

std::string serialize_record(const QueryRecord& record) {
  ordered_json j;
  j["id"] = record.id;
  j["question"] = record.question;
  if (record.gold.kind == GoldKind::kAliasList) {
    j["answers"] = record.gold.aliases;
  } else {
    j["aspects"] = record.gold.aspects;
  }
  ordered_json contexts = ordered_json::array();
  for (const auto& passage : record.contexts) {
    ordered_json c;
    c["text"] = passage.text;
    if (passage.title) c["title"] = *passage.title;
    if (passage.score) c["score"] = *passage.score;
    if (passage.source_id) c["source_id"] = *passage.source_id;
    contexts.push_back(std::move(c));
  }
  j["contexts"] = std::move(contexts);
  return j.dump();
}

std::vector<QueryRecord> load_dataset(const std::filesystem::path& path,
                                      GoldKind expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read dataset " + path.string());

  std::vector<QueryRecord> records;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    QueryRecord record = parse_record(line, where);
    if (record.gold.kind != expected_kind) {
      throw Error(ErrorCode::kGoldKindMismatch,
                  where + ": expected " + std::string(gold_kind_name(expected_kind)) +
                      " gold labels, found " + std::string(gold_kind_name(record.gold.kind)));
    }
    if (!seen.insert(record.id).second) {
      invalid(where, "duplicate id \"" + record.id + "\"");
    }
    records.push_back(std::move(record));
  }
  if (in.bad()) throw Error(ErrorCode::kIo, "read failed on " + path.string());
  return records;
}

std::vector<QueryRecord> sample_records(const std::vector<QueryRecord>& records,
                                        std::size_t n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorCode::kPrecondition, "sample size must be at least 1");
  if (n > records.size()) {
    throw Error(ErrorCode::kSampleTooLarge,
                "requested " + std::to_string(n) + " of " +
                    std::to_string(records.size()) + " records");
  }
  std::vector<std::size_t> index(records.size());
  std::iota(index.begin(), index.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first n slots end up holding the draw.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + bounded(rng, records.size() - i);
    std::swap(index[i], index[j]);
  }
  index.resize(n);
  std::sort(index.begin(), index.end());

  std::vector<QueryRecord> out;
  out.reserve(n);
  for (std::size_t i : index) out.push_back(records[i]);
  return out;
}

QueryRecord take_top_k_contexts(const QueryRecord& record, std::size_t k) {
  if (k < 1) throw Error(ErrorCode::kPrecondition, "k must be at least 1");
  QueryRecord out = record;
  const bool all_scored =
      !out.contexts.empty() &&
      std::all_of(out.contexts.begin(), out.contexts.end(),
                  [](const ContextPassage& p) { return p.score.has_value(); });
  if (all_scored) {
    std::stable_sort(out.contexts.begin(), out.contexts.end(),
                     [](const ContextPassage& a, const ContextPassage& b) {
                       return *a.score > *b.score;
                     });
  }
  if (out.contexts.size() > k) out.contexts.resize(k);
  return out;
}

}  // namespace square
