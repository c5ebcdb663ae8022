#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "square/dataset.hpp"

namespace square {

enum class Role { kSystem, kUser, kAssistant };

std::string_view role_name(Role role);
Role parse_role(std::string_view name);

struct ChatMessage {
  Role role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

/// Ordered role-tagged messages: one leading system message, then
/// alternating user/assistant turns ending with a user turn.
struct ChatPrompt {
  std::vector<ChatMessage> messages;

  // Throws Error{kPrecondition} naming the violated invariant.
  void validate() const;

  bool operator==(const ChatPrompt&) const = default;
};

enum class StrategyKind { kBaseline, kRag, kCot, kRar, kSquare };
enum class Aggregation { kNone, kSummarize, kVote };

std::string_view strategy_kind_name(StrategyKind kind);
std::string_view aggregation_name(Aggregation aggregation);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::kBaseline;
  int n_questions = 3;  // only meaningful for kSquare
  Aggregation aggregation = Aggregation::kNone;
  int fewshot_k = 2;

  void validate() const;

  /// Canonical label, e.g. "cot-2shot", "square-n5-vote-0shot". The label is
  /// used for output directories and the CLI --strategy filter.
  std::string label() const;

  /// Key into the template store: baseline, rag, cot, rar, square,
  /// square_summarize, square_vote.
  std::string template_key() const;

  bool operator==(const StrategyConfig&) const = default;
};

inline constexpr int kDefaultSquareQuestions = 3;

/// Parses a label produced by StrategyConfig::label(). The shot suffix is
/// optional and defaults to `default_fewshot`; "square" alone means N=3.
/// Throws Error{kInvalidStrategy}.
StrategyConfig parse_strategy(std::string_view label, int default_fewshot = 2);

struct FewShotExample {
  std::string question;
  std::string assistant_reply;

  bool operator==(const FewShotExample&) const = default;
};

/// Read-only collection of system prompts and few-shot exemplars loaded from
/// a directory holding system_<key>.txt and fewshot_<key>.jsonl files.
class TemplateStore {
 public:
  static TemplateStore load(const std::filesystem::path& dir);

  /// Directory compiled into the build, overridable by SQUARE_TEMPLATES.
  static std::filesystem::path default_dir();

  const std::string& system_template(const std::string& key) const;
  const std::vector<FewShotExample>& exemplars(const std::string& key) const;

 private:
  std::map<std::string, std::string> system_;
  std::map<std::string, std::vector<FewShotExample>> fewshot_;
};

std::string build_system_prompt(const TemplateStore& store,
                                const StrategyConfig& strategy);

std::vector<FewShotExample> fewshot_examples(const TemplateStore& store,
                                             const StrategyConfig& strategy);

/// Baseline renders "Question: <q>". Other strategies render numbered
/// "Context i: ..." blocks, a blank line, then the question line.
/// With allow_missing_contexts, a non-Baseline call without passages renders
/// the question alone instead of throwing kContextsRequired.
std::string build_user_message(const StrategyConfig& strategy,
                               std::string_view question,
                               std::span<const ContextPassage> contexts,
                               bool allow_missing_contexts = false);

ChatPrompt assemble_prompt(const TemplateStore& store,
                           const StrategyConfig& strategy,
                           const QueryRecord& record);

}  // namespace square
