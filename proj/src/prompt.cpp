#include "square/prompt.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "square/error.hpp"
#include "square/log.hpp"

#ifndef SQUARE_DEFAULT_TEMPLATE_DIR
#define SQUARE_DEFAULT_TEMPLATE_DIR "data/templates"
#endif

namespace square {
namespace {

constexpr std::string_view kPlaceholder = "{N}";

const std::vector<std::string>& template_keys() {
  static const std::vector<std::string> keys = {
      "baseline", "rag", "cot", "rar", "square", "square_summarize", "square_vote"};
  return keys;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read template " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    parts.emplace_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

bool parse_int(std::string_view s, int& out) {
  if (s.empty() || s.size() > 6) return false;
  int v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

bool is_blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

}  // namespace

std::string_view role_name(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view name) {
  if (name == "system") return Role::kSystem;
  if (name == "user") return Role::kUser;
  if (name == "assistant") return Role::kAssistant;
  throw Error(ErrorCode::kPrecondition, "unknown role \"" + std::string(name) + "\"");
}

void ChatPrompt::validate() const {
  if (messages.empty() || messages.front().role != Role::kSystem) {
    throw Error(ErrorCode::kPrecondition, "prompt must start with a system message");
  }
  if (messages.back().role != Role::kUser) {
    throw Error(ErrorCode::kPrecondition, "prompt must end with a user message");
  }
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (messages[i].content.empty()) {
      throw Error(ErrorCode::kPrecondition, "message " + std::to_string(i) + " is empty");
    }
    if (i == 0) continue;
    const Role expected = (i % 2 == 1) ? Role::kUser : Role::kAssistant;
    if (messages[i].role != expected) {
      throw Error(ErrorCode::kPrecondition,
                  "message " + std::to_string(i) + " should have role " +
                      std::string(role_name(expected)));
    }
  }
}

std::string_view strategy_kind_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kBaseline: return "baseline";
    case StrategyKind::kRag: return "rag";
    case StrategyKind::kCot: return "cot";
    case StrategyKind::kRar: return "rar";
    case StrategyKind::kSquare: return "square";
  }
  return "baseline";
}

std::string_view aggregation_name(Aggregation aggregation) {
  switch (aggregation) {
    case Aggregation::kNone: return "none";
    case Aggregation::kSummarize: return "summarize";
    case Aggregation::kVote: return "vote";
  }
  return "none";
}

void StrategyConfig::validate() const {
  if (kind == StrategyKind::kSquare && n_questions < 1) {
    throw Error(ErrorCode::kInvalidStrategy, "square needs at least one sub-question");
  }
  if (kind != StrategyKind::kSquare && aggregation != Aggregation::kNone) {
    throw Error(ErrorCode::kInvalidStrategy, "aggregation only applies to square");
  }
  if (fewshot_k != 0 && fewshot_k != 2) {
    throw Error(ErrorCode::kInvalidStrategy, "few-shot count must be 0 or 2");
  }
}

std::string StrategyConfig::label() const {
  std::string out(strategy_kind_name(kind));
  if (kind == StrategyKind::kSquare) {
    out += "-n" + std::to_string(n_questions);
    if (aggregation != Aggregation::kNone) {
      out += "-";
      out += aggregation_name(aggregation);
    }
  }
  out += "-" + std::to_string(fewshot_k) + "shot";
  return out;
}

std::string StrategyConfig::template_key() const {
  std::string key(strategy_kind_name(kind));
  if (kind == StrategyKind::kSquare && aggregation != Aggregation::kNone) {
    key += "_";
    key += aggregation_name(aggregation);
  }
  return key;
}

StrategyConfig parse_strategy(std::string_view label, int default_fewshot) {
  auto fail = [&](const std::string& why) -> Error {
    return Error(ErrorCode::kInvalidStrategy, "\"" + std::string(label) + "\": " + why);
  };
  std::vector<std::string> parts = split(label, '-');
  StrategyConfig s;
  s.fewshot_k = default_fewshot;

  const std::string& head = parts.front();
  if (head == "baseline") s.kind = StrategyKind::kBaseline;
  else if (head == "rag") s.kind = StrategyKind::kRag;
  else if (head == "cot") s.kind = StrategyKind::kCot;
  else if (head == "rar") s.kind = StrategyKind::kRar;
  else if (head == "square") s.kind = StrategyKind::kSquare;
  else throw fail("unknown strategy name");
  s.n_questions = s.kind == StrategyKind::kSquare ? kDefaultSquareQuestions : 0;

  std::size_t i = 1;
  if (s.kind == StrategyKind::kSquare) {
    if (i < parts.size() && parts[i].size() > 1 && parts[i][0] == 'n') {
      if (!parse_int(std::string_view(parts[i]).substr(1), s.n_questions)) {
        throw fail("bad sub-question count");
      }
      ++i;
    }
    if (i < parts.size() && parts[i] == "summarize") {
      s.aggregation = Aggregation::kSummarize;
      ++i;
    } else if (i < parts.size() && parts[i] == "vote") {
      s.aggregation = Aggregation::kVote;
      ++i;
    }
  }
  if (i < parts.size()) {
    const std::string& tail = parts[i];
    if (tail.size() <= 4 || tail.substr(tail.size() - 4) != "shot" ||
        !parse_int(std::string_view(tail).substr(0, tail.size() - 4), s.fewshot_k)) {
      throw fail("unexpected component \"" + tail + "\"");
    }
    ++i;
  }
  if (i != parts.size()) throw fail("trailing components");
  try {
    s.validate();
  } catch (const Error& e) {
    throw fail(e.what());
  }
  return s;
}

TemplateStore TemplateStore::load(const std::filesystem::path& dir) {
  TemplateStore store;
  for (const std::string& key : template_keys()) {
    std::string system = read_file(dir / ("system_" + key + ".txt"));
    while (!system.empty() && (system.back() == '\n' || system.back() == '\r')) {
      system.pop_back();
    }
    if (system.empty()) throw Error(ErrorCode::kIo, "empty system template for " + key);
    store.system_[key] = std::move(system);

    const std::filesystem::path fewshot_path = dir / ("fewshot_" + key + ".jsonl");
    std::istringstream lines(read_file(fewshot_path));
    std::vector<FewShotExample> examples;
    std::string line;
    while (std::getline(lines, line)) {
      if (is_blank(line)) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::kIo, fewshot_path.string() + ": " + e.what());
      }
      FewShotExample ex{j.value("question", ""), j.value("assistant_reply", "")};
      if (ex.question.empty() || ex.assistant_reply.find("Answer") == std::string::npos) {
        throw Error(ErrorCode::kIo, fewshot_path.string() +
                                        ": exemplar needs a question and a reply containing \"Answer\"");
      }
      examples.push_back(std::move(ex));
    }
    store.fewshot_[key] = std::move(examples);
  }
  return store;
}

std::filesystem::path TemplateStore::default_dir() {
  if (const char* env = std::getenv("SQUARE_TEMPLATES"); env && *env) return env;
  return SQUARE_DEFAULT_TEMPLATE_DIR;
}

const std::string& TemplateStore::system_template(const std::string& key) const {
  auto it = system_.find(key);
  if (it == system_.end()) throw Error(ErrorCode::kInvalidStrategy, "no template for " + key);
  return it->second;
}

const std::vector<FewShotExample>& TemplateStore::exemplars(const std::string& key) const {
  auto it = fewshot_.find(key);
  if (it == fewshot_.end()) throw Error(ErrorCode::kInvalidStrategy, "no exemplars for " + key);
  return it->second;
}

std::string build_system_prompt(const TemplateStore& store,
                                const StrategyConfig& strategy) {
  strategy.validate();
  std::string text = store.system_template(strategy.template_key());
  if (strategy.kind != StrategyKind::kSquare) return text;
  const std::string n = std::to_string(strategy.n_questions);
  for (std::size_t pos = text.find(kPlaceholder); pos != std::string::npos;
       pos = text.find(kPlaceholder, pos + n.size())) {
    text.replace(pos, kPlaceholder.size(), n);
  }
  return text;
}

std::vector<FewShotExample> fewshot_examples(const TemplateStore& store,
                                             const StrategyConfig& strategy) {
  strategy.validate();
  if (strategy.fewshot_k == 0) return {};
  const auto& all = store.exemplars(strategy.template_key());
  const auto k = static_cast<std::size_t>(strategy.fewshot_k);
  if (all.size() < k) {
    throw Error(ErrorCode::kInvalidStrategy,
                "template store has " + std::to_string(all.size()) + " exemplars for " +
                    strategy.template_key() + ", need " + std::to_string(k));
  }
  return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k)};
}

std::string build_user_message(const StrategyConfig& strategy,
                               std::string_view question,
                               std::span<const ContextPassage> contexts,
                               bool allow_missing_contexts) {
  if (is_blank(question)) throw Error(ErrorCode::kPrecondition, "question is empty");
  std::string out;
  if (strategy.kind == StrategyKind::kBaseline) {
    if (!contexts.empty()) {
      throw Error(ErrorCode::kContextsForbidden, "baseline prompts take no contexts");
    }
  } else if (contexts.empty()) {
    if (!allow_missing_contexts) {
      throw Error(ErrorCode::kContextsRequired,
                  std::string(strategy_kind_name(strategy.kind)) + " prompts need contexts");
    }
  } else {
    for (std::size_t i = 0; i < contexts.size(); ++i) {
      out += "Context " + std::to_string(i + 1) + ": ";
      if (contexts[i].title && !contexts[i].title->empty()) {
        out += *contexts[i].title + " - ";
      }
      out += contexts[i].text;
      out += '\n';
    }
    out += '\n';
  }
  out += "Question: ";
  out += question;
  return out;
}

ChatPrompt assemble_prompt(const TemplateStore& store,
                           const StrategyConfig& strategy,
                           const QueryRecord& record) {
  ChatPrompt prompt;
  prompt.messages.push_back({Role::kSystem, build_system_prompt(store, strategy)});
  for (const FewShotExample& ex : fewshot_examples(store, strategy)) {
    prompt.messages.push_back(
        {Role::kUser, build_user_message(strategy, ex.question, {}, true)});
    prompt.messages.push_back({Role::kAssistant, ex.assistant_reply});
  }

  std::span<const ContextPassage> contexts;
  bool allow_missing = false;
  if (strategy.kind != StrategyKind::kBaseline) {
    contexts = record.contexts;
    if (contexts.empty()) {
      log::warn("record " + record.id + " has no contexts; " + strategy.label() +
                " prompt carries the question only");
      allow_missing = true;
    }
  }
  prompt.messages.push_back(
      {Role::kUser, build_user_message(strategy, record.question, contexts, allow_missing)});
  prompt.validate();
  return prompt;
}

}  // namespace square
