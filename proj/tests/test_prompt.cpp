#include <set>

#include "doctest.h"
#include "square/error.hpp"
#include "square/extraction.hpp"
#include "square/log.hpp"
#include "square/prompt.hpp"
#include "support/golden.hpp"

using namespace square;
using namespace square::testing;

namespace {

const TemplateStore& store() {
  static const TemplateStore s = TemplateStore::load(templates_dir());
  return s;
}

StrategyConfig square_cfg(int n, Aggregation agg = Aggregation::kNone, int k = 2) {
  return {StrategyKind::kSquare, n, agg, k};
}

StrategyConfig plain(StrategyKind kind, int k = 2) { return {kind, 0, Aggregation::kNone, k}; }

std::vector<ContextPassage> passages(int n) {
  std::vector<ContextPassage> out;
  for (int i = 0; i < n; ++i) out.push_back({"passage " + std::to_string(i + 1), {}, {}, {}});
  return out;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("system prompts") {
  CHECK(contains(build_system_prompt(store(), square_cfg(3)),
                 "Generate 3 questions based on the given question and context, and shortly answer them."));
  CHECK(contains(build_system_prompt(store(), plain(StrategyKind::kCot)),
                 "Let's think through this step by step."));
  CHECK(contains(build_system_prompt(store(), square_cfg(3, Aggregation::kVote)),
                 "choosing amongst the answers you created the most common answer"));
  CHECK(build_system_prompt(store(), plain(StrategyKind::kBaseline)) ==
        "You are a helpful question answerer. The answer should be a short span, just a few words.");
  CHECK(build_system_prompt(store(), plain(StrategyKind::kRag)) ==
        "You are a helpful question answerer who can provide an answer given a question and relevant context.\n"
        "The answer should be a short span, just a few words.");
}

TEST_CASE("{N} is substituted for every sub-question count") {
  for (Aggregation agg : {Aggregation::kNone, Aggregation::kSummarize, Aggregation::kVote}) {
    for (int n = 1; n <= 10; ++n) {
      const std::string text = build_system_prompt(store(), square_cfg(n, agg));
      CAPTURE(n);
      CHECK_FALSE(contains(text, "{N}"));
      CHECK(contains(text, "Generate " + std::to_string(n) + " questions"));
    }
  }
  for (StrategyKind kind : {StrategyKind::kBaseline, StrategyKind::kRag, StrategyKind::kCot,
                            StrategyKind::kRar}) {
    CHECK_FALSE(contains(build_system_prompt(store(), plain(kind)), "{N}"));
  }
}

TEST_CASE("few-shot exemplars") {
  const auto sq = fewshot_examples(store(), square_cfg(3));
  REQUIRE(sq.size() == 2);
  CHECK(sq[0].question == "What is the shared profession of Jack Kerouac and Dan Masterson?");

  const auto vote = fewshot_examples(store(), square_cfg(3, Aggregation::kVote));
  REQUIRE(vote.size() == 2);
  const std::string tail = "Answer: Poet";
  CHECK(vote[0].assistant_reply.substr(vote[0].assistant_reply.size() - tail.size()) == tail);

  for (StrategyKind kind : {StrategyKind::kBaseline, StrategyKind::kRag, StrategyKind::kCot,
                            StrategyKind::kRar}) {
    CHECK(fewshot_examples(store(), plain(kind, 0)).empty());
    CHECK(fewshot_examples(store(), plain(kind, 2)).size() == 2);
  }
  CHECK(fewshot_examples(store(), square_cfg(5, Aggregation::kSummarize, 0)).empty());

  const auto rag = fewshot_examples(store(), plain(StrategyKind::kRag));
  CHECK(rag[0].assistant_reply == "Answer: Writers");
  CHECK(rag[1].assistant_reply == "Answer: The Fratellis");
}

TEST_CASE("every exemplar reply is captured by extraction") {
  for (const char* label : {"baseline", "rag", "cot", "rar", "square", "square-summarize",
                            "square-vote"}) {
    for (const auto& ex : fewshot_examples(store(), parse_strategy(label))) {
      CAPTURE(label);
      CHECK(extract_answer(ex.assistant_reply).captured);
    }
  }
}

TEST_CASE("user message layout") {
  SUBCASE("baseline") {
    CHECK(build_user_message(plain(StrategyKind::kBaseline), "Q", {}) == "Question: Q");
  }

  SUBCASE("rag with five passages") {
    const auto ctx = passages(5);
    const std::string msg = build_user_message(plain(StrategyKind::kRag), "Who?", ctx);
    CHECK(msg ==
          "Context 1: passage 1\nContext 2: passage 2\nContext 3: passage 3\n"
          "Context 4: passage 4\nContext 5: passage 5\n\nQuestion: Who?");
    CHECK(msg == build_user_message(plain(StrategyKind::kRag), "Who?", ctx));
  }

  SUBCASE("titles prefix the passage") {
    std::vector<ContextPassage> ctx = {{"body", std::string("Title"), 0.5, {}}};
    CHECK(build_user_message(plain(StrategyKind::kCot), "Q", ctx) ==
          "Context 1: Title - body\n\nQuestion: Q");
  }

  SUBCASE("errors") {
    try {
      build_user_message(plain(StrategyKind::kBaseline), "Q", passages(1));
      FAIL("expected contexts-forbidden");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kContextsForbidden);
    }
    try {
      build_user_message(square_cfg(3), "Q", {});
      FAIL("expected contexts-required");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kContextsRequired);
    }
    CHECK(build_user_message(square_cfg(3), "Q", {}, true) == "Question: Q");
    CHECK_THROWS_AS(build_user_message(plain(StrategyKind::kBaseline), " ", {}), Error);
  }
}

TEST_CASE("assemble_prompt") {
  const QueryRecord record = golden_record();

  SUBCASE("two-shot SQuARE has six messages") {
    const auto prompt = assemble_prompt(store(), square_cfg(3), record);
    REQUIRE(prompt.messages.size() == 6);
    const Role expected[] = {Role::kSystem, Role::kUser, Role::kAssistant,
                             Role::kUser,   Role::kAssistant, Role::kUser};
    for (std::size_t i = 0; i < 6; ++i) CHECK(prompt.messages[i].role == expected[i]);
  }

  SUBCASE("zero-shot has two messages") {
    CHECK(assemble_prompt(store(), square_cfg(3, Aggregation::kNone, 0), record).messages.size() == 2);
  }

  SUBCASE("message count is 2 + 2 * exemplars for every strategy") {
    for (const char* label : {"baseline", "rag", "cot", "rar", "square-n5", "square-n10-vote",
                              "square-summarize-0shot", "cot-0shot"}) {
      const auto s = parse_strategy(label);
      CHECK(assemble_prompt(store(), s, record).messages.size() ==
            2 + 2 * fewshot_examples(store(), s).size());
    }
  }

  SUBCASE("golden SQuARE N=3 two-shot prompt") {
    const auto prompt = assemble_prompt(store(), square_cfg(3), record);
    CHECK(serialize_prompt(prompt) == slurp(golden_dir() / "square_n3_2shot_prompt.txt"));
  }

  SUBCASE("baseline drops record contexts") {
    const auto prompt = assemble_prompt(store(), plain(StrategyKind::kBaseline), record);
    CHECK(prompt.messages.back().content == "Question: " + record.question);
  }

  SUBCASE("record without contexts warns and renders the question") {
    QueryRecord bare = record;
    bare.contexts.clear();
    std::vector<std::string> warnings;
    auto previous = log::set_warning_sink([&](const std::string& m) { warnings.push_back(m); });
    const auto prompt = assemble_prompt(store(), plain(StrategyKind::kCot), bare);
    log::set_warning_sink(previous);
    CHECK(prompt.messages.back().content == "Question: " + record.question);
    CHECK(warnings.size() == 1);
  }
}

TEST_CASE("ChatPrompt invariants") {
  ChatPrompt p;
  CHECK_THROWS_AS(p.validate(), Error);
  p.messages = {{Role::kSystem, "s"}, {Role::kUser, "u"}};
  CHECK_NOTHROW(p.validate());
  p.messages = {{Role::kSystem, "s"}, {Role::kUser, "u"}, {Role::kUser, "u"}};
  CHECK_THROWS_AS(p.validate(), Error);
  p.messages = {{Role::kSystem, "s"}, {Role::kUser, "u"}, {Role::kAssistant, "a"}};
  CHECK_THROWS_AS(p.validate(), Error);
  p.messages = {{Role::kSystem, "s"}, {Role::kUser, ""}};
  CHECK_THROWS_AS(p.validate(), Error);
  p.messages = {{Role::kSystem, "s"}, {Role::kSystem, "s"}, {Role::kUser, "u"}};
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("strategy labels") {
  CHECK(parse_strategy("square").label() == "square-n3-2shot");
  CHECK(parse_strategy("square-n10-vote-0shot").label() == "square-n10-vote-0shot");
  CHECK(parse_strategy("cot", 0).label() == "cot-0shot");
  CHECK(parse_strategy("rar-2shot").kind == StrategyKind::kRar);
  CHECK(parse_strategy("square-summarize").aggregation == Aggregation::kSummarize);

  std::set<std::string> labels;
  for (StrategyKind kind : {StrategyKind::kBaseline, StrategyKind::kRag, StrategyKind::kCot,
                            StrategyKind::kRar}) {
    for (int k : {0, 2}) labels.insert(plain(kind, k).label());
  }
  for (int n : {1, 3, 5, 10}) {
    for (Aggregation agg : {Aggregation::kNone, Aggregation::kSummarize, Aggregation::kVote}) {
      for (int k : {0, 2}) {
        const StrategyConfig s = square_cfg(n, agg, k);
        CHECK(parse_strategy(s.label()) == s);
        labels.insert(s.label());
      }
    }
  }
  CHECK(labels.size() == 8 + 24);

  for (const char* bad : {"", "sqare", "cot-n3", "square-n0", "square-nx", "cot-vote",
                          "rag-1shot", "square-vote-summarize", "square-n3-2shot-extra"}) {
    CAPTURE(bad);
    try {
      parse_strategy(bad);
      FAIL("expected invalid-strategy");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInvalidStrategy);
    }
  }
  CHECK_THROWS_AS((StrategyConfig{StrategyKind::kCot, 0, Aggregation::kVote, 2}.validate()), Error);
}

TEST_CASE("template directory override") {
  TempDir tmp;
  for (const auto& entry : std::filesystem::directory_iterator(templates_dir())) {
    std::filesystem::copy_file(entry.path(), tmp / entry.path().filename().string());
  }
  spit(tmp / "system_cot.txt", "Custom chain of thought.\n");
  const TemplateStore custom = TemplateStore::load(tmp.path());
  CHECK(build_system_prompt(custom, plain(StrategyKind::kCot)) == "Custom chain of thought.");

  spit(tmp / "fewshot_rar.jsonl", R"({"question":"q","assistant_reply":"no final line"})" "\n");
  CHECK_THROWS_AS(TemplateStore::load(tmp.path()), Error);
  std::filesystem::remove(tmp / "fewshot_rar.jsonl");
  CHECK_THROWS_AS(TemplateStore::load(tmp.path()), Error);
}

TEST_CASE("system prompts and exemplars match the golden transcriptions") {
  const struct {
    StrategyConfig strategy;
    const char* system;
    const char* exemplars;
  } cases[] = {
      {square_cfg(3), "system_square_n3.txt", "fewshot_square.txt"},
      {square_cfg(3, Aggregation::kSummarize), "system_square_summarize_n3.txt", "fewshot_square_summarize.txt"},
      {square_cfg(3, Aggregation::kVote), "system_square_vote_n3.txt", "fewshot_square_vote.txt"},
      {plain(StrategyKind::kCot), "system_cot.txt", "fewshot_cot.txt"},
      {plain(StrategyKind::kRar), "system_rar.txt", "fewshot_rar.txt"},
  };
  for (const auto& c : cases) {
    CAPTURE(c.system);
    CHECK(build_system_prompt(store(), c.strategy) == slurp(golden_dir() / c.system));
    CHECK(fewshot_examples(store(), c.strategy) == golden_exemplars(c.exemplars));
  }
}
