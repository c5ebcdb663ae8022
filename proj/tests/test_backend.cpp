#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <atomic>
#include <set>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "square/backend.hpp"
#include "square/error.hpp"
#include "support/test_util.hpp"

using namespace square;
using namespace square::testing;

namespace {

ChatPrompt prompt_with(const std::string& question) {
  ChatPrompt p;
  p.messages = {{Role::kSystem, "You are a helpful question answerer."},
                {Role::kUser, "Question: " + question}};
  return p;
}

/// Local OpenAI-style endpoint that answers from a queue of canned statuses.
class FakeServer {
 public:
  explicit FakeServer(std::vector<std::pair<int, std::string>> replies)
      : replies_(std::move(replies)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      last_body = req.body;
      last_auth = req.get_header_value("Authorization");
      const std::size_t i = hits.fetch_add(1);
      const auto& [status, body] = replies_[std::min(i, replies_.size() - 1)];
      res.status = status;
      res.set_content(body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  std::atomic<std::size_t> hits{0};
  std::string last_body;
  std::string last_auth;

 private:
  std::vector<std::pair<int, std::string>> replies_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string completion_body(const std::string& text) {
  return nlohmann::json{{"model", "served-model"},
                        {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", text}}}}}}}
      .dump();
}

RetryPolicy recording_policy(std::vector<long>& sleeps) {
  RetryPolicy p;
  p.sleep = [&sleeps](std::chrono::milliseconds d) { sleeps.push_back(d.count()); };
  return p;
}

}  // namespace

TEST_CASE("decoding params") {
  DecodingParams p;
  CHECK_NOTHROW(p.validate());
  CHECK(p.max_output_tokens == 1024);
  p.temperature = 0.7;
  CHECK_THROWS_AS(p.validate(), Error);
  p.temperature = 0.0;
  p.max_output_tokens = 0;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("cache keys") {
  const DecodingParams params;
  const auto base = CacheKey::of("m", params, prompt_with("q"));
  CHECK(base.digest.size() == 64);
  CHECK(base == CacheKey::of("m", params, prompt_with("q")));
  CHECK(base != CacheKey::of("m2", params, prompt_with("q")));
  CHECK(base != CacheKey::of("m", params, prompt_with("q ")));
  DecodingParams longer;
  longer.max_output_tokens = 2048;
  CHECK(base != CacheKey::of("m", longer, prompt_with("q")));
  ChatPrompt swapped = prompt_with("q");
  swapped.messages[0].role = Role::kUser;
  CHECK(base != CacheKey::of("m", params, swapped));

  std::set<std::string> digests;
  for (int i = 0; i < 10000; ++i) {
    digests.insert(CacheKey::of("m", params, prompt_with("question " + std::to_string(i))).digest);
  }
  CHECK(digests.size() == 10000);
}

TEST_CASE("request payload carries greedy decoding") {
  const auto j = nlohmann::json::parse(request_payload("gpt", DecodingParams{}, prompt_with("q")));
  CHECK(j["model"] == "gpt");
  CHECK(j["temperature"] == 0.0);
  CHECK(j["max_tokens"] == 1024);
  CHECK(j["messages"].size() == 2);
  CHECK(j["messages"][0]["role"] == "system");
  CHECK(j["messages"][1]["content"] == "Question: q");
}

TEST_CASE("mock backend") {
  TempDir tmp;
  const DecodingParams params;
  const ChatPrompt p = prompt_with("shared profession");
  spit(tmp / (CacheKey::of("mock-model", params, p).digest + ".txt"), "Answer: Poet\n");

  MockBackend scripted("mock-model", tmp.path(), std::nullopt);
  const Generation g = scripted.complete(p, params);
  CHECK(g.text == "Answer: Poet");
  CHECK(g.backend_id == "mock");
  CHECK_FALSE(g.from_cache);
  CHECK(scripted.complete(p, params).text == g.text);
  CHECK(scripted.call_count() == 2);

  try {
    scripted.complete(prompt_with("other"), params);
    FAIL("expected malformed-response");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMalformedResponse);
  }

  MockBackend fallback("mock-model", tmp.path(), std::string("Answer: unknown"));
  CHECK(fallback.complete(prompt_with("other"), params).text == "Answer: unknown");
  CHECK(fallback.complete(p, params).text == "Answer: Poet");
}

TEST_CASE("remote backend over HTTP") {
  SUBCASE("request wire format and success") {
    FakeServer server({{200, completion_body("Answer: Poet")}});
    std::vector<long> sleeps;
    RemoteBackend backend(server.base_url(), "llama", std::string("sk-test"), recording_policy(sleeps));
    const Generation g = backend.complete(prompt_with("q"), DecodingParams{});
    CHECK(g.text == "Answer: Poet");
    CHECK(g.model_name == "served-model");
    CHECK(g.retries == 0);
    const auto body = nlohmann::json::parse(server.last_body);
    CHECK(body["temperature"] == 0.0);
    CHECK(body["model"] == "llama");
    CHECK(body["max_tokens"] == 1024);
    CHECK(server.last_auth == "Bearer sk-test");
  }

  SUBCASE("rate limited twice then success") {
    FakeServer server({{429, "{}"}, {429, "{}"}, {200, completion_body("Answer: Rome")}});
    std::vector<long> sleeps;
    RemoteBackend backend(server.base_url() + "/", "llama", std::nullopt, recording_policy(sleeps));
    const Generation g = backend.complete(prompt_with("q"), DecodingParams{});
    CHECK(g.text == "Answer: Rome");
    CHECK(g.retries == 2);
    CHECK(sleeps == std::vector<long>{1000, 2000});
    CHECK(server.hits == 3);
  }

  SUBCASE("retry budget exhausted") {
    FakeServer server({{503, "down"}});
    std::vector<long> sleeps;
    RemoteBackend backend(server.base_url(), "llama", std::nullopt, recording_policy(sleeps));
    try {
      backend.complete(prompt_with("q"), DecodingParams{});
      FAIL("expected transient error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kTransientBackend);
    }
    CHECK(server.hits == 5);
    CHECK(sleeps == std::vector<long>{1000, 2000, 4000, 8000});
  }

  SUBCASE("auth errors are not retried") {
    FakeServer server({{401, "{}"}});
    std::vector<long> sleeps;
    RemoteBackend backend(server.base_url(), "llama", std::nullopt, recording_policy(sleeps));
    try {
      backend.complete(prompt_with("q"), DecodingParams{});
      FAIL("expected auth error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kAuth);
    }
    CHECK(server.hits == 1);
  }

  SUBCASE("malformed body") {
    FakeServer server({{200, R"({"choices":[]})"}});
    std::vector<long> sleeps;
    RemoteBackend backend(server.base_url(), "llama", std::nullopt, recording_policy(sleeps));
    try {
      backend.complete(prompt_with("q"), DecodingParams{});
      FAIL("expected malformed-response");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kMalformedResponse);
    }
  }

  SUBCASE("transport failures are retried") {
    int calls = 0;
    std::vector<long> sleeps;
    RetryPolicy policy = recording_policy(sleeps);
    policy.max_attempts = 3;
    RemoteBackend backend("http://unused", "llama", std::nullopt, policy,
                          [&](const std::string&, const std::map<std::string, std::string>&,
                              const std::string&) {
                            ++calls;
                            return HttpResponse{0, "", "timeout"};
                          });
    CHECK_THROWS_AS(backend.complete(prompt_with("q"), DecodingParams{}), Error);
    CHECK(calls == 3);
  }
}

TEST_CASE("cached_complete") {
  TempDir tmp;
  const CacheStore cache(tmp / "cache");
  MockBackend backend("mock-model", {}, std::string("Answer: Poet"));
  const DecodingParams params;
  const ChatPrompt p = prompt_with("q");

  const auto first = cached_complete(p, params, backend, cache);
  CHECK_FALSE(first.hit);
  CHECK(backend.call_count() == 1);
  const auto second = cached_complete(p, params, backend, cache);
  CHECK(second.hit);
  CHECK(second.generation.from_cache);
  CHECK(second.generation.text == "Answer: Poet");
  CHECK(backend.call_count() == 1);

  SUBCASE("prompt change misses") {
    CHECK_FALSE(cached_complete(prompt_with("Generate 5 questions"), params, backend, cache).hit);
    CHECK(backend.call_count() == 2);
  }

  SUBCASE("entry stores the request for audit") {
    const auto entry = nlohmann::json::parse(slurp(cache.entry_path(CacheKey::of("mock-model", params, p))));
    CHECK(entry["request"]["messages"][1]["content"] == "Question: q");
    CHECK(entry["response"]["text"] == "Answer: Poet");
  }

  SUBCASE("truncated entry is recomputed and rewritten") {
    const auto path = cache.entry_path(CacheKey::of("mock-model", params, p));
    const std::string full = slurp(path);
    spit(path, full.substr(0, full.size() / 2));
    const auto again = cached_complete(p, params, backend, cache);
    CHECK_FALSE(again.hit);
    CHECK(backend.call_count() == 2);
    CHECK(slurp(path) == full);
    CHECK(cached_complete(p, params, backend, cache).hit);
  }

  SUBCASE("stats and clear") {
    cached_complete(prompt_with("other"), params, backend, cache);
    CHECK(cache.stats().entries == 2);
    CHECK(cache.stats().bytes > 0);
    CHECK(cache.clear() == 2);
    CHECK(cache.stats().entries == 0);
  }
}

TEST_CASE("concurrent writers leave valid entries and no temp files") {
  TempDir tmp;
  const CacheStore cache(tmp / "cache");
  MockBackend backend("mock-model", {}, std::string("Answer: x"));
  std::vector<std::jthread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 20; ++i) {
        cached_complete(prompt_with("q" + std::to_string(i % 5)), DecodingParams{}, backend, cache);
      }
      (void)t;
    });
  }
  threads.clear();
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(cache.dir())) {
    CHECK(e.path().extension() == ".json");
    ++files;
  }
  CHECK(files == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(cache.get(CacheKey::of("mock-model", DecodingParams{}, prompt_with("q" + std::to_string(i)))));
  }
}
