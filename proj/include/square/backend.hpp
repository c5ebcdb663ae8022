#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "square/prompt.hpp"

namespace square {

enum class DecodingMode { kGreedy };

struct DecodingParams {
  DecodingMode mode = DecodingMode::kGreedy;
  double temperature = 0.0;
  int max_output_tokens = 1024;

  void validate() const;

  bool operator==(const DecodingParams&) const = default;
};

struct Generation {
  std::string text;
  std::string backend_id;
  std::string model_name;
  bool from_cache = false;
  std::optional<long> latency_ms;
  int retries = 0;
};

/// Hex SHA-256 over the canonical request (model, decoding, messages).
struct CacheKey {
  std::string digest;

  static CacheKey of(std::string_view model_name, const DecodingParams& params,
                     const ChatPrompt& prompt);

  bool operator==(const CacheKey&) const = default;
};

/// The request body shared by the cache key, cache entries and the remote
/// protocol: {"model", "messages", "temperature", "max_tokens"}.
std::string request_payload(std::string_view model_name,
                            const DecodingParams& params,
                            const ChatPrompt& prompt);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  Generation complete(const ChatPrompt& prompt, const DecodingParams& params);

  virtual std::string backend_id() const = 0;
  virtual const std::string& model_name() const = 0;

  /// Number of completions attempted against the underlying service.
  long call_count() const { return calls_.load(); }

 protected:
  virtual Generation do_complete(const ChatPrompt& prompt,
                                 const DecodingParams& params) = 0;

 private:
  std::atomic<long> calls_{0};
};

/// Replays scripted responses from `<dir>/<digest>.txt`. Prompts without a
/// script get the fallback reply, or a kMalformedResponse error when none is
/// configured.
class MockBackend : public ChatBackend {
 public:
  MockBackend(std::string model_name, std::filesystem::path script_dir,
              std::optional<std::string> fallback_reply);

  std::string backend_id() const override { return "mock"; }
  const std::string& model_name() const override { return model_name_; }

 protected:
  Generation do_complete(const ChatPrompt& prompt,
                         const DecodingParams& params) override;

 private:
  std::string model_name_;
  std::filesystem::path script_dir_;
  std::optional<std::string> fallback_;
};

struct HttpResponse {
  int status = 0;  // 0 = transport failure (timeout, refused connection)
  std::string body;
  std::string transport_error;
};

using HttpPost = std::function<HttpResponse(
    const std::string& url, const std::map<std::string, std::string>& headers,
    const std::string& body)>;

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{1000};
  std::function<void(std::chrono::milliseconds)> sleep;  // empty: real sleep
};

/// OpenAI-compatible chat completions client.
class RemoteBackend : public ChatBackend {
 public:
  RemoteBackend(std::string base_url, std::string model_name,
                std::optional<std::string> api_key, RetryPolicy retry = {},
                HttpPost post = {});

  std::string backend_id() const override { return "openai:" + base_url_; }
  const std::string& model_name() const override { return model_name_; }

  /// HttpPost backed by cpp-httplib.
  static HttpPost httplib_post(std::chrono::seconds timeout);

 protected:
  Generation do_complete(const ChatPrompt& prompt,
                         const DecodingParams& params) override;

 private:
  std::string base_url_;
  std::string model_name_;
  std::optional<std::string> api_key_;
  RetryPolicy retry_;
  HttpPost post_;
};

/// Reads the bearer token from SQUARE_API_KEY.
std::optional<std::string> api_key_from_env();

struct CacheStats {
  std::size_t entries = 0;
  std::uintmax_t bytes = 0;
};

/// One JSON file per digest. Writes go through a temp file and a rename so
/// readers never observe partial entries.
class CacheStore {
 public:
  explicit CacheStore(std::filesystem::path dir);

  std::optional<Generation> get(const CacheKey& key) const;
  void put(const CacheKey& key, const std::string& request,
           const Generation& generation) const;

  CacheStats stats() const;
  std::size_t clear() const;

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path entry_path(const CacheKey& key) const;

 private:
  std::filesystem::path dir_;
};

struct CachedGeneration {
  Generation generation;
  bool hit = false;
};

CachedGeneration cached_complete(const ChatPrompt& prompt,
                                 const DecodingParams& params,
                                 ChatBackend& backend, const CacheStore& cache);

}  // namespace square
