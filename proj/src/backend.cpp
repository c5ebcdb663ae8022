#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "square/backend.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "square/digest.hpp"
#include "square/error.hpp"
#include "square/log.hpp"

namespace square {
namespace fs = std::filesystem;

namespace {

using ordered_json = nlohmann::ordered_json;

bool retryable(int status) {
  return status == 0 || status == 408 || status == 429 || status >= 500;
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void DecodingParams::validate() const {
  if (mode == DecodingMode::kGreedy && temperature != 0.0) {
    throw Error(ErrorCode::kPrecondition, "greedy decoding requires temperature 0");
  }
  if (max_output_tokens < 1) {
    throw Error(ErrorCode::kPrecondition, "max_output_tokens must be positive");
  }
}

std::string request_payload(std::string_view model_name,
                            const DecodingParams& params,
                            const ChatPrompt& prompt) {
  ordered_json j;
  j["model"] = std::string(model_name);
  ordered_json messages = ordered_json::array();
  for (const ChatMessage& m : prompt.messages) {
    messages.push_back({{"role", std::string(role_name(m.role))}, {"content", m.content}});
  }
  j["messages"] = std::move(messages);
  j["temperature"] = params.temperature;
  j["max_tokens"] = params.max_output_tokens;
  return j.dump();
}

CacheKey CacheKey::of(std::string_view model_name, const DecodingParams& params,
                      const ChatPrompt& prompt) {
  // The mode tag keeps a future sampling mode from aliasing greedy entries.
  return CacheKey{sha256_hex("greedy\n" + request_payload(model_name, params, prompt))};
}

Generation ChatBackend::complete(const ChatPrompt& prompt, const DecodingParams& params) {
  prompt.validate();
  params.validate();
  calls_.fetch_add(1);
  const auto start = std::chrono::steady_clock::now();
  Generation g = do_complete(prompt, params);
  if (!g.latency_ms) {
    g.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  }
  return g;
}

MockBackend::MockBackend(std::string model_name, fs::path script_dir,
                         std::optional<std::string> fallback_reply)
    : model_name_(std::move(model_name)),
      script_dir_(std::move(script_dir)),
      fallback_(std::move(fallback_reply)) {}

Generation MockBackend::do_complete(const ChatPrompt& prompt, const DecodingParams& params) {
  const CacheKey key = CacheKey::of(model_name_, params, prompt);
  Generation g;
  g.backend_id = backend_id();
  g.model_name = model_name_;
  g.latency_ms = 0;
  const fs::path scripted = script_dir_ / (key.digest + ".txt");
  std::error_code ec;
  if (!script_dir_.empty() && fs::exists(scripted, ec)) {
    g.text = read_all(scripted);
    if (!g.text.empty() && g.text.back() == '\n') g.text.pop_back();
  } else if (fallback_) {
    g.text = *fallback_;
  } else {
    throw Error(ErrorCode::kMalformedResponse, "mock has no script for " + key.digest);
  }
  return g;
}

RemoteBackend::RemoteBackend(std::string base_url, std::string model_name,
                             std::optional<std::string> api_key, RetryPolicy retry,
                             HttpPost post)
    : base_url_(std::move(base_url)),
      model_name_(std::move(model_name)),
      api_key_(std::move(api_key)),
      retry_(std::move(retry)),
      post_(post ? std::move(post) : httplib_post(std::chrono::seconds(120))) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
  if (retry_.max_attempts < 1) retry_.max_attempts = 1;
}

Generation RemoteBackend::do_complete(const ChatPrompt& prompt, const DecodingParams& params) {
  const std::string url = base_url_ + "/chat/completions";
  const std::string body = request_payload(model_name_, params, prompt);
  std::map<std::string, std::string> headers = {{"Content-Type", "application/json"}};
  if (api_key_) headers["Authorization"] = "Bearer " + *api_key_;

  auto backoff = retry_.initial_backoff;
  std::string last_problem;
  for (int attempt = 0; attempt < retry_.max_attempts; ++attempt) {
    if (attempt > 0) {
      if (retry_.sleep) {
        retry_.sleep(backoff);
      } else {
        std::this_thread::sleep_for(backoff);
      }
      backoff *= 2;
    }
    const HttpResponse resp = post_(url, headers, body);
    if (resp.status == 200) {
      try {
        const auto j = nlohmann::json::parse(resp.body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        Generation g;
        g.text = content.is_null() ? std::string() : content.get<std::string>();
        g.backend_id = backend_id();
        g.model_name = j.contains("model") && j["model"].is_string()
                           ? j["model"].get<std::string>()
                           : model_name_;
        g.retries = attempt;
        return g;
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kMalformedResponse, std::string("completion body: ") + e.what());
      }
    }
    if (resp.status == 401 || resp.status == 403) {
      throw Error(ErrorCode::kAuth, "backend rejected credentials (HTTP " +
                                        std::to_string(resp.status) + ")");
    }
    last_problem = resp.status == 0 ? "transport: " + resp.transport_error
                                    : "HTTP " + std::to_string(resp.status);
    if (!retryable(resp.status)) {
      throw Error(ErrorCode::kMalformedResponse, "backend answered " + last_problem);
    }
    log::warn("completion attempt " + std::to_string(attempt + 1) + " failed (" +
              last_problem + ")");
  }
  throw Error(ErrorCode::kTransientBackend,
              "gave up after " + std::to_string(retry_.max_attempts) + " attempts: " + last_problem);
}

HttpPost RemoteBackend::httplib_post(std::chrono::seconds timeout) {
  return [timeout](const std::string& url, const std::map<std::string, std::string>& headers,
                   const std::string& body) {
    const std::size_t scheme_end = url.find("://");
    const std::size_t path_start =
        url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    const std::string origin = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers h;
    for (const auto& [k, v] : headers) {
      if (k != "Content-Type") h.emplace(k, v);
    }
    HttpResponse out;
    auto res = client.Post(path, h, body, "application/json");
    if (!res) {
      out.transport_error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  };
}

std::optional<std::string> api_key_from_env() {
  if (const char* key = std::getenv("SQUARE_API_KEY"); key && *key) return std::string(key);
  return std::nullopt;
}

CacheStore::CacheStore(fs::path dir) : dir_(std::move(dir)) {}

fs::path CacheStore::entry_path(const CacheKey& key) const {
  return dir_ / (key.digest + ".json");
}

std::optional<Generation> CacheStore::get(const CacheKey& key) const {
  const fs::path path = entry_path(key);
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  std::string text;
  try {
    text = read_all(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::kCacheIo, e.what());
  }
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("digest").get<std::string>() != key.digest) throw std::runtime_error("digest mismatch");
    const auto& response = j.at("response");
    Generation g;
    g.text = response.at("text").get<std::string>();
    g.backend_id = response.at("backend_id").get<std::string>();
    g.model_name = response.at("model_name").get<std::string>();
    g.from_cache = true;
    return g;
  } catch (const std::exception& e) {
    log::warn("cache entry " + path.string() + " is corrupt (" + e.what() + "); recomputing");
    return std::nullopt;
  }
}

void CacheStore::put(const CacheKey& key, const std::string& request,
                     const Generation& generation) const {
  static std::atomic<unsigned long> counter{0};
  ordered_json j;
  j["digest"] = key.digest;
  j["request"] = ordered_json::parse(request);
  j["response"] = {{"text", generation.text},
                   {"backend_id", generation.backend_id},
                   {"model_name", generation.model_name}};
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::kCacheIo, "cannot create " + dir_.string() + ": " + ec.message());

  std::ostringstream tmp_name;
  tmp_name << ".tmp-" << key.digest << "-" << std::hash<std::thread::id>{}(std::this_thread::get_id())
           << "-" << counter.fetch_add(1);
  const fs::path tmp = dir_ / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::kCacheIo, "cannot write " + tmp.string());
  }
  fs::rename(tmp, entry_path(key), ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::kCacheIo, "cannot commit cache entry " + key.digest);
  }
}

CacheStats CacheStore::stats() const {
  CacheStats stats;
  std::error_code ec;
  if (!fs::is_directory(dir_, ec)) return stats;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      ++stats.entries;
      stats.bytes += entry.file_size();
    }
  }
  return stats;
}

std::size_t CacheStore::clear() const {
  std::size_t removed = 0;
  std::error_code ec;
  if (!fs::is_directory(dir_, ec)) return 0;
  std::vector<fs::path> doomed;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() &&
        (entry.path().extension() == ".json" || name.rfind(".tmp-", 0) == 0)) {
      doomed.push_back(entry.path());
    }
  }
  for (const auto& path : doomed) {
    if (fs::remove(path, ec) && path.extension() == ".json") ++removed;
  }
  return removed;
}

CachedGeneration cached_complete(const ChatPrompt& prompt, const DecodingParams& params,
                                 ChatBackend& backend, const CacheStore& cache) {
  const CacheKey key = CacheKey::of(backend.model_name(), params, prompt);
  if (auto hit = cache.get(key)) return {std::move(*hit), true};
  Generation g = backend.complete(prompt, params);
  cache.put(key, request_payload(backend.model_name(), params, prompt), g);
  return {std::move(g), false};
}

}  // namespace square
