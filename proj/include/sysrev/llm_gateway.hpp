#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "sysrev/http.hpp"
#include "sysrev/rate_limit.hpp"

namespace sysrev::llm {

struct ChatRequest {
  std::string system_text;
  std::string user_text;
  double temperature = 0.0;
  int max_tokens = 512;
  std::string model_id;

  void validate() const;
};

struct ChatResponse {
  std::string text;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  std::string provider_id;

  bool operator==(const ChatResponse&) const = default;
};

/// Hex SHA-256 over (model_id, system_text, user_text, temperature).
std::string fingerprint(const ChatRequest& request);

nlohmann::json to_json(const ChatRequest& request);
nlohmann::json to_json(const ChatResponse& response);
ChatResponse response_from_json(const nlohmann::json& j);
ChatRequest request_from_json(const nlohmann::json& j);

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::string id() const = 0;
};

/// Validates the request, then dispatches to the provider.
ChatResponse complete(ChatProvider& provider, const ChatRequest& request);

/// Canned responses keyed by fingerprint; anything else gets the fixed
/// reply, or the user text echoed back when no fixed reply is set.
class MockProvider final : public ChatProvider {
 public:
  MockProvider() = default;
  explicit MockProvider(std::map<std::string, std::string> canned, std::optional<std::string> fixed = std::nullopt);

  void add(const ChatRequest& request, std::string text);
  ChatResponse complete(const ChatRequest& request) override;
  std::string id() const override { return "mock"; }
  int calls() const noexcept { return calls_.load(); }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::string> canned_;
  std::optional<std::string> fixed_;
  std::atomic<int> calls_{0};
};

/// Always fails; stands in for an unreachable model.
class FailingProvider final : public ChatProvider {
 public:
  ChatResponse complete(const ChatRequest& request) override;
  std::string id() const override { return "failing"; }
};

struct CassetteEntry {
  std::string fingerprint;
  ChatRequest request;
  ChatResponse response;
};

/// Fingerprint -> response store backed by a JSON Lines file. Appends are
/// serialized and written through to the bound file.
class Cassette {
 public:
  Cassette() = default;

  static std::shared_ptr<Cassette> load(const std::string& path);
  static std::shared_ptr<Cassette> parse(std::string_view jsonl);

  /// Subsequent appends are also written to `path`.
  void bind(const std::string& path);

  std::optional<ChatResponse> find(const std::string& fingerprint) const;
  /// Returns false when the fingerprint is already present.
  bool append(const ChatRequest& request, const ChatResponse& response);

  std::size_t size() const;
  std::vector<CassetteEntry> entries() const;
  std::string serialize() const;

 private:
  void insert_locked(CassetteEntry entry);

  mutable std::mutex mutex_;
  std::vector<CassetteEntry> entries_;
  std::unordered_map<std::string, std::size_t> by_fingerprint_;
  std::string path_;
};

class ReplayProvider final : public ChatProvider {
 public:
  explicit ReplayProvider(std::shared_ptr<const Cassette> cassette);
  ChatResponse complete(const ChatRequest& request) override;
  std::string id() const override { return "replay"; }

 private:
  std::shared_ptr<const Cassette> cassette_;
};

/// Calls upstream and appends every exchange to the cassette.
class RecordingProvider final : public ChatProvider {
 public:
  RecordingProvider(std::shared_ptr<ChatProvider> upstream, std::shared_ptr<Cassette> cassette);
  ChatResponse complete(const ChatRequest& request) override;
  std::string id() const override { return "record"; }

 private:
  std::shared_ptr<ChatProvider> upstream_;
  std::shared_ptr<Cassette> cassette_;
};

struct HttpChatConfig {
  std::string endpoint;  // full chat-completions URL
  std::string api_key;   // taken from LLM_API_KEY by the caller
  std::chrono::milliseconds timeout{60'000};
  RetryPolicy retry;
};

/// OpenAI-style JSON chat-completions API.
class HttpChatProvider final : public ChatProvider {
 public:
  HttpChatProvider(HttpChatConfig config, std::shared_ptr<http::Transport> transport, Sleeper sleeper = real_sleeper(),
                   std::shared_ptr<RateLimiter> limiter = nullptr);
  ChatResponse complete(const ChatRequest& request) override;
  std::string id() const override { return "live"; }

 private:
  HttpChatConfig config_;
  std::shared_ptr<http::Transport> transport_;
  Sleeper sleeper_;
  std::shared_ptr<RateLimiter> limiter_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
};

}  // namespace sysrev::llm
