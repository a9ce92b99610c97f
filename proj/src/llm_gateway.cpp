#include "sysrev/llm_gateway.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <sstream>

#include "sysrev/text.hpp"

namespace sysrev::llm {
namespace {

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kProvider, "SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0x0F]);
  }
  return out;
}

}  // namespace

void ChatRequest::validate() const {
  if (text::trim(user_text).empty()) throw Error(ErrorCode::kInput, "chat request user_text is empty");
  if (!(temperature >= 0.0 && temperature <= 2.0)) throw Error(ErrorCode::kInput, "temperature must be within [0, 2]");
  if (max_tokens < 1) throw Error(ErrorCode::kInput, "max_tokens must be at least 1");
}

std::string fingerprint(const ChatRequest& request) {
  // nlohmann::json objects keep keys sorted, so the dump is canonical.
  const nlohmann::json key = {{"model_id", request.model_id},
                              {"system_text", request.system_text},
                              {"temperature", request.temperature},
                              {"user_text", request.user_text}};
  return sha256_hex(key.dump());
}

nlohmann::json to_json(const ChatRequest& r) {
  return {{"model_id", r.model_id},
          {"system_text", r.system_text},
          {"user_text", r.user_text},
          {"temperature", r.temperature},
          {"max_tokens", r.max_tokens}};
}

nlohmann::json to_json(const ChatResponse& r) {
  return {{"text", r.text},
          {"prompt_tokens", r.prompt_tokens},
          {"completion_tokens", r.completion_tokens},
          {"provider_id", r.provider_id}};
}

ChatRequest request_from_json(const nlohmann::json& j) {
  ChatRequest r;
  r.model_id = j.value("model_id", "");
  r.system_text = j.value("system_text", "");
  r.user_text = j.at("user_text").get<std::string>();
  r.temperature = j.value("temperature", 0.0);
  r.max_tokens = j.value("max_tokens", 512);
  return r;
}

ChatResponse response_from_json(const nlohmann::json& j) {
  ChatResponse r;
  r.text = j.at("text").get<std::string>();
  r.prompt_tokens = j.value("prompt_tokens", 0);
  r.completion_tokens = j.value("completion_tokens", 0);
  r.provider_id = j.value("provider_id", "");
  return r;
}

ChatResponse complete(ChatProvider& provider, const ChatRequest& request) {
  request.validate();
  return provider.complete(request);
}

// --- mock ------------------------------------------------------------------

MockProvider::MockProvider(std::map<std::string, std::string> canned, std::optional<std::string> fixed)
    : canned_(std::move(canned)), fixed_(std::move(fixed)) {}

void MockProvider::add(const ChatRequest& request, std::string text) {
  std::lock_guard lock(mutex_);
  canned_[fingerprint(request)] = std::move(text);
}

ChatResponse MockProvider::complete(const ChatRequest& request) {
  ++calls_;
  ChatResponse response;
  response.provider_id = id();
  std::lock_guard lock(mutex_);
  if (const auto it = canned_.find(fingerprint(request)); it != canned_.end()) {
    response.text = it->second;
  } else {
    response.text = fixed_.value_or(request.user_text);
  }
  return response;
}

ChatResponse FailingProvider::complete(const ChatRequest&) {
  throw Error(ErrorCode::kProvider, "chat provider unavailable");
}

// --- cassette --------------------------------------------------------------

std::shared_ptr<Cassette> Cassette::parse(std::string_view jsonl) {
  auto cassette = std::make_shared<Cassette>();
  std::size_t line_no = 0;
  for (const auto& line : text::split(jsonl, '\n')) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CassetteEntry entry{j.at("fingerprint").get<std::string>(), request_from_json(j.at("request")),
                          response_from_json(j.at("response"))};
      if (cassette->by_fingerprint_.count(entry.fingerprint) != 0) {
        throw Error(ErrorCode::kParse, "duplicate fingerprint " + entry.fingerprint);
      }
      cassette->insert_locked(std::move(entry));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, "cassette line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cassette;
}

std::shared_ptr<Cassette> Cassette::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open cassette " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void Cassette::bind(const std::string& path) {
  std::lock_guard lock(mutex_);
  path_ = path;
}

void Cassette::insert_locked(CassetteEntry entry) {
  by_fingerprint_.emplace(entry.fingerprint, entries_.size());
  entries_.push_back(std::move(entry));
}

std::optional<ChatResponse> Cassette::find(const std::string& fp) const {
  std::lock_guard lock(mutex_);
  const auto it = by_fingerprint_.find(fp);
  if (it == by_fingerprint_.end()) return std::nullopt;
  return entries_[it->second].response;
}

bool Cassette::append(const ChatRequest& request, const ChatResponse& response) {
  const std::string fp = fingerprint(request);
  std::lock_guard lock(mutex_);
  if (by_fingerprint_.count(fp) != 0) return false;
  CassetteEntry entry{fp, request, response};
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::kStorage, "cannot append to cassette " + path_);
    out << nlohmann::json{{"fingerprint", fp}, {"request", to_json(request)}, {"response", to_json(response)}}.dump()
        << '\n';
  }
  insert_locked(std::move(entry));
  return true;
}

std::size_t Cassette::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::vector<CassetteEntry> Cassette::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::string Cassette::serialize() const {
  std::lock_guard lock(mutex_);
  std::string out;
  for (const auto& e : entries_) {
    out += nlohmann::json{{"fingerprint", e.fingerprint}, {"request", to_json(e.request)},
                          {"response", to_json(e.response)}}
               .dump();
    out += '\n';
  }
  return out;
}

// --- replay / record -------------------------------------------------------

ReplayProvider::ReplayProvider(std::shared_ptr<const Cassette> cassette) : cassette_(std::move(cassette)) {}

ChatResponse ReplayProvider::complete(const ChatRequest& request) {
  const std::string fp = fingerprint(request);
  auto hit = cassette_->find(fp);
  if (!hit) throw CassetteMiss(fp);
  return *hit;
}

RecordingProvider::RecordingProvider(std::shared_ptr<ChatProvider> upstream, std::shared_ptr<Cassette> cassette)
    : upstream_(std::move(upstream)), cassette_(std::move(cassette)) {}

ChatResponse RecordingProvider::complete(const ChatRequest& request) {
  ChatResponse response = upstream_->complete(request);
  cassette_->append(request, response);
  return response;
}

// --- live ------------------------------------------------------------------

HttpChatProvider::HttpChatProvider(HttpChatConfig config, std::shared_ptr<http::Transport> transport, Sleeper sleeper,
                                   std::shared_ptr<RateLimiter> limiter)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)),
      limiter_(std::move(limiter)),
      rng_(std::random_device{}()) {}

ChatResponse HttpChatProvider::complete(const ChatRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  if (!request.system_text.empty()) messages.push_back({{"role", "system"}, {"content", request.system_text}});
  messages.push_back({{"role", "user"}, {"content", request.user_text}});
  const nlohmann::json body = {{"model", request.model_id},
                               {"messages", messages},
                               {"temperature", request.temperature},
                               {"max_tokens", request.max_tokens}};

  http::Request http_request;
  http_request.method = "POST";
  http_request.url = config_.endpoint;
  http_request.body = body.dump();
  http_request.timeout = config_.timeout;
  if (!config_.api_key.empty()) http_request.headers.emplace_back("Authorization", "Bearer " + config_.api_key);

  http::Response http_response;
  try {
    std::mt19937_64 rng;
    {
      std::lock_guard lock(rng_mutex_);
      rng.seed(rng_());
    }
    http_response = send_with_retry(*transport_, http_request, config_.retry, sleeper_, limiter_.get(), &rng);
  } catch (const http::TransportError& e) {
    throw Error(ErrorCode::kProvider, std::string("chat completion transport failure: ") + e.what());
  }
  if (!http_response.ok()) {
    throw Error(ErrorCode::kProvider, "chat completion failed with HTTP " + std::to_string(http_response.status) +
                                          ": " + http_response.body.substr(0, 200));
  }

  try {
    const auto j = nlohmann::json::parse(http_response.body);
    ChatResponse response;
    response.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
    if (j.contains("usage")) {
      response.prompt_tokens = j["usage"].value("prompt_tokens", 0);
      response.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
    response.provider_id = id();
    return response;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kProvider, std::string("unexpected chat completion payload: ") + e.what());
  }
}

}  // namespace sysrev::llm
