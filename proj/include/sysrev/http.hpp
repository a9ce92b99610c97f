#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sysrev/error.hpp"

namespace sysrev::http {

using Headers = std::vector<std::pair<std::string, std::string>>;

struct Request {
  std::string method = "GET";
  std::string url;
  Headers headers;
  std::string body;
  std::string content_type = "application/json";
  std::chrono::milliseconds timeout{60'000};
};

struct Response {
  int status = 0;
  std::string body;
  Headers headers;

  bool ok() const noexcept { return status >= 200 && status < 300; }
};

enum class FailureKind { kConnection, kTimeout };

/// Thrown by transports when no HTTP response was obtained.
class TransportError : public Error {
 public:
  TransportError(FailureKind kind, const std::string& message)
      : Error(ErrorCode::kTransport, message), kind_(kind) {}

  FailureKind kind() const noexcept { return kind_; }

 private:
  FailureKind kind_;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual Response send(const Request& request) = 0;
};

/// cpp-httplib backed transport; HTTPS via OpenSSL.
std::shared_ptr<Transport> make_default_transport();

struct Url {
  std::string scheme;
  std::string host;
  int port = 0;
  std::string target;  // path plus query, always starting with '/'
};

Url parse_url(std::string_view url);
std::string url_encode(std::string_view value);

}  // namespace sysrev::http
