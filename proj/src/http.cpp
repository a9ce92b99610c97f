#include "sysrev/http.hpp"

#include <algorithm>

#include <httplib.h>

namespace sysrev::http {
namespace {

class HttplibTransport final : public Transport {
 public:
  Response send(const Request& request) override {
    const Url url = parse_url(request.url);
    httplib::Client client(url.scheme + "://" + url.host + ":" + std::to_string(url.port));
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());

    httplib::Headers headers;
    for (const auto& [k, v] : request.headers) headers.emplace(k, v);

    const auto started = std::chrono::steady_clock::now();
    httplib::Result result = (request.method == "POST")
                                 ? client.Post(url.target, headers, request.body, request.content_type)
                                 : client.Get(url.target, headers);
    if (!result) {
      const auto err = result.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                             (err == httplib::Error::Read &&
                              std::chrono::steady_clock::now() - started >= request.timeout);
      throw TransportError(timed_out ? FailureKind::kTimeout : FailureKind::kConnection,
                           request.method + " " + url.host + url.target.substr(0, url.target.find('?')) +
                               " failed: " + httplib::to_string(err));
    }
    Response response;
    response.status = result->status;
    response.body = result->body;
    for (const auto& [k, v] : result->headers) response.headers.emplace_back(k, v);
    return response;
  }
};

}  // namespace

std::shared_ptr<Transport> make_default_transport() { return std::make_shared<HttplibTransport>(); }

Url parse_url(std::string_view url) {
  Url out;
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw Error(ErrorCode::kConfig, "URL lacks a scheme: " + std::string(url));
  out.scheme = std::string(url.substr(0, scheme_end));
  if (out.scheme != "http" && out.scheme != "https") {
    throw Error(ErrorCode::kConfig, "unsupported URL scheme: " + out.scheme);
  }
  std::string_view rest = url.substr(scheme_end + 3);
  const auto slash = std::find(rest.begin(), rest.end(), '/');
  const std::size_t path_start =
      slash == rest.end() ? std::string_view::npos : static_cast<std::size_t>(slash - rest.begin());
  std::string_view authority = rest.substr(0, path_start);
  out.target = path_start == std::string_view::npos ? "/" : std::string(rest.substr(path_start));
  const std::size_t colon = authority.rfind(':');
  if (colon != std::string_view::npos && authority.find(']') == std::string_view::npos) {
    out.host = std::string(authority.substr(0, colon));
    try {
      out.port = std::stoi(std::string(authority.substr(colon + 1)));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kConfig, "bad port in URL: " + std::string(url));
    }
  } else {
    out.host = std::string(authority);
    out.port = out.scheme == "https" ? 443 : 80;
  }
  if (out.host.empty()) throw Error(ErrorCode::kConfig, "URL lacks a host: " + std::string(url));
  return out;
}

std::string url_encode(std::string_view value) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (const char ch : value) {
    const auto c = static_cast<unsigned char>(ch);
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
        c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0x0F]);
    }
  }
  return out;
}

}  // namespace sysrev::http
