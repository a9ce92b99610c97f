#pragma once

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "sysrev/error.hpp"
#include "sysrev/pipeline.hpp"

namespace httplib {
class Server;
}

namespace sysrev::service {

int http_status(ErrorCode code);

/// {code, message} plus stage for stage failures.
nlohmann::json error_body(const Error& e);

/// JSON API over a pipeline:
///   POST /sessions                   {question, sentinel_pmids?}
///   GET  /sessions                   summaries
///   GET  /sessions/{id}[?revision=n]
///   GET  /sessions/{id}/revisions
///   POST /sessions/{id}/refine       {edits, revision?}
///   POST /sessions/{id}/feedback     {event, revision?, force?}
///   GET  /sessions/{id}/metrics?k=
///   GET  /articles/{pmid}
///   GET  /healthz
class Service {
 public:
  explicit Service(pipeline::Pipeline& pipeline);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Returns the bound port; port 0 picks a free one. Throws kConfig.
  int bind(const std::string& host, int port);
  /// Blocks until stop(); in-flight requests finish first.
  void serve();
  void stop();

 private:
  void routes();

  pipeline::Pipeline& pipeline_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace sysrev::service
