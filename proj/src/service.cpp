#include "sysrev/service.hpp"

#include <httplib.h>

#include "sysrev/session.hpp"

namespace sysrev::service {
namespace {

constexpr const char* kJson = "application/json";

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void reply_error(httplib::Response& res, const Error& e) { reply(res, http_status(e.code()), error_body(e)); }

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    auto j = nlohmann::json::parse(req.body);
    if (!j.is_object()) throw Error(ErrorCode::kInput, "request body must be a JSON object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("request body is not valid JSON: ") + e.what());
  }
}

std::optional<int> optional_revision(const nlohmann::json& body) {
  if (!body.contains("revision") || body["revision"].is_null()) return std::nullopt;
  if (!body["revision"].is_number_integer()) throw Error(ErrorCode::kInput, "revision must be an integer");
  return body["revision"].get<int>();
}

int int_param(const httplib::Request& req, const std::string& name, int fallback) {
  if (!req.has_param(name)) return fallback;
  const std::string v = req.get_param_value(name);
  try {
    std::size_t used = 0;
    const int n = std::stoi(v, &used);
    if (used == v.size()) return n;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kInput, name + " must be an integer");
}

// Wraps a handler so library errors become JSON error bodies.
template <typename F>
httplib::Server::Handler guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      reply_error(res, e);
    } catch (const nlohmann::json::exception& e) {
      reply_error(res, Error(ErrorCode::kInput, std::string("malformed request: ") + e.what()));
    }
  };
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInput:
    case ErrorCode::kParse:
    case ErrorCode::kSyntax:
    case ErrorCode::kStructural:
    case ErrorCode::kDimension:
      return 400;
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kConflict:
    case ErrorCode::kDuplicate:
      return 409;
    case ErrorCode::kEmptyContext:
    case ErrorCode::kEmptyIndex:
    case ErrorCode::kGeneration:
    case ErrorCode::kReference:
      return 422;
    case ErrorCode::kTransport:
    case ErrorCode::kRemote:
    case ErrorCode::kProvider:
    case ErrorCode::kCassetteMiss:
      return 502;
    case ErrorCode::kIngestion:
    case ErrorCode::kStorage:
    case ErrorCode::kConfig:
      return 500;
  }
  return 500;
}

nlohmann::json error_body(const Error& e) {
  nlohmann::json j = {{"code", error_code_name(e.code())}, {"message", e.what()}};
  if (const auto* stage = dynamic_cast<const StageError*>(&e)) {
    j["stage"] = stage->stage();
    j["message"] = stage->cause_message();
  }
  return j;
}

Service::Service(pipeline::Pipeline& pipeline) : pipeline_(pipeline), server_(std::make_unique<httplib::Server>()) {
  routes();
}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound <= 0) throw Error(ErrorCode::kConfig, "cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) {
    throw Error(ErrorCode::kConfig, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void Service::serve() { server_->listen_after_bind(); }

void Service::stop() {
  if (server_) server_->stop();
}

void Service::routes() {
  auto& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Headers", "Content-Type"},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  s.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  s.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"status", "ok"}}); });

  s.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    if (!body.contains("question")) throw Error(ErrorCode::kInput, "missing 'question'");
    concepts::ResearchQuestion q;
    if (body["question"].is_string()) {
      q.text = body["question"].get<std::string>();
    } else {
      q.text = body["question"].at("text").get<std::string>();
      q.language_tag = body["question"].value("language_tag", "en");
    }
    const auto sentinels = body.value("sentinel_pmids", std::set<std::string>{});
    reply(res, 201, pipeline_.run(q, sentinels));
  }));

  s.Get("/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& id : pipeline_.store().list()) {
      const auto session = pipeline_.store().load(id);
      out.push_back({{"session_id", session.session_id},
                     {"revision", session.revision},
                     {"created_at", session.created_at},
                     {"updated_at", session.updated_at},
                     {"question", session.question.text}});
    }
    reply(res, 200, out);
  }));

  s.Get(R"(/sessions/([A-Za-z0-9_-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    if (req.has_param("revision")) {
      reply(res, 200, pipeline_.store().load_revision(id, int_param(req, "revision", 0)));
    } else {
      reply(res, 200, pipeline_.store().load(id));
    }
  }));

  s.Get(R"(/sessions/([A-Za-z0-9_-]+)/revisions)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto revs = pipeline_.store().revisions(id);
    if (revs.empty()) throw Error(ErrorCode::kNotFound, "no session '" + id + "'");
    reply(res, 200, {{"session_id", id}, {"revisions", revs}});
  }));

  s.Post(R"(/sessions/([A-Za-z0-9_-]+)/refine)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto body = parse_body(req);
    std::vector<pipeline::Edit> edits;
    for (const auto& e : body.value("edits", nlohmann::json::array())) edits.push_back(pipeline::edit_from_json(e));
    reply(res, 200, pipeline_.refine(id, edits, optional_revision(body)));
  }));

  s.Post(R"(/sessions/([A-Za-z0-9_-]+)/feedback)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto body = parse_body(req);
    const auto event = (body.contains("event") ? body["event"] : body).get<session::FeedbackEvent>();
    session::FeedbackOptions options;
    options.force = body.value("force", false);
    options.expected_revision = optional_revision(body);
    reply(res, 201, session::record_feedback(pipeline_.store(), id, event, options));
  }));

  s.Get(R"(/sessions/([A-Za-z0-9_-]+)/metrics)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto session = pipeline_.store().load(id);
    reply(res, 200, session::evaluate(session.hits, session.sentinel_pmids, int_param(req, "k", 10)));
  }));

  s.Get(R"(/articles/([0-9]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    reply(res, 200, pipeline_.article(req.matches[1]));
  }));

  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      reply_error(res, e);
    } catch (const std::exception& e) {
      reply(res, 500, {{"code", "internal"}, {"message", e.what()}});
    }
  });

  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty() && res.status == 404) {
      reply(res, 404, {{"code", "not_found"}, {"message", "no such endpoint"}});
    }
  });
}

}  // namespace sysrev::service
