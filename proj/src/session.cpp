#include "sysrev/session.hpp"

#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include "sysrev/error.hpp"
#include "sysrev/pubmed_client.hpp"

namespace sysrev::session {
namespace fs = std::filesystem;
namespace {

constexpr int kIdAttempts = 16;

std::string random_hex(std::size_t digits) {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (std::size_t i = 0; i < digits; ++i) out.push_back(kHex[rng() & 0xF]);
  return out;
}

// "...:05Z" -> "...:05.000Z" so timestamps compare lexicographically.
std::string canonical_timestamp(const std::string& ts) {
  if (ts.size() == 20) return ts.substr(0, 19) + ".000Z";
  return ts;
}

std::optional<int> revision_of(const fs::path& file) {
  static const std::regex kPattern(R"(rev-([1-9][0-9]{0,8})\.json)");
  std::smatch m;
  const std::string name = file.filename().string();
  if (!std::regex_match(name, m, kPattern)) return std::nullopt;
  return std::stoi(m[1].str());
}

ReviewSession read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kStorage, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(in).get<ReviewSession>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kStorage, path.string() + " is not a valid session document: " + e.what());
  }
}

}  // namespace

std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kRelevant: return "relevant";
    case Verdict::kIrrelevant: return "irrelevant";
    case Verdict::kSentinel: return "sentinel";
  }
  return "relevant";
}

Verdict parse_verdict(std::string_view name) {
  if (name == "relevant") return Verdict::kRelevant;
  if (name == "irrelevant") return Verdict::kIrrelevant;
  if (name == "sentinel") return Verdict::kSentinel;
  throw Error(ErrorCode::kInput, "unknown verdict '" + std::string(name) + "'");
}

Metrics evaluate(const std::vector<retriever::FusedArticle>& hits, const std::set<std::string>& sentinels, int k) {
  if (k < 1) throw Error(ErrorCode::kInput, "k must be at least 1");
  if (sentinels.empty()) throw Error(ErrorCode::kInput, "sentinel set is empty");
  Metrics m;
  m.k = k;
  m.sentinel_total = static_cast<int>(sentinels.size());
  const std::size_t top = std::min(hits.size(), static_cast<std::size_t>(k));
  std::set<std::string> counted;
  for (std::size_t i = 0; i < top; ++i) {
    if (sentinels.count(hits[i].pmid) != 0 && counted.insert(hits[i].pmid).second) ++m.sentinel_found;
  }
  m.recall_at_k = static_cast<double>(m.sentinel_found) / m.sentinel_total;
  m.precision_at_k = top == 0 ? 0.0 : static_cast<double>(m.sentinel_found) / static_cast<double>(top);
  return m;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t secs = std::chrono::system_clock::to_time_t(now);
  const auto millis =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(millis));
  return out;
}

bool is_valid_timestamp(std::string_view ts) {
  static const std::regex kPattern(R"(\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d{3})?Z)");
  return std::regex_match(ts.begin(), ts.end(), kPattern);
}

bool is_valid_session_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
  });
}

// --- store -----------------------------------------------------------------

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw Error(ErrorCode::kStorage, "cannot create session directory " + root_.string() + ": " + ec.message());
}

fs::path SessionStore::dir_for(const std::string& session_id) const {
  if (!is_valid_session_id(session_id)) throw Error(ErrorCode::kNotFound, "no session '" + session_id + "'");
  return root_ / session_id;
}

std::string SessionStore::new_session_id() {
  for (int attempt = 0; attempt < kIdAttempts; ++attempt) {
    std::string id = "s" + random_hex(16);
    std::error_code ec;
    if (fs::create_directory(root_ / id, ec)) return id;
    if (ec) throw Error(ErrorCode::kStorage, "cannot create session directory: " + ec.message());
  }
  throw Error(ErrorCode::kStorage, "could not allocate a session id");
}

std::string SessionStore::save(const ReviewSession& session) {
  const fs::path dir = dir_for(session.session_id);
  if (session.revision < 1) throw Error(ErrorCode::kInput, "revision must be at least 1");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kStorage, "cannot create " + dir.string() + ": " + ec.message());

  const int latest = latest_revision(session.session_id);
  if (session.revision <= latest) {
    throw Error(ErrorCode::kConflict, "session " + session.session_id + " is at revision " + std::to_string(latest) +
                                          "; cannot write revision " + std::to_string(session.revision));
  }
  if (session.revision != latest + 1) {
    throw Error(ErrorCode::kInput, "revision " + std::to_string(session.revision) + " skips ahead of " +
                                       std::to_string(latest));
  }

  const fs::path target = dir / ("rev-" + std::to_string(session.revision) + ".json");
  const fs::path tmp = dir / (".rev-" + std::to_string(session.revision) + "." + random_hex(12) + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kStorage, "cannot write " + tmp.string());
    out << serialize(session);
    if (!out.flush()) throw Error(ErrorCode::kStorage, "failed writing " + tmp.string());
  }
  // link() refuses to replace an existing file, which makes the revision
  // number a compare-and-swap slot.
  const int rc = ::link(tmp.c_str(), target.c_str());
  const int err = errno;
  fs::remove(tmp, ec);
  if (rc != 0) {
    if (err == EEXIST) {
      throw Error(ErrorCode::kConflict, "revision " + std::to_string(session.revision) + " of session " +
                                            session.session_id + " was written concurrently");
    }
    throw Error(ErrorCode::kStorage, "cannot publish " + target.string() + ": " + std::strerror(err));
  }
  return session.session_id;
}

std::vector<int> SessionStore::revisions(const std::string& session_id) const {
  const fs::path dir = dir_for(session_id);
  std::vector<int> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (const auto rev = revision_of(entry.path())) out.push_back(*rev);
  }
  std::sort(out.begin(), out.end());
  return out;
}

int SessionStore::latest_revision(const std::string& session_id) const {
  const auto revs = revisions(session_id);
  return revs.empty() ? 0 : revs.back();
}

bool SessionStore::exists(const std::string& session_id) const {
  return is_valid_session_id(session_id) && latest_revision(session_id) > 0;
}

ReviewSession SessionStore::load(const std::string& session_id) const {
  const int latest = latest_revision(session_id);
  if (latest == 0) throw Error(ErrorCode::kNotFound, "no session '" + session_id + "'");
  return load_revision(session_id, latest);
}

ReviewSession SessionStore::load_revision(const std::string& session_id, int revision) const {
  const fs::path file = dir_for(session_id) / ("rev-" + std::to_string(revision) + ".json");
  std::error_code ec;
  if (!fs::exists(file, ec)) {
    throw Error(ErrorCode::kNotFound, "session '" + session_id + "' has no revision " + std::to_string(revision));
  }
  return read_file(file);
}

std::vector<std::string> SessionStore::list() const {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(root_, ec)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_directory() && is_valid_session_id(name) && latest_revision(name) > 0) out.push_back(name);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// --- feedback --------------------------------------------------------------

ReviewSession record_feedback(SessionStore& store, const std::string& session_id, FeedbackEvent event,
                              const FeedbackOptions& options) {
  ReviewSession s = store.load(session_id);
  if (options.expected_revision && *options.expected_revision != s.revision) {
    throw Error(ErrorCode::kConflict, "session " + session_id + " is at revision " + std::to_string(s.revision) +
                                          ", not " + std::to_string(*options.expected_revision));
  }
  if (!pubmed::is_valid_pmid(event.pmid)) throw Error(ErrorCode::kInput, "invalid PMID '" + event.pmid + "'");
  if (event.actor.empty()) event.actor = "librarian";

  const std::string last = s.feedback.empty() ? std::string() : canonical_timestamp(s.feedback.back().timestamp);
  if (event.timestamp.empty()) {
    event.timestamp = std::max(utc_now(), last);
  } else {
    if (!is_valid_timestamp(event.timestamp)) throw Error(ErrorCode::kInput, "malformed timestamp " + event.timestamp);
    event.timestamp = canonical_timestamp(event.timestamp);
    if (event.timestamp < last) throw Error(ErrorCode::kInput, "feedback timestamp precedes the previous event");
  }

  const bool in_hits = std::any_of(s.hits.begin(), s.hits.end(),
                                   [&](const retriever::FusedArticle& a) { return a.pmid == event.pmid; });
  if (!in_hits && s.added_pmids.count(event.pmid) == 0) {
    if (!options.force) {
      throw Error(ErrorCode::kReference, "PMID " + event.pmid + " is not among the session's hits");
    }
    s.added_pmids.insert(event.pmid);
  }

  if (event.verdict == Verdict::kSentinel) s.sentinel_pmids.insert(event.pmid);
  s.feedback.push_back(std::move(event));
  s.revision += 1;
  s.updated_at = utc_now();
  store.save(s);
  return s;
}

ReviewSession add_sentinels(SessionStore& store, const std::string& session_id, const std::set<std::string>& pmids,
                            std::optional<int> expected_revision) {
  ReviewSession s = store.load(session_id);
  if (expected_revision && *expected_revision != s.revision) {
    throw Error(ErrorCode::kConflict, "session " + session_id + " is at revision " + std::to_string(s.revision));
  }
  for (const auto& p : pmids) {
    if (!pubmed::is_valid_pmid(p)) throw Error(ErrorCode::kInput, "invalid PMID '" + p + "'");
  }
  s.sentinel_pmids.insert(pmids.begin(), pmids.end());
  s.revision += 1;
  s.updated_at = utc_now();
  store.save(s);
  return s;
}

// --- JSON ------------------------------------------------------------------

void to_json(nlohmann::json& j, const FeedbackEvent& e) {
  j = {{"pmid", e.pmid},
       {"verdict", verdict_name(e.verdict)},
       {"comment", e.comment},
       {"timestamp", e.timestamp},
       {"actor", e.actor}};
}

void from_json(const nlohmann::json& j, FeedbackEvent& e) {
  e.pmid = j.at("pmid").get<std::string>();
  e.verdict = parse_verdict(j.at("verdict").get<std::string>());
  e.comment = j.value("comment", "");
  e.timestamp = j.value("timestamp", "");
  e.actor = j.value("actor", "");
}

void to_json(nlohmann::json& j, const Metrics& m) {
  j = {{"k", m.k},
       {"recall_at_k", m.recall_at_k},
       {"precision_at_k", m.precision_at_k},
       {"sentinel_found", m.sentinel_found},
       {"sentinel_total", m.sentinel_total}};
}

void from_json(const nlohmann::json& j, Metrics& m) {
  m.k = j.at("k").get<int>();
  m.recall_at_k = j.at("recall_at_k").get<double>();
  m.precision_at_k = j.at("precision_at_k").get<double>();
  m.sentinel_found = j.at("sentinel_found").get<int>();
  m.sentinel_total = j.at("sentinel_total").get<int>();
}

void to_json(nlohmann::json& j, const ReviewSession& s) {
  j = nlohmann::json::object();
  j["schema"] = kSchemaVersion;
  j["session_id"] = s.session_id;
  j["created_at"] = s.created_at;
  j["updated_at"] = s.updated_at;
  j["revision"] = s.revision;
  j["question"] = {{"text", s.question.text}, {"language_tag", s.question.language_tag}};
  j["context"] = s.context;
  j["generation_prompt"] = s.generation_prompt;
  j["generation_fallback"] = s.generation_fallback;
  j["queries"] = s.queries;
  j["boolean_query"] = s.boolean_query;
  j["retrieved_pmids"] = s.retrieved_pmids;
  j["hits"] = s.hits;
  j["feedback"] = s.feedback;
  j["sentinel_pmids"] = s.sentinel_pmids;
  j["added_pmids"] = s.added_pmids;
  j["overrides"] = {{"safety_profile", s.overrides.safety_profile},
                    {"blocked_terms", s.overrides.blocked_terms},
                    {"removed_terms", s.overrides.removed_terms},
                    {"added_terms", s.overrides.added_terms}};
  if (s.failure) {
    j["failure"] = {{"stage", s.failure->stage}, {"code", s.failure->code}, {"message", s.failure->message}};
  } else {
    j["failure"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, ReviewSession& s) {
  const std::string schema = j.value("schema", "");
  if (schema != kSchemaVersion) throw Error(ErrorCode::kStorage, "unsupported session schema '" + schema + "'");
  s.session_id = j.at("session_id").get<std::string>();
  s.created_at = j.at("created_at").get<std::string>();
  s.updated_at = j.value("updated_at", s.created_at);
  s.revision = j.at("revision").get<int>();
  s.question.text = j.at("question").at("text").get<std::string>();
  s.question.language_tag = j.at("question").value("language_tag", "en");
  s.context = j.at("context").get<context::ExpandedContext>();
  s.generation_prompt = j.value("generation_prompt", "");
  s.generation_fallback = j.value("generation_fallback", false);
  s.queries = j.at("queries").get<std::vector<querygen::GeneratedQuery>>();
  s.boolean_query = j.value("boolean_query", "");
  s.retrieved_pmids = j.value("retrieved_pmids", std::vector<std::string>{});
  s.hits = j.at("hits").get<std::vector<retriever::FusedArticle>>();
  s.feedback = j.value("feedback", std::vector<FeedbackEvent>{});
  s.sentinel_pmids = j.value("sentinel_pmids", std::set<std::string>{});
  s.added_pmids = j.value("added_pmids", std::set<std::string>{});
  if (j.contains("overrides")) {
    const auto& o = j["overrides"];
    s.overrides.safety_profile = o.value("safety_profile", "");
    s.overrides.blocked_terms = o.value("blocked_terms", std::vector<std::string>{});
    s.overrides.removed_terms = o.value("removed_terms", std::vector<std::string>{});
    s.overrides.added_terms = o.value("added_terms", std::vector<std::string>{});
  }
  if (j.contains("failure") && !j["failure"].is_null()) {
    const auto& f = j["failure"];
    s.failure = StageFailure{f.at("stage").get<std::string>(), f.value("code", ""), f.value("message", "")};
  } else {
    s.failure.reset();
  }
}

std::string serialize(const ReviewSession& session) {
  return nlohmann::json(session).dump(2) + "\n";
}

}  // namespace sysrev::session
