#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sysrev/concept_extraction.hpp"
#include "sysrev/context_expansion.hpp"
#include "sysrev/query_generation.hpp"
#include "sysrev/retriever.hpp"

namespace sysrev::session {

inline constexpr std::string_view kSchemaVersion = "v1";

enum class Verdict { kRelevant, kIrrelevant, kSentinel };
std::string_view verdict_name(Verdict v);
Verdict parse_verdict(std::string_view name);

struct FeedbackEvent {
  std::string pmid;
  Verdict verdict = Verdict::kRelevant;
  std::string comment;
  std::string timestamp;  // ISO-8601 UTC, filled in by record_feedback when empty
  std::string actor;

  bool operator==(const FeedbackEvent&) const = default;
};

/// Librarian adjustments that survive re-expansion.
struct Overrides {
  std::string safety_profile;
  std::vector<std::string> blocked_terms;
  std::vector<std::string> removed_terms;
  std::vector<std::string> added_terms;

  bool operator==(const Overrides&) const = default;
};

struct StageFailure {
  std::string stage;
  std::string code;
  std::string message;

  bool operator==(const StageFailure&) const = default;
};

struct ReviewSession {
  std::string session_id;
  std::string created_at;
  std::string updated_at;
  int revision = 1;
  concepts::ResearchQuestion question;
  context::ExpandedContext context;
  std::string generation_prompt;
  bool generation_fallback = false;
  std::vector<querygen::GeneratedQuery> queries;
  std::string boolean_query;
  std::vector<std::string> retrieved_pmids;
  std::vector<retriever::FusedArticle> hits;
  std::vector<FeedbackEvent> feedback;
  std::set<std::string> sentinel_pmids;
  std::set<std::string> added_pmids;  // force-added through feedback
  Overrides overrides;
  std::optional<StageFailure> failure;

  bool operator==(const ReviewSession&) const = default;
};

struct Metrics {
  int k = 10;
  double recall_at_k = 0.0;
  double precision_at_k = 0.0;
  int sentinel_found = 0;
  int sentinel_total = 0;

  bool operator==(const Metrics&) const = default;
};

/// recall = |top-k ∩ S| / |S|; precision = |top-k ∩ S| / min(k, |hits|).
Metrics evaluate(const std::vector<retriever::FusedArticle>& hits, const std::set<std::string>& sentinels, int k);

std::string utc_now();
bool is_valid_timestamp(std::string_view ts);
bool is_valid_session_id(std::string_view id);

/// Immutable revision files under {root}/{session_id}/rev-{n}.json. A
/// revision is created at most once; a second writer for the same number, or
/// a write below the latest stored revision, fails with kConflict.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path root);

  /// Fresh random id with its directory already created.
  std::string new_session_id();

  std::string save(const ReviewSession& session);
  ReviewSession load(const std::string& session_id) const;
  ReviewSession load_revision(const std::string& session_id, int revision) const;
  std::vector<int> revisions(const std::string& session_id) const;
  int latest_revision(const std::string& session_id) const;
  std::vector<std::string> list() const;
  bool exists(const std::string& session_id) const;

  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path dir_for(const std::string& session_id) const;

  std::filesystem::path root_;
};

struct FeedbackOptions {
  bool force = false;                      // accept PMIDs outside the hit list
  std::optional<int> expected_revision;    // conflict when the session moved on
};

/// Writes the next revision with the event appended. Sentinel verdicts also
/// add the PMID to the sentinel set.
ReviewSession record_feedback(SessionStore& store, const std::string& session_id, FeedbackEvent event,
                              const FeedbackOptions& options = {});

/// Adds sentinels without feedback events (e.g. from a protocol's known
/// includes); writes a new revision.
ReviewSession add_sentinels(SessionStore& store, const std::string& session_id, const std::set<std::string>& pmids,
                            std::optional<int> expected_revision = std::nullopt);

void to_json(nlohmann::json& j, const FeedbackEvent& e);
void from_json(const nlohmann::json& j, FeedbackEvent& e);
void to_json(nlohmann::json& j, const ReviewSession& s);
void from_json(const nlohmann::json& j, ReviewSession& s);
void to_json(nlohmann::json& j, const Metrics& m);
void from_json(const nlohmann::json& j, Metrics& m);

/// Pretty-printed JSON with sorted keys; what save() writes.
std::string serialize(const ReviewSession& session);

}  // namespace sysrev::session
