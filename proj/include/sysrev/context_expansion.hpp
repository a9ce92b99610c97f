#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sysrev/concept_extraction.hpp"
#include "sysrev/llm_gateway.hpp"
#include "sysrev/mesh_kb.hpp"

namespace sysrev::context {

enum class EdgeSource { kKg, kLm };

/// Object slot of vocabulary edges, which name a relation without a target.
inline constexpr std::string_view kOpenObject = "?";

struct RelationEdge {
  std::string subject;
  std::string predicate;
  std::string object;
  EdgeSource source = EdgeSource::kKg;

  bool operator==(const RelationEdge&) const = default;
};

struct KgTerm {
  std::string term;
  mesh::Provenance provenance = mesh::Provenance::kSelf;
  std::string ui;
  std::string seed;  // label of the seed whose expansion produced it

  bool operator==(const KgTerm&) const = default;
};

struct LmTerm {
  std::string term;
  std::string model_id;
  std::string seed;

  bool operator==(const LmTerm&) const = default;
};

enum class ItemKind { kKgTerm, kLmTerm, kRelation, kDefinition };

struct AuditEntry {
  ItemKind kind = ItemKind::kKgTerm;
  std::string item;
  std::string reason;
  std::string profile_id;

  bool operator==(const AuditEntry&) const = default;
};

struct ExpandedContext {
  std::vector<concepts::SeedConcept> seeds;
  std::vector<std::string> seed_labels;  // parallel to seeds
  std::vector<KgTerm> kg_terms;
  std::vector<LmTerm> lm_terms;
  std::vector<RelationEdge> relations;
  std::map<std::string, std::string> definitions;
  std::vector<AuditEntry> audit;
  bool lm_unavailable = false;
  bool lm_parse_warning = false;

  bool operator==(const ExpandedContext&) const = default;
};

struct SafetyPolicy {
  int version = 1;
  std::string profile_id;
  std::set<std::string> blocked_terms;
  std::set<std::string> blocked_predicates;
  std::vector<std::array<std::string, 3>> blocked_paths;  // subject, predicate, object globs

  bool empty() const noexcept {
    return blocked_terms.empty() && blocked_predicates.empty() && blocked_paths.empty();
  }
  bool operator==(const SafetyPolicy&) const = default;
};

SafetyPolicy load_safety_policy(const std::string& path);
SafetyPolicy parse_safety_policy(const nlohmann::json& j);

/// causes, diagnoses, affects, associated with, complicates.
const std::vector<std::string>& default_relation_vocab();

struct ExpansionOptions {
  mesh::ExpansionPolicy mesh_policy;
  std::size_t lm_max_terms = 10;
  std::string model_id = "gpt-3.5-turbo";
  bool parallel_lm_calls = true;
};

struct LmSuggestions {
  std::vector<LmTerm> terms;
  std::vector<RelationEdge> triples;  // "subject | predicate | object" lines
  bool parse_warning = false;
};

std::string lm_term_prompt(std::string_view seed_label, std::size_t max_terms);
llm::ChatRequest lm_term_request(std::string_view seed_label, std::size_t max_terms, const std::string& model_id);

/// Parses one term per line, stripping list markers and quotes. Lines of the
/// form "a | predicate | b" with a predicate from `relation_vocab` become
/// triples instead of terms.
LmSuggestions parse_lm_terms(std::string_view response, std::string_view seed_label, std::size_t max_terms,
                             const std::string& model_id, const std::vector<std::string>& relation_vocab);

/// Gateway errors propagate.
LmSuggestions suggest_lm_terms(std::string_view seed_label, llm::ChatProvider& gateway, std::size_t max_terms,
                               const std::string& model_id,
                               const std::vector<std::string>& relation_vocab = default_relation_vocab());

/// Descriptor name for resolved seeds, the surface text otherwise.
std::string seed_label(const concepts::SeedConcept& seed, const mesh::MeshKb& kb);

ExpandedContext expand_context(const std::vector<concepts::SeedConcept>& seeds, const mesh::MeshKb& kb,
                               llm::ChatProvider& gateway, const std::vector<std::string>& relation_vocab,
                               const SafetyPolicy& policy, const ExpansionOptions& options = {});

/// Idempotent. Removals are logged to the audit list with the profile id.
ExpandedContext apply_safety_filter(ExpandedContext context, const SafetyPolicy& policy);

void to_json(nlohmann::json& j, const ExpandedContext& c);
void from_json(const nlohmann::json& j, ExpandedContext& c);
void to_json(nlohmann::json& j, const SafetyPolicy& p);
void from_json(const nlohmann::json& j, SafetyPolicy& p);
std::string_view item_kind_name(ItemKind kind);

}  // namespace sysrev::context

namespace sysrev::concepts {
void to_json(nlohmann::json& j, const SeedConcept& s);
void from_json(const nlohmann::json& j, SeedConcept& s);
}  // namespace sysrev::concepts
