#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sysrev/context_expansion.hpp"
#include "sysrev/llm_gateway.hpp"

namespace sysrev::querygen {

inline constexpr std::size_t kMaxPromptKeywords = 12;
inline constexpr int kMaxQueries = 20;
inline constexpr int kDefaultQueries = 5;

enum class QuerySource { kLlm, kFallback, kLibrarian };

struct GeneratedQuery {
  std::string text;
  std::vector<std::string> origin_keywords;
  int rank = 1;
  QuerySource source = QuerySource::kLlm;

  bool operator==(const GeneratedQuery&) const = default;
};

/// Relation predicates, then LM terms, then KG terms (minus the seeds'
/// own headings), deduplicated case-insensitively and capped at twelve.
std::vector<std::string> prompt_keywords(const context::ExpandedContext& context);

/// "Formulate {n} prompt queries with the keywords: k1, k2, ..."
std::string build_prompt(const context::ExpandedContext& context, int n);

struct GenerationResult {
  std::vector<GeneratedQuery> queries;
  std::string prompt;
  bool gateway_failed = false;
};

struct GenerationOptions {
  std::string model_id = "gpt-3.5-turbo";
  int max_tokens = 512;
};

llm::ChatRequest generation_request(const std::string& prompt, const GenerationOptions& options);

/// Numbered, bulleted or plain lines; markers and quotes stripped, heading
/// lines ending in ':' skipped, case-insensitive dedup.
std::vector<std::string> parse_query_lines(std::string_view response);

GenerationResult generate_queries(const context::ExpandedContext& context, llm::ChatProvider& gateway, int n,
                                  const GenerationOptions& options = {});

/// Template queries over (seed x predicate) pairs, then LM terms.
std::vector<GeneratedQuery> fallback_generate(const context::ExpandedContext& context, int n);

std::string_view query_source_name(QuerySource s);
QuerySource parse_query_source(std::string_view name);
void to_json(nlohmann::json& j, const GeneratedQuery& q);
void from_json(const nlohmann::json& j, GeneratedQuery& q);

}  // namespace sysrev::querygen
