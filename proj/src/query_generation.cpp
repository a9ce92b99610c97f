#include "sysrev/query_generation.hpp"

#include <set>

#include "sysrev/error.hpp"
#include "sysrev/text.hpp"

namespace sysrev::querygen {
namespace {

constexpr std::string_view kGenerationSystemText =
    "You help librarians formulate literature search questions for systematic reviews.";

// Predicates read as "How is X <participle>?".
const std::set<std::string>& passive_predicates() {
  static const std::set<std::string> s = {"diagnoses", "treats", "prevents", "detects", "manages", "screens"};
  return s;
}

// Predicates read as "What does X <verb>?".
const std::set<std::string>& active_predicates() {
  static const std::set<std::string> s = {"affects", "complicates", "influences", "worsens", "increases", "reduces"};
  return s;
}

std::string participle(const std::string& verb) {
  if (verb.size() > 3 && verb.compare(verb.size() - 3, 3, "ses") == 0) return verb.substr(0, verb.size() - 2) + "ed";
  std::string stem = (!verb.empty() && verb.back() == 's') ? verb.substr(0, verb.size() - 1) : verb;
  return stem + (!stem.empty() && stem.back() == 'e' ? "d" : "ed");
}

std::string template_query(const std::string& seed, const std::string& predicate) {
  const std::string p = text::normalize(predicate);
  if (p == "associated with") return "What is " + seed + " associated with?";
  if (passive_predicates().count(p) != 0) return "How is " + seed + " " + participle(p) + "?";
  if (active_predicates().count(p) != 0) return "What does " + seed + " " + p.substr(0, p.size() - 1) + "?";
  return "What are the " + predicate + " of " + seed + "?";
}

std::vector<std::string> origins_for(const std::string& query, const std::vector<std::string>& keywords) {
  std::vector<std::string> out;
  const std::string folded = text::casefold(query);
  for (const auto& k : keywords) {
    if (folded.find(text::casefold(k)) != std::string::npos) out.push_back(k);
  }
  return out;
}

}  // namespace

std::string_view query_source_name(QuerySource s) {
  switch (s) {
    case QuerySource::kLlm: return "llm";
    case QuerySource::kFallback: return "fallback";
    case QuerySource::kLibrarian: return "librarian";
  }
  return "llm";
}

QuerySource parse_query_source(std::string_view name) {
  if (name == "llm") return QuerySource::kLlm;
  if (name == "fallback") return QuerySource::kFallback;
  if (name == "librarian") return QuerySource::kLibrarian;
  throw Error(ErrorCode::kInput, "unknown query source '" + std::string(name) + "'");
}

std::vector<std::string> prompt_keywords(const context::ExpandedContext& context) {
  std::vector<std::string> keywords;
  std::set<std::string> seen;
  const auto add = [&](const std::string& k) {
    if (keywords.size() >= kMaxPromptKeywords) return;
    if (text::trim(k).empty()) return;
    if (seen.insert(text::normalize(k)).second) keywords.push_back(k);
  };
  for (const auto& e : context.relations) add(e.predicate);
  for (const auto& t : context.lm_terms) add(t.term);
  for (const auto& t : context.kg_terms) {
    if (t.provenance != mesh::Provenance::kSelf) add(t.term);
  }
  return keywords;
}

std::string build_prompt(const context::ExpandedContext& context, int n) {
  if (n < 1) throw Error(ErrorCode::kInput, "query count must be at least 1");
  const auto keywords = prompt_keywords(context);
  if (keywords.empty()) throw Error(ErrorCode::kInput, "no keywords available for the generation prompt");
  return "Formulate " + std::to_string(n) + " prompt queries with the keywords: " + text::join(keywords, ", ");
}

llm::ChatRequest generation_request(const std::string& prompt, const GenerationOptions& options) {
  llm::ChatRequest request;
  request.system_text = std::string(kGenerationSystemText);
  request.user_text = prompt;
  request.temperature = 0.0;
  request.max_tokens = options.max_tokens;
  request.model_id = options.model_id;
  return request;
}

std::vector<std::string> parse_query_lines(std::string_view response) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& raw : text::split(response, '\n')) {
    const std::string line = text::strip_list_marker(raw);
    if (line.empty() || line.back() == ':') continue;
    if (seen.insert(text::casefold(line)).second) out.push_back(line);
  }
  return out;
}

std::vector<GeneratedQuery> fallback_generate(const context::ExpandedContext& context, int n) {
  if (n < 1) throw Error(ErrorCode::kInput, "query count must be at least 1");
  if (context.seeds.empty()) throw Error(ErrorCode::kInput, "fallback generation needs at least one seed");

  std::vector<GeneratedQuery> out;
  std::set<std::string> seen;
  const auto emit = [&](std::string q, std::string origin) {
    if (static_cast<int>(out.size()) >= n) return;
    if (!seen.insert(text::casefold(q)).second) return;
    GeneratedQuery g;
    g.text = std::move(q);
    g.origin_keywords = {std::move(origin)};
    g.rank = static_cast<int>(out.size()) + 1;
    g.source = QuerySource::kFallback;
    out.push_back(std::move(g));
  };

  for (std::size_t i = 0; i < context.seeds.size(); ++i) {
    const std::string& label = i < context.seed_labels.size() ? context.seed_labels[i] : context.seeds[i].surface;
    std::set<std::string> predicates_seen;
    for (const auto& e : context.relations) {
      if (e.subject != label) continue;
      if (!predicates_seen.insert(text::normalize(e.predicate)).second) continue;
      emit(template_query(label, e.predicate), e.predicate);
    }
  }
  for (const auto& t : context.lm_terms) {
    const std::string seed = t.seed.empty() ? context.seed_labels.front() : t.seed;
    emit(t.term + " and " + seed + ": what is the relationship?", t.term);
  }
  return out;
}

GenerationResult generate_queries(const context::ExpandedContext& context, llm::ChatProvider& gateway, int n,
                                  const GenerationOptions& options) {
  if (n < 1 || n > kMaxQueries) throw Error(ErrorCode::kInput, "query count must be within [1, 20]");

  GenerationResult result;
  const auto keywords = prompt_keywords(context);
  std::vector<std::string> lines;
  if (keywords.empty()) {
    result.gateway_failed = true;
  } else {
    result.prompt = build_prompt(context, n);
    try {
      lines = parse_query_lines(llm::complete(gateway, generation_request(result.prompt, options)).text);
    } catch (const Error&) {
      result.gateway_failed = true;
    }
  }

  std::set<std::string> seen;
  for (auto& line : lines) {
    if (static_cast<int>(result.queries.size()) >= n) break;
    seen.insert(text::casefold(line));
    GeneratedQuery q;
    q.origin_keywords = origins_for(line, keywords);
    q.text = std::move(line);
    q.rank = static_cast<int>(result.queries.size()) + 1;
    q.source = QuerySource::kLlm;
    result.queries.push_back(std::move(q));
  }

  if (static_cast<int>(result.queries.size()) < n && !context.seeds.empty()) {
    // Over-generate so duplicates of LLM lines can be skipped.
    for (auto& q : fallback_generate(context, kMaxQueries * 4)) {
      if (static_cast<int>(result.queries.size()) >= n) break;
      if (!seen.insert(text::casefold(q.text)).second) continue;
      q.rank = static_cast<int>(result.queries.size()) + 1;
      result.queries.push_back(std::move(q));
    }
  }
  if (result.queries.empty()) throw Error(ErrorCode::kGeneration, "no queries could be generated");
  return result;
}

void to_json(nlohmann::json& j, const GeneratedQuery& q) {
  j = {{"text", q.text}, {"origin_keywords", q.origin_keywords}, {"rank", q.rank}, {"source", query_source_name(q.source)}};
}

void from_json(const nlohmann::json& j, GeneratedQuery& q) {
  q.text = j.at("text").get<std::string>();
  q.origin_keywords = j.value("origin_keywords", std::vector<std::string>{});
  q.rank = j.at("rank").get<int>();
  q.source = parse_query_source(j.value("source", "llm"));
}

}  // namespace sysrev::querygen
