#include "sysrev/context_expansion.hpp"

#include <fstream>
#include <future>
#include <optional>

#include "sysrev/error.hpp"
#include "sysrev/text.hpp"

namespace sysrev::context {
namespace {

constexpr std::size_t kMaxLmTermTokens = 6;
constexpr std::string_view kLmSystemText = "You are a biomedical terminology assistant.";

bool any_glob(const std::set<std::string>& patterns, std::string_view value, std::string* hit) {
  for (const auto& p : patterns) {
    if (text::glob_match(p, value)) {
      if (hit != nullptr) *hit = p;
      return true;
    }
  }
  return false;
}

std::string edge_label(const RelationEdge& e) { return e.subject + " | " + e.predicate + " | " + e.object; }

std::string_view edge_source_name(EdgeSource s) { return s == EdgeSource::kKg ? "kg" : "lm"; }

ItemKind parse_item_kind(std::string_view s) {
  if (s == "kg_term") return ItemKind::kKgTerm;
  if (s == "lm_term") return ItemKind::kLmTerm;
  if (s == "relation") return ItemKind::kRelation;
  if (s == "definition") return ItemKind::kDefinition;
  throw Error(ErrorCode::kParse, "unknown audit item kind '" + std::string(s) + "'");
}

}  // namespace

std::string_view item_kind_name(ItemKind kind) {
  switch (kind) {
    case ItemKind::kKgTerm: return "kg_term";
    case ItemKind::kLmTerm: return "lm_term";
    case ItemKind::kRelation: return "relation";
    case ItemKind::kDefinition: return "definition";
  }
  return "kg_term";
}

const std::vector<std::string>& default_relation_vocab() {
  static const std::vector<std::string> vocab = {"causes", "diagnoses", "affects", "associated with", "complicates"};
  return vocab;
}

SafetyPolicy parse_safety_policy(const nlohmann::json& j) {
  try {
    SafetyPolicy p = j.get<SafetyPolicy>();
    if (p.version != 1) throw Error(ErrorCode::kConfig, "unsupported safety policy version " + std::to_string(p.version));
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("invalid safety policy: ") + e.what());
  }
}

SafetyPolicy load_safety_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open safety policy " + path);
  try {
    return parse_safety_policy(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kConfig, "safety policy " + path + " is not valid JSON: " + e.what());
  }
}

std::string lm_term_prompt(std::string_view seed_label, std::size_t max_terms) {
  return "List up to " + std::to_string(max_terms) + " single medical concepts strongly associated with " +
         std::string(seed_label) + ", one per line, no commentary.";
}

llm::ChatRequest lm_term_request(std::string_view seed_label, std::size_t max_terms, const std::string& model_id) {
  llm::ChatRequest request;
  request.system_text = std::string(kLmSystemText);
  request.user_text = lm_term_prompt(seed_label, max_terms);
  request.temperature = 0.0;
  request.max_tokens = 256;
  request.model_id = model_id;
  return request;
}

LmSuggestions parse_lm_terms(std::string_view response, std::string_view seed_label, std::size_t max_terms,
                             const std::string& model_id, const std::vector<std::string>& relation_vocab) {
  LmSuggestions out;
  std::set<std::string> seen;
  for (const auto& raw : text::split(response, '\n')) {
    const std::string line = text::strip_list_marker(raw);
    if (line.empty()) continue;

    const auto parts = text::split(line, '|');
    if (parts.size() == 3) {
      RelationEdge edge{text::trim(parts[0]), text::trim(parts[1]), text::trim(parts[2]), EdgeSource::kLm};
      const bool known = std::any_of(relation_vocab.begin(), relation_vocab.end(),
                                     [&](const std::string& v) { return text::normalize(v) == text::normalize(edge.predicate); });
      if (known && !edge.subject.empty() && !edge.object.empty() &&
          text::normalize(edge.subject) != text::normalize(edge.object)) {
        out.triples.push_back(std::move(edge));
      }
      continue;
    }

    if (out.terms.size() >= max_terms) continue;
    if (text::tokenize(line).size() > kMaxLmTermTokens || text::tokenize(line).empty()) continue;
    if (!seen.insert(text::normalize(line)).second) continue;
    out.terms.push_back(LmTerm{line, model_id, std::string(seed_label)});
  }
  out.parse_warning = !text::trim(response).empty() && out.terms.empty() && out.triples.empty();
  return out;
}

LmSuggestions suggest_lm_terms(std::string_view seed_label, llm::ChatProvider& gateway, std::size_t max_terms,
                               const std::string& model_id, const std::vector<std::string>& relation_vocab) {
  if (max_terms < 1) throw Error(ErrorCode::kInput, "max_terms must be at least 1");
  const auto response = llm::complete(gateway, lm_term_request(seed_label, max_terms, model_id));
  return parse_lm_terms(response.text, seed_label, max_terms, model_id, relation_vocab);
}

std::string seed_label(const concepts::SeedConcept& seed, const mesh::MeshKb& kb) {
  if (seed.descriptor_ui) {
    if (const auto* d = kb.find(*seed.descriptor_ui)) return d->name;
  }
  return seed.surface;
}

ExpandedContext expand_context(const std::vector<concepts::SeedConcept>& seeds, const mesh::MeshKb& kb,
                               llm::ChatProvider& gateway, const std::vector<std::string>& relation_vocab,
                               const SafetyPolicy& policy, const ExpansionOptions& options) {
  const bool any_text = std::any_of(seeds.begin(), seeds.end(),
                                    [](const concepts::SeedConcept& s) { return !text::trim(s.surface).empty(); });
  if (seeds.empty() || !any_text) throw Error(ErrorCode::kEmptyContext, "no seed concepts to expand");
  if (relation_vocab.empty()) throw Error(ErrorCode::kInput, "relation vocabulary is empty");

  ExpandedContext ctx;
  ctx.seeds = seeds;
  for (const auto& s : seeds) ctx.seed_labels.push_back(seed_label(s, kb));

  std::set<std::string> kg_seen;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!seeds[i].resolved()) continue;
    const auto expansion = kb.expand(seeds[i].surface, options.mesh_policy);
    for (const auto& t : expansion.terms) {
      if (kg_seen.insert(text::normalize(t.term)).second) {
        ctx.kg_terms.push_back(KgTerm{t.term, t.provenance, t.ui, ctx.seed_labels[i]});
      }
    }
    ctx.definitions[ctx.seed_labels[i]] = expansion.definition;
  }

  std::set<std::tuple<std::string, std::string, std::string>> edge_seen;
  const auto add_edge = [&](RelationEdge e) {
    if (edge_seen.emplace(text::normalize(e.subject), text::normalize(e.predicate), text::normalize(e.object)).second) {
      ctx.relations.push_back(std::move(e));
    }
  };
  for (const auto& label : ctx.seed_labels) {
    for (const auto& predicate : relation_vocab) add_edge(RelationEdge{label, predicate, std::string(kOpenObject), EdgeSource::kKg});
  }

  // Per-seed calls may overlap; results are merged in seed order.
  std::vector<std::optional<LmSuggestions>> suggestions(seeds.size());
  const auto ask = [&](std::size_t i) -> std::optional<LmSuggestions> {
    try {
      return suggest_lm_terms(ctx.seed_labels[i], gateway, options.lm_max_terms, options.model_id, relation_vocab);
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  if (options.parallel_lm_calls && seeds.size() > 1) {
    std::vector<std::future<std::optional<LmSuggestions>>> pending;
    for (std::size_t i = 0; i < seeds.size(); ++i) pending.push_back(std::async(std::launch::async, ask, i));
    for (std::size_t i = 0; i < seeds.size(); ++i) suggestions[i] = pending[i].get();
  } else {
    for (std::size_t i = 0; i < seeds.size(); ++i) suggestions[i] = ask(i);
  }

  std::set<std::string> lm_seen;
  for (auto& s : suggestions) {
    if (!s) {
      ctx.lm_unavailable = true;
      continue;
    }
    ctx.lm_parse_warning = ctx.lm_parse_warning || s->parse_warning;
    for (auto& t : s->terms) {
      if (lm_seen.insert(text::normalize(t.term)).second) ctx.lm_terms.push_back(std::move(t));
    }
    for (auto& e : s->triples) add_edge(std::move(e));
  }

  return apply_safety_filter(std::move(ctx), policy);
}

ExpandedContext apply_safety_filter(ExpandedContext ctx, const SafetyPolicy& policy) {
  if (policy.empty()) return ctx;

  const auto log = [&](ItemKind kind, std::string item, std::string reason) {
    ctx.audit.push_back(AuditEntry{kind, std::move(item), std::move(reason), policy.profile_id});
  };

  std::string hit;
  std::erase_if(ctx.kg_terms, [&](const KgTerm& t) {
    if (!any_glob(policy.blocked_terms, t.term, &hit)) return false;
    log(ItemKind::kKgTerm, t.term, "blocked term '" + hit + "'");
    return true;
  });
  std::erase_if(ctx.lm_terms, [&](const LmTerm& t) {
    if (!any_glob(policy.blocked_terms, t.term, &hit)) return false;
    log(ItemKind::kLmTerm, t.term, "blocked term '" + hit + "'");
    return true;
  });
  std::erase_if(ctx.relations, [&](const RelationEdge& e) {
    if (any_glob(policy.blocked_predicates, e.predicate, &hit)) {
      log(ItemKind::kRelation, edge_label(e), "blocked predicate '" + hit + "'");
      return true;
    }
    for (const auto& path : policy.blocked_paths) {
      if (text::glob_match(path[0], e.subject) && text::glob_match(path[1], e.predicate) &&
          text::glob_match(path[2], e.object)) {
        log(ItemKind::kRelation, edge_label(e), "blocked path '" + path[0] + " | " + path[1] + " | " + path[2] + "'");
        return true;
      }
    }
    if (any_glob(policy.blocked_terms, e.subject, &hit) || any_glob(policy.blocked_terms, e.object, &hit)) {
      log(ItemKind::kRelation, edge_label(e), "blocked term '" + hit + "'");
      return true;
    }
    return false;
  });
  for (auto it = ctx.definitions.begin(); it != ctx.definitions.end();) {
    if (any_glob(policy.blocked_terms, it->first, &hit)) {
      log(ItemKind::kDefinition, it->first, "blocked term '" + hit + "'");
      it = ctx.definitions.erase(it);
    } else {
      ++it;
    }
  }
  return ctx;
}

// --- JSON ------------------------------------------------------------------

void to_json(nlohmann::json& j, const SafetyPolicy& p) {
  nlohmann::json paths = nlohmann::json::array();
  for (const auto& path : p.blocked_paths) paths.push_back({path[0], path[1], path[2]});
  j = {{"version", p.version},
       {"profile_id", p.profile_id},
       {"blocked_terms", p.blocked_terms},
       {"blocked_predicates", p.blocked_predicates},
       {"blocked_paths", paths}};
}

void from_json(const nlohmann::json& j, SafetyPolicy& p) {
  p.version = j.value("version", 1);
  p.profile_id = j.value("profile_id", "");
  p.blocked_terms = j.value("blocked_terms", std::set<std::string>{});
  p.blocked_predicates = j.value("blocked_predicates", std::set<std::string>{});
  p.blocked_paths.clear();
  for (const auto& path : j.value("blocked_paths", nlohmann::json::array())) {
    if (!path.is_array() || path.size() != 3) {
      throw Error(ErrorCode::kConfig, "blocked_paths entries must be [subject, predicate, object]");
    }
    p.blocked_paths.push_back({path[0].get<std::string>(), path[1].get<std::string>(), path[2].get<std::string>()});
  }
}

void to_json(nlohmann::json& j, const ExpandedContext& c) {
  nlohmann::json kg = nlohmann::json::array();
  for (const auto& t : c.kg_terms) {
    kg.push_back({{"term", t.term}, {"provenance", mesh::provenance_name(t.provenance)}, {"ui", t.ui}, {"seed", t.seed}});
  }
  nlohmann::json lm = nlohmann::json::array();
  for (const auto& t : c.lm_terms) lm.push_back({{"term", t.term}, {"model_id", t.model_id}, {"seed", t.seed}});
  nlohmann::json rel = nlohmann::json::array();
  for (const auto& e : c.relations) {
    rel.push_back({{"subject", e.subject}, {"predicate", e.predicate}, {"object", e.object},
                   {"source", edge_source_name(e.source)}});
  }
  nlohmann::json audit = nlohmann::json::array();
  for (const auto& a : c.audit) {
    audit.push_back({{"kind", item_kind_name(a.kind)}, {"item", a.item}, {"reason", a.reason}, {"profile_id", a.profile_id}});
  }
  j = {{"seeds", c.seeds},
       {"seed_labels", c.seed_labels},
       {"kg_terms", kg},
       {"lm_terms", lm},
       {"relations", rel},
       {"definitions", c.definitions},
       {"audit", audit},
       {"lm_unavailable", c.lm_unavailable},
       {"lm_parse_warning", c.lm_parse_warning}};
}

void from_json(const nlohmann::json& j, ExpandedContext& c) {
  c = ExpandedContext{};
  c.seeds = j.at("seeds").get<std::vector<concepts::SeedConcept>>();
  c.seed_labels = j.at("seed_labels").get<std::vector<std::string>>();
  for (const auto& t : j.at("kg_terms")) {
    c.kg_terms.push_back(KgTerm{t.at("term").get<std::string>(), mesh::parse_provenance(t.at("provenance").get<std::string>()),
                                t.value("ui", ""), t.value("seed", "")});
  }
  for (const auto& t : j.at("lm_terms")) {
    c.lm_terms.push_back(LmTerm{t.at("term").get<std::string>(), t.value("model_id", ""), t.value("seed", "")});
  }
  for (const auto& e : j.at("relations")) {
    c.relations.push_back(RelationEdge{e.at("subject").get<std::string>(), e.at("predicate").get<std::string>(),
                                       e.at("object").get<std::string>(),
                                       e.value("source", "kg") == "lm" ? EdgeSource::kLm : EdgeSource::kKg});
  }
  c.definitions = j.at("definitions").get<std::map<std::string, std::string>>();
  for (const auto& a : j.at("audit")) {
    c.audit.push_back(AuditEntry{parse_item_kind(a.at("kind").get<std::string>()), a.at("item").get<std::string>(),
                                 a.value("reason", ""), a.value("profile_id", "")});
  }
  c.lm_unavailable = j.value("lm_unavailable", false);
  c.lm_parse_warning = j.value("lm_parse_warning", false);
}

}  // namespace sysrev::context

namespace sysrev::concepts {

void to_json(nlohmann::json& j, const SeedConcept& s) {
  j = {{"surface", s.surface}, {"begin", s.begin}, {"end", s.end}};
  j["descriptor_ui"] = s.descriptor_ui ? nlohmann::json(*s.descriptor_ui) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, SeedConcept& s) {
  s.surface = j.at("surface").get<std::string>();
  s.begin = j.at("begin").get<std::size_t>();
  s.end = j.at("end").get<std::size_t>();
  if (j.contains("descriptor_ui") && !j["descriptor_ui"].is_null()) {
    s.descriptor_ui = j["descriptor_ui"].get<std::string>();
  } else {
    s.descriptor_ui.reset();
  }
}

}  // namespace sysrev::concepts
