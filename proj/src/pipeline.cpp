#include "sysrev/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "sysrev/boolean_query.hpp"
#include "sysrev/concept_extraction.hpp"
#include "sysrev/error.hpp"
#include "sysrev/query_generation.hpp"
#include "sysrev/text.hpp"

namespace sysrev::pipeline {
namespace fs = std::filesystem;
namespace {

constexpr std::string_view kLibrarianModel = "librarian";
constexpr std::string_view kLibrarianProfile = "librarian";

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kConfig, key + " must be an integer, got '" + value + "'");
  }
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  const int v = parse_int(key, value);
  if (v < 0) throw Error(ErrorCode::kConfig, key + " must not be negative");
  return static_cast<std::size_t>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = text::casefold(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorCode::kConfig, key + " must be true or false, got '" + value + "'");
}

std::string resolve(const std::string& value, const std::string& base_dir) {
  if (value.empty() || base_dir.empty() || fs::path(value).is_absolute()) return value;
  return (fs::path(base_dir) / value).lexically_normal().string();
}

using Setter = void (*)(PipelineConfig&, const std::string&, const std::string&);

struct Key {
  Setter set;
  bool is_path;
};

const std::map<std::string, Key>& config_keys() {
  static const std::map<std::string, Key> keys = {
      {"kb_path", {[](PipelineConfig& c, const std::string&, const std::string& v) { c.kb_path = v; }, true}},
      {"provider",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) {
          if (v == "live") c.provider = ProviderMode::kLive;
          else if (v == "mock") c.provider = ProviderMode::kMock;
          else if (v == "replay") c.provider = ProviderMode::kReplay;
          else throw Error(ErrorCode::kConfig, k + " must be live, mock or replay");
        },
        false}},
      {"cassette_path", {[](PipelineConfig& c, const std::string&, const std::string& v) { c.cassette_path = v; }, true}},
      {"llm_endpoint", {[](PipelineConfig& c, const std::string&, const std::string& v) { c.llm_endpoint = v; }, false}},
      {"llm_model", {[](PipelineConfig& c, const std::string&, const std::string& v) { c.llm_model = v; }, false}},
      {"pubmed",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) {
          if (v == "live") c.pubmed = PubmedMode::kLive;
          else if (v == "fixture") c.pubmed = PubmedMode::kFixture;
          else throw Error(ErrorCode::kConfig, k + " must be live or fixture");
        },
        false}},
      {"fixture_path", {[](PipelineConfig& c, const std::string&, const std::string& v) { c.fixture_path = v; }, true}},
      {"pubmed_email", {[](PipelineConfig& c, const std::string&, const std::string& v) { c.pubmed_email = v; }, false}},
      {"retmax", {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.retmax = parse_int(k, v); }, false}},
      {"n_queries",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.n_queries = parse_int(k, v); }, false}},
      {"passages_per_query",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.passages_per_query = parse_int(k, v); },
        false}},
      {"retrieval_k",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.retrieval_k = parse_int(k, v); }, false}},
      {"chunk_max_words",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.chunk_max_words = parse_int(k, v); },
        false}},
      {"chunk_overlap_words",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.chunk_overlap_words = parse_int(k, v); },
        false}},
      {"per_seed_cap",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.per_seed_cap = parse_size(k, v); }, false}},
      {"narrower_depth",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.narrower_depth = parse_int(k, v); },
        false}},
      {"include_broader",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.include_broader = parse_bool(k, v); },
        false}},
      {"max_kg_terms",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.max_kg_terms = parse_size(k, v); }, false}},
      {"lm_max_terms",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.lm_max_terms = parse_size(k, v); }, false}},
      {"safety_policy_path",
       {[](PipelineConfig& c, const std::string&, const std::string& v) { c.safety_policy_path = v; }, true}},
      {"safety_profile",
       {[](PipelineConfig& c, const std::string&, const std::string& v) { c.safety_profile = v; }, false}},
      {"embedder",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) {
          if (v == "hashing") c.embedder = EmbedderMode::kHashing;
          else if (v == "http") c.embedder = EmbedderMode::kHttp;
          else throw Error(ErrorCode::kConfig, k + " must be hashing or http");
        },
        false}},
      {"embed_dim",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.embed_dim = parse_size(k, v); }, false}},
      {"embed_endpoint",
       {[](PipelineConfig& c, const std::string&, const std::string& v) { c.embed_endpoint = v; }, false}},
      {"embed_model", {[](PipelineConfig& c, const std::string&, const std::string& v) { c.embed_model = v; }, false}},
      {"session_dir", {[](PipelineConfig& c, const std::string&, const std::string& v) { c.session_dir = v; }, true}},
  };
  return keys;
}

bool is_secret_key(const std::string& key) {
  return key == "pubmed_api_key" || key == "llm_api_key" || key == "embed_api_key" || key == "api_key";
}

void require_file(const std::string& key, const std::string& path) {
  if (path.empty()) throw Error(ErrorCode::kConfig, key + " is not set");
  std::error_code ec;
  if (!fs::exists(path, ec)) throw Error(ErrorCode::kConfig, key + " does not exist: " + path);
}

std::string normalized(const std::string& s) { return text::normalize(s); }

bool context_has_term(const context::ExpandedContext& ctx, const std::string& key) {
  return std::any_of(ctx.kg_terms.begin(), ctx.kg_terms.end(),
                     [&](const context::KgTerm& t) { return normalized(t.term) == key; }) ||
         std::any_of(ctx.lm_terms.begin(), ctx.lm_terms.end(),
                     [&](const context::LmTerm& t) { return normalized(t.term) == key; });
}

void apply_term_overrides(context::ExpandedContext& ctx, const session::Overrides& o) {
  std::set<std::string> removed;
  for (const auto& t : o.removed_terms) removed.insert(normalized(t));
  std::erase_if(ctx.kg_terms, [&](const context::KgTerm& t) { return removed.count(normalized(t.term)) != 0; });
  std::erase_if(ctx.lm_terms, [&](const context::LmTerm& t) { return removed.count(normalized(t.term)) != 0; });
  const std::string seed = ctx.seed_labels.empty() ? std::string() : ctx.seed_labels.front();
  for (const auto& t : o.added_terms) {
    if (!context_has_term(ctx, normalized(t))) ctx.lm_terms.push_back(context::LmTerm{t, std::string(kLibrarianModel), seed});
  }
}

void renumber(std::vector<querygen::GeneratedQuery>& queries) {
  for (std::size_t i = 0; i < queries.size(); ++i) queries[i].rank = static_cast<int>(i) + 1;
}

bool is_query_edit(EditOp op) {
  return op == EditOp::kEditQuery || op == EditOp::kRemoveQuery || op == EditOp::kAddQuery;
}

}  // namespace

// --- configuration ---------------------------------------------------------

void PipelineConfig::validate() const {
  require_file("kb_path", kb_path);
  switch (provider) {
    case ProviderMode::kReplay:
      require_file("cassette_path", cassette_path);
      break;
    case ProviderMode::kLive:
      if (llm_endpoint.empty()) throw Error(ErrorCode::kConfig, "llm_endpoint is required for the live provider");
      if (llm_api_key.empty()) throw Error(ErrorCode::kConfig, "LLM_API_KEY must be set for the live provider");
      break;
    case ProviderMode::kMock:
      break;
  }
  if (pubmed == PubmedMode::kFixture) require_file("fixture_path", fixture_path);
  if (embedder == EmbedderMode::kHttp) {
    if (embed_endpoint.empty() || embed_model.empty()) {
      throw Error(ErrorCode::kConfig, "embed_endpoint and embed_model are required for the http embedder");
    }
    if (embed_api_key.empty()) throw Error(ErrorCode::kConfig, "EMBED_API_KEY must be set for the http embedder");
  }
  if (!safety_policy_path.empty()) require_file("safety_policy_path", safety_policy_path);
  if (!safety_profile.empty() && safety_policy_path.empty()) {
    throw Error(ErrorCode::kConfig, "safety_profile needs safety_policy_path");
  }
  if (n_queries < 1 || n_queries > querygen::kMaxQueries) throw Error(ErrorCode::kConfig, "n_queries must be within [1, 20]");
  if (retmax < 1 || retmax > pubmed::kMaxRetmax) throw Error(ErrorCode::kConfig, "retmax must be within [1, 10000]");
  if (passages_per_query < 1) throw Error(ErrorCode::kConfig, "passages_per_query must be at least 1");
  if (retrieval_k < 1) throw Error(ErrorCode::kConfig, "retrieval_k must be at least 1");
  if (chunk_max_words < 20) throw Error(ErrorCode::kConfig, "chunk_max_words must be at least 20");
  if (chunk_overlap_words < 0 || chunk_overlap_words >= chunk_max_words) {
    throw Error(ErrorCode::kConfig, "chunk_overlap_words must be within [0, chunk_max_words)");
  }
  if (narrower_depth < 0 || narrower_depth > 15) throw Error(ErrorCode::kConfig, "narrower_depth must be within [0, 15]");
  if (max_kg_terms < 1) throw Error(ErrorCode::kConfig, "max_kg_terms must be at least 1");
  if (lm_max_terms < 1) throw Error(ErrorCode::kConfig, "lm_max_terms must be at least 1");
  if (embed_dim < 1) throw Error(ErrorCode::kConfig, "embed_dim must be at least 1");
  if (session_dir.empty()) throw Error(ErrorCode::kConfig, "session_dir is not set");
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (v == nullptr) return std::nullopt;
    return std::string(v);
  };
}

void apply_config_text(PipelineConfig& config, std::string_view contents, const std::string& base_dir) {
  std::size_t line_no = 0;
  for (const auto& raw : text::split(contents, '\n')) {
    ++line_no;
    const std::string line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kConfig, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = text::trim(line.substr(0, eq));
    std::string value = text::trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    } else if (const auto hash = value.find(" #"); hash != std::string::npos) {
      value = text::trim(value.substr(0, hash));
    }
    if (is_secret_key(key)) {
      throw Error(ErrorCode::kConfig, "config line " + std::to_string(line_no) + ": " + key +
                                          " must come from the environment, not the config file");
    }
    const auto it = config_keys().find(key);
    if (it == config_keys().end()) {
      throw Error(ErrorCode::kConfig, "config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    it->second.set(config, key, it->second.is_path ? resolve(value, base_dir) : value);
  }
}

void apply_env(PipelineConfig& config, const EnvLookup& env) {
  for (const auto& [key, entry] : config_keys()) {
    std::string name = "SYSREV_";
    for (const char c : key) name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (const auto v = env(name)) entry.set(config, key, *v);
  }
  if (const auto v = env("PUBMED_API_KEY")) config.pubmed_api_key = *v;
  if (const auto v = env("LLM_API_KEY")) config.llm_api_key = *v;
  if (const auto v = env("EMBED_API_KEY")) config.embed_api_key = *v;
}

PipelineConfig load_config(const std::string& path, const EnvLookup& env) {
  PipelineConfig config;
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kConfig, "cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    apply_config_text(config, buf.str(), fs::path(path).parent_path().string());
  }
  apply_env(config, env);
  return config;
}

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::kExtract: return "extract";
    case Stage::kExpand: return "expand";
    case Stage::kFilter: return "safety_filter";
    case Stage::kGenerate: return "generate";
    case Stage::kBoolean: return "boolean_query";
    case Stage::kSearchPubmed: return "pubmed";
    case Stage::kIndex: return "index";
    case Stage::kRetrieve: return "retrieve";
    case Stage::kFuse: return "fuse";
    case Stage::kSave: return "save";
  }
  return "unknown";
}

// --- edits -----------------------------------------------------------------

Edit edit_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("op")) throw Error(ErrorCode::kInput, "edit must be an object with an 'op'");
  const std::string op = j["op"].get<std::string>();
  Edit e;
  if (op == "remove_term") e.op = EditOp::kRemoveTerm;
  else if (op == "add_term") e.op = EditOp::kAddTerm;
  else if (op == "block_term") e.op = EditOp::kBlockTerm;
  else if (op == "set_safety_profile") e.op = EditOp::kSetSafetyProfile;
  else if (op == "edit_query") e.op = EditOp::kEditQuery;
  else if (op == "remove_query") e.op = EditOp::kRemoveQuery;
  else if (op == "add_query") e.op = EditOp::kAddQuery;
  else throw Error(ErrorCode::kInput, "unknown edit op '" + op + "'");
  try {
    switch (e.op) {
      case EditOp::kRemoveTerm:
      case EditOp::kAddTerm:
      case EditOp::kBlockTerm:
        e.value = j.at("term").get<std::string>();
        break;
      case EditOp::kSetSafetyProfile:
        e.value = j.value("profile", "");
        break;
      case EditOp::kEditQuery:
        e.index = j.at("index").get<int>();
        e.value = j.at("text").get<std::string>();
        break;
      case EditOp::kRemoveQuery:
        e.index = j.at("index").get<int>();
        break;
      case EditOp::kAddQuery:
        e.value = j.at("text").get<std::string>();
        break;
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kInput, "malformed " + op + " edit: " + ex.what());
  }
  return e;
}

nlohmann::json to_json(const Edit& e) {
  switch (e.op) {
    case EditOp::kRemoveTerm: return {{"op", "remove_term"}, {"term", e.value}};
    case EditOp::kAddTerm: return {{"op", "add_term"}, {"term", e.value}};
    case EditOp::kBlockTerm: return {{"op", "block_term"}, {"term", e.value}};
    case EditOp::kSetSafetyProfile: return {{"op", "set_safety_profile"}, {"profile", e.value}};
    case EditOp::kEditQuery: return {{"op", "edit_query"}, {"index", e.index}, {"text", e.value}};
    case EditOp::kRemoveQuery: return {{"op", "remove_query"}, {"index", e.index}};
    case EditOp::kAddQuery: return {{"op", "add_query"}, {"text", e.value}};
  }
  return nullptr;
}

// --- safety registry -------------------------------------------------------

void SafetyRegistry::add(context::SafetyPolicy policy) {
  if (policy.profile_id.empty()) throw Error(ErrorCode::kConfig, "safety policy lacks a profile_id");
  const std::string id = policy.profile_id;
  if (!policies_.emplace(id, std::move(policy)).second) {
    throw Error(ErrorCode::kConfig, "safety profile '" + id + "' defined twice");
  }
}

const context::SafetyPolicy& SafetyRegistry::get(const std::string& profile_id) const {
  static const context::SafetyPolicy kNone;
  if (profile_id.empty()) return kNone;
  const auto it = policies_.find(profile_id);
  if (it == policies_.end()) throw Error(ErrorCode::kReference, "no safety profile '" + profile_id + "'");
  return it->second;
}

bool SafetyRegistry::contains(const std::string& profile_id) const {
  return profile_id.empty() || policies_.count(profile_id) != 0;
}

std::vector<std::string> SafetyRegistry::profiles() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : policies_) out.push_back(id);
  return out;
}

SafetyRegistry SafetyRegistry::load(const std::string& path) {
  SafetyRegistry registry;
  if (path.empty()) return registry;
  std::error_code ec;
  if (fs::is_directory(path, ec)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path, ec)) {
      if (entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) registry.add(context::load_safety_policy(f.string()));
  } else {
    registry.add(context::load_safety_policy(path));
  }
  return registry;
}

Components build_components(const PipelineConfig& config) {
  config.validate();
  Components c;
  c.kb = std::make_shared<const mesh::MeshKb>(mesh::ingest_file(config.kb_path));

  switch (config.provider) {
    case ProviderMode::kReplay:
      c.gateway = std::make_shared<llm::ReplayProvider>(llm::Cassette::load(config.cassette_path));
      break;
    case ProviderMode::kMock:
      c.gateway = std::make_shared<llm::MockProvider>();
      break;
    case ProviderMode::kLive:
      c.gateway = std::make_shared<llm::HttpChatProvider>(
          llm::HttpChatConfig{config.llm_endpoint, config.llm_api_key, std::chrono::milliseconds(60'000), {}},
          http::make_default_transport());
      break;
  }

  if (config.pubmed == PubmedMode::kFixture) {
    c.source = pubmed::FixtureCorpus::load(config.fixture_path);
  } else {
    pubmed::EutilsConfig eutils;
    eutils.api_key = config.pubmed_api_key;
    eutils.email = config.pubmed_email;
    c.source = std::make_shared<pubmed::EutilsClient>(eutils, http::make_default_transport());
  }

  if (config.embedder == EmbedderMode::kHashing) {
    c.embedder = std::make_shared<retriever::HashingEmbedder>(config.embed_dim);
  } else {
    retriever::HttpEmbedderConfig ec;
    ec.endpoint = config.embed_endpoint;
    ec.api_key = config.embed_api_key;
    ec.model = config.embed_model;
    ec.dim = config.embed_dim;
    c.embedder = std::make_shared<retriever::HttpEmbedder>(ec, http::make_default_transport());
  }

  c.store = std::make_shared<session::SessionStore>(config.session_dir);
  c.safety = SafetyRegistry::load(config.safety_policy_path);
  if (!c.safety.contains(config.safety_profile)) {
    throw Error(ErrorCode::kConfig, "safety_profile '" + config.safety_profile + "' is not defined");
  }
  return c;
}

// --- pipeline --------------------------------------------------------------

Pipeline::Pipeline(PipelineConfig config, Components components)
    : config_(std::move(config)), components_(std::move(components)) {
  if (!components_.kb || !components_.gateway || !components_.source || !components_.embedder || !components_.store) {
    throw Error(ErrorCode::kConfig, "pipeline components are incomplete");
  }
  if (!components_.safety.contains(config_.safety_profile)) {
    throw Error(ErrorCode::kConfig, "safety_profile '" + config_.safety_profile + "' is not defined");
  }
}

context::SafetyPolicy Pipeline::overlay_policy(const session::ReviewSession& s) const {
  context::SafetyPolicy p;
  p.profile_id = std::string(kLibrarianProfile);
  p.blocked_terms.insert(s.overrides.blocked_terms.begin(), s.overrides.blocked_terms.end());
  return p;
}

void Pipeline::execute(session::ReviewSession& s, Stage from) {
  from = std::min(from, Stage::kSearchPubmed);
  Stage current = from;
  const auto reached = [&](Stage st) {
    if (from > st) return false;
    current = st;
    return true;
  };

  try {
    if (reached(Stage::kExtract)) {
      s.question.validate();
      s.context = context::ExpandedContext{};
      s.context.seeds = concepts::extract_seeds(s.question, *components_.kb, concepts::default_stopwords());
      if (s.context.seeds.empty()) {
        throw Error(ErrorCode::kEmptyContext, "no concepts could be extracted from the question");
      }
    }
    const auto& profile = components_.safety.get(s.overrides.safety_profile);
    if (reached(Stage::kExpand)) {
      context::ExpansionOptions options;
      options.mesh_policy.narrower_depth = config_.narrower_depth;
      options.mesh_policy.include_broader = config_.include_broader;
      options.mesh_policy.max_terms = config_.max_kg_terms;
      options.lm_max_terms = config_.lm_max_terms;
      options.model_id = config_.llm_model;
      s.context = context::expand_context(s.context.seeds, *components_.kb, *components_.gateway,
                                          context::default_relation_vocab(), profile, options);
    }
    if (reached(Stage::kFilter)) {
      apply_term_overrides(s.context, s.overrides);
      s.context = context::apply_safety_filter(std::move(s.context), profile);
      s.context = context::apply_safety_filter(std::move(s.context), overlay_policy(s));
    }
    if (reached(Stage::kGenerate)) {
      querygen::GenerationOptions options;
      options.model_id = config_.llm_model;
      auto generated = querygen::generate_queries(s.context, *components_.gateway, config_.n_queries, options);
      s.queries = std::move(generated.queries);
      s.generation_prompt = std::move(generated.prompt);
      s.generation_fallback = generated.gateway_failed;
    }
    if (reached(Stage::kBoolean)) {
      s.boolean_query = pubmed::render(pubmed::build_boolean_query(s.context, config_.per_seed_cap));
    }

    std::vector<pubmed::ArticleRecord> records;
    if (reached(Stage::kSearchPubmed)) {
      const auto query = pubmed::parse_query(s.boolean_query);
      s.retrieved_pmids = components_.source->esearch(query, config_.retmax);
      if (!s.retrieved_pmids.empty()) records = components_.source->efetch(s.retrieved_pmids).records;
      std::lock_guard lock(cache_mutex_);
      for (const auto& r : records) article_cache_[r.pmid] = r;
    }

    retriever::VectorIndex index(components_.embedder->dim());
    if (reached(Stage::kIndex)) {
      for (const auto& r : records) {
        for (const auto& p : retriever::chunk(r, config_.chunk_max_words, config_.chunk_overlap_words)) {
          index.add(p, components_.embedder->embed(p.text));
        }
      }
    }

    std::vector<retriever::QueryHits> per_query;
    if (reached(Stage::kRetrieve) && index.size() > 0) {
      for (const auto& q : s.queries) {
        per_query.push_back({q.text, index.search(components_.embedder->embed(q.text), config_.passages_per_query)});
      }
    }

    if (reached(Stage::kFuse)) {
      s.hits = per_query.empty() ? std::vector<retriever::FusedArticle>{} : retriever::fuse(per_query, config_.retrieval_k);
    }
    s.failure.reset();
  } catch (const Error& e) {
    const std::string stage(stage_name(current));
    s.failure = session::StageFailure{stage, std::string(error_code_name(e.code())), e.what()};
    try {
      components_.store->save(s);
    } catch (const Error&) {
      // The stage error is the one worth reporting.
    }
    throw StageError(stage, e.code(), e.what());
  }
}

session::ReviewSession Pipeline::run(const concepts::ResearchQuestion& question, const std::set<std::string>& sentinels) {
  for (const auto& p : sentinels) {
    if (!pubmed::is_valid_pmid(p)) throw Error(ErrorCode::kInput, "invalid sentinel PMID '" + p + "'");
  }
  session::ReviewSession s;
  s.session_id = components_.store->new_session_id();
  s.created_at = session::utc_now();
  s.updated_at = s.created_at;
  s.revision = 1;
  s.question = question;
  s.sentinel_pmids = sentinels;
  s.overrides.safety_profile = config_.safety_profile;
  execute(s, Stage::kExtract);
  components_.store->save(s);
  return s;
}

session::ReviewSession Pipeline::refine(const std::string& session_id, const std::vector<Edit>& edits,
                                        std::optional<int> expected_revision) {
  session::ReviewSession s = components_.store->load(session_id);
  if (expected_revision && *expected_revision != s.revision) {
    throw Error(ErrorCode::kConflict, "session " + session_id + " is at revision " + std::to_string(s.revision) +
                                          ", not " + std::to_string(*expected_revision));
  }
  const bool has_query_edit = std::any_of(edits.begin(), edits.end(), [](const Edit& e) { return is_query_edit(e.op); });
  const bool has_context_edit =
      std::any_of(edits.begin(), edits.end(), [](const Edit& e) { return !is_query_edit(e.op); });
  if (has_query_edit && has_context_edit) {
    throw Error(ErrorCode::kInput, "context edits regenerate the queries; submit query edits separately");
  }

  // With no edits the retrieval stages are simply repeated.
  Stage from = Stage::kSearchPubmed;
  for (const auto& e : edits) {
    const std::string key = normalized(e.value);
    switch (e.op) {
      case EditOp::kRemoveTerm: {
        if (!context_has_term(s.context, key)) {
          throw Error(ErrorCode::kReference, "term '" + e.value + "' is not in the expanded context");
        }
        std::erase_if(s.overrides.added_terms, [&](const std::string& t) { return normalized(t) == key; });
        s.overrides.removed_terms.push_back(e.value);
        from = std::min(from, Stage::kFilter);
        break;
      }
      case EditOp::kAddTerm: {
        if (key.empty()) throw Error(ErrorCode::kInput, "cannot add an empty term");
        if (context_has_term(s.context, key)) throw Error(ErrorCode::kDuplicate, "term '" + e.value + "' already present");
        std::erase_if(s.overrides.removed_terms, [&](const std::string& t) { return normalized(t) == key; });
        s.overrides.added_terms.push_back(text::trim(e.value));
        from = std::min(from, Stage::kFilter);
        break;
      }
      case EditOp::kBlockTerm:
        if (key.empty()) throw Error(ErrorCode::kInput, "cannot block an empty term");
        s.overrides.blocked_terms.push_back(text::trim(e.value));
        from = std::min(from, Stage::kFilter);
        break;
      case EditOp::kSetSafetyProfile:
        if (!components_.safety.contains(e.value)) {
          throw Error(ErrorCode::kReference, "no safety profile '" + e.value + "'");
        }
        s.overrides.safety_profile = e.value;
        from = std::min(from, Stage::kExpand);
        break;
      case EditOp::kEditQuery: {
        if (e.index < 1 || e.index > static_cast<int>(s.queries.size())) {
          throw Error(ErrorCode::kReference, "no query at rank " + std::to_string(e.index));
        }
        if (key.empty()) throw Error(ErrorCode::kInput, "query text is empty");
        auto& q = s.queries[static_cast<std::size_t>(e.index - 1)];
        q.text = text::trim(e.value);
        q.source = querygen::QuerySource::kLibrarian;
        break;
      }
      case EditOp::kRemoveQuery:
        if (e.index < 1 || e.index > static_cast<int>(s.queries.size())) {
          throw Error(ErrorCode::kReference, "no query at rank " + std::to_string(e.index));
        }
        if (s.queries.size() == 1) throw Error(ErrorCode::kInput, "cannot remove the last query");
        s.queries.erase(s.queries.begin() + (e.index - 1));
        renumber(s.queries);
        break;
      case EditOp::kAddQuery: {
        if (key.empty()) throw Error(ErrorCode::kInput, "query text is empty");
        const bool dup = std::any_of(s.queries.begin(), s.queries.end(),
                                     [&](const querygen::GeneratedQuery& q) { return normalized(q.text) == key; });
        if (dup) throw Error(ErrorCode::kDuplicate, "query already present");
        if (static_cast<int>(s.queries.size()) >= querygen::kMaxQueries) {
          throw Error(ErrorCode::kInput, "a session holds at most 20 queries");
        }
        querygen::GeneratedQuery q;
        q.text = text::trim(e.value);
        q.source = querygen::QuerySource::kLibrarian;
        s.queries.push_back(std::move(q));
        renumber(s.queries);
        break;
      }
    }
  }

  s.revision += 1;
  s.updated_at = session::utc_now();
  execute(s, from);
  components_.store->save(s);
  return s;
}

pubmed::ArticleRecord Pipeline::article(const std::string& pmid) {
  if (!pubmed::is_valid_pmid(pmid)) throw Error(ErrorCode::kInput, "invalid PMID '" + pmid + "'");
  {
    std::lock_guard lock(cache_mutex_);
    if (const auto it = article_cache_.find(pmid); it != article_cache_.end()) return it->second;
  }
  auto fetched = components_.source->efetch({pmid});
  if (fetched.records.empty()) throw Error(ErrorCode::kNotFound, "no article with PMID " + pmid);
  std::lock_guard lock(cache_mutex_);
  article_cache_[pmid] = fetched.records.front();
  return fetched.records.front();
}

}  // namespace sysrev::pipeline
