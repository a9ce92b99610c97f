#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "sysrev/context_expansion.hpp"
#include "sysrev/llm_gateway.hpp"
#include "sysrev/mesh_kb.hpp"
#include "sysrev/pubmed_client.hpp"
#include "sysrev/retriever.hpp"
#include "sysrev/session.hpp"

namespace sysrev::pipeline {

enum class ProviderMode { kLive, kMock, kReplay };
enum class PubmedMode { kLive, kFixture };
enum class EmbedderMode { kHashing, kHttp };

struct PipelineConfig {
  std::string kb_path;
  ProviderMode provider = ProviderMode::kReplay;
  std::string cassette_path;
  std::string llm_endpoint;
  std::string llm_model = "gpt-3.5-turbo";
  PubmedMode pubmed = PubmedMode::kFixture;
  std::string fixture_path;
  std::string pubmed_email;
  int retmax = 200;
  int n_queries = 5;
  int passages_per_query = 50;
  int retrieval_k = 20;  // fused articles kept
  int chunk_max_words = retriever::kDefaultMaxWords;
  int chunk_overlap_words = retriever::kDefaultOverlapWords;
  std::size_t per_seed_cap = 5;
  int narrower_depth = 1;
  bool include_broader = false;
  std::size_t max_kg_terms = 25;
  std::size_t lm_max_terms = 10;
  std::string safety_policy_path;  // a policy file or a directory of them
  std::string safety_profile;      // default profile when several are loaded
  EmbedderMode embedder = EmbedderMode::kHashing;
  std::size_t embed_dim = retriever::kDefaultDim;
  std::string embed_endpoint;
  std::string embed_model;
  std::string session_dir = "sessions";

  // Environment only.
  std::string pubmed_api_key;
  std::string llm_api_key;
  std::string embed_api_key;

  /// Throws kConfig: missing paths for replay/fixture modes, missing
  /// credentials for live modes, out-of-range numbers.
  void validate() const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// key = value lines, '#' comments, optional double quotes around values.
/// Relative paths resolve against `base_dir`. Unknown keys are errors.
void apply_config_text(PipelineConfig& config, std::string_view text, const std::string& base_dir = {});
/// SYSREV_<KEY> overrides, then the three API keys.
void apply_env(PipelineConfig& config, const EnvLookup& env);
PipelineConfig load_config(const std::string& path, const EnvLookup& env = process_env());

enum class Stage { kExtract, kExpand, kFilter, kGenerate, kBoolean, kSearchPubmed, kIndex, kRetrieve, kFuse, kSave };
std::string_view stage_name(Stage s);

enum class EditOp { kRemoveTerm, kAddTerm, kBlockTerm, kSetSafetyProfile, kEditQuery, kRemoveQuery, kAddQuery };

struct Edit {
  EditOp op = EditOp::kRemoveTerm;
  std::string value;  // term, profile id or query text
  int index = 0;      // 1-based query rank for edit/remove query
};

Edit edit_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Edit& e);

/// Loaded profiles by id. The empty id means no filtering.
class SafetyRegistry {
 public:
  void add(context::SafetyPolicy policy);
  const context::SafetyPolicy& get(const std::string& profile_id) const;
  bool contains(const std::string& profile_id) const;
  std::vector<std::string> profiles() const;

  static SafetyRegistry load(const std::string& path);

 private:
  std::map<std::string, context::SafetyPolicy> policies_;
};

struct Components {
  std::shared_ptr<const mesh::MeshKb> kb;
  std::shared_ptr<llm::ChatProvider> gateway;
  std::shared_ptr<pubmed::ArticleSource> source;
  std::shared_ptr<retriever::Embedder> embedder;
  std::shared_ptr<session::SessionStore> store;
  SafetyRegistry safety;
};

/// Builds the components named by the configuration.
Components build_components(const PipelineConfig& config);

class Pipeline {
 public:
  Pipeline(PipelineConfig config, Components components);

  /// Runs every stage and saves revision 1. On a stage failure the partial
  /// session is saved with a failure marker and StageError is thrown.
  session::ReviewSession run(const concepts::ResearchQuestion& question,
                             const std::set<std::string>& sentinels = {});

  /// Applies edits to a copy of the latest revision, re-runs from the first
  /// affected stage and saves the next revision.
  session::ReviewSession refine(const std::string& session_id, const std::vector<Edit>& edits,
                                std::optional<int> expected_revision = std::nullopt);

  /// From the fetch cache, else the article source.
  pubmed::ArticleRecord article(const std::string& pmid);

  session::SessionStore& store() { return *components_.store; }
  const PipelineConfig& config() const noexcept { return config_; }
  const Components& components() const noexcept { return components_; }

 private:
  void execute(session::ReviewSession& s, Stage from);
  context::SafetyPolicy overlay_policy(const session::ReviewSession& s) const;

  PipelineConfig config_;
  Components components_;
  std::mutex cache_mutex_;
  std::map<std::string, pubmed::ArticleRecord> article_cache_;
};

}  // namespace sysrev::pipeline
