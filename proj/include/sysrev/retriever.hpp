#pragma once

#include <cstddef>
#include <memory>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sysrev/concept_extraction.hpp"
#include "sysrev/http.hpp"
#include "sysrev/pubmed_client.hpp"
#include "sysrev/rate_limit.hpp"

namespace sysrev::retriever {

inline constexpr std::size_t kDefaultDim = 256;
inline constexpr int kDefaultMaxWords = 120;
inline constexpr int kDefaultOverlapWords = 20;
inline constexpr double kRrfConstant = 60.0;

/// Unit-norm, or all zeros for text with no content words.
using Embedding = std::vector<float>;

bool is_zero(const Embedding& v) noexcept;
double norm(const Embedding& v) noexcept;
double dot(const Embedding& a, const Embedding& b);
/// 0 when either side is the zero vector.
double cosine(const Embedding& a, const Embedding& b);

struct Passage {
  std::string article_pmid;
  int chunk_index = 0;
  std::string text;

  std::string passage_id() const { return article_pmid + "#" + std::to_string(chunk_index); }
  bool operator==(const Passage&) const = default;
};

/// "12345#2" -> "12345".
std::string pmid_of(std::string_view passage_id);

/// Title first, then overlapping word windows over the abstract.
std::vector<Passage> chunk(const pubmed::ArticleRecord& article, int max_words = kDefaultMaxWords,
                           int overlap_words = kDefaultOverlapWords);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Embedding embed(std::string_view text) = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string id() const = 0;
};

/// Signed feature hashing of casefolded word tokens (FNV-1a 64). Bucket is
/// hash mod dim; the top hash bit picks the sign.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dim = kDefaultDim,
                           const concepts::StopwordSet& stopwords = concepts::default_stopwords());

  Embedding embed(std::string_view text) override;
  std::size_t dim() const override { return dim_; }
  std::string id() const override { return "hashing-" + std::to_string(dim_); }

 private:
  std::size_t dim_;
  concepts::StopwordSet stopwords_;
};

struct HttpEmbedderConfig {
  std::string endpoint;  // OpenAI-style /embeddings URL
  std::string api_key;   // EMBED_API_KEY
  std::string model;
  std::size_t dim = kDefaultDim;
  std::chrono::milliseconds timeout{60'000};
  RetryPolicy retry;
};

class HttpEmbedder final : public Embedder {
 public:
  HttpEmbedder(HttpEmbedderConfig config, std::shared_ptr<http::Transport> transport,
               std::shared_ptr<RateLimiter> limiter = nullptr, Sleeper sleeper = real_sleeper());

  Embedding embed(std::string_view text) override;
  std::size_t dim() const override { return config_.dim; }
  std::string id() const override { return "http:" + config_.model; }

 private:
  HttpEmbedderConfig config_;
  std::shared_ptr<http::Transport> transport_;
  std::shared_ptr<RateLimiter> limiter_;
  Sleeper sleeper_;
};

struct RankedHit {
  std::string passage_id;
  double score = 0.0;
  int rank = 0;

  bool operator==(const RankedHit&) const = default;
};

/// Exact cosine index. Readers share the lock; add() takes it exclusively.
class VectorIndex {
 public:
  explicit VectorIndex(std::size_t dim = kDefaultDim);

  VectorIndex(const VectorIndex&) = delete;
  VectorIndex& operator=(const VectorIndex&) = delete;

  void add(const Passage& passage, const Embedding& vector);
  /// Snapshot-loaded entries have no passage text.
  void add(const std::string& passage_id, const Embedding& vector);

  /// Exhaustive scoring; top min(k, size) by score, ties by passage_id.
  std::vector<RankedHit> search(const Embedding& query, int k) const;

  std::size_t size() const;
  std::size_t dim() const noexcept { return dim_; }
  bool contains(const std::string& passage_id) const;
  Embedding vector(const std::string& passage_id) const;
  std::string passage_text(const std::string& passage_id) const;
  std::vector<std::string> ids() const;

  /// "SRIX1", u32 dim, then (u32 id length, id bytes, dim x f32) records.
  void save(const std::string& path) const;
  static std::unique_ptr<VectorIndex> load(const std::string& path);

 private:
  void add_locked(const std::string& passage_id, const Embedding& vector, std::string text);

  std::size_t dim_;
  mutable std::shared_mutex mutex_;
  std::vector<std::string> ids_;
  std::vector<std::string> texts_;
  std::vector<float> data_;  // row-major, size() x dim_
  std::unordered_map<std::string, std::size_t> by_id_;
};

struct QueryHits {
  std::string query;
  std::vector<RankedHit> hits;
};

struct FusedArticle {
  std::string pmid;
  double score = 0.0;

  bool operator==(const FusedArticle&) const = default;
};

/// Reciprocal rank fusion over per-query lists. An article's rank in a list
/// is its best passage rank; ties go to the numerically smaller PMID.
std::vector<FusedArticle> fuse(const std::vector<QueryHits>& per_query, int k);

void to_json(nlohmann::json& j, const RankedHit& h);
void from_json(const nlohmann::json& j, RankedHit& h);
void to_json(nlohmann::json& j, const FusedArticle& a);
void from_json(const nlohmann::json& j, FusedArticle& a);

}  // namespace sysrev::retriever
