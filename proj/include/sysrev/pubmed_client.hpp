#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sysrev/boolean_query.hpp"
#include "sysrev/context_expansion.hpp"
#include "sysrev/http.hpp"
#include "sysrev/rate_limit.hpp"

namespace sysrev::pubmed {

inline constexpr int kMaxRetmax = 10000;
inline constexpr std::size_t kEfetchBatch = 200;

struct ArticleRecord {
  std::string pmid;
  std::string title;
  std::string abstract;
  std::vector<std::string> mesh_headings;
  std::optional<int> pub_year;
  std::string journal;

  bool operator==(const ArticleRecord&) const = default;
};

void to_json(nlohmann::json& j, const ArticleRecord& a);
void from_json(const nlohmann::json& j, ArticleRecord& a);

bool is_valid_pmid(std::string_view pmid);

/// And of per-seed Or groups. A resolved seed contributes its heading as
/// [MeSH Terms] and [tiab] plus up to `per_seed_cap` of its KG terms as
/// [tiab]; an unresolved seed contributes a single [tiab] term.
BooleanQuery build_boolean_query(const context::ExpandedContext& context, std::size_t per_seed_cap);

struct FetchResult {
  std::vector<ArticleRecord> records;  // in input order
  std::vector<std::string> unknown_pmids;
};

/// Parses an EFetch PubmedArticleSet document.
std::vector<ArticleRecord> parse_pubmed_xml(std::istream& xml);

/// Where esearch/efetch are answered: NCBI E-utilities or a local corpus.
class ArticleSource {
 public:
  virtual ~ArticleSource() = default;
  virtual std::vector<std::string> esearch(const BooleanQuery& query, int retmax) = 0;
  /// Input pmids are deduplicated; unknown ones are reported, not fatal.
  virtual FetchResult efetch(const std::vector<std::string>& pmids) = 0;
};

/// Offline corpus (JSON Lines, one ArticleRecord per line) with a
/// simplified evaluator: [tiab] is phrase containment in title or abstract,
/// [MeSH Terms] is a case-insensitive heading match, [All Fields] covers
/// title, abstract, headings and journal. No automatic term mapping.
class FixtureCorpus final : public ArticleSource {
 public:
  explicit FixtureCorpus(std::vector<ArticleRecord> articles);
  static std::shared_ptr<FixtureCorpus> load(const std::string& path);

  std::vector<std::string> esearch(const BooleanQuery& query, int retmax) override;
  FetchResult efetch(const std::vector<std::string>& pmids) override;

  bool matches(const ArticleRecord& article, const BooleanQuery& query) const;
  const std::vector<ArticleRecord>& articles() const noexcept { return articles_; }

 private:
  std::vector<ArticleRecord> articles_;
  std::map<std::string, std::size_t> by_pmid_;
};

struct EutilsConfig {
  std::string base_url = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils";
  std::string api_key;  // PUBMED_API_KEY
  std::string tool = "sysrev";
  std::string email;
  std::chrono::milliseconds timeout{60'000};
  RetryPolicy retry;

  /// 10 requests/s with an API key, 3 without.
  double permits_per_second() const noexcept { return api_key.empty() ? 3.0 : 10.0; }
};

class EutilsClient final : public ArticleSource {
 public:
  EutilsClient(EutilsConfig config, std::shared_ptr<http::Transport> transport,
               std::shared_ptr<RateLimiter> limiter = nullptr, Sleeper sleeper = real_sleeper());

  std::vector<std::string> esearch(const BooleanQuery& query, int retmax) override;
  FetchResult efetch(const std::vector<std::string>& pmids) override;

  std::string esearch_url(const BooleanQuery& query, int retmax) const;
  std::string efetch_url(const std::vector<std::string>& pmids) const;

 private:
  http::Response get(const std::string& url);
  std::string common_params() const;

  EutilsConfig config_;
  std::shared_ptr<http::Transport> transport_;
  std::shared_ptr<RateLimiter> limiter_;
  Sleeper sleeper_;
};

}  // namespace sysrev::pubmed
