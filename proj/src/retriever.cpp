#include "sysrev/retriever.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sysrev/error.hpp"
#include "sysrev/text.hpp"

namespace sysrev::retriever {
namespace {

constexpr std::array<char, 5> kMagic = {'S', 'R', 'I', 'X', '1'};
constexpr double kNormTolerance = 1e-6;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

void normalize_in_place(std::vector<double>& acc, Embedding& out) {
  double sq = 0.0;
  for (const double x : acc) sq += x * x;
  out.assign(acc.size(), 0.0F);
  if (sq == 0.0) return;
  const double n = std::sqrt(sq);
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / n);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                                 static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b.data(), b.size());
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), b.size());
  if (in.gcount() != 4) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

bool hit_before(const RankedHit& a, const RankedHit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.passage_id < b.passage_id;
}

bool pmid_less(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

}  // namespace

bool is_zero(const Embedding& v) noexcept {
  return std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0F; });
}

double norm(const Embedding& v) noexcept {
  double sq = 0.0;
  for (const float x : v) sq += static_cast<double>(x) * x;
  return std::sqrt(sq);
}

double dot(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kDimension, "vector dimensions differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

double cosine(const Embedding& a, const Embedding& b) {
  const double d = dot(a, b);
  const double n = norm(a) * norm(b);
  return n == 0.0 ? 0.0 : d / n;
}

std::string pmid_of(std::string_view passage_id) {
  return std::string(passage_id.substr(0, passage_id.find('#')));
}

std::vector<Passage> chunk(const pubmed::ArticleRecord& article, int max_words, int overlap_words) {
  if (max_words < 20) throw Error(ErrorCode::kInput, "max_words must be at least 20");
  if (overlap_words < 0 || overlap_words >= max_words) {
    throw Error(ErrorCode::kInput, "overlap_words must be within [0, max_words)");
  }
  std::vector<Passage> out;
  const auto emit = [&](std::string text) {
    out.push_back(Passage{article.pmid, static_cast<int>(out.size()), std::move(text)});
  };
  if (!text::trim(article.title).empty()) emit(text::trim(article.title));

  std::vector<std::string> words;
  std::istringstream stream(article.abstract);
  for (std::string w; stream >> w;) words.push_back(std::move(w));
  const auto size = static_cast<std::size_t>(max_words);
  const auto step = static_cast<std::size_t>(max_words - overlap_words);
  for (std::size_t start = 0; start < words.size(); start += step) {
    const std::size_t end = std::min(start + size, words.size());
    emit(text::join(std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(start),
                                             words.begin() + static_cast<std::ptrdiff_t>(end)),
                    " "));
    if (end == words.size()) break;
  }
  return out;
}

// --- embedders -------------------------------------------------------------

HashingEmbedder::HashingEmbedder(std::size_t dim, const concepts::StopwordSet& stopwords)
    : dim_(dim), stopwords_(stopwords) {
  if (dim_ == 0) throw Error(ErrorCode::kInput, "embedding dimension must be positive");
}

Embedding HashingEmbedder::embed(std::string_view input) {
  std::vector<double> acc(dim_, 0.0);
  for (const auto& tok : text::tokenize(input)) {
    const std::string word = text::casefold(tok.text);
    if (stopwords_.count(word) != 0) continue;
    const std::uint64_t h = fnv1a(word);
    acc[h % dim_] += (h >> 63) != 0 ? -1.0 : 1.0;
  }
  Embedding out;
  normalize_in_place(acc, out);
  return out;
}

HttpEmbedder::HttpEmbedder(HttpEmbedderConfig config, std::shared_ptr<http::Transport> transport,
                           std::shared_ptr<RateLimiter> limiter, Sleeper sleeper)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      limiter_(std::move(limiter)),
      sleeper_(std::move(sleeper)) {
  if (config_.endpoint.empty()) throw Error(ErrorCode::kConfig, "embedding endpoint is not configured");
  if (config_.api_key.empty()) throw Error(ErrorCode::kConfig, "EMBED_API_KEY is not set");
}

Embedding HttpEmbedder::embed(std::string_view input) {
  if (text::trim(input).empty()) return Embedding(config_.dim, 0.0F);
  http::Request request;
  request.method = "POST";
  request.url = config_.endpoint;
  request.timeout = config_.timeout;
  request.headers.emplace_back("Authorization", "Bearer " + config_.api_key);
  request.body = nlohmann::json{{"model", config_.model}, {"input", std::string(input)}}.dump();

  const http::Response response = send_with_retry(*transport_, request, config_.retry, sleeper_, limiter_.get());
  if (!response.ok()) {
    throw Error(is_retryable_status(response.status) ? ErrorCode::kTransport : ErrorCode::kRemote,
                "embedding API returned HTTP " + std::to_string(response.status));
  }
  std::vector<double> values;
  try {
    values = nlohmann::json::parse(response.body).at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kRemote, std::string("malformed embedding response: ") + e.what());
  }
  if (values.size() != config_.dim) {
    throw Error(ErrorCode::kDimension, "embedding API returned " + std::to_string(values.size()) +
                                           " dimensions, expected " + std::to_string(config_.dim));
  }
  Embedding out;
  normalize_in_place(values, out);
  return out;
}

// --- index -----------------------------------------------------------------

VectorIndex::VectorIndex(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw Error(ErrorCode::kInput, "index dimension must be positive");
}

void VectorIndex::add(const Passage& passage, const Embedding& vector) {
  if (text::trim(passage.text).empty()) throw Error(ErrorCode::kInput, "passage text is empty");
  std::unique_lock lock(mutex_);
  add_locked(passage.passage_id(), vector, passage.text);
}

void VectorIndex::add(const std::string& passage_id, const Embedding& vector) {
  std::unique_lock lock(mutex_);
  add_locked(passage_id, vector, {});
}

void VectorIndex::add_locked(const std::string& passage_id, const Embedding& vector, std::string text) {
  if (vector.size() != dim_) {
    throw Error(ErrorCode::kDimension, "vector has " + std::to_string(vector.size()) + " dimensions, index has " +
                                           std::to_string(dim_));
  }
  if (!is_zero(vector) && std::abs(norm(vector) - 1.0) > kNormTolerance) {
    throw Error(ErrorCode::kInput, "vector for " + passage_id + " is not unit length");
  }
  if (by_id_.count(passage_id) != 0) throw Error(ErrorCode::kDuplicate, "passage " + passage_id + " already indexed");
  by_id_.emplace(passage_id, ids_.size());
  ids_.push_back(passage_id);
  texts_.push_back(std::move(text));
  data_.insert(data_.end(), vector.begin(), vector.end());
}

std::vector<RankedHit> VectorIndex::search(const Embedding& query, int k) const {
  if (k < 1) throw Error(ErrorCode::kInput, "k must be at least 1");
  std::shared_lock lock(mutex_);
  if (ids_.empty()) throw Error(ErrorCode::kEmptyIndex, "index is empty");
  if (query.size() != dim_) {
    throw Error(ErrorCode::kDimension, "query has " + std::to_string(query.size()) + " dimensions, index has " +
                                           std::to_string(dim_));
  }
  std::vector<RankedHit> all(ids_.size());
  for (std::size_t row = 0; row < ids_.size(); ++row) {
    const float* v = data_.data() + row * dim_;
    double s = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) s += static_cast<double>(query[i]) * v[i];
    all[row].passage_id = ids_[row];
    all[row].score = s;
  }
  const std::size_t n = std::min(all.size(), static_cast<std::size_t>(k));
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), hit_before);
  all.resize(n);
  for (std::size_t i = 0; i < n; ++i) all[i].rank = static_cast<int>(i) + 1;
  return all;
}

std::size_t VectorIndex::size() const {
  std::shared_lock lock(mutex_);
  return ids_.size();
}

bool VectorIndex::contains(const std::string& passage_id) const {
  std::shared_lock lock(mutex_);
  return by_id_.count(passage_id) != 0;
}

Embedding VectorIndex::vector(const std::string& passage_id) const {
  std::shared_lock lock(mutex_);
  const auto it = by_id_.find(passage_id);
  if (it == by_id_.end()) throw Error(ErrorCode::kNotFound, "passage " + passage_id + " is not indexed");
  const float* v = data_.data() + it->second * dim_;
  return Embedding(v, v + dim_);
}

std::string VectorIndex::passage_text(const std::string& passage_id) const {
  std::shared_lock lock(mutex_);
  const auto it = by_id_.find(passage_id);
  if (it == by_id_.end()) throw Error(ErrorCode::kNotFound, "passage " + passage_id + " is not indexed");
  return texts_[it->second];
}

std::vector<std::string> VectorIndex::ids() const {
  std::shared_lock lock(mutex_);
  return ids_;
}

void VectorIndex::save(const std::string& path) const {
  std::shared_lock lock(mutex_);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kStorage, "cannot write index snapshot " + tmp);
    out.write(kMagic.data(), kMagic.size());
    put_u32(out, static_cast<std::uint32_t>(dim_));
    for (std::size_t row = 0; row < ids_.size(); ++row) {
      put_u32(out, static_cast<std::uint32_t>(ids_[row].size()));
      out.write(ids_[row].data(), static_cast<std::streamsize>(ids_[row].size()));
      for (std::size_t i = 0; i < dim_; ++i) put_u32(out, std::bit_cast<std::uint32_t>(data_[row * dim_ + i]));
    }
    if (!out.flush()) throw Error(ErrorCode::kStorage, "failed writing index snapshot " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kStorage, "cannot move index snapshot into place: " + ec.message());
}

std::unique_ptr<VectorIndex> VectorIndex::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kStorage, "cannot open index snapshot " + path);
  std::array<char, 5> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 5 || magic != kMagic) throw Error(ErrorCode::kStorage, path + " is not an SRIX1 snapshot");
  std::uint32_t dim = 0;
  if (!get_u32(in, dim) || dim == 0) throw Error(ErrorCode::kStorage, path + ": bad dimension header");

  auto index = std::make_unique<VectorIndex>(dim);
  std::uint32_t id_len = 0;
  while (get_u32(in, id_len)) {
    std::string id(id_len, '\0');
    in.read(id.data(), id_len);
    if (static_cast<std::uint32_t>(in.gcount()) != id_len) throw Error(ErrorCode::kStorage, path + ": truncated record");
    Embedding v(dim);
    for (auto& x : v) {
      std::uint32_t bits = 0;
      if (!get_u32(in, bits)) throw Error(ErrorCode::kStorage, path + ": truncated vector for " + id);
      x = std::bit_cast<float>(bits);
    }
    index->add(id, v);
  }
  if (in.gcount() != 0) throw Error(ErrorCode::kStorage, path + ": trailing bytes");
  return index;
}

// --- fusion ----------------------------------------------------------------

std::vector<FusedArticle> fuse(const std::vector<QueryHits>& per_query, int k) {
  if (per_query.empty()) throw Error(ErrorCode::kInput, "fusion needs at least one ranked list");
  if (k < 1) throw Error(ErrorCode::kInput, "k must be at least 1");

  std::map<std::string, double> scores;
  for (const auto& list : per_query) {
    std::map<std::string, int> best;
    for (const auto& hit : list.hits) {
      const std::string pmid = pmid_of(hit.passage_id);
      const auto [it, inserted] = best.emplace(pmid, hit.rank);
      if (!inserted) it->second = std::min(it->second, hit.rank);
    }
    for (const auto& [pmid, rank] : best) scores[pmid] += 1.0 / (kRrfConstant + rank);
  }

  std::vector<FusedArticle> out;
  out.reserve(scores.size());
  for (const auto& [pmid, score] : scores) out.push_back(FusedArticle{pmid, score});
  std::sort(out.begin(), out.end(), [](const FusedArticle& a, const FusedArticle& b) {
    if (a.score != b.score) return a.score > b.score;
    return pmid_less(a.pmid, b.pmid);
  });
  if (out.size() > static_cast<std::size_t>(k)) out.resize(static_cast<std::size_t>(k));
  return out;
}

void to_json(nlohmann::json& j, const RankedHit& h) {
  j = {{"passage_id", h.passage_id}, {"score", h.score}, {"rank", h.rank}};
}

void from_json(const nlohmann::json& j, RankedHit& h) {
  h.passage_id = j.at("passage_id").get<std::string>();
  h.score = j.at("score").get<double>();
  h.rank = j.at("rank").get<int>();
}

void to_json(nlohmann::json& j, const FusedArticle& a) { j = {{"pmid", a.pmid}, {"score", a.score}}; }

void from_json(const nlohmann::json& j, FusedArticle& a) {
  a.pmid = j.at("pmid").get<std::string>();
  a.score = j.at("score").get<double>();
}

}  // namespace sysrev::retriever
