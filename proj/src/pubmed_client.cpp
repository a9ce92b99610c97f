#include "sysrev/pubmed_client.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "sysrev/error.hpp"
#include "sysrev/text.hpp"
#include "sysrev/xml_reader.hpp"

namespace sysrev::pubmed {
namespace {

std::string squeeze(std::string_view s) {
  std::string out;
  bool pending = false;
  for (const char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

std::optional<int> leading_year(std::string_view s) {
  const std::string t = text::trim(s);
  if (t.size() < 4 || !std::all_of(t.begin(), t.begin() + 4, [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  return std::stoi(t.substr(0, 4));
}

ArticleRecord from_article(const xml::Element& article) {
  ArticleRecord r;
  const auto* citation = article.child("MedlineCitation");
  if (citation == nullptr) throw Error(ErrorCode::kParse, "PubmedArticle without MedlineCitation");
  if (const auto* pmid = citation->child("PMID")) r.pmid = text::trim(pmid->text);
  if (const auto* art = citation->child("Article")) {
    if (const auto* title = art->child("ArticleTitle")) r.title = squeeze(title->text);
    if (const auto* abs = art->child("Abstract")) {
      std::vector<std::string> sections;
      for (const auto* part : abs->children_named("AbstractText")) {
        const std::string label = part->attribute("Label");
        const std::string body = squeeze(part->text);
        if (body.empty()) continue;
        sections.push_back(label.empty() ? body : label + ": " + body);
      }
      r.abstract = text::join(sections, " ");
    }
    if (const auto* journal = art->child("Journal")) {
      if (const auto* jt = journal->child("Title")) r.journal = squeeze(jt->text);
      if (const auto* issue = journal->child("JournalIssue")) {
        if (const auto* date = issue->child("PubDate")) {
          if (const auto* year = date->child("Year")) {
            r.pub_year = leading_year(year->text);
          } else if (const auto* medline = date->child("MedlineDate")) {
            r.pub_year = leading_year(medline->text);
          }
        }
      }
    }
  }
  if (const auto* list = citation->child("MeshHeadingList")) {
    for (const auto* heading : list->children_named("MeshHeading")) {
      if (const auto* name = heading->child("DescriptorName")) r.mesh_headings.push_back(squeeze(name->text));
    }
  }
  if (!is_valid_pmid(r.pmid)) throw Error(ErrorCode::kParse, "article record has an invalid PMID '" + r.pmid + "'");
  return r;
}

// Materializes one <PubmedArticle>, remembering the first PMID seen so a
// malformed block can be named in the error.
xml::Element read_article(xml::Reader& reader, const xml::Event& start, std::string& pmid_hint) {
  std::vector<xml::Element> stack;
  stack.push_back(xml::Element{start.name, start.attributes, {}, {}});
  while (true) {
    const xml::Event& ev = reader.next();
    switch (ev.kind) {
      case xml::EventKind::kStartElement:
        stack.push_back(xml::Element{ev.name, ev.attributes, {}, {}});
        break;
      case xml::EventKind::kText:
        for (auto& e : stack) e.text += ev.text;
        if (stack.back().name == "PMID" && pmid_hint.empty()) pmid_hint = text::trim(ev.text);
        break;
      case xml::EventKind::kEndElement: {
        xml::Element done = std::move(stack.back());
        stack.pop_back();
        if (stack.empty()) return done;
        stack.back().children.push_back(std::move(done));
        break;
      }
      case xml::EventKind::kEndOfDocument:
        throw Error(ErrorCode::kParse, "unexpected end of document");
    }
  }
}

bool mesh_match(const ArticleRecord& a, std::string_view term) {
  const std::string key = text::normalize(term);
  return std::any_of(a.mesh_headings.begin(), a.mesh_headings.end(),
                     [&](const std::string& h) { return text::normalize(h) == key; });
}

bool tiab_match(const ArticleRecord& a, std::string_view term) {
  return text::contains_phrase(a.title, term) || text::contains_phrase(a.abstract, term);
}

}  // namespace

bool is_valid_pmid(std::string_view pmid) {
  return !pmid.empty() && std::all_of(pmid.begin(), pmid.end(), [](char c) { return c >= '0' && c <= '9'; });
}

void to_json(nlohmann::json& j, const ArticleRecord& a) {
  j = {{"pmid", a.pmid},
       {"title", a.title},
       {"abstract", a.abstract},
       {"mesh_headings", a.mesh_headings},
       {"journal", a.journal}};
  j["pub_year"] = a.pub_year ? nlohmann::json(*a.pub_year) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, ArticleRecord& a) {
  a.pmid = j.at("pmid").get<std::string>();
  a.title = j.value("title", "");
  a.abstract = j.value("abstract", "");
  a.mesh_headings = j.value("mesh_headings", std::vector<std::string>{});
  a.journal = j.value("journal", "");
  if (j.contains("pub_year") && !j["pub_year"].is_null()) {
    a.pub_year = j["pub_year"].get<int>();
  } else {
    a.pub_year.reset();
  }
}

BooleanQuery build_boolean_query(const context::ExpandedContext& context, std::size_t per_seed_cap) {
  if (context.seeds.empty()) throw Error(ErrorCode::kInput, "cannot build a search query without seeds");

  std::vector<BooleanQuery> groups;
  std::set<std::string> rendered_groups;
  for (std::size_t i = 0; i < context.seeds.size(); ++i) {
    const auto& seed = context.seeds[i];
    const std::string label = i < context.seed_labels.size() ? context.seed_labels[i] : seed.surface;
    BooleanQuery group;
    if (!seed.resolved()) {
      group = BooleanQuery::term(label, FieldTag::kTitleAbstract);
    } else {
      std::vector<BooleanQuery> terms{BooleanQuery::term(label, FieldTag::kMeshTerms),
                                      BooleanQuery::term(label, FieldTag::kTitleAbstract)};
      std::set<std::string> seen{text::normalize(label)};
      std::size_t added = 0;
      for (const auto& t : context.kg_terms) {
        if (added >= per_seed_cap) break;
        if (t.seed != label || t.provenance == mesh::Provenance::kSelf) continue;
        if (!seen.insert(text::normalize(t.term)).second) continue;
        terms.push_back(BooleanQuery::term(t.term, FieldTag::kTitleAbstract));
        ++added;
      }
      group = BooleanQuery::any_of(std::move(terms));
    }
    if (rendered_groups.insert(render(group)).second) groups.push_back(std::move(group));
  }
  if (groups.size() == 1) return std::move(groups.front());
  return BooleanQuery::all_of(std::move(groups));
}

std::vector<ArticleRecord> parse_pubmed_xml(std::istream& in) {
  std::vector<ArticleRecord> records;
  xml::Reader reader(in);
  std::size_t block = 0;
  std::string last_pmid;
  while (true) {
    const xml::Event* ev = nullptr;
    try {
      ev = &reader.next();
    } catch (const OffsetError& e) {
      throw Error(ErrorCode::kParse, std::string("EFetch XML malformed after PMID ") +
                                         (last_pmid.empty() ? "(none)" : last_pmid) + ": " + e.what());
    }
    if (ev->kind == xml::EventKind::kEndOfDocument) break;
    if (ev->kind != xml::EventKind::kStartElement || ev->name != "PubmedArticle") continue;

    ++block;
    const xml::Event start = *ev;
    std::string pmid_hint;
    try {
      records.push_back(from_article(read_article(reader, start, pmid_hint)));
      last_pmid = records.back().pmid;
    } catch (const Error& e) {
      throw Error(ErrorCode::kParse, "EFetch article block " + std::to_string(block) + " (PMID " +
                                         (pmid_hint.empty() ? "unknown" : pmid_hint) + ") is malformed: " + e.what());
    }
  }
  return records;
}

// --- fixture corpus --------------------------------------------------------

FixtureCorpus::FixtureCorpus(std::vector<ArticleRecord> articles) : articles_(std::move(articles)) {
  for (std::size_t i = 0; i < articles_.size(); ++i) {
    if (!is_valid_pmid(articles_[i].pmid)) {
      throw Error(ErrorCode::kInput, "corpus article has invalid PMID '" + articles_[i].pmid + "'");
    }
    if (!by_pmid_.emplace(articles_[i].pmid, i).second) {
      throw Error(ErrorCode::kDuplicate, "corpus contains PMID " + articles_[i].pmid + " twice");
    }
  }
}

std::shared_ptr<FixtureCorpus> FixtureCorpus::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open article corpus " + path);
  std::vector<ArticleRecord> articles;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      articles.push_back(nlohmann::json::parse(line).get<ArticleRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return std::make_shared<FixtureCorpus>(std::move(articles));
}

bool FixtureCorpus::matches(const ArticleRecord& a, const BooleanQuery& q) const {
  switch (q.kind) {
    case NodeKind::kTerm:
      switch (q.tag) {
        case FieldTag::kTitleAbstract:
          return tiab_match(a, q.text);
        case FieldTag::kMeshTerms:
          return mesh_match(a, q.text);
        case FieldTag::kAllFields:
          return tiab_match(a, q.text) || text::contains_phrase(a.journal, q.text) ||
                 std::any_of(a.mesh_headings.begin(), a.mesh_headings.end(),
                             [&](const std::string& h) { return text::contains_phrase(h, q.text); });
      }
      return false;
    case NodeKind::kAnd:
      return std::all_of(q.children.begin(), q.children.end(), [&](const BooleanQuery& c) { return matches(a, c); });
    case NodeKind::kOr:
      return std::any_of(q.children.begin(), q.children.end(), [&](const BooleanQuery& c) { return matches(a, c); });
    case NodeKind::kNot:
      return matches(a, q.children[0]) && !matches(a, q.children[1]);
  }
  return false;
}

std::vector<std::string> FixtureCorpus::esearch(const BooleanQuery& query, int retmax) {
  if (retmax < 1 || retmax > kMaxRetmax) throw Error(ErrorCode::kInput, "retmax must be within [1, 10000]");
  validate(query);
  std::vector<std::string> pmids;
  for (const auto& a : articles_) {
    if (static_cast<int>(pmids.size()) >= retmax) break;
    if (matches(a, query)) pmids.push_back(a.pmid);
  }
  return pmids;
}

FetchResult FixtureCorpus::efetch(const std::vector<std::string>& pmids) {
  if (pmids.empty()) throw Error(ErrorCode::kInput, "efetch needs at least one PMID");
  FetchResult result;
  std::set<std::string> seen;
  for (const auto& p : pmids) {
    if (!seen.insert(p).second) continue;
    if (const auto it = by_pmid_.find(p); it != by_pmid_.end()) {
      result.records.push_back(articles_[it->second]);
    } else {
      result.unknown_pmids.push_back(p);
    }
  }
  return result;
}

// --- E-utilities -----------------------------------------------------------

EutilsClient::EutilsClient(EutilsConfig config, std::shared_ptr<http::Transport> transport,
                           std::shared_ptr<RateLimiter> limiter, Sleeper sleeper)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      limiter_(limiter ? std::move(limiter) : std::make_shared<RateLimiter>(config_.permits_per_second())),
      sleeper_(std::move(sleeper)) {}

std::string EutilsClient::common_params() const {
  std::string out;
  if (!config_.tool.empty()) out += "&tool=" + http::url_encode(config_.tool);
  if (!config_.email.empty()) out += "&email=" + http::url_encode(config_.email);
  if (!config_.api_key.empty()) out += "&api_key=" + http::url_encode(config_.api_key);
  return out;
}

std::string EutilsClient::esearch_url(const BooleanQuery& query, int retmax) const {
  return config_.base_url + "/esearch.fcgi?db=pubmed&term=" + http::url_encode(render(query)) +
         "&retmax=" + std::to_string(retmax) + "&retmode=json" + common_params();
}

std::string EutilsClient::efetch_url(const std::vector<std::string>& pmids) const {
  return config_.base_url + "/efetch.fcgi?db=pubmed&id=" + text::join(pmids, ",") + "&retmode=xml" +
         common_params();
}

http::Response EutilsClient::get(const std::string& url) {
  http::Request request;
  request.url = url;
  request.timeout = config_.timeout;
  http::Response response;
  try {
    response = send_with_retry(*transport_, request, config_.retry, sleeper_, limiter_.get());
  } catch (const http::TransportError& e) {
    throw Error(ErrorCode::kTransport, std::string("E-utilities request failed: ") + e.what());
  }
  if (is_retryable_status(response.status)) {
    throw Error(ErrorCode::kTransport,
                "E-utilities still failing after retries (HTTP " + std::to_string(response.status) + ")");
  }
  if (!response.ok()) {
    throw Error(ErrorCode::kRemote,
                "E-utilities returned HTTP " + std::to_string(response.status) + ": " + response.body.substr(0, 200));
  }
  return response;
}

std::vector<std::string> EutilsClient::esearch(const BooleanQuery& query, int retmax) {
  if (retmax < 1 || retmax > kMaxRetmax) throw Error(ErrorCode::kInput, "retmax must be within [1, 10000]");
  const auto response = get(esearch_url(query, retmax));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(response.body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kRemote, std::string("ESearch returned non-JSON payload: ") + e.what());
  }
  if (j.contains("error")) throw Error(ErrorCode::kRemote, "ESearch error: " + j["error"].dump());
  if (!j.contains("esearchresult")) throw Error(ErrorCode::kRemote, "ESearch payload lacks esearchresult");
  const auto& result = j["esearchresult"];
  if (result.contains("ERROR")) throw Error(ErrorCode::kRemote, "ESearch error: " + result["ERROR"].dump());
  std::vector<std::string> pmids;
  for (const auto& id : result.value("idlist", nlohmann::json::array())) {
    if (static_cast<int>(pmids.size()) >= retmax) break;
    pmids.push_back(id.get<std::string>());
  }
  return pmids;
}

FetchResult EutilsClient::efetch(const std::vector<std::string>& pmids) {
  if (pmids.empty()) throw Error(ErrorCode::kInput, "efetch needs at least one PMID");
  std::vector<std::string> unique;
  std::set<std::string> seen;
  for (const auto& p : pmids) {
    if (seen.insert(p).second) unique.push_back(p);
  }

  std::map<std::string, ArticleRecord> fetched;
  for (std::size_t start = 0; start < unique.size(); start += kEfetchBatch) {
    const std::vector<std::string> batch(unique.begin() + static_cast<std::ptrdiff_t>(start),
                                         unique.begin() + static_cast<std::ptrdiff_t>(std::min(unique.size(), start + kEfetchBatch)));
    const auto response = get(efetch_url(batch));
    std::istringstream body(response.body);
    for (auto& r : parse_pubmed_xml(body)) fetched.emplace(r.pmid, std::move(r));
  }

  FetchResult result;
  for (const auto& p : unique) {
    if (auto it = fetched.find(p); it != fetched.end()) {
      result.records.push_back(std::move(it->second));
    } else {
      result.unknown_pmids.push_back(p);
    }
  }
  return result;
}

}  // namespace sysrev::pubmed
