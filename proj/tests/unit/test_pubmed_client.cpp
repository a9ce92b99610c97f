#include <gtest/gtest.h>

#include <fstream>
#include <mutex>

#include "fixtures.hpp"
#include "sysrev/error.hpp"
#include "sysrev/pubmed_client.hpp"
#include "sysrev/text.hpp"

using namespace sysrev;
using namespace sysrev::pubmed;
using sysrev::testing::fixture;
using sysrev::testing::LoopbackServer;

namespace {

std::vector<ArticleRecord> sample_records() {
  std::ifstream in(fixture("efetch_sample.xml"));
  return parse_pubmed_xml(in);
}

std::string article_xml(const std::string& pmid) {
  return "<PubmedArticle><MedlineCitation><PMID>" + pmid + "</PMID><Article><ArticleTitle>Article " + pmid +
         "</ArticleTitle></Article></MedlineCitation></PubmedArticle>";
}

/// Minimal E-utilities stand-in. Knows PMIDs 1..999; records request times.
struct FakeEutils {
  LoopbackServer loop;
  std::mutex mutex;
  std::vector<std::string> targets;
  std::vector<std::chrono::steady_clock::time_point> arrivals;
  std::vector<std::size_t> efetch_batch_sizes;
  std::string esearch_body = R"({"esearchresult":{"count":"3","idlist":["101","102","103"]}})";

  FakeEutils() {
    loop.server().Get("/esearch.fcgi", [this](const httplib::Request& req, httplib::Response& res) {
      note(req);
      res.set_content(esearch_body, "application/json");
    });
    loop.server().Get("/efetch.fcgi", [this](const httplib::Request& req, httplib::Response& res) {
      note(req);
      const auto ids = text::split(req.get_param_value("id"), ',');
      std::string body = "<?xml version=\"1.0\"?><PubmedArticleSet>";
      for (const auto& id : ids) {
        if (id.size() <= 3) body += article_xml(id);
      }
      body += "</PubmedArticleSet>";
      {
        std::lock_guard lock(mutex);
        efetch_batch_sizes.push_back(ids.size());
      }
      res.set_content(body, "application/xml");
    });
    loop.start();
  }

  void note(const httplib::Request& req) {
    std::lock_guard lock(mutex);
    targets.push_back(req.target);
    arrivals.push_back(std::chrono::steady_clock::now());
  }

  EutilsClient client(double rate = 100.0, std::string api_key = {}) {
    EutilsConfig c;
    c.base_url = loop.url();
    c.api_key = std::move(api_key);
    c.email = "librarian@example.org";
    c.timeout = std::chrono::milliseconds(5000);
    return EutilsClient(c, http::make_default_transport(), std::make_shared<RateLimiter>(rate));
  }
};

BooleanQuery hepatitis_query() {
  return BooleanQuery::all_of({BooleanQuery::term("causes", FieldTag::kTitleAbstract),
                               BooleanQuery::term("Hepatitis A", FieldTag::kMeshTerms)});
}

}  // namespace

TEST(EfetchParsing, SampleDocument) {
  const auto records = sample_records();
  ASSERT_EQ(records.size(), 3u);
  const auto& a = records[0];
  EXPECT_EQ(a.pmid, "31000001");
  EXPECT_EQ(a.title, "Outbreak of hepatitis A linked to frozen berries.");
  EXPECT_EQ(a.abstract,
            "BACKGROUND: Hepatitis A causes acute liver inflammation. METHODS: We traced 48 cases & their exposures. "
            "RESULTS: Frozen berries were the common source.");
  EXPECT_EQ(a.mesh_headings, (std::vector<std::string>{"Hepatitis A", "Disease Outbreaks"}));
  EXPECT_EQ(a.pub_year, 2019);
  EXPECT_EQ(a.journal, "Journal of Viral Hepatitis");

  EXPECT_EQ(records[1].abstract, "Braided sutures harbour bacteria. Monofilament sutures reduce infection.");
  EXPECT_EQ(records[1].pub_year, 1998);
  EXPECT_TRUE(records[1].mesh_headings.empty());

  EXPECT_EQ(records[2].abstract, "");
  EXPECT_FALSE(records[2].pub_year.has_value());
}

TEST(EfetchParsing, MalformedBlockNamesThePmid) {
  std::istringstream in("<PubmedArticleSet>" + article_xml("42") +
                        "<PubmedArticle><MedlineCitation><PMID>43</PMID><Article></MedlineCitation></PubmedArticle>");
  try {
    parse_pubmed_xml(in);
    FAIL() << "expected a parse error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find("PMID 43"), std::string::npos) << e.what();
  }
}

TEST(EfetchParsing, InvalidPmidIsRejected) {
  std::istringstream in("<PubmedArticleSet>" + article_xml("12a") + "</PubmedArticleSet>");
  EXPECT_THROW(parse_pubmed_xml(in), Error);
}

TEST(ArticleRecord, JsonRoundTrip) {
  for (const auto& r : sample_records()) {
    const nlohmann::json j = r;
    EXPECT_EQ(j.get<ArticleRecord>(), r);
  }
}

TEST(BuildBooleanQuery, AndOfPerSeedGroups) {
  context::ExpandedContext c;
  c.seeds = {{"causes", 0, 6, std::nullopt}, {"Hepatitis A", 10, 21, std::string("D006506")}};
  c.seed_labels = {"causes", "Hepatitis A"};
  c.kg_terms = {{"Hepatitis A", mesh::Provenance::kSelf, "D006506", "Hepatitis A"},
                {"Hepatitis, Infectious", mesh::Provenance::kEntryTerm, "D006506", "Hepatitis A"},
                {"Infectious Hepatitis", mesh::Provenance::kEntryTerm, "D006506", "Hepatitis A"},
                {"HAV Infection", mesh::Provenance::kEntryTerm, "D006506", "Hepatitis A"}};
  EXPECT_EQ(render(build_boolean_query(c, 5)),
            "(\"causes\"[tiab]) AND (\"Hepatitis A\"[MeSH Terms] OR \"Hepatitis A\"[tiab] OR "
            "\"Hepatitis, Infectious\"[tiab] OR \"Infectious Hepatitis\"[tiab] OR \"HAV Infection\"[tiab])");
  EXPECT_EQ(render(build_boolean_query(c, 1)),
            "(\"causes\"[tiab]) AND (\"Hepatitis A\"[MeSH Terms] OR \"Hepatitis A\"[tiab] OR "
            "\"Hepatitis, Infectious\"[tiab])");
  EXPECT_THROW(build_boolean_query(context::ExpandedContext{}, 5), Error);
}

TEST(FixtureCorpus, EvaluatesFieldTags) {
  auto corpus = FixtureCorpus::load(fixture("corpus.jsonl").string());
  EXPECT_EQ(corpus->articles().size(), 49u);
  const auto hits = corpus->esearch(hepatitis_query(), 100);
  EXPECT_FALSE(hits.empty());
  for (const auto& pmid : hits) {
    const auto rec = corpus->efetch({pmid}).records.at(0);
    EXPECT_TRUE(text::contains_phrase(rec.title, "causes") || text::contains_phrase(rec.abstract, "causes")) << pmid;
    EXPECT_NE(std::find(rec.mesh_headings.begin(), rec.mesh_headings.end(), "Hepatitis A"), rec.mesh_headings.end());
  }
  EXPECT_EQ(corpus->esearch(hepatitis_query(), 2).size(), 2u);
  EXPECT_THROW(corpus->esearch(hepatitis_query(), 0), Error);
  EXPECT_THROW(corpus->esearch(hepatitis_query(), kMaxRetmax + 1), Error);
}

TEST(FixtureCorpus, SentinelsMatchTheGoldenBooleanQuery) {
  auto corpus = FixtureCorpus::load(fixture("corpus.jsonl").string());
  const auto q = parse_query(
      "(\"causes\"[tiab]) AND (\"Hepatitis A\"[MeSH Terms] OR \"Hepatitis A\"[tiab] OR "
      "\"Hepatitis, Infectious\"[tiab] OR \"Infectious Hepatitis\"[tiab] OR \"HAV Infection\"[tiab])");
  const auto hits = corpus->esearch(q, 200);
  for (const char* s : {"35100001", "35100002", "35100003", "35100004", "35100005"}) {
    EXPECT_NE(std::find(hits.begin(), hits.end(), s), hits.end()) << s;
  }
}

TEST(FixtureCorpus, EfetchDeduplicatesAndReportsUnknown) {
  auto corpus = FixtureCorpus::load(fixture("corpus.jsonl").string());
  const auto r = corpus->efetch({"35100002", "35100001", "35100002", "99999999"});
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[0].pmid, "35100002");
  EXPECT_EQ(r.records[1].pmid, "35100001");
  EXPECT_EQ(r.unknown_pmids, std::vector<std::string>{"99999999"});
  EXPECT_THROW(corpus->efetch({}), Error);
}

TEST(FixtureCorpus, RejectsDuplicatePmids) {
  ArticleRecord a;
  a.pmid = "1";
  EXPECT_THROW(FixtureCorpus({a, a}), Error);
}

TEST(EutilsClient, UrlsCarryToolEmailAndKey) {
  EutilsConfig c;
  c.api_key = "k3y";
  c.email = "a@b.org";
  EutilsClient client(c, http::make_default_transport());
  const auto url = client.esearch_url(BooleanQuery::term("Hepatitis A", FieldTag::kMeshTerms), 20);
  EXPECT_EQ(url,
            "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/esearch.fcgi?db=pubmed&term=%22Hepatitis%20A%22%5BMeSH%"
            "20Terms%5D&retmax=20&retmode=json&tool=sysrev&email=a%40b.org&api_key=k3y");
  EXPECT_EQ(client.efetch_url({"1", "2"}),
            "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/efetch.fcgi?db=pubmed&id=1,2&retmode=xml&tool=sysrev&"
            "email=a%40b.org&api_key=k3y");
  EXPECT_DOUBLE_EQ(c.permits_per_second(), 10.0);
  EXPECT_DOUBLE_EQ(EutilsConfig{}.permits_per_second(), 3.0);
}

TEST(EutilsClient, SearchAndFetchAgainstLoopback) {
  FakeEutils fake;
  auto client = fake.client();
  EXPECT_EQ(client.esearch(hepatitis_query(), 20), (std::vector<std::string>{"101", "102", "103"}));
  EXPECT_EQ(client.esearch(hepatitis_query(), 2).size(), 2u);
  const auto r = client.efetch({"101", "1234", "101"});
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].title, "Article 101");
  EXPECT_EQ(r.unknown_pmids, std::vector<std::string>{"1234"});
  EXPECT_NE(fake.targets.front().find("term=%28%22causes%22%5Btiab%5D%29"), std::string::npos) << fake.targets.front();
}

TEST(EutilsClient, EfetchBatchesOfTwoHundred) {
  FakeEutils fake;
  auto client = fake.client(1000.0);
  std::vector<std::string> ids;
  for (int i = 1; i <= 450; ++i) ids.push_back(std::to_string(i));
  const auto r = client.efetch(ids);
  EXPECT_EQ(fake.efetch_batch_sizes, (std::vector<std::size_t>{200, 200, 50}));
  EXPECT_EQ(r.records.size(), 450u);
  for (std::size_t i = 0; i < r.records.size(); ++i) EXPECT_EQ(r.records[i].pmid, ids[i]);
}

TEST(EutilsClient, ErrorPayloadIsRemote) {
  FakeEutils fake;
  fake.esearch_body = R"({"esearchresult":{"ERROR":"Invalid query"}})";
  auto client = fake.client();
  try {
    client.esearch(hepatitis_query(), 5);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRemote);
  }
  fake.esearch_body = "<html>oops</html>";
  EXPECT_THROW(client.esearch(hepatitis_query(), 5), Error);
}

TEST(EutilsClient, RespectsRateLimit) {
  FakeEutils fake;
  auto client = fake.client(3.0);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 7; ++i) client.esearch(hepatitis_query(), 5);
  EXPECT_GE(sysrev::testing::seconds_between(start, std::chrono::steady_clock::now()), 2.0 - 0.05);
  ASSERT_EQ(fake.arrivals.size(), 7u);
  for (std::size_t i = 0; i < fake.arrivals.size(); ++i) {
    int n = 0;
    for (std::size_t j = i; j < fake.arrivals.size(); ++j) {
      if (sysrev::testing::seconds_between(fake.arrivals[i], fake.arrivals[j]) < 1.0) ++n;
    }
    EXPECT_LE(n, 4);
  }
}
