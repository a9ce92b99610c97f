#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "sysrev/error.hpp"
#include "sysrev/query_generation.hpp"
#include "sysrev/text.hpp"

using namespace sysrev;
using namespace sysrev::querygen;
using context::EdgeSource;
using context::ExpandedContext;

namespace {

ExpandedContext context_for(const std::string& seed, const std::vector<std::string>& predicates,
                            const std::vector<std::string>& lm = {}, bool resolved = true) {
  ExpandedContext c;
  c.seeds.push_back({seed, 0, seed.size(), resolved ? std::optional<std::string>("D006506") : std::nullopt});
  c.seed_labels.push_back(seed);
  if (resolved) c.kg_terms.push_back({seed, mesh::Provenance::kSelf, "D006506", seed});
  for (const auto& p : predicates) c.relations.push_back({seed, p, std::string(context::kOpenObject), EdgeSource::kKg});
  for (const auto& t : lm) c.lm_terms.push_back({t, "gpt-3.5-turbo", seed});
  return c;
}

ExpandedContext hepatitis_a() {
  return context_for("Hepatitis A", context::default_relation_vocab(), {"Acetaminophen"});
}

std::string numbered(int n) {
  std::string out;
  for (int i = 1; i <= n; ++i) out += std::to_string(i) + ". Question number " + std::to_string(i) + "?\n";
  return out;
}

}  // namespace

TEST(QueryGeneration, PromptForHepatitisA) {
  EXPECT_EQ(build_prompt(hepatitis_a(), 5),
            "Formulate 5 prompt queries with the keywords: causes, diagnoses, affects, associated with, complicates, "
            "Acetaminophen");
}

TEST(QueryGeneration, SinglePredicatePrompt) {
  const auto c = context_for("causes", {"causes"}, {}, false);
  EXPECT_EQ(build_prompt(c, 1), "Formulate 1 prompt queries with the keywords: causes");
}

TEST(QueryGeneration, KeywordsAreCappedAtTwelveInContextOrder) {
  std::vector<std::string> lm;
  for (int i = 0; i < 30; ++i) lm.push_back("Term " + std::to_string(i));
  const auto c = context_for("Hepatitis A", {"causes", "diagnoses"}, lm);
  const auto k = prompt_keywords(c);
  ASSERT_EQ(k.size(), kMaxPromptKeywords);
  EXPECT_EQ(k[0], "causes");
  EXPECT_EQ(k[1], "diagnoses");
  EXPECT_EQ(k[2], "Term 0");
  EXPECT_EQ(k[11], "Term 9");
}

TEST(QueryGeneration, KeywordsDeduplicateCaseInsensitively) {
  auto c = context_for("Hepatitis A", {"causes"}, {"Jaundice", "jaundice", "CAUSES"});
  c.kg_terms.push_back({"Jaundice", mesh::Provenance::kNarrower, "D007565", "Hepatitis A"});
  c.kg_terms.push_back({"Hepatitis, Infectious", mesh::Provenance::kEntryTerm, "D006506", "Hepatitis A"});
  EXPECT_EQ(prompt_keywords(c), (std::vector<std::string>{"causes", "Jaundice", "Hepatitis, Infectious"}));
}

TEST(QueryGeneration, RequestIsDeterministic) {
  const auto r = generation_request(build_prompt(hepatitis_a(), 5), GenerationOptions{});
  EXPECT_EQ(r.temperature, 0.0);
  EXPECT_EQ(r.model_id, "gpt-3.5-turbo");
  EXPECT_EQ(llm::fingerprint(r), llm::fingerprint(generation_request(build_prompt(hepatitis_a(), 5), {})));
}

TEST(QueryGeneration, TruncatesAndRanks) {
  llm::MockProvider mock({}, numbered(8));
  const auto r = generate_queries(hepatitis_a(), mock, 5);
  ASSERT_EQ(r.queries.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(r.queries[i].rank, i + 1);
    EXPECT_EQ(r.queries[i].text, "Question number " + std::to_string(i + 1) + "?");
    EXPECT_EQ(r.queries[i].source, QuerySource::kLlm);
  }
  EXPECT_FALSE(r.gateway_failed);
}

TEST(QueryGeneration, ShortResponsesAreToppedUpFromTemplates) {
  llm::MockProvider mock({}, std::string("1. What causes Hepatitis A?\n"));
  const auto r = generate_queries(hepatitis_a(), mock, 3);
  ASSERT_EQ(r.queries.size(), 3u);
  EXPECT_EQ(r.queries[0].source, QuerySource::kLlm);
  EXPECT_EQ(r.queries[1].source, QuerySource::kFallback);
  EXPECT_EQ(r.queries[1].text, "What are the causes of Hepatitis A?");
  EXPECT_EQ(r.queries[2].text, "How is Hepatitis A diagnosed?");
}

TEST(QueryGeneration, FallbackTemplate) {
  const auto q = fallback_generate(context_for("Hepatitis A", {"causes"}), 1);
  ASSERT_EQ(q.size(), 1u);
  EXPECT_EQ(q[0].text, "What are the causes of Hepatitis A?");
  EXPECT_EQ(q[0].origin_keywords, std::vector<std::string>{"causes"});
  EXPECT_EQ(q[0].source, QuerySource::kFallback);
}

TEST(QueryGeneration, FallbackCoversEveryPredicateThenLmTerms) {
  const auto q = fallback_generate(hepatitis_a(), 20);
  std::vector<std::string> texts;
  for (const auto& g : q) texts.push_back(g.text);
  EXPECT_EQ(texts, (std::vector<std::string>{"What are the causes of Hepatitis A?", "How is Hepatitis A diagnosed?",
                                             "What does Hepatitis A affect?", "What is Hepatitis A associated with?",
                                             "What does Hepatitis A complicate?",
                                             "Acetaminophen and Hepatitis A: what is the relationship?"}));
}

TEST(QueryGeneration, GatewayFailureFallsBack) {
  llm::FailingProvider down;
  const auto r = generate_queries(hepatitis_a(), down, 2);
  EXPECT_TRUE(r.gateway_failed);
  ASSERT_EQ(r.queries.size(), 2u);
  for (const auto& q : r.queries) EXPECT_EQ(q.source, QuerySource::kFallback);
}

TEST(QueryGeneration, CountOutOfRangeIsRejected) {
  llm::MockProvider mock;
  EXPECT_THROW(generate_queries(hepatitis_a(), mock, 0), Error);
  EXPECT_THROW(generate_queries(hepatitis_a(), mock, kMaxQueries + 1), Error);
  EXPECT_THROW(build_prompt(hepatitis_a(), 0), Error);
}

TEST(QueryGeneration, NothingToSayIsAGenerationError) {
  ExpandedContext empty;
  llm::MockProvider mock;
  try {
    generate_queries(empty, mock, 3);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kGeneration);
  }
}

TEST(QueryGeneration, ParsesListsAndSkipsHeadings) {
  EXPECT_EQ(parse_query_lines("Here are the queries:\n1. First?\n- Second?\n* \"Third?\"\n\n2) first?\n"),
            (std::vector<std::string>{"First?", "Second?", "Third?"}));
}

TEST(QueryGenerationProperty, OriginsAreKeywordsFoundInTheQuery) {
  std::mt19937_64 rng(5);
  const std::vector<std::string> words = {"causes", "Hepatitis", "acetaminophen", "liver", "vaccine", "outbreak",
                                          "diagnoses", "children", "shellfish", "travel"};
  for (int round = 0; round < 100; ++round) {
    std::string response;
    const int lines = 1 + static_cast<int>(rng() % 8);
    for (int l = 0; l < lines; ++l) {
      response += std::to_string(l + 1) + ".";
      for (int w = 0; w < 6; ++w) response += " " + words[rng() % words.size()];
      response += "?\n";
    }
    llm::MockProvider mock({}, response);
    const auto c = hepatitis_a();
    const int n = 1 + static_cast<int>(rng() % 6);
    const auto r = generate_queries(c, mock, n);
    const auto keywords = prompt_keywords(c);
    ASSERT_EQ(static_cast<int>(r.queries.size()), n);
    for (std::size_t i = 0; i < r.queries.size(); ++i) {
      const auto& q = r.queries[i];
      EXPECT_EQ(q.rank, static_cast<int>(i) + 1);
      for (const auto& o : q.origin_keywords) {
        EXPECT_NE(std::find(keywords.begin(), keywords.end(), o), keywords.end()) << o;
        if (q.source == QuerySource::kLlm) {
          EXPECT_NE(text::casefold(q.text).find(text::casefold(o)), std::string::npos);
        }
      }
    }
  }
}

TEST(QueryGeneration, JsonRoundTrip) {
  GeneratedQuery q{"What causes Hepatitis A?", {"causes"}, 2, QuerySource::kLibrarian};
  const nlohmann::json j = q;
  EXPECT_EQ(j["source"], "librarian");
  EXPECT_EQ(j.get<GeneratedQuery>(), q);
}
