#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "sysrev/context_expansion.hpp"
#include "sysrev/error.hpp"

using namespace sysrev;
using namespace sysrev::context;
using sysrev::testing::fixture;

namespace {

const mesh::MeshKb& kb() {
  static const mesh::MeshKb k = mesh::ingest_file(fixture("mesh_fixture.tsv").string());
  return k;
}

std::vector<concepts::SeedConcept> seeds_for(const std::string& q) {
  return concepts::extract_seeds(concepts::ResearchQuestion{q, "en"}, kb(), concepts::default_stopwords());
}

std::shared_ptr<llm::ReplayProvider> golden_replay() {
  return std::make_shared<llm::ReplayProvider>(llm::Cassette::load(fixture("cassettes/golden.jsonl").string()));
}

ExpandedContext golden_context(const SafetyPolicy& policy = {}) {
  auto gateway = golden_replay();
  return expand_context(seeds_for(sysrev::testing::kGoldenQuestion), kb(), *gateway, default_relation_vocab(), policy);
}

SafetyPolicy misuse_prevention() { return load_safety_policy(fixture("safety/misuse-prevention.json").string()); }

bool has_lm_term(const ExpandedContext& c, const std::string& t) {
  return std::any_of(c.lm_terms.begin(), c.lm_terms.end(), [&](const LmTerm& x) { return x.term == t; });
}

}  // namespace

TEST(ContextExpansion, GoldenContextCarriesPredicatesAndAcetaminophen) {
  const auto c = golden_context();
  std::vector<std::string> predicates;
  for (const auto& e : c.relations) {
    if (e.subject == "Hepatitis A" && e.source == EdgeSource::kKg) predicates.push_back(e.predicate);
  }
  EXPECT_EQ(predicates, (std::vector<std::string>{"causes", "diagnoses", "affects", "associated with", "complicates"}));
  EXPECT_TRUE(has_lm_term(c, "Acetaminophen"));
  EXPECT_EQ(c.definitions.count("Hepatitis A"), 1u);
  EXPECT_EQ(c.definitions.count("causes"), 0u);
  EXPECT_FALSE(c.lm_unavailable);
  EXPECT_TRUE(c.audit.empty());
}

TEST(ContextExpansion, LmTriplesBecomeRelations) {
  const auto c = golden_context();
  const RelationEdge expected{"Hepatitis A Virus", "causes", "Hepatitis A", EdgeSource::kLm};
  EXPECT_NE(std::find(c.relations.begin(), c.relations.end(), expected), c.relations.end());
  EXPECT_FALSE(has_lm_term(c, "Hepatitis A Virus | causes | Hepatitis A"));
}

TEST(ContextExpansion, IsDeterministicUnderReplay) {
  EXPECT_EQ(golden_context(), golden_context());
}

TEST(ContextExpansion, UnresolvedSeedWithSinglePredicate) {
  llm::MockProvider mock({}, std::string(""));
  const std::vector<concepts::SeedConcept> seeds = {{"causes", 0, 6, std::nullopt}};
  const auto c = expand_context(seeds, kb(), mock, {"causes"}, SafetyPolicy{});
  ASSERT_EQ(c.relations.size(), 1u);
  EXPECT_EQ(c.relations[0], (RelationEdge{"causes", "causes", std::string(kOpenObject), EdgeSource::kKg}));
  EXPECT_TRUE(c.kg_terms.empty());
  EXPECT_TRUE(c.definitions.empty());
}

TEST(ContextExpansion, Preconditions) {
  llm::MockProvider mock;
  EXPECT_THROW(expand_context({}, kb(), mock, default_relation_vocab(), SafetyPolicy{}), Error);
  try {
    expand_context({}, kb(), mock, default_relation_vocab(), SafetyPolicy{});
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyContext);
  }
  EXPECT_THROW(expand_context(seeds_for("hepatitis a"), kb(), mock, {}, SafetyPolicy{}), Error);
}

TEST(ContextExpansion, SuturesKgTermsEqualUnionOfPerSeedExpansions) {
  const auto seeds = seeds_for("Antimicrobial agents and suture techniques in preventing surgical site infections");
  llm::FailingProvider down;
  const auto c = expand_context(seeds, kb(), down, default_relation_vocab(), SafetyPolicy{});
  EXPECT_TRUE(c.lm_unavailable);
  EXPECT_TRUE(c.lm_terms.empty());

  std::set<std::string> oracle;
  for (const auto& s : seeds) {
    if (!s.resolved()) continue;
    for (const auto& t : kb().expand(s.surface, mesh::ExpansionPolicy{}).terms) oracle.insert(text::normalize(t.term));
  }
  std::set<std::string> got;
  for (const auto& t : c.kg_terms) got.insert(text::normalize(t.term));
  EXPECT_EQ(got, oracle);
  EXPECT_EQ(got.size(), c.kg_terms.size()) << "kg terms are deduplicated";
  for (const auto& s : seeds) {
    if (s.resolved()) EXPECT_EQ(c.definitions.count(seed_label(s, kb())), 1u);
  }
}

TEST(ContextExpansion, SuggestLmTermsParsing) {
  const auto parsed = parse_lm_terms("Acetaminophen\nLiver\nVaccination", "Hepatitis A", 10, "m", default_relation_vocab());
  EXPECT_EQ(parsed.terms.size(), 3u);
  const auto numbered = parse_lm_terms("1. Acetaminophen", "Hepatitis A", 10, "m", default_relation_vocab());
  ASSERT_EQ(numbered.terms.size(), 1u);
  EXPECT_EQ(numbered.terms[0].term, "Acetaminophen");
  EXPECT_EQ(numbered.terms[0].model_id, "m");
  const auto chatty = parse_lm_terms("this is a sentence that rambles on far too long\n\n", "x", 10, "m",
                                     default_relation_vocab());
  EXPECT_TRUE(chatty.terms.empty());
  EXPECT_TRUE(chatty.parse_warning);
}

TEST(ContextExpansion, SuggestLmTermsTruncatesToMax) {
  std::string fifty;
  for (int i = 0; i < 50; ++i) fifty += "term" + std::to_string(i) + "\n";
  llm::MockProvider mock({}, fifty);
  const auto s = suggest_lm_terms("Hepatitis A", mock, 10, "m");
  EXPECT_EQ(s.terms.size(), 10u);
  EXPECT_THROW(suggest_lm_terms("Hepatitis A", mock, 0, "m"), Error);
}

TEST(ContextExpansion, LmPromptIsTheClozeTemplate) {
  EXPECT_EQ(lm_term_prompt("Hepatitis A", 10),
            "List up to 10 single medical concepts strongly associated with Hepatitis A, one per line, no commentary.");
}

TEST(SafetyFilter, EmptyPolicyIsIdentity) {
  const auto c = golden_context();
  EXPECT_EQ(apply_safety_filter(c, SafetyPolicy{}), c);
}

TEST(SafetyFilter, AcetaminophenScenario) {
  const auto base = golden_context();
  const auto filtered = apply_safety_filter(base, misuse_prevention());
  EXPECT_FALSE(has_lm_term(filtered, "Acetaminophen"));
  ASSERT_EQ(filtered.audit.size(), 1u);
  EXPECT_EQ(filtered.audit[0].kind, ItemKind::kLmTerm);
  EXPECT_EQ(filtered.audit[0].item, "Acetaminophen");
  EXPECT_EQ(filtered.audit[0].profile_id, "misuse-prevention");
  EXPECT_EQ(filtered.lm_terms.size(), base.lm_terms.size() - 1);
  EXPECT_EQ(filtered.kg_terms, base.kg_terms);
  EXPECT_EQ(filtered.relations, base.relations);
  EXPECT_EQ(golden_context(misuse_prevention()), filtered) << "filtering inside expansion matches filtering after";
}

TEST(SafetyFilter, BlockedPathRemovesExactlyTheComplicatesEdges) {
  const auto base = golden_context();
  SafetyPolicy p;
  p.profile_id = "paths";
  p.blocked_paths.push_back({"*", "complicates", "*"});
  const auto filtered = apply_safety_filter(base, p);
  std::vector<RelationEdge> expected;
  std::size_t removed = 0;
  for (const auto& e : base.relations) {
    if (text::casefold(e.predicate) == "complicates") {
      ++removed;
    } else {
      expected.push_back(e);
    }
  }
  EXPECT_EQ(filtered.relations, expected);
  EXPECT_EQ(filtered.audit.size(), removed);
  for (const auto& a : filtered.audit) EXPECT_EQ(a.kind, ItemKind::kRelation);
}

TEST(SafetyFilter, GlobsAreCaseFolded) {
  ExpandedContext c;
  c.lm_terms = {{"ACETAMINOPHEN overdose", "m", "x"}, {"Liver", "m", "x"}};
  SafetyPolicy p;
  p.profile_id = "g";
  p.blocked_terms = {"acetaminophen*"};
  const auto f = apply_safety_filter(c, p);
  ASSERT_EQ(f.lm_terms.size(), 1u);
  EXPECT_EQ(f.lm_terms[0].term, "Liver");
}

TEST(SafetyFilter, PolicyFilesAreValidated) {
  EXPECT_EQ(misuse_prevention().blocked_terms, std::set<std::string>{"Acetaminophen"});
  EXPECT_THROW(parse_safety_policy(nlohmann::json{{"version", 2}}), Error);
  EXPECT_THROW(parse_safety_policy(nlohmann::json{{"blocked_paths", {{"a", "b"}}}}), Error);
  EXPECT_THROW(load_safety_policy("/nonexistent.json"), Error);
}

TEST(SafetyFilterProperty, IdempotentMonotoneAndAudited) {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 300; ++i) {
    const auto c = sysrev::testing::random_context(rng);
    const auto p1 = sysrev::testing::random_policy(rng);
    const auto p2 = sysrev::testing::widen(p1, sysrev::testing::random_policy(rng));
    const auto once = apply_safety_filter(c, p1);
    EXPECT_EQ(apply_safety_filter(once, p1), once);
    EXPECT_TRUE(sysrev::testing::items_subset(once, c));
    const auto wider = apply_safety_filter(c, p2);
    EXPECT_TRUE(sysrev::testing::items_subset(wider, once));
    const std::size_t before = c.kg_terms.size() + c.lm_terms.size() + c.relations.size() + c.definitions.size();
    const std::size_t after = once.kg_terms.size() + once.lm_terms.size() + once.relations.size() + once.definitions.size();
    EXPECT_EQ(once.audit.size(), before - after);
  }
}

TEST(ContextExpansion, JsonRoundTrip) {
  const auto c = apply_safety_filter(golden_context(), misuse_prevention());
  const nlohmann::json j = c;
  EXPECT_EQ(j.get<ExpandedContext>(), c);
}
