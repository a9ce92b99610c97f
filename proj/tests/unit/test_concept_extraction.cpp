#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "sysrev/concept_extraction.hpp"
#include "sysrev/error.hpp"

using namespace sysrev;
using namespace sysrev::concepts;
using sysrev::testing::fixture;

namespace {

const mesh::MeshKb& kb() {
  static const mesh::MeshKb k = mesh::ingest_file(fixture("mesh_fixture.tsv").string());
  return k;
}

std::vector<SeedConcept> seeds_for(const std::string& text) {
  ResearchQuestion q;
  q.text = text;
  return extract_seeds(q, kb(), default_stopwords());
}

}  // namespace

TEST(ConceptExtraction, GoldenQuestionYieldsHepatitisA) {
  const std::string q = sysrev::testing::kGoldenQuestion;
  const auto seeds = seeds_for(q);
  ASSERT_EQ(seeds.size(), 2u);
  EXPECT_EQ(seeds[0].surface, "causes");
  EXPECT_FALSE(seeds[0].resolved());
  EXPECT_EQ(seeds[1].surface, "Hepatitis A");
  EXPECT_EQ(seeds[1].descriptor_ui, "D006506");
  for (const auto& s : seeds) EXPECT_EQ(q.substr(s.begin, s.end - s.begin), s.surface);
}

TEST(ConceptExtraction, SuturesExampleResolvesEachConcept) {
  const auto seeds = seeds_for("Antimicrobial agents and suture techniques in preventing surgical site infections");
  std::set<std::string> uis;
  for (const auto& s : seeds) {
    if (s.resolved()) uis.insert(*s.descriptor_ui);
  }
  EXPECT_TRUE(uis.count("D000890")) << "antimicrobial agents -> Anti-Infective Agents";
  EXPECT_TRUE(uis.count("D013536")) << "suture techniques";
  EXPECT_TRUE(uis.count("D011322")) << "preventing -> Primary Prevention";
  EXPECT_TRUE(uis.count("D007239")) << "infections";
}

TEST(ConceptExtraction, LongestMatchWins) {
  const auto seeds = seeds_for("surgical wound infection rates");
  ASSERT_FALSE(seeds.empty());
  EXPECT_EQ(seeds[0].surface, "surgical wound infection");
  EXPECT_EQ(seeds[0].descriptor_ui, "D013530");
}

TEST(ConceptExtraction, SpansAreByteOffsets) {
  const std::string q = "Größe of hepatitis A outbreaks";
  const auto seeds = seeds_for(q);
  bool found = false;
  for (const auto& s : seeds) {
    EXPECT_EQ(q.substr(s.begin, s.end - s.begin), s.surface);
    if (s.descriptor_ui == "D006506") {
      found = true;
      EXPECT_EQ(s.begin, q.find("hepatitis"));
    }
  }
  EXPECT_TRUE(found);
}

TEST(ConceptExtraction, StopwordsAndShortWordsAreDropped) {
  EXPECT_TRUE(seeds_for("what is the of and").empty());
  EXPECT_TRUE(seeds_for("why are we here").empty());
}

TEST(ConceptExtraction, RejectsBlankOrOverlongQuestions) {
  EXPECT_THROW(seeds_for("   "), Error);
  EXPECT_THROW(seeds_for(std::string(kMaxQuestionChars + 1, 'x')), Error);
  EXPECT_NO_THROW(seeds_for(std::string(kMaxQuestionChars, 'x')));
}

TEST(ConceptExtraction, ParsesStopwordFiles) {
  const auto words = parse_stopwords("# comment\nThe\n  AND \n\n");
  EXPECT_EQ(words, (StopwordSet{"the", "and"}));
  EXPECT_TRUE(default_stopwords().count("what"));
}
