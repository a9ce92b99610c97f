#include "golden_recorder.hpp"

#include <algorithm>

#include "fixtures.hpp"
#include "sysrev/text.hpp"

namespace sysrev::testing {
namespace {

const char* const kTermsPrefix = "List up to ";
const char* const kTermsMarker = " strongly associated with ";

std::string terms_for(const std::string& seed) {
  if (text::iequals(seed, "Hepatitis A")) {
    return "Acetaminophen\nHepatitis A Virus\nJaundice\nShellfish\nHepatitis A Virus | causes | Hepatitis A\n";
  }
  if (text::iequals(seed, "causes")) return "Etiology\nRisk Factors\n";
  return "";
}

std::string queries_for(const std::string& prompt) {
  std::vector<std::string> lines = {
      kGoldenQuery,
      "How does Hepatitis A affect the liver, and what complications are associated with it?",
      "What factors are associated with Hepatitis A outbreaks?",
  };
  if (prompt.find("Acetaminophen") != std::string::npos) {
    lines.push_back("Can acetaminophen use complicate the course of Hepatitis A?");
  } else {
    lines.push_back("What complications of Hepatitis A occur in adults?");
  }
  lines.push_back("How is Hepatitis A diagnosed and distinguished from other causes of viral hepatitis?");
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) out += std::to_string(i + 1) + ". " + lines[i] + "\n";
  return out;
}

int word_count(const std::string& s) {
  return static_cast<int>(text::tokenize(s).size());
}

}  // namespace

llm::ChatResponse ScriptedProvider::complete(const llm::ChatRequest& request) {
  llm::ChatResponse response;
  response.provider_id = id();
  const std::string& user = request.user_text;
  if (user.rfind(kTermsPrefix, 0) == 0) {
    const auto at = user.find(kTermsMarker);
    const auto comma = user.rfind(", one per line");
    if (at == std::string::npos || comma == std::string::npos || comma < at) {
      throw Error(ErrorCode::kProvider, "unexpected term prompt: " + user);
    }
    const auto begin = at + std::string(kTermsMarker).size();
    response.text = terms_for(user.substr(begin, comma - begin));
  } else if (user.rfind("Formulate ", 0) == 0) {
    response.text = queries_for(user);
  } else {
    throw Error(ErrorCode::kProvider, "unexpected prompt: " + user);
  }
  response.prompt_tokens = word_count(request.system_text) + word_count(user);
  response.completion_tokens = word_count(response.text);
  return response;
}

std::vector<std::vector<pipeline::Edit>> golden_refinements() {
  using pipeline::Edit;
  using pipeline::EditOp;
  return {
      {Edit{EditOp::kSetSafetyProfile, "misuse-prevention", 0}},
      {Edit{EditOp::kBlockTerm, "Shellfish", 0}},
      {Edit{EditOp::kRemoveTerm, "Jaundice", 0}},
      {Edit{EditOp::kAddTerm, "Contaminated Food", 0}},
  };
}

std::string record_golden_cassette(const std::string& config_path, const std::string& session_dir) {
  auto config = pipeline::load_config(config_path, empty_env());
  config.provider = pipeline::ProviderMode::kMock;
  config.session_dir = session_dir;
  auto components = pipeline::build_components(config);
  auto cassette = std::make_shared<llm::Cassette>();
  components.gateway = std::make_shared<llm::RecordingProvider>(std::make_shared<ScriptedProvider>(), cassette);
  pipeline::Pipeline p(config, std::move(components));

  concepts::ResearchQuestion question;
  question.text = kGoldenQuestion;
  p.run(question);
  for (const auto& edits : golden_refinements()) {
    const auto s = p.run(question);
    p.refine(s.session_id, edits);
  }

  auto entries = cassette->entries();
  std::sort(entries.begin(), entries.end(),
            [](const llm::CassetteEntry& a, const llm::CassetteEntry& b) { return a.fingerprint < b.fingerprint; });
  llm::Cassette sorted;
  for (const auto& e : entries) sorted.append(e.request, e.response);
  return sorted.serialize();
}

}  // namespace sysrev::testing
