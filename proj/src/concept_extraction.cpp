#include "sysrev/concept_extraction.hpp"

#include <fstream>
#include <sstream>

#include "sysrev/error.hpp"

namespace sysrev::concepts {

// Generated from data/stopwords.txt at configure time.
extern const char* const kStopwordData;

void ResearchQuestion::validate() const {
  if (text::trim(text).empty()) throw Error(ErrorCode::kInput, "research question is empty");
  if (text::char_count(text) > kMaxQuestionChars) {
    throw Error(ErrorCode::kInput, "research question exceeds " + std::to_string(kMaxQuestionChars) + " characters");
  }
}

StopwordSet parse_stopwords(std::string_view contents) {
  StopwordSet words;
  for (const auto& line : text::split(contents, '\n')) {
    std::string w = text::normalize(line);
    if (!w.empty() && w[0] != '#') words.insert(std::move(w));
  }
  return words;
}

const StopwordSet& default_stopwords() {
  static const StopwordSet words = parse_stopwords(kStopwordData);
  return words;
}

StopwordSet load_stopwords(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open stopword list " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_stopwords(buf.str());
}

std::vector<SeedConcept> extract_seeds(const ResearchQuestion& question, const mesh::MeshKb& kb,
                                       const StopwordSet& stopwords) {
  question.validate();
  const std::string& source = question.text;
  const auto tokens = text::tokenize(source);
  const auto is_stopword = [&](const text::Token& t) { return stopwords.count(text::casefold(t.text)) != 0; };

  std::vector<SeedConcept> seeds;
  std::size_t i = 0;
  while (i < tokens.size()) {
    bool matched = false;
    const std::size_t widest = std::min(kMaxMatchWindow, tokens.size() - i);
    for (std::size_t w = widest; w >= 1 && !matched; --w) {
      if (w == 1 && is_stopword(tokens[i])) break;
      const std::size_t begin = tokens[i].begin;
      const std::size_t end = tokens[i + w - 1].end;
      const std::string surface = source.substr(begin, end - begin);
      if (const auto* d = kb.lookup(surface)) {
        seeds.push_back(SeedConcept{surface, begin, end, d->ui});
        i += w;
        matched = true;
      }
    }
    if (matched) continue;

    const auto& t = tokens[i];
    if (!is_stopword(t) && text::char_count(t.text) >= kMinUnresolvedChars) {
      seeds.push_back(SeedConcept{t.text, t.begin, t.end, std::nullopt});
    }
    ++i;
  }
  return seeds;
}

}  // namespace sysrev::concepts
