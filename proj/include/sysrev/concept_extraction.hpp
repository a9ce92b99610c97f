#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "sysrev/mesh_kb.hpp"
#include "sysrev/text.hpp"

namespace sysrev::concepts {

inline constexpr std::size_t kMaxQuestionChars = 2000;
inline constexpr std::size_t kMaxMatchWindow = 6;
inline constexpr std::size_t kMinUnresolvedChars = 4;

struct ResearchQuestion {
  std::string text;
  std::string language_tag = "en";

  /// Throws kInput for blank or over-long questions.
  void validate() const;
  bool operator==(const ResearchQuestion&) const = default;
};

/// A mention in the question, resolved against MeSH when possible. Spans are
/// byte offsets into the question text.
struct SeedConcept {
  std::string surface;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::optional<std::string> descriptor_ui;

  bool resolved() const noexcept { return descriptor_ui.has_value(); }
  bool operator==(const SeedConcept&) const = default;
};

/// Casefolded words.
using StopwordSet = std::unordered_set<std::string>;

/// The shipped English list (data/stopwords.txt, compiled in).
const StopwordSet& default_stopwords();
StopwordSet load_stopwords(const std::string& path);
StopwordSet parse_stopwords(std::string_view contents);

using text::tokenize;

/// Greedy longest-match dictionary lookup, left to right, windows of up to
/// six tokens. Unmatched content words (not stopwords, at least four
/// characters) come back as unresolved seeds.
std::vector<SeedConcept> extract_seeds(const ResearchQuestion& question, const mesh::MeshKb& kb,
                                       const StopwordSet& stopwords);

}  // namespace sysrev::concepts
