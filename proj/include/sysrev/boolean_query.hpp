#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace sysrev::pubmed {

enum class FieldTag { kMeshTerms, kTitleAbstract, kAllFields };

std::string_view field_tag_name(FieldTag tag);  // "MeSH Terms", "tiab", "All Fields"

enum class NodeKind { kTerm, kAnd, kOr, kNot };

inline constexpr std::size_t kMaxQueryDepth = 10;

/// PubMed Boolean query tree. And/Or take two or more children; Not takes
/// exactly two (left NOT right).
struct BooleanQuery {
  NodeKind kind = NodeKind::kTerm;
  std::string text;  // kTerm only
  FieldTag tag = FieldTag::kAllFields;
  std::vector<BooleanQuery> children;

  static BooleanQuery term(std::string text, FieldTag tag);
  static BooleanQuery all_of(std::vector<BooleanQuery> children);
  static BooleanQuery any_of(std::vector<BooleanQuery> children);
  static BooleanQuery exclude(BooleanQuery left, BooleanQuery right);

  std::size_t depth() const;
  bool operator==(const BooleanQuery&) const = default;
};

/// Throws kStructural on invariant violations.
void validate(const BooleanQuery& query);

std::string render(const BooleanQuery& query);

/// Recursive descent over the render grammar. OR binds loosest, then AND,
/// then NOT (left-associative). Throws OffsetError(kSyntax).
BooleanQuery parse_query(std::string_view text);

/// Sorts And/Or children by their rendering, recursively.
BooleanQuery normalized(BooleanQuery query);

}  // namespace sysrev::pubmed
