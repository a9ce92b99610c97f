#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace sysrev::mesh {

/// A MeSH descriptor: the knowledge-graph node used for expansion.
struct MeshDescriptor {
  std::string ui;  // D + 6 or 9 digits
  std::string name;
  std::vector<std::string> tree_numbers;
  std::string scope_note;
  std::vector<std::string> entry_terms;

  bool operator==(const MeshDescriptor&) const = default;
};

enum class Direction { kBroader, kNarrower, kSibling };

enum class Provenance { kSelf, kEntryTerm, kNarrower, kBroader };

std::string_view provenance_name(Provenance p);
Provenance parse_provenance(std::string_view name);

struct ExpansionPolicy {
  bool include_broader = false;
  bool include_narrower = true;
  int narrower_depth = 1;
  bool include_entry_terms = true;
  std::size_t max_terms = 25;

  void validate() const;
};

struct ExpandedTerm {
  std::string term;
  Provenance provenance = Provenance::kSelf;
  std::string ui;  // descriptor the term came from

  bool operator==(const ExpandedTerm&) const = default;
};

struct ExpansionSet {
  std::string seed_ui;
  std::string definition;  // scope note of the seed descriptor
  std::vector<ExpandedTerm> terms;
};

bool is_valid_ui(std::string_view ui);
bool is_valid_tree_number(std::string_view tree);

/// Immutable once built; all queries are const and safe to share across
/// threads.
class MeshKb {
 public:
  MeshKb() = default;

  std::size_t size() const noexcept { return descriptors_.size(); }
  std::size_t skipped_records() const noexcept { return skipped_; }

  const std::map<std::string, MeshDescriptor>& descriptors() const noexcept { return descriptors_; }
  const MeshDescriptor* find(std::string_view ui) const;

  /// Exact match on the normalized form of a preferred name or entry term.
  /// Preferred names win over entry terms. Throws kInput on a blank term.
  const MeshDescriptor* lookup(std::string_view term) const;

  std::set<std::string> neighbors(std::string_view ui, Direction direction, int depth) const;

  ExpansionSet expand(std::string_view term, const ExpansionPolicy& policy) const;

  /// Canonical fixture-TSV rendering, ordered by UI.
  std::string serialize() const;

  std::size_t name_index_size() const noexcept { return preferred_index_.size() + entry_index_.size(); }

 private:
  friend class MeshKbBuilder;

  std::map<std::string, MeshDescriptor> descriptors_;
  std::map<std::string, std::string> preferred_index_;  // normalized name -> ui
  std::map<std::string, std::string> entry_index_;      // normalized entry term -> ui
  std::map<std::string, std::string> tree_index_;       // tree number -> ui
  std::size_t skipped_ = 0;
};

class MeshKbBuilder {
 public:
  /// Returns false (and counts a skip) when the record lacks a UI or name or
  /// carries malformed identifiers. Throws kDuplicate on a repeated UI.
  bool add(MeshDescriptor descriptor);
  MeshKb build() &&;

 private:
  MeshKb kb_;
};

enum class SourceFormat { kAuto, kXml, kTsv };

/// Reads NLM DescriptorRecordSet XML or the fixture TSV format.
MeshKb ingest_descriptors(std::istream& source, SourceFormat format = SourceFormat::kAuto);
MeshKb ingest_file(const std::string& path, SourceFormat format = SourceFormat::kAuto);

}  // namespace sysrev::mesh
