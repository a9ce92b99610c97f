#include "sysrev/mesh_kb.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <sstream>

#include "sysrev/error.hpp"
#include "sysrev/text.hpp"
#include "sysrev/xml_reader.hpp"

namespace sysrev::mesh {
namespace {

// Collapses whitespace runs without changing case; keeps TSV rows on one line.
std::string squeeze(std::string_view s) {
  std::string out;
  bool pending = false;
  for (const char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

std::size_t segment_count(std::string_view tree) {
  return static_cast<std::size_t>(std::count(tree.begin(), tree.end(), '.')) + 1;
}

std::string parent_of(std::string_view tree) {
  const std::size_t dot = tree.rfind('.');
  return dot == std::string_view::npos ? std::string() : std::string(tree.substr(0, dot));
}

int provenance_rank(Provenance p) {
  switch (p) {
    case Provenance::kSelf: return 0;
    case Provenance::kEntryTerm: return 1;
    case Provenance::kNarrower: return 2;
    case Provenance::kBroader: return 3;
  }
  return 4;
}

MeshDescriptor from_record(const xml::Element& record) {
  MeshDescriptor d;
  if (const auto* ui = record.child("DescriptorUI")) d.ui = text::trim(ui->text);
  if (const auto* name = record.child("DescriptorName")) {
    if (const auto* s = name->child("String")) d.name = squeeze(s->text);
  }
  if (const auto* trees = record.child("TreeNumberList")) {
    for (const auto* t : trees->children_named("TreeNumber")) d.tree_numbers.push_back(text::trim(t->text));
  }
  if (const auto* concepts = record.child("ConceptList")) {
    const auto all = concepts->children_named("Concept");
    const xml::Element* preferred = nullptr;
    for (const auto* c : all) {
      if (c->attribute("PreferredConceptYN") == "Y") {
        preferred = c;
        break;
      }
    }
    if (preferred == nullptr && !all.empty()) preferred = all.front();
    if (preferred != nullptr) {
      if (const auto* note = preferred->child("ScopeNote")) d.scope_note = squeeze(note->text);
    }
    for (const auto* c : all) {
      const auto* terms = c->child("TermList");
      if (terms == nullptr) continue;
      for (const auto* term : terms->children_named("Term")) {
        if (const auto* s = term->child("String")) d.entry_terms.push_back(squeeze(s->text));
      }
    }
  }
  return d;
}

MeshKb ingest_xml(std::istream& source, std::size_t base_offset) {
  MeshKbBuilder builder;
  try {
    xml::Reader reader(source);
    while (true) {
      const auto& ev = reader.next();
      if (ev.kind == xml::EventKind::kEndOfDocument) break;
      if (ev.kind == xml::EventKind::kStartElement && ev.name == "DescriptorRecord") {
        const xml::Event start = ev;
        builder.add(from_record(reader.read_element(start)));
      }
    }
  } catch (const OffsetError& e) {
    if (e.code() != ErrorCode::kParse) throw;
    throw OffsetError(ErrorCode::kIngestion, "descriptor stream is not well-formed XML: " + std::string(e.what()),
                      base_offset + e.offset());
  }
  return std::move(builder).build();
}

MeshKb ingest_tsv(std::istream& source, std::size_t base_offset) {
  MeshKbBuilder builder;
  std::string line;
  std::size_t offset = base_offset;
  while (std::getline(source, line)) {
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (const std::size_t bad = text::find_invalid_utf8(line); bad != std::string::npos) {
      throw OffsetError(ErrorCode::kIngestion, "descriptor TSV is not valid UTF-8", line_offset + bad);
    }
    if (text::trim(line).empty() || line[0] == '#') continue;

    const auto fields = text::split(line, '\t');
    MeshDescriptor d;
    d.ui = text::trim(fields[0]);
    if (fields.size() > 1) d.name = squeeze(fields[1]);
    if (fields.size() > 2 && !text::trim(fields[2]).empty()) {
      for (auto& t : text::split(fields[2], ';')) d.tree_numbers.push_back(text::trim(t));
    }
    if (fields.size() > 3) d.scope_note = squeeze(fields[3]);
    if (fields.size() > 4 && !text::trim(fields[4]).empty()) {
      for (auto& t : text::split(fields[4], '|')) d.entry_terms.push_back(squeeze(t));
    }
    builder.add(std::move(d));
  }
  return std::move(builder).build();
}

}  // namespace

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kSelf: return "self";
    case Provenance::kEntryTerm: return "entry_term";
    case Provenance::kNarrower: return "narrower";
    case Provenance::kBroader: return "broader";
  }
  return "self";
}

Provenance parse_provenance(std::string_view name) {
  if (name == "self") return Provenance::kSelf;
  if (name == "entry_term") return Provenance::kEntryTerm;
  if (name == "narrower") return Provenance::kNarrower;
  if (name == "broader") return Provenance::kBroader;
  throw Error(ErrorCode::kParse, "unknown provenance '" + std::string(name) + "'");
}

void ExpansionPolicy::validate() const {
  if (narrower_depth < 0 || narrower_depth > 15) {
    throw Error(ErrorCode::kInput, "narrower_depth must be within [0, 15]");
  }
  if (max_terms < 1) throw Error(ErrorCode::kInput, "max_terms must be at least 1");
}

bool is_valid_ui(std::string_view ui) {
  if (ui.size() != 7 && ui.size() != 10) return false;
  if (ui[0] != 'D') return false;
  return std::all_of(ui.begin() + 1, ui.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool is_valid_tree_number(std::string_view tree) {
  static const std::regex pattern(R"(^[A-Z][0-9]{2}(\.[0-9]{3})*$)");
  return std::regex_match(tree.begin(), tree.end(), pattern);
}

bool MeshKbBuilder::add(MeshDescriptor d) {
  d.ui = text::trim(d.ui);
  d.name = text::trim(d.name);
  if (d.ui.empty() || d.name.empty() || !is_valid_ui(d.ui)) {
    ++kb_.skipped_;
    return false;
  }
  std::erase_if(d.tree_numbers, [](const std::string& t) { return t.empty(); });
  for (const auto& t : d.tree_numbers) {
    if (!is_valid_tree_number(t)) {
      ++kb_.skipped_;
      return false;
    }
  }
  if (kb_.descriptors_.count(d.ui) != 0) {
    throw Error(ErrorCode::kDuplicate, "duplicate descriptor UI " + d.ui);
  }

  const std::string name_key = text::normalize(d.name);
  std::vector<std::string> entries;
  std::set<std::string> seen{name_key};
  for (auto& e : d.entry_terms) {
    if (e.empty()) continue;
    if (seen.insert(text::normalize(e)).second) entries.push_back(std::move(e));
  }
  d.entry_terms = std::move(entries);
  kb_.descriptors_.emplace(d.ui, std::move(d));
  return true;
}

MeshKb MeshKbBuilder::build() && {
  // Iterating in UI order makes index collisions resolve to the smallest UI.
  for (const auto& [ui, d] : kb_.descriptors_) {
    kb_.preferred_index_.emplace(text::normalize(d.name), ui);
    for (const auto& e : d.entry_terms) kb_.entry_index_.emplace(text::normalize(e), ui);
    for (const auto& t : d.tree_numbers) {
      const auto [it, inserted] = kb_.tree_index_.emplace(t, ui);
      if (!inserted && it->second != ui) {
        throw Error(ErrorCode::kIngestion, "tree number " + t + " assigned to both " + it->second + " and " + ui);
      }
    }
  }
  return std::move(kb_);
}

const MeshDescriptor* MeshKb::find(std::string_view ui) const {
  const auto it = descriptors_.find(std::string(ui));
  return it == descriptors_.end() ? nullptr : &it->second;
}

const MeshDescriptor* MeshKb::lookup(std::string_view term) const {
  const std::string key = text::normalize(term);
  if (key.empty()) throw Error(ErrorCode::kInput, "lookup term is empty");
  if (const auto it = preferred_index_.find(key); it != preferred_index_.end()) return find(it->second);
  if (const auto it = entry_index_.find(key); it != entry_index_.end()) return find(it->second);
  return nullptr;
}

std::set<std::string> MeshKb::neighbors(std::string_view ui, Direction direction, int depth) const {
  const MeshDescriptor* d = find(ui);
  if (d == nullptr) throw Error(ErrorCode::kNotFound, "unknown descriptor " + std::string(ui));
  if (direction != Direction::kSibling && depth < 1) {
    throw Error(ErrorCode::kInput, "neighbor depth must be at least 1");
  }

  std::set<std::string> out;
  for (const auto& tree : d->tree_numbers) {
    switch (direction) {
      case Direction::kBroader: {
        std::string prefix = tree;
        for (int level = 0; level < depth; ++level) {
          prefix = parent_of(prefix);
          if (prefix.empty()) break;
          if (const auto it = tree_index_.find(prefix); it != tree_index_.end()) out.insert(it->second);
        }
        break;
      }
      case Direction::kNarrower: {
        const std::string stem = tree + ".";
        const std::size_t base = segment_count(tree);
        for (auto it = tree_index_.lower_bound(stem);
             it != tree_index_.end() && it->first.compare(0, stem.size(), stem) == 0; ++it) {
          if (segment_count(it->first) - base <= static_cast<std::size_t>(depth)) out.insert(it->second);
        }
        break;
      }
      case Direction::kSibling: {
        const std::string parent = parent_of(tree);
        if (parent.empty()) break;  // tree roots have no parent node to share
        const std::string stem = parent + ".";
        const std::size_t want = segment_count(tree);
        for (auto it = tree_index_.lower_bound(stem);
             it != tree_index_.end() && it->first.compare(0, stem.size(), stem) == 0; ++it) {
          if (segment_count(it->first) == want) out.insert(it->second);
        }
        break;
      }
    }
  }
  out.erase(std::string(ui));
  return out;
}

ExpansionSet MeshKb::expand(std::string_view term, const ExpansionPolicy& policy) const {
  policy.validate();
  const MeshDescriptor* seed = lookup(term);
  if (seed == nullptr) {
    throw Error(ErrorCode::kNotFound, "no MeSH descriptor matches '" + text::normalize(term) + "'");
  }

  ExpansionSet set;
  set.seed_ui = seed->ui;
  set.definition = seed->scope_note;

  std::vector<ExpandedTerm> terms;
  terms.push_back({seed->name, Provenance::kSelf, seed->ui});
  if (policy.include_entry_terms) {
    for (const auto& e : seed->entry_terms) terms.push_back({e, Provenance::kEntryTerm, seed->ui});
  }
  if (policy.include_narrower && policy.narrower_depth >= 1) {
    for (const auto& ui : neighbors(seed->ui, Direction::kNarrower, policy.narrower_depth)) {
      terms.push_back({find(ui)->name, Provenance::kNarrower, ui});
    }
  }
  if (policy.include_broader) {
    for (const auto& ui : neighbors(seed->ui, Direction::kBroader, 1)) {
      terms.push_back({find(ui)->name, Provenance::kBroader, ui});
    }
  }

  // Priority order, then UI; stable so entry terms keep their record order.
  std::stable_sort(terms.begin(), terms.end(), [](const ExpandedTerm& a, const ExpandedTerm& b) {
    const int ra = provenance_rank(a.provenance);
    const int rb = provenance_rank(b.provenance);
    if (ra != rb) return ra < rb;
    return a.ui < b.ui;
  });

  std::set<std::pair<std::string, Provenance>> seen;
  for (auto& t : terms) {
    if (set.terms.size() >= policy.max_terms) break;
    if (seen.emplace(text::normalize(t.term), t.provenance).second) set.terms.push_back(std::move(t));
  }
  return set;
}

std::string MeshKb::serialize() const {
  std::ostringstream out;
  for (const auto& [ui, d] : descriptors_) {
    out << ui << '\t' << d.name << '\t' << text::join(d.tree_numbers, ";") << '\t' << d.scope_note << '\t'
        << text::join(d.entry_terms, "|") << '\n';
  }
  return out.str();
}

MeshKb ingest_descriptors(std::istream& source, SourceFormat format) {
  std::size_t skipped = 0;
  if (format == SourceFormat::kAuto) {
    while (true) {
      const int c = source.peek();
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        source.get();
        ++skipped;
        continue;
      }
      if (c == 0xEF) {  // UTF-8 byte order mark
        char bom[3];
        source.read(bom, 3);
        skipped += 3;
        continue;
      }
      format = (c == '<') ? SourceFormat::kXml : SourceFormat::kTsv;
      break;
    }
  }
  return format == SourceFormat::kXml ? ingest_xml(source, skipped) : ingest_tsv(source, skipped);
}

MeshKb ingest_file(const std::string& path, SourceFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIngestion, "cannot open descriptor source " + path);
  return ingest_descriptors(in, format);
}

}  // namespace sysrev::mesh
