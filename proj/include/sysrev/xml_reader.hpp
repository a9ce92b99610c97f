#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sysrev::xml {

enum class EventKind { kStartElement, kEndElement, kText, kEndOfDocument };

struct Event {
  EventKind kind = EventKind::kEndOfDocument;
  std::string name;  // element name for start/end
  std::vector<std::pair<std::string, std::string>> attributes;
  std::string text;    // decoded character data for kText
  std::size_t offset = 0;  // byte offset where the event began
};

/// Element subtree materialized from the event stream. `text` holds every
/// descendant character in document order (inner text).
struct Element {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<Element> children;
  std::string text;

  const Element* child(std::string_view child_name) const;
  std::vector<const Element*> children_named(std::string_view child_name) const;
  std::string attribute(std::string_view key) const;
};

/// Pull parser over a byte stream. Handles comments, processing
/// instructions, DOCTYPE (including an internal subset), CDATA, the five
/// predefined entities and numeric character references. Well-formedness
/// errors throw OffsetError(kParse) carrying the byte offset.
class Reader {
 public:
  explicit Reader(std::istream& in);

  const Event& next();

  /// Consumes events up to and including the end tag matching `start`
  /// (which must be the event just returned by next()).
  Element read_element(const Event& start);

  std::size_t offset() const noexcept { return consumed_; }
  std::size_t depth() const noexcept { return open_.size(); }

 private:
  int peek();
  int get();
  bool starts_with(std::string_view s);
  void expect(std::string_view s);
  [[noreturn]] void fail(const std::string& message) const;

  void skip_until(std::string_view terminator);
  std::string read_name();
  std::string read_attribute_value();
  void append_reference(std::string& out);
  void skip_doctype();
  bool fill(std::size_t want);

  std::istream& in_;
  std::string buffer_;
  std::size_t pos_ = 0;
  std::size_t consumed_ = 0;
  std::vector<std::string> open_;
  bool pending_end_ = false;
  bool seen_root_ = false;
  Event event_;
};

}  // namespace sysrev::xml
