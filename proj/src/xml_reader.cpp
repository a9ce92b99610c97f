#include "sysrev/xml_reader.hpp"

#include <cstdint>

#include "sysrev/error.hpp"
#include "sysrev/text.hpp"

namespace sysrev::xml {
namespace {

constexpr std::size_t kChunk = 1 << 16;

bool is_name_char(int c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '_' || c == ':' || c == '-' || c == '.' || c >= 0x80;
}

bool is_ws(int c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

}  // namespace

const Element* Element::child(std::string_view child_name) const {
  for (const auto& c : children) {
    if (c.name == child_name) return &c;
  }
  return nullptr;
}

std::vector<const Element*> Element::children_named(std::string_view child_name) const {
  std::vector<const Element*> out;
  for (const auto& c : children) {
    if (c.name == child_name) out.push_back(&c);
  }
  return out;
}

std::string Element::attribute(std::string_view key) const {
  for (const auto& [k, v] : attributes) {
    if (k == key) return v;
  }
  return {};
}

Reader::Reader(std::istream& in) : in_(in) {}

bool Reader::fill(std::size_t want) {
  while (buffer_.size() - pos_ < want) {
    if (pos_ > 0) {
      buffer_.erase(0, pos_);
      pos_ = 0;
    }
    const std::size_t old = buffer_.size();
    buffer_.resize(old + kChunk);
    in_.read(buffer_.data() + old, static_cast<std::streamsize>(kChunk));
    const auto got = static_cast<std::size_t>(in_.gcount());
    buffer_.resize(old + got);
    if (got == 0) return buffer_.size() - pos_ >= want;
  }
  return true;
}

int Reader::peek() {
  if (!fill(1)) return -1;
  return static_cast<unsigned char>(buffer_[pos_]);
}

int Reader::get() {
  const int c = peek();
  if (c >= 0) {
    ++pos_;
    ++consumed_;
  }
  return c;
}

bool Reader::starts_with(std::string_view s) {
  if (!fill(s.size())) return false;
  return std::string_view(buffer_).substr(pos_, s.size()) == s;
}

void Reader::expect(std::string_view s) {
  if (!starts_with(s)) fail("expected '" + std::string(s) + "'");
  pos_ += s.size();
  consumed_ += s.size();
}

void Reader::fail(const std::string& message) const {
  throw OffsetError(ErrorCode::kParse, "malformed XML: " + message, consumed_);
}

void Reader::skip_until(std::string_view terminator) {
  while (!starts_with(terminator)) {
    if (get() < 0) fail("unterminated construct, expected '" + std::string(terminator) + "'");
  }
  expect(terminator);
}

std::string Reader::read_name() {
  std::string name;
  while (is_name_char(peek())) name.push_back(static_cast<char>(get()));
  if (name.empty()) fail("expected a name");
  return name;
}

void Reader::append_reference(std::string& out) {
  // Caller consumed '&'.
  std::string ref;
  while (true) {
    const int c = get();
    if (c < 0) fail("unterminated entity reference");
    if (c == ';') break;
    ref.push_back(static_cast<char>(c));
    if (ref.size() > 12) fail("entity reference too long");
  }
  if (ref == "lt") out += '<';
  else if (ref == "gt") out += '>';
  else if (ref == "amp") out += '&';
  else if (ref == "quot") out += '"';
  else if (ref == "apos") out += '\'';
  else if (!ref.empty() && ref[0] == '#') {
    std::uint32_t cp = 0;
    try {
      cp = (ref.size() > 1 && (ref[1] == 'x' || ref[1] == 'X'))
               ? static_cast<std::uint32_t>(std::stoul(ref.substr(2), nullptr, 16))
               : static_cast<std::uint32_t>(std::stoul(ref.substr(1), nullptr, 10));
    } catch (const std::exception&) {
      fail("bad character reference &" + ref + ";");
    }
    if (cp == 0 || cp > 0x10FFFF) fail("character reference out of range");
    text::append_utf8(out, static_cast<char32_t>(cp));
  } else {
    // Undeclared named entity (DTD-defined ones are not expanded); keep it.
    out += '&';
    out += ref;
    out += ';';
  }
}

std::string Reader::read_attribute_value() {
  const int quote = get();
  if (quote != '"' && quote != '\'') fail("expected quoted attribute value");
  std::string value;
  while (true) {
    const int c = get();
    if (c < 0) fail("unterminated attribute value");
    if (c == quote) break;
    if (c == '<') fail("'<' in attribute value");
    if (c == '&') {
      append_reference(value);
    } else {
      value.push_back(static_cast<char>(c));
    }
  }
  return value;
}

void Reader::skip_doctype() {
  expect("<!DOCTYPE");
  int bracket = 0;
  while (true) {
    const int c = get();
    if (c < 0) fail("unterminated DOCTYPE");
    if (c == '[') ++bracket;
    else if (c == ']') --bracket;
    else if (c == '>' && bracket <= 0) return;
    else if (c == '"' || c == '\'') {
      while (true) {
        const int d = get();
        if (d < 0) fail("unterminated DOCTYPE literal");
        if (d == c) break;
      }
    }
  }
}

const Event& Reader::next() {
  event_ = Event{};
  if (pending_end_) {
    pending_end_ = false;
    event_.kind = EventKind::kEndElement;
    event_.name = open_.back();
    event_.offset = consumed_;
    open_.pop_back();
    return event_;
  }

  while (true) {
    event_.offset = consumed_;
    const int c = peek();
    if (c < 0) {
      if (!open_.empty()) fail("unexpected end of document inside <" + open_.back() + ">");
      if (!seen_root_) fail("document has no root element");
      event_.kind = EventKind::kEndOfDocument;
      return event_;
    }

    if (c != '<') {
      std::string data;
      while (true) {
        const int d = peek();
        if (d < 0 || d == '<') break;
        get();
        if (d == '&') {
          append_reference(data);
        } else {
          data.push_back(static_cast<char>(d));
        }
      }
      if (open_.empty()) {
        for (const char ch : data) {
          if (!is_ws(static_cast<unsigned char>(ch))) fail("character data outside the root element");
        }
        continue;
      }
      event_.kind = EventKind::kText;
      event_.text = std::move(data);
      return event_;
    }

    if (starts_with("<?")) {
      skip_until("?>");
      continue;
    }
    if (starts_with("<!--")) {
      expect("<!--");
      skip_until("-->");
      continue;
    }
    if (starts_with("<![CDATA[")) {
      if (open_.empty()) fail("CDATA outside the root element");
      expect("<![CDATA[");
      std::string data;
      while (!starts_with("]]>")) {
        const int d = get();
        if (d < 0) fail("unterminated CDATA section");
        data.push_back(static_cast<char>(d));
      }
      expect("]]>");
      event_.kind = EventKind::kText;
      event_.text = std::move(data);
      return event_;
    }
    if (starts_with("<!DOCTYPE")) {
      if (seen_root_) fail("DOCTYPE after the root element");
      skip_doctype();
      continue;
    }
    if (starts_with("</")) {
      const std::size_t tag_start = consumed_;
      expect("</");
      const std::string name = read_name();
      while (is_ws(peek())) get();
      expect(">");
      if (open_.empty() || open_.back() != name) {
        throw OffsetError(ErrorCode::kParse,
                          "malformed XML: mismatched end tag </" + name + ">" +
                              (open_.empty() ? std::string() : ", expected </" + open_.back() + ">"),
                          tag_start);
      }
      open_.pop_back();
      event_.kind = EventKind::kEndElement;
      event_.name = name;
      return event_;
    }

    expect("<");
    if (open_.empty() && seen_root_) fail("more than one root element");
    event_.kind = EventKind::kStartElement;
    event_.name = read_name();
    while (true) {
      while (is_ws(peek())) get();
      const int d = peek();
      if (d == '>') {
        get();
        break;
      }
      if (d == '/') {
        get();
        expect(">");
        pending_end_ = true;
        break;
      }
      if (d < 0) fail("unterminated start tag <" + event_.name + ">");
      std::string key = read_name();
      while (is_ws(peek())) get();
      expect("=");
      while (is_ws(peek())) get();
      event_.attributes.emplace_back(std::move(key), read_attribute_value());
    }
    seen_root_ = true;
    open_.push_back(event_.name);
    return event_;
  }
}

Element Reader::read_element(const Event& start) {
  Element element;
  element.name = start.name;
  element.attributes = start.attributes;
  while (true) {
    const Event& ev = next();
    switch (ev.kind) {
      case EventKind::kStartElement: {
        const Event copy = ev;
        Element child = read_element(copy);
        element.text += child.text;
        element.children.push_back(std::move(child));
        break;
      }
      case EventKind::kText:
        element.text += ev.text;
        break;
      case EventKind::kEndElement:
        return element;
      case EventKind::kEndOfDocument:
        fail("unexpected end of document inside <" + element.name + ">");
    }
  }
}

}  // namespace sysrev::xml
