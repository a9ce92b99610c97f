#include "sysrev/boolean_query.hpp"

#include <algorithm>

#include "sysrev/error.hpp"
#include "sysrev/text.hpp"

namespace sysrev::pubmed {
namespace {

constexpr int kMaxParseNesting = 64;

std::string strip_quotes(std::string_view s) {
  std::string out;
  for (const char c : s) {
    if (c != '"') out.push_back(c);
  }
  return out;
}

std::string render_term(const BooleanQuery& q) {
  return "\"" + strip_quotes(q.text) + "\"[" + std::string(field_tag_name(q.tag)) + "]";
}

std::string render_node(const BooleanQuery& q);

// Operand of AND: always parenthesized.
std::string render_and_operand(const BooleanQuery& q) {
  if (q.kind == NodeKind::kOr) return render_node(q);
  return "(" + render_node(q) + ")";
}

// Operand of OR or NOT: terms and OR groups stand alone.
std::string render_operand(const BooleanQuery& q) {
  if (q.kind == NodeKind::kTerm || q.kind == NodeKind::kOr) return render_node(q);
  return "(" + render_node(q) + ")";
}

std::string render_node(const BooleanQuery& q) {
  switch (q.kind) {
    case NodeKind::kTerm:
      return render_term(q);
    case NodeKind::kOr: {
      std::string out = "(";
      for (std::size_t i = 0; i < q.children.size(); ++i) {
        if (i > 0) out += " OR ";
        out += render_operand(q.children[i]);
      }
      return out + ")";
    }
    case NodeKind::kAnd: {
      std::string out;
      for (std::size_t i = 0; i < q.children.size(); ++i) {
        if (i > 0) out += " AND ";
        out += render_and_operand(q.children[i]);
      }
      return out;
    }
    case NodeKind::kNot:
      return render_operand(q.children[0]) + " NOT " + render_operand(q.children[1]);
  }
  return {};
}

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  BooleanQuery parse() {
    skip_ws();
    if (pos_ >= s_.size()) fail("empty query");
    BooleanQuery q = parse_or(0);
    skip_ws();
    if (pos_ < s_.size()) fail("unexpected input");
    return q;
  }

 private:
  [[noreturn]] void fail(const std::string& message) const {
    throw OffsetError(ErrorCode::kSyntax, "query syntax error: " + message, pos_);
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\n' || s_[pos_] == '\r')) ++pos_;
  }

  bool at_keyword(std::string_view kw) {
    skip_ws();
    if (s_.compare(pos_, kw.size(), kw) != 0) return false;
    const std::size_t after = pos_ + kw.size();
    if (after < s_.size()) {
      const char c = s_[after];
      if (c != ' ' && c != '\t' && c != '\n' && c != '\r' && c != '(' && c != '"') return false;
    }
    pos_ = after;
    return true;
  }

  BooleanQuery parse_or(int nesting) {
    std::vector<BooleanQuery> parts;
    parts.push_back(parse_and(nesting));
    while (at_keyword("OR")) parts.push_back(parse_and(nesting));
    if (parts.size() == 1) return std::move(parts.front());
    return BooleanQuery::any_of(std::move(parts));
  }

  BooleanQuery parse_and(int nesting) {
    std::vector<BooleanQuery> parts;
    parts.push_back(parse_not(nesting));
    while (at_keyword("AND")) parts.push_back(parse_not(nesting));
    if (parts.size() == 1) return std::move(parts.front());
    return BooleanQuery::all_of(std::move(parts));
  }

  BooleanQuery parse_not(int nesting) {
    BooleanQuery acc = parse_primary(nesting);
    while (at_keyword("NOT")) acc = BooleanQuery::exclude(std::move(acc), parse_primary(nesting));
    return acc;
  }

  BooleanQuery parse_primary(int nesting) {
    skip_ws();
    if (pos_ >= s_.size()) fail("expected a term or '('");
    if (s_[pos_] == '(') {
      if (nesting >= kMaxParseNesting) fail("parentheses nested too deeply");
      ++pos_;
      BooleanQuery inner = parse_or(nesting + 1);
      skip_ws();
      if (pos_ >= s_.size() || s_[pos_] != ')') fail("expected ')'");
      ++pos_;
      return inner;
    }
    return parse_term();
  }

  BooleanQuery parse_term() {
    std::string value;
    if (s_[pos_] == '"') {
      const std::size_t close = s_.find('"', pos_ + 1);
      if (close == std::string_view::npos) {
        pos_ = s_.size();
        fail("unterminated quoted term");
      }
      value = std::string(s_.substr(pos_ + 1, close - pos_ - 1));
      if (text::trim(value).empty()) fail("empty quoted term");
      pos_ = close + 1;
    } else {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && std::string_view(" \t\r\n()[]\"").find(s_[pos_]) == std::string_view::npos) ++pos_;
      value = std::string(s_.substr(start, pos_ - start));
      if (value.empty()) fail("expected a term");
      if (value == "AND" || value == "OR" || value == "NOT") {
        pos_ = start;
        fail("operator '" + value + "' where a term was expected");
      }
    }

    FieldTag tag = FieldTag::kAllFields;
    if (pos_ < s_.size() && s_[pos_] == '[') {
      const std::size_t close = s_.find(']', pos_);
      if (close == std::string_view::npos) fail("unterminated field tag");
      const std::string name = text::normalize(s_.substr(pos_ + 1, close - pos_ - 1));
      if (name == "mesh terms" || name == "mesh" || name == "mh") {
        tag = FieldTag::kMeshTerms;
      } else if (name == "tiab" || name == "title/abstract") {
        tag = FieldTag::kTitleAbstract;
      } else if (name == "all fields" || name == "all") {
        tag = FieldTag::kAllFields;
      } else {
        fail("unknown field tag [" + name + "]");
      }
      pos_ = close + 1;
    }
    return BooleanQuery::term(std::move(value), tag);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string_view field_tag_name(FieldTag tag) {
  switch (tag) {
    case FieldTag::kMeshTerms: return "MeSH Terms";
    case FieldTag::kTitleAbstract: return "tiab";
    case FieldTag::kAllFields: return "All Fields";
  }
  return "All Fields";
}

BooleanQuery BooleanQuery::term(std::string text, FieldTag tag) {
  BooleanQuery q;
  q.kind = NodeKind::kTerm;
  q.text = std::move(text);
  q.tag = tag;
  return q;
}

BooleanQuery BooleanQuery::all_of(std::vector<BooleanQuery> children) {
  BooleanQuery q;
  q.kind = NodeKind::kAnd;
  q.children = std::move(children);
  return q;
}

BooleanQuery BooleanQuery::any_of(std::vector<BooleanQuery> children) {
  BooleanQuery q;
  q.kind = NodeKind::kOr;
  q.children = std::move(children);
  return q;
}

BooleanQuery BooleanQuery::exclude(BooleanQuery left, BooleanQuery right) {
  BooleanQuery q;
  q.kind = NodeKind::kNot;
  q.children.push_back(std::move(left));
  q.children.push_back(std::move(right));
  return q;
}

std::size_t BooleanQuery::depth() const {
  std::size_t deepest = 0;
  for (const auto& c : children) deepest = std::max(deepest, c.depth());
  return deepest + 1;
}

void validate(const BooleanQuery& q) {
  switch (q.kind) {
    case NodeKind::kTerm:
      if (text::trim(strip_quotes(q.text)).empty()) throw Error(ErrorCode::kStructural, "query term text is empty");
      if (!q.children.empty()) throw Error(ErrorCode::kStructural, "query term has children");
      break;
    case NodeKind::kAnd:
    case NodeKind::kOr:
      if (q.children.size() < 2) throw Error(ErrorCode::kStructural, "AND/OR groups need at least two children");
      break;
    case NodeKind::kNot:
      if (q.children.size() != 2) throw Error(ErrorCode::kStructural, "NOT needs exactly two operands");
      break;
  }
  for (const auto& c : q.children) validate(c);
  if (q.depth() > kMaxQueryDepth) throw Error(ErrorCode::kStructural, "query tree deeper than 10 levels");
}

std::string render(const BooleanQuery& query) {
  validate(query);
  return render_node(query);
}

BooleanQuery parse_query(std::string_view text) { return Parser(text).parse(); }

BooleanQuery normalized(BooleanQuery query) {
  for (auto& c : query.children) c = normalized(std::move(c));
  if (query.kind == NodeKind::kAnd || query.kind == NodeKind::kOr) {
    std::sort(query.children.begin(), query.children.end(),
              [](const BooleanQuery& a, const BooleanQuery& b) { return render_node(a) < render_node(b); });
  }
  return query;
}

}  // namespace sysrev::pubmed
