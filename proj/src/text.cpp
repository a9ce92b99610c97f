#include "sysrev/text.hpp"

#include "sysrev/error.hpp"

namespace sysrev {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInput: return "input";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kDuplicate: return "duplicate";
    case ErrorCode::kIngestion: return "ingestion";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kSyntax: return "syntax";
    case ErrorCode::kStructural: return "structural";
    case ErrorCode::kTransport: return "transport";
    case ErrorCode::kRemote: return "remote";
    case ErrorCode::kProvider: return "provider";
    case ErrorCode::kCassetteMiss: return "cassette_miss";
    case ErrorCode::kDimension: return "dimension";
    case ErrorCode::kEmptyIndex: return "empty_index";
    case ErrorCode::kEmptyContext: return "empty_context";
    case ErrorCode::kGeneration: return "generation";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kReference: return "reference";
    case ErrorCode::kStorage: return "storage";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

}  // namespace sysrev

namespace sysrev::text {

char32_t decode_utf8(std::string_view s, std::size_t& pos) {
  const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(s[i]); };
  const unsigned char b0 = byte(pos);
  if (b0 < 0x80) {
    ++pos;
    return b0;
  }
  int extra = 0;
  char32_t cp = 0;
  char32_t min = 0;
  if ((b0 & 0xE0) == 0xC0) {
    extra = 1;
    cp = b0 & 0x1F;
    min = 0x80;
  } else if ((b0 & 0xF0) == 0xE0) {
    extra = 2;
    cp = b0 & 0x0F;
    min = 0x800;
  } else if ((b0 & 0xF8) == 0xF0) {
    extra = 3;
    cp = b0 & 0x07;
    min = 0x10000;
  } else {
    ++pos;
    return 0xFFFD;
  }
  if (pos + extra >= s.size()) {
    ++pos;
    return 0xFFFD;
  }
  for (int i = 1; i <= extra; ++i) {
    const unsigned char b = byte(pos + i);
    if ((b & 0xC0) != 0x80) {
      ++pos;
      return 0xFFFD;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
    ++pos;
    return 0xFFFD;
  }
  pos += extra + 1;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::size_t find_invalid_utf8(std::string_view s) {
  std::size_t pos = 0;
  while (pos < s.size()) {
    const std::size_t start = pos;
    const unsigned char b0 = static_cast<unsigned char>(s[pos]);
    const char32_t cp = decode_utf8(s, pos);
    // A genuine U+FFFD in the input is three bytes; a one-byte advance means
    // the decoder rejected the sequence.
    if (cp == 0xFFFD && pos == start + 1 && b0 >= 0x80) return start;
  }
  return std::string_view::npos;
}

std::size_t char_count(std::string_view s) {
  std::size_t n = 0;
  std::size_t pos = 0;
  while (pos < s.size()) {
    decode_utf8(s, pos);
    ++n;
  }
  return n;
}

bool is_space(char32_t cp) {
  switch (cp) {
    case U' ': case U'\t': case U'\n': case U'\v': case U'\f': case U'\r':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_punct(char32_t cp) {
  if (cp < 0x80) {
    if (cp == U'-') return false;
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
           (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
  }
  switch (cp) {
    case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
    case 0xD7: case 0xF7: case 0x3001: case 0x3002: case 0x3003:
      return true;
    default:
      break;
  }
  // Dashes other than the ASCII hyphen are treated as separators.
  return (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E);
}

char32_t to_lower(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return cp + 0x20;
  if (cp < 0xC0) return cp;
  if (cp <= 0xDE) return cp == 0xD7 ? cp : cp + 0x20;
  if (cp >= 0x100 && cp <= 0x17F) {
    if (cp == 0x130) return U'i';
    if (cp == 0x178) return 0xFF;
    if ((cp <= 0x12F) || (cp >= 0x132 && cp <= 0x137) || (cp >= 0x14A && cp <= 0x177)) {
      return (cp % 2 == 0) ? cp + 1 : cp;
    }
    if ((cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E)) {
      return (cp % 2 == 1) ? cp + 1 : cp;
    }
    return cp;
  }
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 0x20;
  if (cp == 0x386) return 0x3AC;
  if (cp >= 0x388 && cp <= 0x38A) return cp + 0x25;
  if (cp == 0x38C) return 0x3CC;
  if (cp == 0x38E || cp == 0x38F) return cp + 0x3F;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
  return cp;
}

std::string casefold(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t pos = 0;
  while (pos < s.size()) {
    const std::size_t start = pos;
    const char32_t cp = decode_utf8(s, pos);
    if (cp == 0xFFFD && pos == start + 1) {
      out.push_back(s[start]);  // keep undecodable bytes untouched
      continue;
    }
    append_utf8(out, to_lower(cp));
  }
  return out;
}

std::string trim(std::string_view s) {
  std::size_t begin = 0;
  std::size_t end = s.size();
  // ASCII whitespace only.
  const auto space_at = [&](std::size_t i) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  };
  while (begin < end && space_at(begin)) ++begin;
  while (end > begin && space_at(end - 1)) --end;
  return std::string(s.substr(begin, end - begin));
}

std::string normalize(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const char32_t cp = decode_utf8(s, pos);
    if (is_space(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    append_utf8(out, to_lower(cp));
  }
  return out;
}

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> tokens;
  std::size_t pos = 0;
  std::size_t run_begin = std::string_view::npos;

  const auto flush = [&](std::size_t run_end) {
    if (run_begin == std::string_view::npos) return;
    std::size_t b = run_begin;
    std::size_t e = run_end;
    while (b < e && s[b] == '-') ++b;
    while (e > b && s[e - 1] == '-') --e;
    if (b < e) tokens.push_back(Token{std::string(s.substr(b, e - b)), b, e});
    run_begin = std::string_view::npos;
  };

  while (pos < s.size()) {
    const std::size_t start = pos;
    const char32_t cp = decode_utf8(s, pos);
    if (is_space(cp) || is_punct(cp)) {
      flush(start);
    } else if (run_begin == std::string_view::npos) {
      run_begin = start;
    }
  }
  flush(s.size());
  return tokens;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t at = s.find(sep, start);
    if (at == std::string_view::npos) {
      parts.emplace_back(s.substr(start));
      break;
    }
    parts.emplace_back(s.substr(start, at - start));
    start = at + 1;
  }
  return parts;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

bool glob_match(std::string_view pattern, std::string_view value) {
  const std::string p = casefold(pattern);
  const std::string v = casefold(value);
  std::size_t pi = 0;
  std::size_t vi = 0;
  std::size_t star = std::string::npos;
  std::size_t mark = 0;
  while (vi < v.size()) {
    if (pi < p.size() && p[pi] == '*') {
      star = pi++;
      mark = vi;
    } else if (pi < p.size() && p[pi] == v[vi]) {
      ++pi;
      ++vi;
    } else if (star != std::string::npos) {
      pi = star + 1;
      vi = ++mark;
    } else {
      return false;
    }
  }
  while (pi < p.size() && p[pi] == '*') ++pi;
  return pi == p.size();
}

std::string strip_list_marker(std::string_view line) {
  std::string s = trim(line);
  std::size_t i = 0;
  while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
  if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) {
    s = trim(std::string_view(s).substr(i + 1));
  } else if (!s.empty() && (s[0] == '-' || s[0] == '*') && (s.size() == 1 || s[1] == ' ')) {
    s = trim(std::string_view(s).substr(1));
  } else if (s.rfind("\xE2\x80\xA2", 0) == 0) {
    s = trim(std::string_view(s).substr(3));
  }

  static constexpr std::string_view kPairs[][2] = {
      {"\"", "\""}, {"'", "'"}, {"\xE2\x80\x9C", "\xE2\x80\x9D"}, {"\xE2\x80\x98", "\xE2\x80\x99"}};
  for (const auto& pair : kPairs) {
    const std::string_view open = pair[0];
    const std::string_view close = pair[1];
    if (s.size() >= open.size() + close.size() && s.compare(0, open.size(), open) == 0 &&
        s.compare(s.size() - close.size(), close.size(), close) == 0) {
      s = trim(std::string_view(s).substr(open.size(), s.size() - open.size() - close.size()));
      break;
    }
  }
  return s;
}

bool iequals(std::string_view a, std::string_view b) {
  return casefold(a) == casefold(b);
}

bool contains_phrase(std::string_view haystack, std::string_view phrase) {
  const auto needle = tokenize(phrase);
  if (needle.empty()) return false;
  const auto hay = tokenize(haystack);
  if (hay.size() < needle.size()) return false;
  std::vector<std::string> needle_folded;
  needle_folded.reserve(needle.size());
  for (const auto& t : needle) needle_folded.push_back(casefold(t.text));
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    bool ok = true;
    for (std::size_t j = 0; j < needle.size() && ok; ++j) {
      ok = casefold(hay[i + j].text) == needle_folded[j];
    }
    if (ok) return true;
  }
  return false;
}

}  // namespace sysrev::text
