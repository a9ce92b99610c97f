#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

// UTF-8 text helpers shared by the knowledge base, concept extraction and the
// embedder. Folding is simple per-code-point lowercasing (no full Unicode
// case mapping tables, no normalization forms).
namespace sysrev::text {

struct Token {
  std::string text;
  std::size_t begin = 0;  // byte offset into the source string
  std::size_t end = 0;    // one past the last byte

  bool operator==(const Token&) const = default;
};

/// Decodes one code point at `pos`, advancing it. Invalid bytes decode as
/// U+FFFD and consume exactly one byte.
char32_t decode_utf8(std::string_view s, std::size_t& pos);
void append_utf8(std::string& out, char32_t cp);

/// Returns the byte offset of the first invalid UTF-8 sequence, or npos.
std::size_t find_invalid_utf8(std::string_view s);

std::size_t char_count(std::string_view s);

bool is_space(char32_t cp);
bool is_punct(char32_t cp);
char32_t to_lower(char32_t cp);

std::string casefold(std::string_view s);
std::string trim(std::string_view s);

/// casefold + trim + collapse internal whitespace runs into one ASCII space.
std::string normalize(std::string_view s);

/// Splits on whitespace and punctuation. Hyphens are kept when they sit
/// between token characters, so "surgical-site" is one token.
std::vector<Token> tokenize(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// `*` matches any (possibly empty) run; every other character is literal.
/// Both sides are compared after casefold.
bool glob_match(std::string_view pattern, std::string_view value);

/// Trims, then removes a leading list marker ("1.", "2)", "-", "*", U+2022)
/// and one layer of surrounding straight or curly quotes.
std::string strip_list_marker(std::string_view line);

bool iequals(std::string_view a, std::string_view b);

/// Case-insensitive phrase containment on token boundaries: the tokens of
/// `phrase` must appear consecutively in the tokens of `haystack`.
bool contains_phrase(std::string_view haystack, std::string_view phrase);

}  // namespace sysrev::text
