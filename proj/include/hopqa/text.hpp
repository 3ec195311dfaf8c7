#pragma once
// Small text toolbox: UTF-8 iteration, unicode-aware folding and
// punctuation stripping, whitespace handling, hashing.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hopqa::text {

// Trims ASCII whitespace from both ends.
std::string_view trim(std::string_view s);

bool starts_with(std::string_view s, std::string_view prefix);

// Decodes one UTF-8 codepoint starting at s[i]; advances i past it.
// Malformed bytes decode as U+FFFD and advance by one.
char32_t decode_utf8(std::string_view s, size_t& i);

void append_utf8(std::string& out, char32_t cp);

bool is_punctuation(char32_t cp);  // Unicode general category P*
char32_t to_lower(char32_t cp);    // simple (single-codepoint) lowering

// Lowercases, deletes punctuation, splits on whitespace runs, drops empties.
// The character-level rules are unicode-wide; used both by the Cover-EM
// normalizer and the lexical index analyzer.
std::vector<std::string> normalize_tokens(std::string_view s);

// Whitespace token count, used as the approximate token accounting when a
// backend reports no usage.
int whitespace_token_count(std::string_view s);

// Hex SHA-256 of a string (content keys for judgment caching, manifests).
std::string sha256_hex(std::string_view data);

}  // namespace hopqa::text
