#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace flipdeck::text {

std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);

// Unicode NFC normalization. Invalid UTF-8 is returned unchanged.
std::string nfc(std::string_view s);

// Splits on '\n', dropping a trailing '\r' from each line.
std::vector<std::string> split_lines(std::string_view s);

// Lowercased word tokens: maximal runs of ASCII alphanumerics or non-ASCII
// bytes. Punctuation and whitespace separate tokens.
std::set<std::string> word_token_set(std::string_view s);

// Collapses internal whitespace runs to a single space and trims.
std::string squash_whitespace(std::string_view s);

bool istarts_with(std::string_view s, std::string_view prefix);

} // namespace flipdeck::text
