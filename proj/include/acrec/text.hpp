#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace acrec::text {

/// True for code points with the Unicode White_Space property.
bool is_unicode_space(char32_t cp);

/// Byte ranges [begin, end) of whitespace-delimited tokens in UTF-8 `s`.
/// Invalid UTF-8 bytes are treated as non-space.
std::vector<std::pair<std::size_t, std::size_t>> token_spans(std::string_view s);

std::size_t count_tokens(std::string_view s);

std::vector<std::string> tokenize(std::string_view s);

/// Prefix of `s` ending after its `max_tokens`-th token (unchanged if shorter).
std::string truncate_tokens(std::string_view s, std::size_t max_tokens);

/// Strip leading/trailing Unicode whitespace.
std::string trim(std::string_view s);

/// ASCII lower-casing; non-ASCII bytes pass through.
std::string to_lower_ascii(std::string_view s);

}  // namespace acrec::text
