#include "acrec/text.hpp"

namespace acrec::text {
namespace {

// Decodes one code point starting at s[i]; advances i. Malformed sequences
// yield U+FFFD and consume a single byte.
char32_t decode(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int n = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    n = 1;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    n = 2;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    n = 3;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k <= n; ++k) {
    const int c = cont(static_cast<std::size_t>(k));
    if (c < 0) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | static_cast<char32_t>(c);
  }
  i += static_cast<std::size_t>(n) + 1;
  return cp;
}

}  // namespace

bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

std::vector<std::pair<std::size_t, std::size_t>> token_spans(std::string_view s) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t i = 0;
  bool in_token = false;
  std::size_t start = 0;
  while (i < s.size()) {
    const std::size_t at = i;
    const bool space = is_unicode_space(decode(s, i));
    if (space && in_token) {
      spans.emplace_back(start, at);
      in_token = false;
    } else if (!space && !in_token) {
      start = at;
      in_token = true;
    }
  }
  if (in_token) spans.emplace_back(start, s.size());
  return spans;
}

std::size_t count_tokens(std::string_view s) { return token_spans(s).size(); }

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  for (auto [b, e] : token_spans(s)) out.emplace_back(s.substr(b, e - b));
  return out;
}

std::string truncate_tokens(std::string_view s, std::size_t max_tokens) {
  const auto spans = token_spans(s);
  if (spans.size() <= max_tokens) return std::string(s);
  if (max_tokens == 0) return {};
  return std::string(s.substr(0, spans[max_tokens - 1].second));
}

std::string trim(std::string_view s) {
  const auto spans = token_spans(s);
  if (spans.empty()) return {};
  return std::string(s.substr(spans.front().first, spans.back().second - spans.front().first));
}

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

}  // namespace acrec::text
