#include "rankserve/common.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <limits>

namespace rankserve {

namespace {

bool is_ascii_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::string norm;
  norm.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (c >= 0x80) {
      norm.push_back(static_cast<char>(c));
    } else if (std::isalnum(c)) {
      norm.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '.' && i > 0 && i + 1 < text.size() &&
               is_ascii_digit(text[i - 1]) && is_ascii_digit(text[i + 1])) {
      norm.push_back('.');
    } else {
      norm.push_back(' ');
    }
  }
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < norm.size()) {
    while (pos < norm.size() && norm[pos] == ' ') ++pos;
    std::size_t end = pos;
    while (end < norm.size() && norm[end] != ' ') ++end;
    if (end > pos) tokens.emplace_back(norm.substr(pos, end - pos));
    pos = end;
  }
  return tokens;
}

std::string normalize_phrase(std::string_view text) {
  return join_tokens(tokenize(text));
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

bool is_number_token(std::string_view tok) {
  if (tok.empty()) return false;
  std::size_t i = 0;
  while (i < tok.size() && is_ascii_digit(tok[i])) ++i;
  if (i == 0) return false;  // must start with a digit
  if (i == tok.size()) return true;
  if (tok[i] != '.') return false;
  ++i;
  if (i == tok.size()) return false;
  while (i < tok.size() && is_ascii_digit(tok[i])) ++i;
  return i == tok.size();
}

double parse_number_token(std::string_view tok) {
  return std::strtod(std::string(tok).c_str(), nullptr);
}

std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

bool is_heldout_session(std::string_view session_id) noexcept {
  return fnv1a64(session_id) % 5 == 0;
}

std::uint64_t DetRng::below(std::uint64_t n) {
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double DetRng::unit() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

void log_line(const char* level, const std::string& msg) {
  std::fprintf(stderr, "[%s] %s\n", level, msg.c_str());
}

}  // namespace rankserve
