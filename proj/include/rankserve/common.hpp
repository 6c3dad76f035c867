#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rankserve {

// Base for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FileUnreadable : public Error {
 public:
  explicit FileUnreadable(const std::string& path)
      : Error("cannot read file: " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// A size attribute: positive magnitude plus a canonical unit tag.
struct SizeSpec {
  double magnitude = 0.0;
  std::string unit;
  friend bool operator==(const SizeSpec&, const SizeSpec&) = default;
};

// Text normalizer shared by the query parser, the attribute extractor and
// the index builder: lowercase, punctuation to spaces ('.' between two
// digits survives so decimal magnitudes stay one token), collapse
// whitespace, split.
std::vector<std::string> tokenize(std::string_view text);

// Normalized single-space phrase form of `text` (tokenize + join).
// Empty result means the phrase had no token content.
std::string normalize_phrase(std::string_view text);

std::string join_tokens(const std::vector<std::string>& tokens);

// Integer or decimal literal ("1", "12.5"). No signs, no word numbers.
bool is_number_token(std::string_view tok);
double parse_number_token(std::string_view tok);

// FNV-1a, used for the deterministic held-out session split.
std::uint64_t fnv1a64(std::string_view s) noexcept;

// Sessions hashing to 0 mod 5 form the 20% held-out evaluation split.
bool is_heldout_session(std::string_view session_id) noexcept;

// mt19937_64 engine with hand-rolled draws; std distributions are
// implementation-defined and would break cross-platform determinism.
class DetRng {
 public:
  explicit DetRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, n). n must be positive. Rejection sampled.
  std::uint64_t below(std::uint64_t n);

  // Uniform in [0, 1), 53-bit resolution.
  double unit();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

void log_line(const char* level, const std::string& msg);

}  // namespace rankserve
