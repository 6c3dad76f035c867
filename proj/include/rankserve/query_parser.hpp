#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rankserve/lexicon.hpp"

namespace rankserve {

class EmptyQuery : public Error {
 public:
  EmptyQuery() : Error("query normalizes to zero tokens") {}
};

// Query text split into head terms, brand, facets and size constraint.
// Every normalized token is consumed exactly once: by the size pair, a
// facet phrase, the brand phrase, the stopword list, or head_terms.
struct ParsedQuery {
  std::string raw;
  std::vector<std::string> tokens;      // all normalized tokens, in order
  std::vector<std::string> head_terms;  // unconsumed remainder, in order
  std::optional<std::string> brand;
  std::set<std::string> facets;
  std::optional<SizeSpec> size;

  friend bool operator==(const ParsedQuery&, const ParsedQuery&) = default;
};

// Fixed pipeline: normalize, size pair, facets (longest match first),
// brand (single longest), stopwords, remainder = head terms.
ParsedQuery parse_query(std::string_view text, const Lexicon& lexicon);

}  // namespace rankserve
