#include "rankserve/query_parser.hpp"

namespace rankserve {

ParsedQuery parse_query(std::string_view text, const Lexicon& lexicon) {
  ParsedQuery pq;
  pq.raw = std::string(text);
  pq.tokens = tokenize(text);
  if (pq.tokens.empty()) throw EmptyQuery();

  std::vector<bool> consumed(pq.tokens.size(), false);

  // First adjacent (number, unit alias) pair wins.
  for (std::size_t i = 0; i + 1 < pq.tokens.size(); ++i) {
    if (!is_number_token(pq.tokens[i])) continue;
    auto it = lexicon.unit_aliases.find(pq.tokens[i + 1]);
    if (it == lexicon.unit_aliases.end()) continue;
    pq.size = SizeSpec{parse_number_token(pq.tokens[i]), it->second};
    consumed[i] = consumed[i + 1] = true;
    break;
  }

  for (const auto& m : scan_phrases(pq.tokens, lexicon.facet_phrases, consumed)) {
    pq.facets.insert(m.phrase);
  }

  auto brand_matches =
      scan_phrases(pq.tokens, lexicon.brand_phrases, consumed, /*single_match=*/true);
  if (!brand_matches.empty()) pq.brand = brand_matches.front().phrase;

  for (std::size_t i = 0; i < pq.tokens.size(); ++i) {
    if (consumed[i]) continue;
    if (lexicon.stopwords.count(pq.tokens[i])) {
      consumed[i] = true;
    } else {
      pq.head_terms.push_back(pq.tokens[i]);
    }
  }
  return pq;
}

}  // namespace rankserve
