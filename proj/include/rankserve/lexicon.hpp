#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rankserve/common.hpp"

namespace rankserve {

class MalformedLexicon : public Error {
 public:
  using Error::Error;
};

// Brand/facet phrase tables, unit alias map and stopword list driving the
// query parser and the catalog attribute extractor. All phrases are stored
// in normalized single-space form; aliases and stopwords are single tokens.
struct Lexicon {
  std::set<std::string> brand_phrases;
  std::set<std::string> facet_phrases;
  std::map<std::string, std::string> unit_aliases;  // alias -> canonical
  std::set<std::string> stopwords;

  std::set<std::string> canonical_units() const;

  friend bool operator==(const Lexicon&, const Lexicon&) = default;
};

// JSON object with keys brands, facets, units, stopwords; all optional.
Lexicon load_lexicon(const std::string& path);
Lexicon load_lexicon_from_string(const std::string& json_text);
void save_lexicon(const Lexicon& lex, const std::string& path);

// The shipped defaults (unit table oz/lb/g/kg/ml/l/gal/ct plus stopwords
// a/the/of/for/and); gen-data bakes these into the lexicon file.
Lexicon default_lexicon_base();

// One phrase match in a token stream.
struct PhraseMatch {
  std::size_t start = 0;
  std::size_t len = 0;
  std::string phrase;
};

// Greedy longest-match-first scan over unconsumed tokens: longer phrases
// first, leftmost start on equal length. Consumed slots are skipped and
// matched slots are marked consumed. With single_match, stops after the
// first (longest, leftmost) hit.
std::vector<PhraseMatch> scan_phrases(const std::vector<std::string>& tokens,
                                      const std::set<std::string>& phrases,
                                      std::vector<bool>& consumed,
                                      bool single_match = false);

}  // namespace rankserve
