#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rankserve/catalog.hpp"
#include "rankserve/query_parser.hpp"

namespace rankserve {

struct Candidate {
  std::string product_id;
  double lexical_score = 0.0;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

inline constexpr double kBrandBonus = 2.0;

// Token and brand postings over normalized title tokens. Posting lists are
// product_id-ascending with no duplicates; df(token) equals posting length.
class InvertedIndex {
 public:
  static InvertedIndex build(const Catalog& catalog);

  std::size_t doc_count() const { return doc_count_; }
  std::size_t doc_freq(const std::string& token) const;
  const std::vector<std::string>* postings(const std::string& token) const;
  const std::vector<std::string>* brand_postings(const std::string& brand) const;

  // ln(1 + (N - df + 0.5) / (df + 0.5)); positive for every indexed token.
  double idf(const std::string& token) const;

  friend bool operator==(const InvertedIndex&, const InvertedIndex&) = default;

 private:
  std::map<std::string, std::vector<std::string>> postings_;
  std::map<std::string, std::vector<std::string>> brand_postings_;
  std::size_t doc_count_ = 0;
};

// head terms plus the tokens of every matched query facet phrase.
std::set<std::string> query_match_tokens(const ParsedQuery& pq);

// idf sum over distinct match tokens present in the product title, plus
// the brand bonus on brand equality. Iterates match tokens in sorted order
// so sums are bit-identical with the brute-force path.
double lexical_score_for(const ParsedQuery& pq, const Product& product,
                         const InvertedIndex& index);

// Top-k candidates, score-descending, ties product_id-ascending.
// Zero-score products are excluded; empty result is a valid outcome.
std::vector<Candidate> retrieve(const ParsedQuery& pq, const InvertedIndex& index,
                                const Catalog& catalog, std::size_t k);

}  // namespace rankserve
