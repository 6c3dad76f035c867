#include "rankserve/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace rankserve {

InvertedIndex InvertedIndex::build(const Catalog& catalog) {
  InvertedIndex idx;
  idx.doc_count_ = catalog.size();
  // catalog iteration is id-ascending, so posting lists come out sorted
  for (const auto& [id, product] : catalog.products()) {
    std::set<std::string> seen;
    for (const auto& tok : tokenize(product.title)) {
      if (seen.insert(tok).second) idx.postings_[tok].push_back(id);
    }
    if (product.brand) idx.brand_postings_[*product.brand].push_back(id);
  }
  return idx;
}

std::size_t InvertedIndex::doc_freq(const std::string& token) const {
  auto it = postings_.find(token);
  return it == postings_.end() ? 0 : it->second.size();
}

const std::vector<std::string>* InvertedIndex::postings(const std::string& token) const {
  auto it = postings_.find(token);
  return it == postings_.end() ? nullptr : &it->second;
}

const std::vector<std::string>* InvertedIndex::brand_postings(const std::string& brand) const {
  auto it = brand_postings_.find(brand);
  return it == brand_postings_.end() ? nullptr : &it->second;
}

double InvertedIndex::idf(const std::string& token) const {
  double n = static_cast<double>(doc_count_);
  double df = static_cast<double>(doc_freq(token));
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

std::set<std::string> query_match_tokens(const ParsedQuery& pq) {
  std::set<std::string> tokens(pq.head_terms.begin(), pq.head_terms.end());
  for (const auto& facet : pq.facets) {
    for (const auto& tok : tokenize(facet)) tokens.insert(tok);
  }
  return tokens;
}

double lexical_score_for(const ParsedQuery& pq, const Product& product,
                         const InvertedIndex& index) {
  std::vector<std::string> title_tokens = tokenize(product.title);
  std::set<std::string> title_set(title_tokens.begin(), title_tokens.end());
  double score = 0.0;
  for (const auto& tok : query_match_tokens(pq)) {
    if (title_set.count(tok) && index.doc_freq(tok) > 0) score += index.idf(tok);
  }
  if (pq.brand && product.brand && *pq.brand == *product.brand) score += kBrandBonus;
  return score;
}

std::vector<Candidate> retrieve(const ParsedQuery& pq, const InvertedIndex& index,
                                const Catalog& catalog, std::size_t k) {
  if (index.doc_count() != catalog.size()) {
    throw Error("index was not built from this catalog");
  }
  std::unordered_map<std::string, double> scores;
  for (const auto& tok : query_match_tokens(pq)) {
    const auto* plist = index.postings(tok);
    if (!plist) continue;
    double idf = index.idf(tok);
    for (const auto& id : *plist) scores[id] += idf;
  }
  if (pq.brand) {
    if (const auto* blist = index.brand_postings(*pq.brand)) {
      for (const auto& id : *blist) scores[id] += kBrandBonus;
    }
  }

  std::vector<Candidate> candidates;
  candidates.reserve(scores.size());
  for (auto& [id, score] : scores) {
    if (score > 0.0) candidates.push_back({id, score});
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.lexical_score != b.lexical_score) return a.lexical_score > b.lexical_score;
    return a.product_id < b.product_id;
  });
  if (candidates.size() > k) candidates.resize(k);
  return candidates;
}

}  // namespace rankserve
