#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rankserve/catalog.hpp"
#include "rankserve/common.hpp"
#include "rankserve/feature_store.hpp"
#include "rankserve/lexicon.hpp"
#include "rankserve/query_parser.hpp"
#include "rankserve/ranker.hpp"
#include "rankserve/retrieval.hpp"

namespace rankserve {

// Client-visible request failure; code is machine-readable ("empty_query",
// "invalid_k"), the message human-readable.
struct BadRequest : Error {
  std::string code;
  BadRequest(std::string code_, const std::string& message) : Error(message), code(std::move(code_)) {}
};

struct SearchRequest {
  std::optional<std::string> customer_id;
  std::string query;
  std::int64_t k = 10;
};

struct SearchResultItem {
  std::string product_id;
  std::string title;
  double score = 0.0;
  std::int64_t rank = 0;
};

struct SearchResponse {
  std::vector<SearchResultItem> results;
  std::int64_t model_version = 0;
  std::int64_t served_at = 0;
  double latency_ms = 0.0;
};

inline constexpr std::int64_t kMaxResultK = 50;
inline constexpr std::int64_t kQueryCacheTtlSeconds = 86400;

// The full ranking pipeline minus HTTP and model ownership: parse (with a
// 24h parsed-query cache in the store), retrieve, fetch the profile,
// extract features, rank, truncate. Callers pass the model so one request
// never mixes versions.
class SearchService {
 public:
  SearchService(const Catalog* catalog, const InvertedIndex* index, const Lexicon* lexicon,
                FeatureStore* store, std::size_t retrieve_k = 100);

  SearchResponse handle_search(const SearchRequest& req, const RankingModel& model,
                               std::int64_t now) const;

  // Cache-aware parse used by handle_search; exposed so tests can check
  // cache hits reproduce fresh parses exactly.
  ParsedQuery parse_cached(const std::string& query, std::int64_t now) const;

 private:
  const Catalog* catalog_;
  const InvertedIndex* index_;
  const Lexicon* lexicon_;
  FeatureStore* store_;
  std::size_t retrieve_k_;
};

nlohmann::json search_response_to_json(const SearchResponse& resp);
SearchRequest search_request_from_json(const nlohmann::json& obj);

}  // namespace rankserve
