#include "rankserve/search_service.hpp"

#include <algorithm>
#include <chrono>

#include "rankserve/feedback.hpp"

namespace rankserve {

using nlohmann::json;

SearchService::SearchService(const Catalog* catalog, const InvertedIndex* index,
                             const Lexicon* lexicon, FeatureStore* store, std::size_t retrieve_k)
    : catalog_(catalog), index_(index), lexicon_(lexicon), store_(store),
      retrieve_k_(retrieve_k) {}

namespace {

std::vector<std::string> split_tokens(const std::string& joined) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < joined.size()) {
    std::size_t end = joined.find(' ', start);
    if (end == std::string::npos) end = joined.size();
    if (end > start) out.push_back(joined.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

FeaturePayload parsed_query_payload(const ParsedQuery& pq) {
  FeaturePayload payload;
  payload["tokens"] = join_tokens(pq.tokens);
  payload["head_terms"] = join_tokens(pq.head_terms);
  payload["facets"] = pq.facets;
  if (pq.brand) payload["brand"] = *pq.brand;
  if (pq.size) {
    payload["size_magnitude"] = pq.size->magnitude;
    payload["size_unit"] = pq.size->unit;
  }
  return payload;
}

ParsedQuery parsed_query_from_payload(const std::string& raw, const FeaturePayload& payload) {
  ParsedQuery pq;
  pq.raw = raw;
  pq.tokens = split_tokens(std::get<std::string>(payload.at("tokens")));
  pq.head_terms = split_tokens(std::get<std::string>(payload.at("head_terms")));
  pq.facets = std::get<std::set<std::string>>(payload.at("facets"));
  if (auto it = payload.find("brand"); it != payload.end()) {
    pq.brand = std::get<std::string>(it->second);
  }
  if (auto it = payload.find("size_magnitude"); it != payload.end()) {
    SizeSpec size;
    size.magnitude = std::get<double>(it->second);
    size.unit = std::get<std::string>(payload.at("size_unit"));
    pq.size = size;
  }
  return pq;
}

}  // namespace

ParsedQuery SearchService::parse_cached(const std::string& query, std::int64_t now) const {
  auto tokens = tokenize(query);
  if (tokens.empty()) throw EmptyQuery();
  FeatureKey key{FeatureNamespace::query, join_tokens(tokens)};
  if (auto rec = store_->get(key, now)) {
    return parsed_query_from_payload(query, rec->payload);
  }
  ParsedQuery pq = parse_query(query, *lexicon_);
  store_->put(key, parsed_query_payload(pq), kQueryCacheTtlSeconds, now);
  return pq;
}

SearchResponse SearchService::handle_search(const SearchRequest& req, const RankingModel& model,
                                            std::int64_t now) const {
  auto started = std::chrono::steady_clock::now();
  if (req.k < 1 || req.k > kMaxResultK) {
    throw BadRequest("invalid_k", "k must be between 1 and " + std::to_string(kMaxResultK));
  }

  ParsedQuery pq;
  try {
    pq = parse_cached(req.query, now);
  } catch (const EmptyQuery&) {
    throw BadRequest("empty_query", "query has no tokens");
  }

  SearchResponse resp;
  resp.model_version = model.version;
  resp.served_at = now;

  auto candidates = retrieve(pq, *index_, *catalog_, retrieve_k_);
  if (!candidates.empty()) {
    // retrieve() sorts by lexical score descending, so the normalizing
    // max is the head of the list.
    double max_lexical = candidates.front().lexical_score;

    std::optional<UserProfile> profile;
    if (req.customer_id) profile = load_profile(*store_, *req.customer_id, now);
    const UserProfile* profile_ptr = profile ? &*profile : nullptr;

    std::int64_t max_pop = catalog_->max_purchase_count();
    std::vector<ScoredCandidate> scored;
    scored.reserve(candidates.size());
    for (const auto& cand : candidates) {
      const Product* product = catalog_->find(cand.product_id);
      if (!product) continue;
      scored.push_back(
          {cand, extract_features(pq, cand, *product, profile_ptr, max_lexical, max_pop)});
    }

    auto ranked = rank(model, scored);
    std::size_t n = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(req.k));
    resp.results.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Product* product = catalog_->find(ranked[i].product_id);
      resp.results.push_back(
          {ranked[i].product_id, product ? product->title : "", ranked[i].score,
           static_cast<std::int64_t>(ranked[i].rank)});
    }
  }

  auto elapsed = std::chrono::steady_clock::now() - started;
  resp.latency_ms = std::chrono::duration<double, std::milli>(elapsed).count();
  return resp;
}

json search_response_to_json(const SearchResponse& resp) {
  json results = json::array();
  for (const auto& item : resp.results) {
    results.push_back({{"product_id", item.product_id},
                       {"title", item.title},
                       {"score", item.score},
                       {"rank", item.rank}});
  }
  return json{{"results", std::move(results)},
              {"model_version", resp.model_version},
              {"served_at", resp.served_at},
              {"latency_ms", resp.latency_ms}};
}

SearchRequest search_request_from_json(const json& obj) {
  if (!obj.is_object()) throw BadRequest("malformed_body", "request body must be a JSON object");
  SearchRequest req;
  if (!obj.contains("query") || !obj.at("query").is_string()) {
    throw BadRequest("empty_query", "field 'query' must be a string");
  }
  req.query = obj.at("query").get<std::string>();
  if (obj.contains("customer_id") && !obj.at("customer_id").is_null()) {
    if (!obj.at("customer_id").is_string()) {
      throw BadRequest("malformed_body", "customer_id must be a string");
    }
    req.customer_id = obj.at("customer_id").get<std::string>();
  }
  if (obj.contains("k") && !obj.at("k").is_null()) {
    if (!obj.at("k").is_number_integer()) throw BadRequest("invalid_k", "k must be an integer");
    req.k = obj.at("k").get<std::int64_t>();
  }
  return req;
}

}  // namespace rankserve
