#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rankserve/catalog.hpp"
#include "rankserve/common.hpp"
#include "rankserve/feedback.hpp"
#include "rankserve/lexicon.hpp"
#include "rankserve/model_registry.hpp"
#include "rankserve/query_parser.hpp"
#include "rankserve/ranker.hpp"

namespace rankserve {

struct SimUser {
  std::string customer_id;
  std::map<std::string, double> brand_pref;  // sparse, values in [0,1]
  std::map<std::string, double> facet_pref;

  bool operator==(const SimUser&) const = default;
};

struct QueryTemplate {
  std::string text;
  std::optional<std::string> facet;
  std::optional<std::string> brand;

  bool operator==(const QueryTemplate&) const = default;
};

struct SyntheticWorld {
  std::uint64_t seed = 0;
  std::vector<SimUser> users;
  Catalog catalog;
  Lexicon lexicon;
  std::vector<QueryTemplate> query_templates;
};

// Deterministic from the seed: fixed brand/facet/noun vocabularies, every
// product gets a brand and 1-3 facets, every user sparse preferences.
SyntheticWorld generate_world(std::uint64_t seed, std::size_t n_users, std::size_t n_products);

// Writes catalog.jsonl, lexicon.json and world.json into dir.
void save_world(const SyntheticWorld& world, const std::string& dir);
SyntheticWorld load_world(const std::string& dir);

struct ClickModelParams {
  double continue_prob = 0.85;
  double w_facet = 0.5;
  double w_brand = 0.3;
  double w_type = 0.2;
  std::uint64_t seed = 7;
};

// Click probability: w_facet * cosine(user facet prefs, product facets)
// + w_brand * brand preference + w_type * 1{query head terms all appear in
// the title}. Value lies in [0,1] because the weights sum to 1.
double relevance(const SimUser& user, const ParsedQuery& pq, const Product& product,
                 const ClickModelParams& params);

struct SessionStub {
  std::string session_id;
  std::string query_text;
  std::int64_t timestamp = 0;
};

// Cascade browse: impressions for every shown item, then a top-down scan.
// At each rank the user clicks with probability r (one rng draw); a click
// emits the click event, draws once more for add-to-cart, and ends the
// session. Without a click the scan continues with probability
// continue_prob (one draw) or abandons. Event ids are
// "<session_id>-e<n>" in emission order.
std::vector<FeedbackEvent> simulate_session(const SimUser& user, const ParsedQuery& pq,
                                            const std::vector<std::string>& served_ids,
                                            const Catalog& catalog,
                                            const ClickModelParams& params, DetRng& rng,
                                            const SessionStub& stub);

struct LoopConfig {
  int rounds = 5;
  int sessions_per_round = 500;
  std::int64_t k = 10;
  std::size_t retrieve_k = 100;
  Hyperparams train;
  GatePolicy gate;
  ClickModelParams click;
  std::int64_t half_life_s = kDefaultHalfLifeSeconds;
  std::string work_dir;
  bool train_enabled = true;
  std::int64_t clock_start = 1700000000;
  std::int64_t seconds_per_session = 60;
};

// click.seed defaults to seed + 1 so one CLI seed pins the whole run.
LoopConfig default_loop_config(std::uint64_t seed, const std::string& work_dir);

struct RoundReport {
  int round = 0;
  std::string phase;  // "baseline", "train" or "final"
  std::int64_t champion_version = 0;
  double ndcg_at_10 = 0.0;  // online metrics over this round's sessions
  double mrr = 0.0;
  std::int64_t pairs_trained = 0;
  bool promoted = false;
  std::int64_t sessions_evaluated = 0;   // held-out sessions at the gate
  double champion_gate_ndcg = 0.0;       // frozen champion ndcg at the gate
};

struct LoopReport {
  LoopConfig config;
  std::uint64_t world_seed = 0;
  std::vector<RoundReport> rounds;
};

// Round 0 serves a baseline with the bootstrap champion; rounds 1..R each
// serve, ingest feedback, retrain, gate and reload; a final round serves
// fresh evaluation sessions with the last champion and ingests nothing.
// With rounds == 0 only the baseline round runs. The work_dir must not
// already contain loop state.
LoopReport run_closed_loop(const SyntheticWorld& world, const LoopConfig& config);

nlohmann::json loop_report_to_json(const LoopReport& report);
void save_loop_report(const LoopReport& report, const std::string& path);

}  // namespace rankserve
