#include "rankserve/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "rankserve/model_registry.hpp"
#include "rankserve/retrain.hpp"
#include "rankserve/retrieval.hpp"
#include "rankserve/search_service.hpp"

namespace rankserve {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Token-disjoint vocabularies so brand, facet, filler and noun words never
// shadow each other during phrase scans.
const std::vector<std::string> kBrands = {
    "acme",       "blue river", "golden farm", "sunrise",    "green valley",
    "prairie gold", "northwind", "casa verde",  "omega",      "red barn",
};
const std::vector<std::string> kFacets = {
    "organic", "gluten free", "low fat",    "sugar free",  "whole grain", "non gmo",
    "unsalted", "vanilla",    "chocolate",  "strawberry",  "family size", "single serve",
};
const std::vector<std::string> kNouns = {
    "milk",   "bread",   "cereal",   "yogurt",  "cheese", "juice", "coffee",
    "tea",    "pasta",   "rice",     "salsa",   "granola", "butter", "eggs",
    "crackers", "cookies", "soup",   "chips",   "honey",  "jam",
};
const std::vector<std::string> kAdjectives = {
    "classic", "premium", "natural", "original", "crunchy", "creamy", "smooth", "hearty",
};
const std::vector<std::string> kUnitAliases = {"oz", "lb", "g", "kg", "ml", "l", "gal", "ct"};
const std::vector<int> kMagnitudes = {4, 6, 8, 12, 16, 24, 32, 48, 64};

std::string pad_number(std::size_t value, std::size_t width) {
  std::string digits = std::to_string(value);
  if (digits.size() >= width) return digits;
  return std::string(width - digits.size(), '0') + digits;
}

}  // namespace

SyntheticWorld generate_world(std::uint64_t seed, std::size_t n_users, std::size_t n_products) {
  if (n_users < 1 || n_products < 1) throw Error("world needs at least one user and product");
  SyntheticWorld world;
  world.seed = seed;
  world.lexicon = default_lexicon_base();
  for (const auto& b : kBrands) world.lexicon.brand_phrases.insert(b);
  for (const auto& f : kFacets) world.lexicon.facet_phrases.insert(f);

  DetRng rng(seed);

  for (std::size_t i = 0; i < n_products; ++i) {
    const std::string& brand = kBrands[rng.below(kBrands.size())];
    const std::string& noun = kNouns[rng.below(kNouns.size())];
    std::size_t facet_target = 1 + rng.below(3);
    std::vector<std::string> facets;
    std::set<std::string> facet_seen;
    while (facets.size() < facet_target) {
      const std::string& f = kFacets[rng.below(kFacets.size())];
      if (facet_seen.insert(f).second) facets.push_back(f);
    }
    bool with_adjective = rng.unit() < 0.5;
    std::size_t adj_idx = with_adjective ? rng.below(kAdjectives.size()) : 0;
    const std::string& unit = kUnitAliases[rng.below(kUnitAliases.size())];
    int magnitude = kMagnitudes[rng.below(kMagnitudes.size())];
    double price = std::round((1.0 + 29.0 * rng.unit()) * 100.0) / 100.0;
    double pop_draw = rng.unit();

    std::string title = brand;
    if (with_adjective) title += " " + kAdjectives[adj_idx];
    for (const auto& f : facets) title += " " + f;
    title += " " + noun + " " + std::to_string(magnitude) + " " + unit;

    Product product;
    product.product_id = "p" + pad_number(i + 1, 5);
    product.title = title;
    product.price = price;
    product.purchase_count = static_cast<std::int64_t>(pop_draw * pop_draw * pop_draw * 1000.0);
    auto attrs = extract_product_attributes(title, brand, world.lexicon);
    product.brand = attrs.brand;
    product.facets = attrs.facets;
    product.size = attrs.size;
    world.catalog.insert(std::move(product));
  }

  for (std::size_t u = 0; u < n_users; ++u) {
    SimUser user;
    user.customer_id = "u" + pad_number(u + 1, 3);
    std::size_t brand_target = 1 + rng.below(2);
    while (user.brand_pref.size() < brand_target) {
      const std::string& b = kBrands[rng.below(kBrands.size())];
      double pref = 0.5 + 0.5 * rng.unit();
      user.brand_pref[b] = pref;
    }
    std::size_t facet_target = 1 + rng.below(3);
    while (user.facet_pref.size() < facet_target) {
      const std::string& f = kFacets[rng.below(kFacets.size())];
      double pref = 0.5 + 0.5 * rng.unit();
      user.facet_pref[f] = pref;
    }
    world.users.push_back(std::move(user));
  }

  for (const auto& noun : kNouns) {
    world.query_templates.push_back({noun, std::nullopt, std::nullopt});
  }
  for (const auto& facet : kFacets) {
    for (const auto& noun : kNouns) {
      world.query_templates.push_back({facet + " " + noun, facet, std::nullopt});
    }
  }
  for (const auto& brand : kBrands) {
    for (const auto& noun : kNouns) {
      world.query_templates.push_back({brand + " " + noun, std::nullopt, brand});
    }
  }
  return world;
}

void save_world(const SyntheticWorld& world, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir + ": " + ec.message());

  save_catalog(world.catalog, (fs::path(dir) / "catalog.jsonl").string());
  save_lexicon(world.lexicon, (fs::path(dir) / "lexicon.json").string());

  json users = json::array();
  for (const auto& user : world.users) {
    users.push_back({{"customer_id", user.customer_id},
                     {"brand_pref", user.brand_pref},
                     {"facet_pref", user.facet_pref}});
  }
  json templates = json::array();
  for (const auto& t : world.query_templates) {
    templates.push_back({{"text", t.text},
                         {"facet", t.facet ? json(*t.facet) : json(nullptr)},
                         {"brand", t.brand ? json(*t.brand) : json(nullptr)}});
  }
  json doc = {{"seed", world.seed}, {"users", std::move(users)},
              {"query_templates", std::move(templates)}};
  std::ofstream out(fs::path(dir) / "world.json", std::ios::trunc);
  if (!out) throw FileUnreadable((fs::path(dir) / "world.json").string());
  out << doc.dump(2) << '\n';
  if (!out.flush()) throw FileUnreadable((fs::path(dir) / "world.json").string());
}

SyntheticWorld load_world(const std::string& dir) {
  SyntheticWorld world;
  world.lexicon = load_lexicon((fs::path(dir) / "lexicon.json").string());
  world.catalog = load_catalog((fs::path(dir) / "catalog.jsonl").string(), world.lexicon);

  std::ifstream in(fs::path(dir) / "world.json");
  if (!in) throw FileUnreadable((fs::path(dir) / "world.json").string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(std::string("corrupt world.json: ") + e.what());
  }
  world.seed = doc.at("seed").get<std::uint64_t>();
  for (const auto& entry : doc.at("users")) {
    SimUser user;
    user.customer_id = entry.at("customer_id").get<std::string>();
    user.brand_pref = entry.at("brand_pref").get<std::map<std::string, double>>();
    user.facet_pref = entry.at("facet_pref").get<std::map<std::string, double>>();
    world.users.push_back(std::move(user));
  }
  for (const auto& entry : doc.at("query_templates")) {
    QueryTemplate t;
    t.text = entry.at("text").get<std::string>();
    if (!entry.at("facet").is_null()) t.facet = entry.at("facet").get<std::string>();
    if (!entry.at("brand").is_null()) t.brand = entry.at("brand").get<std::string>();
    world.query_templates.push_back(std::move(t));
  }
  return world;
}

double relevance(const SimUser& user, const ParsedQuery& pq, const Product& product,
                 const ClickModelParams& params) {
  double facet_term = 0.0;
  if (!product.facets.empty() && !user.facet_pref.empty()) {
    double dot = 0.0;
    for (const auto& facet : product.facets) {
      auto it = user.facet_pref.find(facet);
      if (it != user.facet_pref.end()) dot += it->second;
    }
    double norm_sq = 0.0;
    for (const auto& [facet, v] : user.facet_pref) norm_sq += v * v;
    double denom = std::sqrt(norm_sq) * std::sqrt(static_cast<double>(product.facets.size()));
    if (denom > 0.0) facet_term = dot / denom;
  }

  double brand_term = 0.0;
  if (product.brand) {
    auto it = user.brand_pref.find(*product.brand);
    if (it != user.brand_pref.end()) brand_term = it->second;
  }

  double type_term = 1.0;
  if (!pq.head_terms.empty()) {
    std::set<std::string> title_tokens;
    for (auto& tok : tokenize(product.title)) title_tokens.insert(std::move(tok));
    for (const auto& term : pq.head_terms) {
      if (!title_tokens.count(term)) {
        type_term = 0.0;
        break;
      }
    }
  }

  return params.w_facet * facet_term + params.w_brand * brand_term + params.w_type * type_term;
}

std::vector<FeedbackEvent> simulate_session(const SimUser& user, const ParsedQuery& pq,
                                            const std::vector<std::string>& served_ids,
                                            const Catalog& catalog,
                                            const ClickModelParams& params, DetRng& rng,
                                            const SessionStub& stub) {
  std::vector<FeedbackEvent> events;
  if (served_ids.empty()) return events;

  std::size_t next_event = 1;
  auto emit = [&](EventType type, std::size_t position, const std::string& product_id) {
    FeedbackEvent ev;
    ev.event_id = stub.session_id + "-e" + std::to_string(next_event++);
    ev.session_id = stub.session_id;
    ev.customer_id = user.customer_id;
    ev.query_text = stub.query_text;
    ev.product_id = product_id;
    ev.event_type = type;
    ev.position = static_cast<std::int64_t>(position);
    ev.timestamp = stub.timestamp;
    events.push_back(std::move(ev));
  };

  for (std::size_t i = 0; i < served_ids.size(); ++i) {
    emit(EventType::impression, i + 1, served_ids[i]);
  }

  // One rng draw per decision, in scan order, so runs with equal seeds
  // replay the exact event stream.
  for (std::size_t i = 0; i < served_ids.size(); ++i) {
    const Product* product = catalog.find(served_ids[i]);
    if (!product) continue;
    double r = relevance(user, pq, *product, params);
    if (rng.unit() < r) {
      emit(EventType::click, i + 1, served_ids[i]);
      if (rng.unit() < r) emit(EventType::atc, i + 1, served_ids[i]);
      break;
    }
    if (rng.unit() >= params.continue_prob) break;
  }
  return events;
}

LoopConfig default_loop_config(std::uint64_t seed, const std::string& work_dir) {
  LoopConfig config;
  config.click.seed = seed + 1;
  config.work_dir = work_dir;
  return config;
}

namespace {

struct OnlineMetrics {
  double ndcg = 0.0;
  double mrr = 0.0;
  std::int64_t engaged_sessions = 0;
};

}  // namespace

LoopReport run_closed_loop(const SyntheticWorld& world, const LoopConfig& config) {
  if (config.rounds < 0) throw Error("rounds must be nonnegative");
  if (config.sessions_per_round < 1) throw Error("sessions_per_round must be at least 1");
  if (config.work_dir.empty()) throw Error("work_dir must be set");

  const fs::path work(config.work_dir);
  std::error_code ec;
  fs::create_directories(work, ec);
  if (ec) throw Error("cannot create " + config.work_dir + ": " + ec.message());
  const std::string event_log_path = (work / "events.jsonl").string();
  const std::string registry_dir = (work / "registry").string();
  const std::string snapshot_path = (work / "store.jsonl").string();
  if (fs::exists(event_log_path) || fs::exists(fs::path(registry_dir) / "manifest.json")) {
    throw Error("work dir already contains loop state: " + config.work_dir);
  }

  InvertedIndex index = InvertedIndex::build(world.catalog);
  FeatureStore store;
  EventLog event_log(event_log_path);
  ModelRegistry registry(registry_dir, config.clock_start);
  SearchService service(&world.catalog, &index, &world.lexicon, &store, config.retrieve_k);

  DetRng session_rng(config.click.seed);
  std::size_t session_counter = 0;

  // Ambiguous plain-noun queries dominate: they leave the lexical ranker
  // with a tie to break, which is where profile features earn their keep.
  // Facet and brand queries stay in the mix to exercise the parser.
  std::vector<std::size_t> plain_templates;
  for (std::size_t t = 0; t < world.query_templates.size(); ++t) {
    const QueryTemplate& qt = world.query_templates[t];
    if (!qt.facet && !qt.brand) plain_templates.push_back(t);
  }

  auto serve_round = [&](const RankingModel& model, bool ingest) {
    OnlineMetrics metrics;
    double ndcg_sum = 0.0;
    double mrr_sum = 0.0;
    for (int s = 0; s < config.sessions_per_round; ++s) {
      std::int64_t t = config.clock_start +
                       static_cast<std::int64_t>(session_counter) * config.seconds_per_session;
      ++session_counter;
      std::string session_id = "s" + pad_number(session_counter, 6);

      std::size_t uidx = session_rng.below(world.users.size());
      const SimUser& user = world.users[uidx];
      std::size_t tidx;
      if (session_rng.unit() < 0.7 && !plain_templates.empty()) {
        tidx = plain_templates[session_rng.below(plain_templates.size())];
      } else {
        tidx = session_rng.below(world.query_templates.size());
      }
      const QueryTemplate& qt = world.query_templates[tidx];

      SearchRequest req;
      req.customer_id = user.customer_id;
      req.query = qt.text;
      req.k = config.k;
      SearchResponse resp = service.handle_search(req, model, t);
      if (resp.results.empty()) continue;

      std::vector<std::string> served;
      served.reserve(resp.results.size());
      for (const auto& item : resp.results) served.push_back(item.product_id);

      ParsedQuery pq = service.parse_cached(req.query, t);
      SessionStub stub{session_id, req.query, t};
      auto events = simulate_session(user, pq, served, world.catalog, config.click,
                                     session_rng, stub);

      std::set<std::string> engaged;
      for (const auto& ev : events) {
        if (is_engagement(ev.event_type)) engaged.insert(ev.product_id);
      }
      if (ingest) {
        for (const auto& ev : events) {
          event_log.append(ev);
          const Product* product = world.catalog.find(ev.product_id);
          if (!product) throw Error("simulated event references unknown product");
          apply_feedback_event(store, ev, *product, t, config.half_life_s);
        }
      }
      if (!engaged.empty()) {
        std::vector<double> gains;
        gains.reserve(served.size());
        for (const auto& id : served) gains.push_back(engaged.count(id) ? 1.0 : 0.0);
        ndcg_sum += ndcg_at_k(gains, 10);
        mrr_sum += reciprocal_rank_at_k(gains, 10);
        metrics.engaged_sessions += 1;
      }
    }
    if (metrics.engaged_sessions > 0) {
      metrics.ndcg = ndcg_sum / static_cast<double>(metrics.engaged_sessions);
      metrics.mrr = mrr_sum / static_cast<double>(metrics.engaged_sessions);
    }
    return metrics;
  };

  LoopReport report;
  report.config = config;
  report.world_seed = world.seed;

  RankingModel champion = registry.get_champion().model;

  OnlineMetrics baseline = serve_round(champion, true);
  report.rounds.push_back({0, "baseline", champion.version, baseline.ndcg, baseline.mrr, 0,
                           false, 0, 0.0});

  double last_recorded_champion_ndcg = -1.0;
  for (int r = 1; r <= config.rounds; ++r) {
    OnlineMetrics online = serve_round(champion, true);
    RoundReport round{r, "train", champion.version, online.ndcg, online.mrr, 0, false, 0, 0.0};

    if (config.train_enabled) {
      std::int64_t now = config.clock_start +
                         static_cast<std::int64_t>(session_counter) * config.seconds_per_session;
      RetrainContext ctx{&world.catalog, &index, &world.lexicon, &store, &registry,
                         config.train, config.gate};
      RetrainOutcome outcome = run_retrain_cycle(event_log.events(), ctx, now);
      round.pairs_trained = outcome.pairs_trained;
      round.promoted = outcome.promoted;
      round.sessions_evaluated = outcome.sessions_evaluated;
      round.champion_gate_ndcg = outcome.champion_gate_ndcg;
      round.champion_version = outcome.champion_version_after;

      champion = registry.get_champion().model;
      auto champion_record = registry.get_champion();
      if (champion_record.metrics) {
        double recorded = champion_record.metrics->ndcg_at_10;
        if (recorded < last_recorded_champion_ndcg) {
          throw Error("champion ndcg regressed, promotion gate is broken");
        }
        last_recorded_champion_ndcg = recorded;
      }
    }
    report.rounds.push_back(round);
  }

  if (config.rounds > 0) {
    OnlineMetrics final_metrics = serve_round(champion, false);
    report.rounds.push_back({config.rounds + 1, "final", champion.version, final_metrics.ndcg,
                             final_metrics.mrr, 0, false, 0, 0.0});
  }

  store.snapshot(snapshot_path);
  return report;
}

json loop_report_to_json(const LoopReport& report) {
  json rounds = json::array();
  for (const auto& r : report.rounds) {
    rounds.push_back({
        {"round", r.round},
        {"phase", r.phase},
        {"champion_version", r.champion_version},
        {"ndcg_at_10", r.ndcg_at_10},
        {"mrr", r.mrr},
        {"pairs_trained", r.pairs_trained},
        {"promoted", r.promoted},
        {"sessions_evaluated", r.sessions_evaluated},
        {"champion_gate_ndcg", r.champion_gate_ndcg},
    });
  }
  const LoopConfig& c = report.config;
  json config = {
      {"rounds", c.rounds},
      {"sessions_per_round", c.sessions_per_round},
      {"k", c.k},
      {"retrieve_k", c.retrieve_k},
      {"gate_min_sessions", c.gate.min_sessions},
      {"half_life_s", c.half_life_s},
      {"train_enabled", c.train_enabled},
      {"clock_start", c.clock_start},
      {"seconds_per_session", c.seconds_per_session},
      {"hyperparams",
       {{"learning_rate", c.train.learning_rate},
        {"epochs", c.train.epochs},
        {"l2_lambda", c.train.l2_lambda},
        {"seed", c.train.seed}}},
      {"click",
       {{"continue_prob", c.click.continue_prob},
        {"w_facet", c.click.w_facet},
        {"w_brand", c.click.w_brand},
        {"w_type", c.click.w_type},
        {"seed", c.click.seed}}},
  };
  return json{{"config", std::move(config)},
              {"seeds",
               {{"world", report.world_seed},
                {"click", c.click.seed},
                {"train", c.train.seed}}},
              {"rounds", std::move(rounds)}};
}

void save_loop_report(const LoopReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileUnreadable(path);
  out << loop_report_to_json(report).dump(2) << '\n';
  if (!out.flush()) throw FileUnreadable(path);
}

}  // namespace rankserve
