#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "rankserve/catalog.hpp"
#include "rankserve/common.hpp"
#include "rankserve/feedback.hpp"
#include "rankserve/lexicon.hpp"
#include "rankserve/model_registry.hpp"
#include "rankserve/query_parser.hpp"
#include "rankserve/retrain.hpp"
#include "rankserve/retrieval.hpp"
#include "rankserve/search_service.hpp"
#include "rankserve/server.hpp"
#include "rankserve/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rankserve;

namespace {

std::atomic<int> g_signal{0};

void handle_signal(int sig) { g_signal.store(sig); }

std::int64_t wall_clock_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

json parsed_query_to_json(const ParsedQuery& pq) {
  json out = {
      {"raw", pq.raw},
      {"tokens", pq.tokens},
      {"head_terms", pq.head_terms},
      {"facets", pq.facets},
      {"brand", pq.brand ? json(*pq.brand) : json(nullptr)},
  };
  if (pq.size) {
    out["size"] = {{"magnitude", pq.size->magnitude}, {"unit", pq.size->unit}};
  } else {
    out["size"] = nullptr;
  }
  return out;
}

// Everything the file-backed subcommands need, opened from one config.
struct PipelineFiles {
  ServerConfig config;
  Lexicon lexicon;
  Catalog catalog;
  InvertedIndex index;
  FeatureStore store;
  std::unique_ptr<EventLog> event_log;
  std::unique_ptr<ModelRegistry> registry;

  explicit PipelineFiles(const std::string& config_path, std::int64_t now) {
    config = load_server_config(config_path);
    lexicon = load_lexicon(config.lexicon_path);
    catalog = load_catalog(config.catalog_path, lexicon);
    index = InvertedIndex::build(catalog);
    if (fs::exists(config.store_snapshot_path)) store.restore(config.store_snapshot_path);
    event_log = std::make_unique<EventLog>(config.event_log_path);
    registry = std::make_unique<ModelRegistry>(config.registry_dir, now);
  }

  PairBuildContext build_context(std::int64_t now) const {
    return {&catalog, &index, &lexicon, &store, now};
  }

  std::vector<Session> heldout_sessions() const {
    std::vector<Session> out;
    for (auto& session : sessionize(event_log->events())) {
      if (is_heldout_session(session.session_id)) out.push_back(std::move(session));
    }
    return out;
  }
};

int cmd_gen_data(std::uint64_t seed, std::size_t users, std::size_t products,
                 const std::string& out_dir) {
  SyntheticWorld world = generate_world(seed, users, products);
  save_world(world, out_dir);

  json config = {
      {"catalog_path", (fs::path(out_dir) / "catalog.jsonl").string()},
      {"lexicon_path", (fs::path(out_dir) / "lexicon.json").string()},
      {"registry_dir", (fs::path(out_dir) / "registry").string()},
      {"event_log_path", (fs::path(out_dir) / "events.jsonl").string()},
      {"store_snapshot_path", (fs::path(out_dir) / "store.jsonl").string()},
      {"listen_addr", "127.0.0.1:8080"},
  };
  std::ofstream cfg(fs::path(out_dir) / "config.json", std::ios::trunc);
  if (!cfg) throw FileUnreadable((fs::path(out_dir) / "config.json").string());
  cfg << config.dump(2) << '\n';

  std::cout << "wrote " << world.catalog.size() << " products, " << world.users.size()
            << " users, " << world.query_templates.size() << " query templates to " << out_dir
            << "\n";
  return 0;
}

int cmd_ingest_catalog(const std::string& catalog_path, const std::string& lexicon_path,
                       const std::string& out_path) {
  Lexicon lexicon = load_lexicon(lexicon_path);
  Catalog catalog = load_catalog(catalog_path, lexicon);
  std::cout << "loaded " << catalog.size() << " products, "
            << catalog.brand_vocabulary().size() << " brands, "
            << catalog.facet_vocabulary().size() << " facets\n";
  if (!out_path.empty()) {
    save_catalog(catalog, out_path);
    std::cout << "wrote normalized catalog to " << out_path << "\n";
  }
  return 0;
}

int cmd_parse(const std::string& lexicon_path, const std::vector<std::string>& words) {
  Lexicon lexicon = load_lexicon(lexicon_path);
  std::string query;
  for (const auto& w : words) {
    if (!query.empty()) query.push_back(' ');
    query += w;
  }
  ParsedQuery pq = parse_query(query, lexicon);
  std::cout << parsed_query_to_json(pq).dump(2) << "\n";
  return 0;
}

int cmd_train(const std::string& config_path) {
  std::int64_t now = wall_clock_seconds();
  PipelineFiles files(config_path, now);

  std::vector<Session> train_sessions;
  for (auto& session : sessionize(files.event_log->events())) {
    if (!is_heldout_session(session.session_id)) train_sessions.push_back(std::move(session));
  }
  auto pairs = build_training_pairs(train_sessions, files.build_context(now));
  if (pairs.empty()) {
    std::cerr << "no training pairs in the event log\n";
    return 1;
  }
  RankingModel champion = files.registry->get_champion().model;
  RankingModel model = train(pairs, files.config.train, champion, now);
  std::int64_t version = files.registry->add_candidate(std::move(model), now);
  files.store.snapshot(files.config.store_snapshot_path);
  std::cout << "trained candidate v" << version << " on " << pairs.size() << " pairs from "
            << train_sessions.size() << " sessions\n";
  return 0;
}

int cmd_evaluate(const std::string& config_path, std::int64_t version) {
  std::int64_t now = wall_clock_seconds();
  PipelineFiles files(config_path, now);
  ModelRecord record = files.registry->get_record(version);
  EvalMetrics metrics =
      evaluate_model(record.model, files.heldout_sessions(), files.build_context(now));
  files.registry->set_metrics(version, metrics);
  std::cout << metrics_to_json(metrics).dump(2) << "\n";
  return 0;
}

int cmd_promote(const std::string& config_path, std::int64_t version,
                std::int64_t min_sessions) {
  std::int64_t now = wall_clock_seconds();
  PipelineFiles files(config_path, now);
  PromotionDecision decision =
      files.registry->try_promote(version, GatePolicy{min_sessions}, now);
  std::cout << (decision.promoted ? "promoted" : "rejected") << ": " << decision.reason << "\n";
  std::cout << "champion is v" << files.registry->champion_version() << "\n";
  return decision.promoted ? 0 : 2;
}

int cmd_rollback(const std::string& config_path, std::int64_t version) {
  std::int64_t now = wall_clock_seconds();
  PipelineFiles files(config_path, now);
  files.registry->rollback(version, now);
  std::cout << "champion is v" << files.registry->champion_version() << "\n";
  return 0;
}

int cmd_serve(const std::string& config_path) {
  ServerConfig config = load_server_config(config_path);
  HttpServer server(config);
  int port = server.start();
  std::cout << "listening on port " << port << " (ctrl-c to stop)\n";
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  while (g_signal.load() == 0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  server.stop();
  std::cout << "stopped\n";
  return 0;
}

int cmd_simulate(std::uint64_t seed, int rounds, int sessions, std::size_t users,
                 std::size_t products, const std::string& work_dir, const std::string& out_path,
                 bool force) {
  if (force) {
    fs::remove(fs::path(work_dir) / "events.jsonl");
    fs::remove(fs::path(work_dir) / "store.jsonl");
    fs::remove_all(fs::path(work_dir) / "registry");
  }
  SyntheticWorld world = generate_world(seed, users, products);
  LoopConfig config = default_loop_config(seed, work_dir);
  config.rounds = rounds;
  config.sessions_per_round = sessions;
  LoopReport report = run_closed_loop(world, config);
  save_loop_report(report, out_path);

  const RoundReport& first = report.rounds.front();
  const RoundReport& last = report.rounds.back();
  std::cout << "round 0 (" << first.phase << "): ndcg@10 " << first.ndcg_at_10 << ", mrr "
            << first.mrr << "\n";
  std::cout << "round " << last.round << " (" << last.phase << "): ndcg@10 " << last.ndcg_at_10
            << ", mrr " << last.mrr << ", champion v" << last.champion_version << "\n";
  if (first.ndcg_at_10 > 0.0) {
    std::cout << "ndcg lift: " << last.ndcg_at_10 / first.ndcg_at_10 << "x\n";
  }
  std::cout << "report written to " << out_path << "\n";
  return 0;
}

int cmd_replay(const std::string& config_path, std::size_t limit) {
  std::int64_t now = wall_clock_seconds();
  PipelineFiles files(config_path, now);
  if (files.config.request_log_path.empty()) {
    std::cerr << "config has no request_log_path\n";
    return 1;
  }
  std::ifstream in(files.config.request_log_path);
  if (!in) throw FileUnreadable(files.config.request_log_path);

  SearchService service(&files.catalog, &files.index, &files.lexicon, &files.store,
                        files.config.retrieve_k);
  std::size_t checked = 0;
  std::size_t mismatched = 0;
  std::string line;
  while (std::getline(in, line) && (limit == 0 || checked < limit)) {
    if (line.empty()) continue;
    json entry = json::parse(line);
    SearchRequest req;
    req.query = entry.at("query").get<std::string>();
    if (!entry.at("customer_id").is_null()) {
      req.customer_id = entry.at("customer_id").get<std::string>();
    }
    req.k = entry.at("k").get<std::int64_t>();
    RankingModel model =
        files.registry->get_record(entry.at("model_version").get<std::int64_t>()).model;
    SearchResponse resp =
        service.handle_search(req, model, entry.at("served_at").get<std::int64_t>());
    std::vector<std::string> got;
    for (const auto& item : resp.results) got.push_back(item.product_id);
    std::vector<std::string> want = entry.at("results").get<std::vector<std::string>>();
    ++checked;
    if (got != want) {
      ++mismatched;
      std::cerr << "mismatch for query \"" << req.query << "\" (model v" << model.version
                << ")\n";
    }
  }
  std::cout << checked << " requests replayed, " << mismatched << " mismatched\n";
  return mismatched == 0 ? 0 : 1;
}

int cmd_report(const std::string& in_path) {
  std::ifstream in(in_path);
  if (!in) throw FileUnreadable(in_path);
  json doc = json::parse(in);

  std::printf("%-6s %-9s %-9s %-10s %-10s %-7s %-9s\n", "round", "phase", "champion",
              "ndcg@10", "mrr", "pairs", "promoted");
  for (const auto& r : doc.at("rounds")) {
    std::printf("%-6lld %-9s v%-8lld %-10.4f %-10.4f %-7lld %-9s\n",
                static_cast<long long>(r.at("round").get<std::int64_t>()),
                r.at("phase").get<std::string>().c_str(),
                static_cast<long long>(r.at("champion_version").get<std::int64_t>()),
                r.at("ndcg_at_10").get<double>(), r.at("mrr").get<double>(),
                static_cast<long long>(r.at("pairs_trained").get<std::int64_t>()),
                r.at("promoted").get<bool>() ? "yes" : "no");
  }
  const auto& rounds = doc.at("rounds");
  double first = rounds.front().at("ndcg_at_10").get<double>();
  double last = rounds.back().at("ndcg_at_10").get<double>();
  if (first > 0.0 && rounds.size() > 1) {
    std::printf("ndcg lift: %.4fx\n", last / first);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"personalized conversational-search ranking service"};
  app.require_subcommand(1);

  std::uint64_t seed = 42;
  std::size_t users = 50;
  std::size_t products = 2000;
  int rounds = 5;
  int sessions = 500;
  std::int64_t version = 0;
  std::int64_t min_sessions = 50;
  std::size_t limit = 0;
  bool force = false;
  std::string config_path;
  std::string out_path;
  std::string in_path;
  std::string work_dir = "simwork";
  std::string catalog_path;
  std::string lexicon_path;
  std::vector<std::string> query_words;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic catalog, lexicon and world");
  gen->add_option("--seed", seed, "world seed");
  gen->add_option("--users", users, "number of users");
  gen->add_option("--products", products, "number of products");
  gen->add_option("--out", out_path, "output directory")->required();

  auto* ingest = app.add_subcommand("ingest-catalog", "load and validate a catalog file");
  ingest->add_option("--catalog", catalog_path, "catalog JSONL path")->required();
  ingest->add_option("--lexicon", lexicon_path, "lexicon JSON path")->required();
  ingest->add_option("--out", out_path, "write the normalized catalog here");

  auto* parse_cmd = app.add_subcommand("parse", "parse a query against a lexicon");
  parse_cmd->add_option("--lexicon", lexicon_path, "lexicon JSON path")->required();
  parse_cmd->add_option("query", query_words, "query text")->required();

  auto* train_cmd = app.add_subcommand("train", "train a candidate model from the event log");
  train_cmd->add_option("--config", config_path, "server config path")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a model on held-out sessions");
  eval_cmd->add_option("--config", config_path, "server config path")->required();
  eval_cmd->add_option("--version", version, "model version")->required();

  auto* promote_cmd = app.add_subcommand("promote", "run the promotion gate for a candidate");
  promote_cmd->add_option("--config", config_path, "server config path")->required();
  promote_cmd->add_option("--version", version, "candidate version")->required();
  promote_cmd->add_option("--min-sessions", min_sessions, "session floor for the gate");

  auto* rollback_cmd = app.add_subcommand("rollback", "make an earlier version champion again");
  rollback_cmd->add_option("--config", config_path, "server config path")->required();
  rollback_cmd->add_option("--version", version, "target version")->required();

  auto* serve_cmd = app.add_subcommand("serve", "run the HTTP inference server");
  serve_cmd->add_option("--config", config_path, "server config path")->required();

  auto* sim_cmd = app.add_subcommand("simulate", "run the closed feedback loop");
  sim_cmd->add_option("--seed", seed, "world seed (click seed is world seed + 1)");
  sim_cmd->add_option("--rounds", rounds, "training rounds");
  sim_cmd->add_option("--sessions", sessions, "sessions per round");
  sim_cmd->add_option("--users", users, "number of users");
  sim_cmd->add_option("--products", products, "number of products");
  sim_cmd->add_option("--workdir", work_dir, "loop state directory");
  sim_cmd->add_option("--out", out_path, "loop report path");
  sim_cmd->add_flag("--force", force, "wipe existing loop state in the workdir");

  auto* replay_cmd = app.add_subcommand("replay", "re-run logged requests and verify rankings");
  replay_cmd->add_option("--config", config_path, "server config path")->required();
  replay_cmd->add_option("--limit", limit, "check at most this many requests (0 = all)");

  auto* report_cmd = app.add_subcommand("report", "summarize a loop report");
  report_cmd->add_option("--in", in_path, "loop report path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(seed, users, products, out_path);
    if (ingest->parsed()) return cmd_ingest_catalog(catalog_path, lexicon_path, out_path);
    if (parse_cmd->parsed()) return cmd_parse(lexicon_path, query_words);
    if (train_cmd->parsed()) return cmd_train(config_path);
    if (eval_cmd->parsed()) return cmd_evaluate(config_path, version);
    if (promote_cmd->parsed()) return cmd_promote(config_path, version, min_sessions);
    if (rollback_cmd->parsed()) return cmd_rollback(config_path, version);
    if (serve_cmd->parsed()) return cmd_serve(config_path);
    if (sim_cmd->parsed()) {
      if (out_path.empty()) out_path = "loop_report.json";
      return cmd_simulate(seed, rounds, sessions, users, products, work_dir, out_path, force);
    }
    if (replay_cmd->parsed()) return cmd_replay(config_path, limit);
    if (report_cmd->parsed()) return cmd_report(in_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
