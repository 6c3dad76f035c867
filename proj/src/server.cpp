#include "rankserve/server.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "rankserve/retrain.hpp"
#include "rankserve/retrieval.hpp"
#include "rankserve/search_service.hpp"

namespace rankserve {

using nlohmann::json;

namespace {

std::int64_t wall_clock_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void set_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void set_error(httplib::Response& res, int status, const std::string& code,
               const std::string& message) {
  set_json(res, status, json{{"error", message}, {"code", code}});
}

}  // namespace

ServerConfig server_config_from_json(const json& obj) {
  if (!obj.is_object()) throw Error("config must be a JSON object");
  ServerConfig cfg;
  for (const char* field :
       {"catalog_path", "lexicon_path", "registry_dir", "event_log_path", "store_snapshot_path"}) {
    if (!obj.contains(field) || !obj.at(field).is_string()) {
      throw Error(std::string("config key '") + field + "' must be a string");
    }
  }
  cfg.catalog_path = obj.at("catalog_path").get<std::string>();
  cfg.lexicon_path = obj.at("lexicon_path").get<std::string>();
  cfg.registry_dir = obj.at("registry_dir").get<std::string>();
  cfg.event_log_path = obj.at("event_log_path").get<std::string>();
  cfg.store_snapshot_path = obj.at("store_snapshot_path").get<std::string>();
  for (const auto& [key, value] : obj.items()) {
    if (key == "catalog_path" || key == "lexicon_path" || key == "registry_dir" ||
        key == "event_log_path" || key == "store_snapshot_path") {
      continue;
    } else if (key == "listen_addr") {
      cfg.listen_addr = value.get<std::string>();
    } else if (key == "retrieve_k") {
      cfg.retrieve_k = value.get<std::size_t>();
    } else if (key == "poll_interval_s") {
      cfg.poll_interval_s = value.get<double>();
      if (cfg.poll_interval_s <= 0.0) throw Error("poll_interval_s must be positive");
    } else if (key == "request_log_path") {
      cfg.request_log_path = value.get<std::string>();
    } else if (key == "auto_retrain") {
      cfg.auto_retrain = value.get<bool>();
    } else if (key == "half_life_s") {
      cfg.half_life_s = value.get<std::int64_t>();
      if (cfg.half_life_s <= 0) throw Error("half_life_s must be positive");
    } else if (key == "gate_min_sessions") {
      cfg.gate_min_sessions = value.get<std::int64_t>();
    } else if (key == "learning_rate") {
      cfg.train.learning_rate = value.get<double>();
    } else if (key == "epochs") {
      cfg.train.epochs = value.get<int>();
    } else if (key == "l2_lambda") {
      cfg.train.l2_lambda = value.get<double>();
    } else if (key == "train_seed") {
      cfg.train.seed = value.get<std::uint64_t>();
    } else {
      throw Error("unknown config key: " + key);
    }
  }
  return cfg;
}

ServerConfig load_server_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileUnreadable(path);
  json obj;
  try {
    obj = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("config parse error in " + path + ": " + e.what());
  }
  return server_config_from_json(obj);
}

struct HttpServer::Impl {
  ServerConfig config;

  Lexicon lexicon;
  Catalog catalog;
  InvertedIndex index;
  FeatureStore store;
  std::unique_ptr<EventLog> event_log;
  std::unique_ptr<SearchService> service;

  // The registry pointer itself can be swapped (a failed-at-startup
  // registry gets recreated on reload), so reads go through registry_ref.
  std::mutex registry_mutex;
  std::shared_ptr<ModelRegistry> registry;

  std::mutex model_mutex;
  std::shared_ptr<const RankingModel> model;

  std::mutex request_log_mutex;
  std::ofstream request_log;

  httplib::Server http;
  std::thread listen_thread;
  std::thread poll_thread;
  std::mutex poll_mutex;
  std::condition_variable poll_cv;
  bool stopping = false;
  std::atomic<bool> retrain_dirty{false};
  int bound_port = 0;

  explicit Impl(const ServerConfig& cfg) : config(cfg) {
    lexicon = load_lexicon(config.lexicon_path);
    catalog = load_catalog(config.catalog_path, lexicon);
    index = InvertedIndex::build(catalog);
    std::ifstream snapshot_probe(config.store_snapshot_path);
    if (snapshot_probe.good()) {
      snapshot_probe.close();
      store.restore(config.store_snapshot_path);
    }
    event_log = std::make_unique<EventLog>(config.event_log_path);
    service = std::make_unique<SearchService>(&catalog, &index, &lexicon, &store,
                                              config.retrieve_k);
    if (!config.request_log_path.empty()) {
      request_log.open(config.request_log_path, std::ios::app);
      if (!request_log) throw FileUnreadable(config.request_log_path);
    }
    try {
      registry = std::make_shared<ModelRegistry>(config.registry_dir, wall_clock_seconds());
      model = std::make_shared<const RankingModel>(registry->get_champion().model);
    } catch (const RegistryUnavailable& e) {
      log_line("error", std::string("starting without a model: ") + e.what());
      registry.reset();
    }
    if (config.auto_retrain) {
      store.subscribe([this](const FeatureKey& key) {
        if (key.ns == FeatureNamespace::user) retrain_dirty.store(true);
      });
    }
    register_routes();
  }

  std::shared_ptr<const RankingModel> current_model() {
    std::lock_guard lock(model_mutex);
    return model;
  }

  void swap_model(std::shared_ptr<const RankingModel> next) {
    std::lock_guard lock(model_mutex);
    model = std::move(next);
  }

  std::shared_ptr<ModelRegistry> registry_ref() {
    std::lock_guard lock(registry_mutex);
    return registry;
  }

  std::int64_t reload_champion() {
    auto reg = registry_ref();
    if (!reg) {
      reg = std::make_shared<ModelRegistry>(config.registry_dir, wall_clock_seconds());
      std::lock_guard lock(registry_mutex);
      registry = reg;
    }
    reg->refresh_from_disk();
    auto champion = reg->get_champion();
    std::int64_t version = champion.model.version;
    auto current = current_model();
    if (!current || current->version != version) {
      swap_model(std::make_shared<const RankingModel>(std::move(champion.model)));
      log_line("info", "serving model version " + std::to_string(version));
    }
    return version;
  }

  void log_request(const SearchRequest& req, const SearchResponse& resp) {
    if (!request_log.is_open()) return;
    json ids = json::array();
    for (const auto& item : resp.results) ids.push_back(item.product_id);
    json line = {
        {"query", req.query},
        {"customer_id", req.customer_id ? json(*req.customer_id) : json(nullptr)},
        {"k", req.k},
        {"model_version", resp.model_version},
        {"served_at", resp.served_at},
        {"results", std::move(ids)},
    };
    std::lock_guard lock(request_log_mutex);
    request_log << line.dump() << '\n';
    request_log.flush();
  }

  void register_routes() {
    http.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("ok", "text/plain");
    });

    http.Post("/v1/search", [this](const httplib::Request& req, httplib::Response& res) {
      auto snapshot = current_model();
      if (!snapshot) {
        set_error(res, 503, "registry_unavailable", "no model loaded");
        return;
      }
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error& e) {
        set_error(res, 400, "malformed_body", e.what());
        return;
      }
      try {
        SearchRequest sr = search_request_from_json(body);
        SearchResponse resp = service->handle_search(sr, *snapshot, wall_clock_seconds());
        log_request(sr, resp);
        set_json(res, 200, search_response_to_json(resp));
      } catch (const BadRequest& e) {
        set_error(res, 400, e.code, e.what());
      } catch (const std::exception& e) {
        set_error(res, 500, "internal", e.what());
      }
    });

    http.Post("/v1/feedback", [this](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error& e) {
        set_error(res, 400, "malformed_event", e.what());
        return;
      }
      FeedbackEvent ev;
      try {
        ev = event_from_json(body);
      } catch (const Error& e) {
        set_error(res, 400, "malformed_event", e.what());
        return;
      }
      const Product* product = catalog.find(ev.product_id);
      if (!product) {
        set_error(res, 400, "unknown_product", "product_id not in catalog: " + ev.product_id);
        return;
      }
      try {
        event_log->append(ev);
      } catch (const DuplicateEventId& e) {
        set_error(res, 409, "duplicate_event_id", e.what());
        return;
      } catch (const std::exception& e) {
        set_error(res, 500, "internal", e.what());
        return;
      }
      try {
        apply_feedback_event(store, ev, *product, ev.timestamp, config.half_life_s);
      } catch (const std::exception& e) {
        // The event is already durable; surface the profile failure.
        set_error(res, 500, "internal", e.what());
        return;
      }
      set_json(res, 202, json{{"accepted", true}});
    });

    http.Get("/v1/models", [this](const httplib::Request&, httplib::Response& res) {
      auto reg = registry_ref();
      if (!reg) {
        set_error(res, 503, "registry_unavailable", "registry failed to load");
        return;
      }
      json out = json::array();
      for (const auto& record : reg->list_models()) {
        out.push_back({{"version", record.model.version},
                       {"status", to_string(record.status)},
                       {"metrics", record.metrics ? metrics_to_json(*record.metrics) : json(nullptr)}});
      }
      set_json(res, 200, out);
    });

    http.Post("/v1/admin/reload", [this](const httplib::Request&, httplib::Response& res) {
      try {
        std::int64_t version = reload_champion();
        set_json(res, 200, json{{"model_version", version}});
      } catch (const RegistryUnavailable& e) {
        set_error(res, 503, "registry_unavailable", e.what());
      }
    });
  }

  void poll_loop() {
    std::unique_lock lock(poll_mutex);
    while (!stopping) {
      poll_cv.wait_for(lock, std::chrono::duration<double>(config.poll_interval_s),
                       [this] { return stopping; });
      if (stopping) break;
      lock.unlock();
      try {
        reload_champion();
      } catch (const std::exception& e) {
        log_line("error", std::string("registry poll failed: ") + e.what());
      }
      auto reg = registry_ref();
      if (config.auto_retrain && reg && retrain_dirty.exchange(false)) {
        try {
          RetrainContext ctx{&catalog, &index, &lexicon, &store, reg.get(),
                             config.train,
                             GatePolicy{config.gate_min_sessions}};
          RetrainOutcome outcome = run_retrain_cycle(event_log->events(), ctx,
                                                     wall_clock_seconds());
          if (outcome.promoted) reload_champion();
        } catch (const std::exception& e) {
          log_line("error", std::string("auto retrain failed: ") + e.what());
        }
      }
      lock.lock();
    }
  }

  int start() {
    std::string host = "127.0.0.1";
    int port = 8080;
    auto colon = config.listen_addr.rfind(':');
    if (colon != std::string::npos) {
      host = config.listen_addr.substr(0, colon);
      port = std::stoi(config.listen_addr.substr(colon + 1));
    }
    if (port == 0) {
      bound_port = http.bind_to_any_port(host);
      if (bound_port < 0) throw Error("cannot bind to " + host);
    } else {
      if (!http.bind_to_port(host, port)) {
        throw Error("cannot bind to " + config.listen_addr);
      }
      bound_port = port;
    }
    listen_thread = std::thread([this] { http.listen_after_bind(); });
    http.wait_until_ready();
    poll_thread = std::thread([this] { poll_loop(); });
    log_line("info", "listening on " + host + ":" + std::to_string(bound_port));
    return bound_port;
  }

  void shutdown() {
    {
      std::lock_guard lock(poll_mutex);
      if (stopping) return;
      stopping = true;
    }
    poll_cv.notify_all();
    http.stop();
    if (poll_thread.joinable()) poll_thread.join();
    if (listen_thread.joinable()) listen_thread.join();
  }
};

HttpServer::HttpServer(const ServerConfig& config) : impl_(std::make_unique<Impl>(config)) {}

HttpServer::~HttpServer() {
  if (impl_) impl_->shutdown();
}

int HttpServer::start() { return impl_->start(); }

void HttpServer::stop() { impl_->shutdown(); }

int HttpServer::port() const { return impl_->bound_port; }

std::int64_t HttpServer::reload_champion() { return impl_->reload_champion(); }

}  // namespace rankserve
