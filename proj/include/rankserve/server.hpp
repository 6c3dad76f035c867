#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "rankserve/common.hpp"
#include "rankserve/feedback.hpp"
#include "rankserve/model_registry.hpp"
#include "rankserve/ranker.hpp"

namespace rankserve {

struct ServerConfig {
  std::string catalog_path;
  std::string lexicon_path;
  std::string registry_dir;
  std::string event_log_path;
  std::string store_snapshot_path;
  std::string listen_addr = "127.0.0.1:8080";
  std::size_t retrieve_k = 100;
  double poll_interval_s = 2.0;
  std::string request_log_path;  // empty disables request logging
  bool auto_retrain = false;
  std::int64_t half_life_s = kDefaultHalfLifeSeconds;
  std::int64_t gate_min_sessions = 50;
  Hyperparams train;
};

ServerConfig server_config_from_json(const nlohmann::json& obj);
ServerConfig load_server_config(const std::string& path);

// HTTP front end over the search pipeline. Serves the registry champion,
// polls the registry manifest for promotions done elsewhere, and accepts
// feedback events. With auto_retrain, user-profile store writes mark the
// model dirty and the poll thread retrains at most once per interval.
class HttpServer {
 public:
  explicit HttpServer(const ServerConfig& config);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds and starts serving on background threads; returns the bound
  // port (useful when the configured port is 0).
  int start();
  void stop();

  int port() const;

  // Swaps in the current registry champion; returns its version. Throws
  // RegistryUnavailable and keeps the old model on failure.
  std::int64_t reload_champion();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rankserve
