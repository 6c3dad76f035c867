#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "rankserve/common.hpp"
#include "rankserve/feedback.hpp"
#include "rankserve/ranker.hpp"

namespace rankserve {

struct UnknownVersion : Error {
  explicit UnknownVersion(std::int64_t version)
      : Error("unknown model version: " + std::to_string(version)) {}
};

struct NotEvaluated : Error {
  explicit NotEvaluated(std::int64_t version)
      : Error("model version " + std::to_string(version) + " has no evaluation metrics") {}
};

struct NoEvaluableSessions : Error {
  NoEvaluableSessions() : Error("no session had an engaged impressed item to evaluate") {}
};

struct RegistryUnavailable : Error {
  explicit RegistryUnavailable(const std::string& why) : Error("registry unavailable: " + why) {}
};

struct EvalMetrics {
  double ndcg_at_10 = 0.0;
  double mrr = 0.0;
  std::int64_t session_count = 0;

  bool operator==(const EvalMetrics&) const = default;
};

enum class ModelStatus { candidate, champion, archived };

std::string to_string(ModelStatus status);
ModelStatus model_status_from_string(const std::string& s);

struct ModelRecord {
  RankingModel model;
  ModelStatus status = ModelStatus::candidate;
  std::optional<EvalMetrics> metrics;
  std::int64_t created_at = 0;
};

struct PromotionDecision {
  bool promoted = false;
  std::string reason;
};

struct GatePolicy {
  std::int64_t min_sessions = 50;
};

// Gain vector helpers shared by offline evaluation and the simulator's
// online metrics. gains holds one 0/1 relevance per ranked position.
// DCG@k = sum over the first k positions of gain / log2(position + 1).
double dcg_at_k(const std::vector<double>& gains, std::size_t k);
double ndcg_at_k(const std::vector<double>& gains, std::size_t k);
double reciprocal_rank_at_k(const std::vector<double>& gains, std::size_t k);

// Re-ranks each session's impressed items with the model and scores the
// engagement gains. Sessions with no engaged impressed item are skipped;
// all-skipped input raises NoEvaluableSessions.
EvalMetrics evaluate_model(const RankingModel& model, const std::vector<Session>& sessions,
                           const PairBuildContext& ctx);

nlohmann::json metrics_to_json(const EvalMetrics& m);
EvalMetrics metrics_from_json(const nlohmann::json& obj);

// Versioned model store persisted as a directory: models/v<N>.json per
// record plus manifest.json naming the champion. All file writes go
// through a temp file and rename. A fresh directory bootstraps a
// lexical-only version-1 champion.
class ModelRegistry {
 public:
  ModelRegistry(const std::string& dir, std::int64_t now);

  std::int64_t add_candidate(RankingModel model, std::int64_t now);

  // Records evaluation results. A champion's metrics freeze once set:
  // the gate always compares against the numbers it was promoted with.
  void set_metrics(std::int64_t version, const EvalMetrics& metrics);

  // Gate: candidate metrics present, session_count >= policy.min_sessions,
  // and candidate ndcg strictly above the champion's recorded ndcg.
  PromotionDecision try_promote(std::int64_t candidate_version, const GatePolicy& policy,
                                std::int64_t now);

  // Makes an archived (or the current) champion version champion again.
  void rollback(std::int64_t version, std::int64_t now);

  ModelRecord get_champion() const;
  ModelRecord get_record(std::int64_t version) const;
  std::vector<ModelRecord> list_models() const;  // version ascending
  std::int64_t champion_version() const;

  // Re-reads the directory, picking up promotions done by other
  // processes. Returns the champion version.
  std::int64_t refresh_from_disk();

  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::int64_t, ModelRecord> records_;
  std::int64_t champion_version_ = 0;

  std::string record_path(std::int64_t version) const;
  void persist_record_locked(std::int64_t version) const;
  void persist_manifest_locked(std::int64_t now) const;
  void load_locked();
};

}  // namespace rankserve
