#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rankserve/feedback.hpp"
#include "rankserve/model_registry.hpp"
#include "rankserve/ranker.hpp"

namespace rankserve {

struct RetrainContext {
  const Catalog* catalog = nullptr;
  const InvertedIndex* index = nullptr;
  const Lexicon* lexicon = nullptr;
  FeatureStore* store = nullptr;
  ModelRegistry* registry = nullptr;
  Hyperparams hyperparams;
  GatePolicy gate;
};

struct RetrainOutcome {
  bool trained = false;
  std::string skipped_reason;  // set when trained is false
  std::int64_t candidate_version = 0;
  std::int64_t pairs_trained = 0;
  std::int64_t sessions_evaluated = 0;
  std::optional<EvalMetrics> candidate_metrics;
  bool promoted = false;
  std::string decision_reason;
  double champion_gate_ndcg = 0.0;
  std::int64_t champion_version_after = 0;
};

// One train-evaluate-gate-promote pass over the event log. Training pairs
// come from the non-held-out sessions; evaluation runs on the held-out
// split (session-id hash mod 5 == 0). The champion is evaluated lazily the
// first time it faces a gate and its metrics freeze thereafter.
RetrainOutcome run_retrain_cycle(const std::vector<FeedbackEvent>& events,
                                 const RetrainContext& ctx, std::int64_t now);

}  // namespace rankserve
