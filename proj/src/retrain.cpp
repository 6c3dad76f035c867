#include "rankserve/retrain.hpp"

namespace rankserve {

RetrainOutcome run_retrain_cycle(const std::vector<FeedbackEvent>& events,
                                 const RetrainContext& ctx, std::int64_t now) {
  RetrainOutcome out;
  out.champion_version_after = ctx.registry->champion_version();

  auto sessions = sessionize(events);
  std::vector<Session> train_sessions;
  std::vector<Session> heldout_sessions;
  for (auto& session : sessions) {
    if (is_heldout_session(session.session_id)) {
      heldout_sessions.push_back(std::move(session));
    } else {
      train_sessions.push_back(std::move(session));
    }
  }

  PairBuildContext build_ctx{ctx.catalog, ctx.index, ctx.lexicon, ctx.store, now};
  auto pairs = build_training_pairs(train_sessions, build_ctx);
  if (pairs.empty()) {
    out.skipped_reason = "no training pairs";
    return out;
  }

  ModelRecord champion = ctx.registry->get_champion();
  RankingModel candidate_model;
  try {
    candidate_model = train(pairs, ctx.hyperparams, champion.model, now);
  } catch (const NonFiniteLoss& e) {
    out.skipped_reason = e.what();
    return out;
  }
  out.trained = true;
  out.pairs_trained = static_cast<std::int64_t>(pairs.size());
  out.candidate_version = ctx.registry->add_candidate(std::move(candidate_model), now);

  EvalMetrics candidate_metrics;
  try {
    candidate_metrics = evaluate_model(ctx.registry->get_record(out.candidate_version).model,
                                       heldout_sessions, build_ctx);
  } catch (const NoEvaluableSessions&) {
    out.decision_reason = "no evaluable held-out sessions";
    return out;
  }
  out.candidate_metrics = candidate_metrics;
  out.sessions_evaluated = candidate_metrics.session_count;
  ctx.registry->set_metrics(out.candidate_version, candidate_metrics);

  // First gate for this champion: record its held-out metrics, which the
  // gate then treats as frozen.
  if (!champion.metrics) {
    try {
      EvalMetrics champion_metrics =
          evaluate_model(champion.model, heldout_sessions, build_ctx);
      ctx.registry->set_metrics(champion.model.version, champion_metrics);
      champion.metrics = champion_metrics;
    } catch (const NoEvaluableSessions&) {
      out.decision_reason = "champion not evaluated";
      return out;
    }
  }
  out.champion_gate_ndcg = champion.metrics->ndcg_at_10;

  auto decision = ctx.registry->try_promote(out.candidate_version, ctx.gate, now);
  out.promoted = decision.promoted;
  out.decision_reason = decision.reason;
  out.champion_version_after = ctx.registry->champion_version();
  return out;
}

}  // namespace rankserve
