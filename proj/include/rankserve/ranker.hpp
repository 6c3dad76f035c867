#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rankserve/catalog.hpp"
#include "rankserve/common.hpp"
#include "rankserve/query_parser.hpp"
#include "rankserve/retrieval.hpp"
#include "rankserve/user_profile.hpp"

namespace rankserve {

struct EmptyTrainingSet : Error {
  EmptyTrainingSet() : Error("training set is empty") {}
};

struct NonFiniteLoss : Error {
  NonFiniteLoss() : Error("training diverged: weight magnitude exceeded 1e6") {}
};

inline constexpr std::size_t kFeatureCount = 8;

// Fixed feature order. Indices are stable; the names appear in model dumps
// and docs only.
enum Feature : std::size_t {
  kLexicalScoreNorm = 0,
  kFacetMatchRatio = 1,
  kBrandMatch = 2,
  kSizeMatch = 3,
  kUserProductAffinity = 4,
  kUserBrandAffinity = 5,
  kUserFacetCosine = 6,
  kPopularityNorm = 7,
};

extern const std::array<std::string, kFeatureCount> kFeatureNames;

using FeatureVector = std::array<double, kFeatureCount>;
using WeightVector = std::array<double, kFeatureCount>;

struct Hyperparams {
  double learning_rate = 0.05;
  int epochs = 20;
  double l2_lambda = 1e-4;
  std::uint64_t seed = 42;

  bool operator==(const Hyperparams&) const = default;
};

struct RankingModel {
  std::int64_t version = 0;  // 0 until the registry assigns one
  WeightVector weights{};
  std::int64_t trained_at = 0;
  Hyperparams hyperparams;
  std::int64_t training_pair_count = 0;
};

struct TrainingPair {
  FeatureVector x_pos{};
  FeatureVector x_neg{};
  double weight = 1.0;
};

struct ScoredCandidate {
  Candidate candidate;
  FeatureVector features{};
};

struct RankedResult {
  std::string product_id;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based
};

FeatureVector extract_features(const ParsedQuery& pq, const Candidate& cand,
                               const Product& product, const UserProfile* profile,
                               double candidate_set_max_lexical,
                               std::int64_t catalog_max_popularity);

double score(const RankingModel& model, const FeatureVector& x);

// Sorts by score descending, then lexical_score descending, then
// product_id ascending; ranks start at 1.
std::vector<RankedResult> rank(const RankingModel& model,
                               const std::vector<ScoredCandidate>& candidates);

double stable_sigmoid(double z);
double stable_softplus(double z);  // ln(1 + exp(z))

// Loss of one pair, weight * softplus(-(w.x_pos - w.x_neg)), and its
// gradient with respect to w. Regularization is excluded here; train()
// applies it per update.
double pair_loss(const WeightVector& w, const TrainingPair& pair);
WeightVector pair_gradient(const WeightVector& w, const TrainingPair& pair);

// Full objective: sum of pair losses plus (l2_lambda / 2) * ||w||^2.
double training_loss(const WeightVector& w, const std::vector<TrainingPair>& pairs,
                     double l2_lambda);

// Sequential SGD over pairs, shuffled each epoch from a single seeded
// stream. Deterministic given (pairs, hp, init, now). The returned model
// has version 0; the registry assigns one on add.
RankingModel train(const std::vector<TrainingPair>& pairs, const Hyperparams& hp,
                   const RankingModel& init, std::int64_t now);

// Lexical-only model (weight 1 on lexical_score_norm). Serves as the
// version-1 champion so the system ranks sensibly before any feedback.
RankingModel bootstrap_model(std::int64_t now);

nlohmann::json model_to_json(const RankingModel& model);
RankingModel model_from_json(const nlohmann::json& obj);

}  // namespace rankserve
