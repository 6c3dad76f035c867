#include "rankserve/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rankserve {

using nlohmann::json;

const std::array<std::string, kFeatureCount> kFeatureNames = {
    "lexical_score_norm", "facet_match_ratio",   "brand_match",
    "size_match",         "user_product_affinity", "user_brand_affinity",
    "user_facet_cosine",  "popularity_norm",
};

namespace {

double squash(double s) { return s / (1.0 + std::fabs(s)); }

double affinity_or_zero(const std::map<std::string, double>& m, const std::string& key) {
  auto it = m.find(key);
  return it == m.end() ? 0.0 : it->second;
}

}  // namespace

FeatureVector extract_features(const ParsedQuery& pq, const Candidate& cand,
                               const Product& product, const UserProfile* profile,
                               double candidate_set_max_lexical,
                               std::int64_t catalog_max_popularity) {
  FeatureVector x{};

  x[kLexicalScoreNorm] = cand.lexical_score / std::max(candidate_set_max_lexical, 1e-12);

  if (pq.facets.empty()) {
    x[kFacetMatchRatio] = 1.0;
  } else {
    std::size_t hits = 0;
    for (const auto& facet : pq.facets) hits += product.facets.count(facet);
    x[kFacetMatchRatio] = static_cast<double>(hits) / static_cast<double>(pq.facets.size());
  }

  x[kBrandMatch] = (pq.brand && product.brand && *pq.brand == *product.brand) ? 1.0 : 0.0;

  if (pq.size && product.size && pq.size->unit == product.size->unit &&
      product.size->magnitude > 0.0) {
    double ratio = pq.size->magnitude / product.size->magnitude;
    if (std::fabs(ratio - 1.0) <= 0.1) x[kSizeMatch] = 1.0;
  }

  if (profile) {
    x[kUserProductAffinity] = squash(affinity_or_zero(profile->product_affinity, product.product_id));
    if (product.brand) {
      x[kUserBrandAffinity] = squash(affinity_or_zero(profile->brand_affinity, *product.brand));
    }
    if (!product.facets.empty() && !profile->facet_affinity.empty()) {
      double dot = 0.0;
      for (const auto& facet : product.facets) dot += affinity_or_zero(profile->facet_affinity, facet);
      double profile_norm_sq = 0.0;
      for (const auto& [facet, s] : profile->facet_affinity) profile_norm_sq += s * s;
      double denom = std::sqrt(profile_norm_sq) * std::sqrt(static_cast<double>(product.facets.size()));
      if (denom > 0.0) x[kUserFacetCosine] = dot / denom;
    }
  }

  if (catalog_max_popularity > 0) {
    x[kPopularityNorm] = std::log1p(static_cast<double>(product.purchase_count)) /
                         std::log1p(static_cast<double>(catalog_max_popularity));
  }

  return x;
}

double score(const RankingModel& model, const FeatureVector& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < kFeatureCount; ++i) s += model.weights[i] * x[i];
  return s;
}

std::vector<RankedResult> rank(const RankingModel& model,
                               const std::vector<ScoredCandidate>& candidates) {
  struct Row {
    const ScoredCandidate* cand;
    double score;
  };
  std::vector<Row> rows;
  rows.reserve(candidates.size());
  for (const auto& c : candidates) rows.push_back({&c, score(model, c.features)});
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.cand->candidate.lexical_score != b.cand->candidate.lexical_score) {
      return a.cand->candidate.lexical_score > b.cand->candidate.lexical_score;
    }
    return a.cand->candidate.product_id < b.cand->candidate.product_id;
  });
  std::vector<RankedResult> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.push_back({rows[i].cand->candidate.product_id, rows[i].score, i + 1});
  }
  return out;
}

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double stable_softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z)));
}

double pair_loss(const WeightVector& w, const TrainingPair& pair) {
  double delta = 0.0;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    delta += w[i] * (pair.x_pos[i] - pair.x_neg[i]);
  }
  return pair.weight * stable_softplus(-delta);
}

WeightVector pair_gradient(const WeightVector& w, const TrainingPair& pair) {
  double delta = 0.0;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    delta += w[i] * (pair.x_pos[i] - pair.x_neg[i]);
  }
  double g = -pair.weight * stable_sigmoid(-delta);
  WeightVector grad{};
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    grad[i] = g * (pair.x_pos[i] - pair.x_neg[i]);
  }
  return grad;
}

double training_loss(const WeightVector& w, const std::vector<TrainingPair>& pairs,
                     double l2_lambda) {
  double loss = 0.0;
  for (const auto& pair : pairs) loss += pair_loss(w, pair);
  double norm_sq = 0.0;
  for (double wi : w) norm_sq += wi * wi;
  return loss + 0.5 * l2_lambda * norm_sq;
}

RankingModel train(const std::vector<TrainingPair>& pairs, const Hyperparams& hp,
                   const RankingModel& init, std::int64_t now) {
  if (pairs.empty()) throw EmptyTrainingSet();
  if (hp.learning_rate <= 0.0) throw Error("learning_rate must be positive");
  if (hp.epochs < 1) throw Error("epochs must be at least 1");
  if (hp.l2_lambda < 0.0) throw Error("l2_lambda must be nonnegative");
  for (const auto& pair : pairs) {
    if (!(pair.weight > 0.0)) throw Error("pair weight must be positive");
  }

  WeightVector w = init.weights;
  DetRng rng(hp.seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t idx : order) {
      const TrainingPair& pair = pairs[idx];
      double delta = 0.0;
      for (std::size_t i = 0; i < kFeatureCount; ++i) {
        delta += w[i] * (pair.x_pos[i] - pair.x_neg[i]);
      }
      double g = pair.weight * stable_sigmoid(-delta);
      for (std::size_t i = 0; i < kFeatureCount; ++i) {
        w[i] += hp.learning_rate * (g * (pair.x_pos[i] - pair.x_neg[i]) - hp.l2_lambda * w[i]);
        if (!std::isfinite(w[i]) || std::fabs(w[i]) > 1e6) throw NonFiniteLoss();
      }
    }
  }

  RankingModel model;
  model.version = 0;
  model.weights = w;
  model.trained_at = now;
  model.hyperparams = hp;
  model.training_pair_count = static_cast<std::int64_t>(pairs.size());
  return model;
}

RankingModel bootstrap_model(std::int64_t now) {
  RankingModel model;
  model.weights[kLexicalScoreNorm] = 1.0;
  model.trained_at = now;
  model.training_pair_count = 0;
  return model;
}

json model_to_json(const RankingModel& model) {
  return json{
      {"version", model.version},
      {"weights", model.weights},
      {"trained_at", model.trained_at},
      {"hyperparams",
       {{"learning_rate", model.hyperparams.learning_rate},
        {"epochs", model.hyperparams.epochs},
        {"l2_lambda", model.hyperparams.l2_lambda},
        {"seed", model.hyperparams.seed}}},
      {"training_pair_count", model.training_pair_count},
  };
}

RankingModel model_from_json(const json& obj) {
  RankingModel model;
  model.version = obj.at("version").get<std::int64_t>();
  const auto& weights = obj.at("weights");
  if (!weights.is_array() || weights.size() != kFeatureCount) {
    throw Error("model weights must be an array of 8 numbers");
  }
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    model.weights[i] = weights.at(i).get<double>();
    if (!std::isfinite(model.weights[i])) throw Error("model weight is not finite");
  }
  model.trained_at = obj.at("trained_at").get<std::int64_t>();
  const auto& hp = obj.at("hyperparams");
  model.hyperparams.learning_rate = hp.at("learning_rate").get<double>();
  model.hyperparams.epochs = hp.at("epochs").get<int>();
  model.hyperparams.l2_lambda = hp.at("l2_lambda").get<double>();
  model.hyperparams.seed = hp.at("seed").get<std::uint64_t>();
  model.training_pair_count = obj.at("training_pair_count").get<std::int64_t>();
  return model;
}

}  // namespace rankserve
