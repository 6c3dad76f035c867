#include "rankserve/model_registry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

namespace rankserve {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ModelStatus status) {
  switch (status) {
    case ModelStatus::candidate: return "candidate";
    case ModelStatus::champion: return "champion";
    case ModelStatus::archived: return "archived";
  }
  throw Error("unknown model status");
}

ModelStatus model_status_from_string(const std::string& s) {
  if (s == "candidate") return ModelStatus::candidate;
  if (s == "champion") return ModelStatus::champion;
  if (s == "archived") return ModelStatus::archived;
  throw Error("unknown model status: " + s);
}

double dcg_at_k(const std::vector<double>& gains, std::size_t k) {
  double dcg = 0.0;
  std::size_t n = std::min(k, gains.size());
  for (std::size_t i = 0; i < n; ++i) {
    dcg += gains[i] / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg;
}

double ndcg_at_k(const std::vector<double>& gains, std::size_t k) {
  std::vector<double> ideal = gains;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = dcg_at_k(ideal, k);
  if (idcg == 0.0) return 0.0;
  return dcg_at_k(gains, k) / idcg;
}

double reciprocal_rank_at_k(const std::vector<double>& gains, std::size_t k) {
  std::size_t n = std::min(k, gains.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (gains[i] > 0.0) return 1.0 / (static_cast<double>(i) + 1.0);
  }
  return 0.0;
}

EvalMetrics evaluate_model(const RankingModel& model, const std::vector<Session>& sessions,
                           const PairBuildContext& ctx) {
  EvalMetrics out;
  double ndcg_sum = 0.0;
  double mrr_sum = 0.0;

  for (const auto& session : sessions) {
    std::set<std::string> engaged;
    for (const auto& ev : session.events) {
      if (is_engagement(ev.event_type)) engaged.insert(ev.product_id);
    }
    if (engaged.empty()) continue;

    ParsedQuery pq;
    try {
      pq = parse_query(session.query_text, *ctx.lexicon);
    } catch (const EmptyQuery&) {
      continue;
    }

    std::vector<const Product*> products;
    std::vector<double> lexical;
    double max_lexical = 0.0;
    for (const auto& imp : session.impressions) {
      const Product* product = ctx.catalog->find(imp.product_id);
      if (!product) continue;
      double s = lexical_score_for(pq, *product, *ctx.index);
      products.push_back(product);
      lexical.push_back(s);
      max_lexical = std::max(max_lexical, s);
    }
    if (products.empty()) continue;

    auto profile = load_profile(*ctx.store, session.customer_id, ctx.now);
    const UserProfile* profile_ptr = profile ? &*profile : nullptr;
    std::int64_t max_pop = ctx.catalog->max_purchase_count();

    std::vector<ScoredCandidate> candidates;
    candidates.reserve(products.size());
    for (std::size_t i = 0; i < products.size(); ++i) {
      Candidate cand{products[i]->product_id, lexical[i]};
      candidates.push_back(
          {cand, extract_features(pq, cand, *products[i], profile_ptr, max_lexical, max_pop)});
    }
    auto ranked = rank(model, candidates);

    std::vector<double> gains;
    gains.reserve(ranked.size());
    bool any_engaged = false;
    for (const auto& r : ranked) {
      double g = engaged.count(r.product_id) ? 1.0 : 0.0;
      any_engaged = any_engaged || g > 0.0;
      gains.push_back(g);
    }
    if (!any_engaged) continue;

    ndcg_sum += ndcg_at_k(gains, 10);
    mrr_sum += reciprocal_rank_at_k(gains, 10);
    out.session_count += 1;
  }

  if (out.session_count == 0) throw NoEvaluableSessions();
  out.ndcg_at_10 = ndcg_sum / static_cast<double>(out.session_count);
  out.mrr = mrr_sum / static_cast<double>(out.session_count);
  return out;
}

json metrics_to_json(const EvalMetrics& m) {
  return json{{"ndcg_at_10", m.ndcg_at_10}, {"mrr", m.mrr}, {"session_count", m.session_count}};
}

EvalMetrics metrics_from_json(const json& obj) {
  EvalMetrics m;
  m.ndcg_at_10 = obj.at("ndcg_at_10").get<double>();
  m.mrr = obj.at("mrr").get<double>();
  m.session_count = obj.at("session_count").get<std::int64_t>();
  return m;
}

namespace {

void atomic_write(const std::string& path, const std::string& body) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw FileUnreadable(tmp);
    out << body;
    if (!out.flush()) throw FileUnreadable(tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw FileUnreadable(path);
}

}  // namespace

ModelRegistry::ModelRegistry(const std::string& dir, std::int64_t now) : dir_(dir) {
  std::error_code ec;
  fs::create_directories(fs::path(dir_) / "models", ec);
  if (ec) throw RegistryUnavailable("cannot create " + dir_ + ": " + ec.message());

  std::unique_lock lock(mutex_);
  if (fs::exists(fs::path(dir_) / "manifest.json")) {
    load_locked();
    return;
  }
  RankingModel bootstrap = bootstrap_model(now);
  bootstrap.version = 1;
  ModelRecord record;
  record.model = bootstrap;
  record.status = ModelStatus::champion;
  record.created_at = now;
  records_[1] = std::move(record);
  champion_version_ = 1;
  persist_record_locked(1);
  persist_manifest_locked(now);
}

std::int64_t ModelRegistry::add_candidate(RankingModel model, std::int64_t now) {
  std::unique_lock lock(mutex_);
  std::int64_t version = records_.empty() ? 1 : records_.rbegin()->first + 1;
  model.version = version;
  ModelRecord record;
  record.model = std::move(model);
  record.status = ModelStatus::candidate;
  record.created_at = now;
  records_[version] = std::move(record);
  persist_record_locked(version);
  return version;
}

void ModelRegistry::set_metrics(std::int64_t version, const EvalMetrics& metrics) {
  std::unique_lock lock(mutex_);
  auto it = records_.find(version);
  if (it == records_.end()) throw UnknownVersion(version);
  if (it->second.status == ModelStatus::champion && it->second.metrics) {
    throw Error("champion metrics are frozen once recorded");
  }
  it->second.metrics = metrics;
  persist_record_locked(version);
}

PromotionDecision ModelRegistry::try_promote(std::int64_t candidate_version,
                                             const GatePolicy& policy, std::int64_t now) {
  std::unique_lock lock(mutex_);
  auto it = records_.find(candidate_version);
  if (it == records_.end()) throw UnknownVersion(candidate_version);
  ModelRecord& candidate = it->second;
  if (!candidate.metrics) throw NotEvaluated(candidate_version);

  ModelRecord& champion = records_.at(champion_version_);
  PromotionDecision decision;
  if (!champion.metrics) {
    decision = {false, "champion not evaluated"};
  } else if (candidate.metrics->session_count < policy.min_sessions) {
    decision = {false, "insufficient sessions"};
  } else if (candidate.metrics->ndcg_at_10 == champion.metrics->ndcg_at_10) {
    decision = {false, "tie keeps champion"};
  } else if (candidate.metrics->ndcg_at_10 < champion.metrics->ndcg_at_10) {
    decision = {false, "champion outperforms candidate"};
  } else {
    decision = {true, "candidate ndcg exceeds champion"};
  }

  log_line("info", "promotion gate v" + std::to_string(candidate_version) + " vs v" +
                       std::to_string(champion_version_) + ": " +
                       (decision.promoted ? "promoted" : "rejected") + " (" + decision.reason + ")");
  if (!decision.promoted) return decision;

  champion.status = ModelStatus::archived;
  candidate.status = ModelStatus::champion;
  std::int64_t old_champion = champion_version_;
  champion_version_ = candidate_version;
  persist_record_locked(old_champion);
  persist_record_locked(candidate_version);
  persist_manifest_locked(now);
  return decision;
}

void ModelRegistry::rollback(std::int64_t version, std::int64_t now) {
  std::unique_lock lock(mutex_);
  auto it = records_.find(version);
  if (it == records_.end()) throw UnknownVersion(version);
  if (it->second.status == ModelStatus::candidate) {
    throw Error("version " + std::to_string(version) + " was never champion; promote it instead");
  }
  if (version == champion_version_) return;

  ModelRecord& old_champion = records_.at(champion_version_);
  old_champion.status = ModelStatus::archived;
  it->second.status = ModelStatus::champion;
  std::int64_t previous = champion_version_;
  champion_version_ = version;
  persist_record_locked(previous);
  persist_record_locked(version);
  persist_manifest_locked(now);
}

ModelRecord ModelRegistry::get_champion() const {
  std::shared_lock lock(mutex_);
  return records_.at(champion_version_);
}

ModelRecord ModelRegistry::get_record(std::int64_t version) const {
  std::shared_lock lock(mutex_);
  auto it = records_.find(version);
  if (it == records_.end()) throw UnknownVersion(version);
  return it->second;
}

std::vector<ModelRecord> ModelRegistry::list_models() const {
  std::shared_lock lock(mutex_);
  std::vector<ModelRecord> out;
  out.reserve(records_.size());
  for (const auto& [version, record] : records_) out.push_back(record);
  return out;
}

std::int64_t ModelRegistry::champion_version() const {
  std::shared_lock lock(mutex_);
  return champion_version_;
}

std::int64_t ModelRegistry::refresh_from_disk() {
  std::unique_lock lock(mutex_);
  load_locked();
  return champion_version_;
}

std::string ModelRegistry::record_path(std::int64_t version) const {
  return (fs::path(dir_) / "models" / ("v" + std::to_string(version) + ".json")).string();
}

void ModelRegistry::persist_record_locked(std::int64_t version) const {
  const ModelRecord& record = records_.at(version);
  json obj = {
      {"model", model_to_json(record.model)},
      {"status", to_string(record.status)},
      {"metrics", record.metrics ? metrics_to_json(*record.metrics) : json(nullptr)},
      {"created_at", record.created_at},
  };
  atomic_write(record_path(version), obj.dump(2) + "\n");
}

void ModelRegistry::persist_manifest_locked(std::int64_t now) const {
  json obj = {{"champion_version", champion_version_}, {"updated_at", now}};
  atomic_write((fs::path(dir_) / "manifest.json").string(), obj.dump(2) + "\n");
}

void ModelRegistry::load_locked() {
  std::ifstream manifest_in(fs::path(dir_) / "manifest.json");
  if (!manifest_in) throw RegistryUnavailable("missing manifest in " + dir_);
  json manifest;
  try {
    manifest = json::parse(manifest_in);
  } catch (const json::parse_error& e) {
    throw RegistryUnavailable(std::string("corrupt manifest: ") + e.what());
  }

  std::map<std::int64_t, ModelRecord> loaded;
  for (const auto& entry : fs::directory_iterator(fs::path(dir_) / "models")) {
    const std::string name = entry.path().filename().string();
    if (name.size() < 7 || name.rfind("v", 0) != 0 ||
        name.substr(name.size() - 5) != ".json") {
      continue;
    }
    std::ifstream in(entry.path());
    if (!in) throw RegistryUnavailable("cannot read " + entry.path().string());
    json obj;
    try {
      obj = json::parse(in);
    } catch (const json::parse_error& e) {
      throw RegistryUnavailable("corrupt record " + name + ": " + e.what());
    }
    ModelRecord record;
    record.model = model_from_json(obj.at("model"));
    record.status = model_status_from_string(obj.at("status").get<std::string>());
    if (obj.contains("metrics") && !obj.at("metrics").is_null()) {
      record.metrics = metrics_from_json(obj.at("metrics"));
    }
    record.created_at = obj.at("created_at").get<std::int64_t>();
    loaded[record.model.version] = std::move(record);
  }

  std::int64_t champion = manifest.at("champion_version").get<std::int64_t>();
  if (!loaded.count(champion)) {
    throw RegistryUnavailable("manifest names missing version " + std::to_string(champion));
  }
  std::size_t champion_count = 0;
  for (const auto& [version, record] : loaded) {
    if (record.status == ModelStatus::champion) ++champion_count;
  }
  if (champion_count != 1 || loaded.at(champion).status != ModelStatus::champion) {
    throw RegistryUnavailable("registry must hold exactly one champion");
  }
  records_ = std::move(loaded);
  champion_version_ = champion;
}

}  // namespace rankserve
