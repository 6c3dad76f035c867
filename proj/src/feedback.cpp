#include "rankserve/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "rankserve/query_parser.hpp"

namespace rankserve {

using nlohmann::json;

std::string to_string(EventType type) {
  switch (type) {
    case EventType::impression: return "impression";
    case EventType::click: return "click";
    case EventType::atc: return "atc";
    case EventType::purchase: return "purchase";
    case EventType::reject: return "reject";
  }
  throw Error("unknown event type");
}

EventType event_type_from_string(const std::string& s) {
  if (s == "impression") return EventType::impression;
  if (s == "click") return EventType::click;
  if (s == "atc") return EventType::atc;
  if (s == "purchase") return EventType::purchase;
  if (s == "reject") return EventType::reject;
  throw Error("unknown event_type: " + s);
}

json event_to_json(const FeedbackEvent& ev) {
  return json{
      {"event_id", ev.event_id},
      {"session_id", ev.session_id},
      {"customer_id", ev.customer_id},
      {"query_text", ev.query_text},
      {"product_id", ev.product_id},
      {"event_type", to_string(ev.event_type)},
      {"position", ev.position},
      {"timestamp", ev.timestamp},
  };
}

FeedbackEvent event_from_json(const json& obj) {
  if (!obj.is_object()) throw Error("event must be a JSON object");
  for (const char* field : {"event_id", "session_id", "customer_id", "query_text", "product_id",
                            "event_type"}) {
    if (!obj.contains(field) || !obj.at(field).is_string()) {
      throw Error(std::string("event field '") + field + "' must be a string");
    }
  }
  for (const char* field : {"position", "timestamp"}) {
    if (!obj.contains(field) || !obj.at(field).is_number_integer()) {
      throw Error(std::string("event field '") + field + "' must be an integer");
    }
  }
  FeedbackEvent ev;
  ev.event_id = obj.at("event_id").get<std::string>();
  ev.session_id = obj.at("session_id").get<std::string>();
  ev.customer_id = obj.at("customer_id").get<std::string>();
  ev.query_text = obj.at("query_text").get<std::string>();
  ev.product_id = obj.at("product_id").get<std::string>();
  ev.event_type = event_type_from_string(obj.at("event_type").get<std::string>());
  ev.position = obj.at("position").get<std::int64_t>();
  ev.timestamp = obj.at("timestamp").get<std::int64_t>();
  if (ev.event_id.empty()) throw Error("event_id must be nonempty");
  if (ev.session_id.empty()) throw Error("session_id must be nonempty");
  if (ev.customer_id.empty()) throw Error("customer_id must be nonempty");
  if (ev.product_id.empty()) throw Error("product_id must be nonempty");
  if (ev.position < 1) throw Error("position must be at least 1");
  return ev;
}

EventLog::EventLog(const std::string& path) : path_(path) {
  std::ifstream in(path_);
  if (in) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json obj;
      try {
        obj = json::parse(line);
      } catch (const json::parse_error& e) {
        throw Error("corrupt event log at line " + std::to_string(line_no) + ": " + e.what());
      }
      FeedbackEvent ev = event_from_json(obj);
      if (!seen_ids_.insert(ev.event_id).second) {
        throw Error("corrupt event log at line " + std::to_string(line_no) +
                    ": duplicate event_id " + ev.event_id);
      }
      events_.push_back(std::move(ev));
    }
  }
  out_.open(path_, std::ios::app);
  if (!out_) throw FileUnreadable(path_);
}

void EventLog::append(const FeedbackEvent& ev) {
  if (ev.event_id.empty()) throw Error("event_id must be nonempty");
  if (ev.position < 1) throw Error("position must be at least 1");
  std::lock_guard lock(mutex_);
  if (seen_ids_.count(ev.event_id)) throw DuplicateEventId(ev.event_id);
  out_ << event_to_json(ev).dump() << '\n';
  if (!out_.flush()) throw Error("event log write failed: " + path_);
  seen_ids_.insert(ev.event_id);
  events_.push_back(ev);
}

std::vector<FeedbackEvent> EventLog::events() const {
  std::lock_guard lock(mutex_);
  return events_;
}

std::size_t EventLog::size() const {
  std::lock_guard lock(mutex_);
  return events_.size();
}

std::vector<Session> sessionize(const std::vector<FeedbackEvent>& events) {
  std::map<std::string, std::vector<FeedbackEvent>> by_session;
  for (const auto& ev : events) by_session[ev.session_id].push_back(ev);

  std::vector<Session> sessions;
  sessions.reserve(by_session.size());
  for (auto& [session_id, evs] : by_session) {
    std::stable_sort(evs.begin(), evs.end(), [](const FeedbackEvent& a, const FeedbackEvent& b) {
      return a.timestamp < b.timestamp;
    });
    Session s;
    s.session_id = session_id;
    s.customer_id = evs.front().customer_id;
    s.query_text = evs.front().query_text;
    for (const auto& ev : evs) {
      if (ev.event_type == EventType::impression) {
        s.impressions.push_back({ev.position, ev.product_id});
      }
    }
    std::stable_sort(s.impressions.begin(), s.impressions.end(),
                     [](const Impression& a, const Impression& b) { return a.position < b.position; });
    s.impressions.erase(
        std::unique(s.impressions.begin(), s.impressions.end(),
                    [](const Impression& a, const Impression& b) { return a.position == b.position; }),
        s.impressions.end());
    s.events = std::move(evs);
    sessions.push_back(std::move(s));
  }
  return sessions;
}

double profile_increment_for(EventType type) {
  switch (type) {
    case EventType::purchase: return 1.0;
    case EventType::atc: return 0.5;
    case EventType::click: return 0.25;
    case EventType::reject: return -0.5;
    case EventType::impression: return 0.0;
  }
  throw Error("unknown event type");
}

double pair_weight_for(EventType type) {
  switch (type) {
    case EventType::purchase: return 3.0;
    case EventType::atc: return 2.0;
    case EventType::click: return 1.0;
    default: throw Error("pair weight defined only for engagement events");
  }
}

std::vector<PairSkeleton> session_pair_skeletons(const Session& session) {
  struct Engagement {
    double weight = 0.0;
    std::int64_t position = 0;
  };
  // Strongest engagement wins; first event wins on equal strength.
  std::map<std::string, Engagement> engaged;
  for (const auto& ev : session.events) {
    if (!is_engagement(ev.event_type)) continue;
    double w = pair_weight_for(ev.event_type);
    auto [it, inserted] = engaged.try_emplace(ev.product_id, Engagement{w, ev.position});
    if (!inserted && w > it->second.weight) it->second = {w, ev.position};
  }

  std::vector<PairSkeleton> out;
  for (const auto& [pos_product, eng] : engaged) {
    for (const auto& imp : session.impressions) {
      if (imp.position >= eng.position) break;
      if (engaged.count(imp.product_id)) continue;
      out.push_back({session.session_id, pos_product, imp.product_id, eng.weight, eng.position,
                     imp.position, 0});
    }
  }
  for (const auto& ev : session.events) {
    if (ev.event_type != EventType::reject) continue;
    for (const auto& [pos_product, eng] : engaged) {
      out.push_back({session.session_id, pos_product, ev.product_id, 1.0, eng.position,
                     ev.position, 1});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const PairSkeleton& a, const PairSkeleton& b) {
    return std::tie(a.pos_position, a.neg_position, a.channel, a.pos_product, a.neg_product) <
           std::tie(b.pos_position, b.neg_position, b.channel, b.pos_product, b.neg_product);
  });
  return out;
}

std::vector<TrainingPair> build_training_pairs(const std::vector<Session>& sessions,
                                               const PairBuildContext& ctx) {
  std::vector<TrainingPair> pairs;
  for (const auto& session : sessions) {
    auto skeletons = session_pair_skeletons(session);
    if (skeletons.empty()) continue;

    ParsedQuery pq;
    try {
      pq = parse_query(session.query_text, *ctx.lexicon);
    } catch (const EmptyQuery&) {
      continue;
    }

    // The per-session candidate set for lexical normalization is every
    // product the session touched.
    std::set<std::string> product_ids;
    for (const auto& imp : session.impressions) product_ids.insert(imp.product_id);
    for (const auto& sk : skeletons) {
      product_ids.insert(sk.pos_product);
      product_ids.insert(sk.neg_product);
    }
    std::map<std::string, double> lexical;
    double max_lexical = 0.0;
    for (const auto& id : product_ids) {
      const Product* product = ctx.catalog->find(id);
      if (!product) continue;
      double s = lexical_score_for(pq, *product, *ctx.index);
      lexical[id] = s;
      max_lexical = std::max(max_lexical, s);
    }

    auto profile = load_profile(*ctx.store, session.customer_id, ctx.now);
    const UserProfile* profile_ptr = profile ? &*profile : nullptr;
    std::int64_t max_pop = ctx.catalog->max_purchase_count();

    for (const auto& sk : skeletons) {
      const Product* pos = ctx.catalog->find(sk.pos_product);
      const Product* neg = ctx.catalog->find(sk.neg_product);
      if (!pos || !neg) continue;
      Candidate pos_cand{sk.pos_product, lexical.at(sk.pos_product)};
      Candidate neg_cand{sk.neg_product, lexical.at(sk.neg_product)};
      TrainingPair pair;
      pair.x_pos = extract_features(pq, pos_cand, *pos, profile_ptr, max_lexical, max_pop);
      pair.x_neg = extract_features(pq, neg_cand, *neg, profile_ptr, max_lexical, max_pop);
      pair.weight = sk.weight;
      pairs.push_back(pair);
    }
  }
  return pairs;
}

void decay_profile(UserProfile& profile, std::int64_t now, std::int64_t half_life_s) {
  if (half_life_s <= 0) throw Error("half life must be positive");
  std::int64_t elapsed = std::max<std::int64_t>(0, now - profile.last_updated);
  double factor = std::exp2(-static_cast<double>(elapsed) / static_cast<double>(half_life_s));
  for (auto* m : {&profile.product_affinity, &profile.brand_affinity, &profile.facet_affinity}) {
    for (auto it = m->begin(); it != m->end();) {
      it->second *= factor;
      if (std::fabs(it->second) < 1e-9) {
        it = m->erase(it);
      } else {
        ++it;
      }
    }
  }
  profile.last_updated = now;
}

namespace {

void bump(std::map<std::string, double>& m, const std::string& key, double w) {
  double next = m[key] + w;
  if (std::fabs(next) < 1e-9) {
    m.erase(key);
  } else {
    m[key] = next;
  }
}

}  // namespace

UserProfile update_user_profile(const UserProfile& profile, const FeedbackEvent& ev,
                                const Product& product, std::int64_t now,
                                std::int64_t half_life_s) {
  if (ev.customer_id != profile.customer_id) throw CustomerMismatch();
  if (ev.product_id != product.product_id) throw Error("event product does not match product");
  UserProfile next = profile;
  decay_profile(next, now, half_life_s);
  double w = profile_increment_for(ev.event_type);
  if (w != 0.0) {
    bump(next.product_affinity, product.product_id, w);
    if (product.brand) bump(next.brand_affinity, *product.brand, w);
    for (const auto& facet : product.facets) bump(next.facet_affinity, facet, w);
  }
  return next;
}

FeaturePayload profile_to_payload(const UserProfile& profile) {
  FeaturePayload payload;
  for (const auto& [id, s] : profile.product_affinity) payload["p:" + id] = s;
  for (const auto& [brand, s] : profile.brand_affinity) payload["b:" + brand] = s;
  for (const auto& [facet, s] : profile.facet_affinity) payload["f:" + facet] = s;
  payload["last_updated"] = static_cast<double>(profile.last_updated);
  return payload;
}

UserProfile profile_from_payload(const std::string& customer_id, const FeaturePayload& payload) {
  UserProfile profile;
  profile.customer_id = customer_id;
  for (const auto& [name, value] : payload) {
    if (!std::holds_alternative<double>(value)) {
      throw Error("profile payload value for '" + name + "' is not a number");
    }
    double s = std::get<double>(value);
    if (name == "last_updated") {
      profile.last_updated = static_cast<std::int64_t>(s);
    } else if (name.rfind("p:", 0) == 0) {
      profile.product_affinity[name.substr(2)] = s;
    } else if (name.rfind("b:", 0) == 0) {
      profile.brand_affinity[name.substr(2)] = s;
    } else if (name.rfind("f:", 0) == 0) {
      profile.facet_affinity[name.substr(2)] = s;
    } else {
      throw Error("unknown profile payload key: " + name);
    }
  }
  return profile;
}

std::optional<UserProfile> load_profile(const FeatureStore& store,
                                        const std::string& customer_id, std::int64_t now) {
  auto rec = store.get({FeatureNamespace::user, customer_id}, now);
  if (!rec) return std::nullopt;
  return profile_from_payload(customer_id, rec->payload);
}

void store_profile(FeatureStore& store, const UserProfile& profile, std::int64_t now) {
  store.put({FeatureNamespace::user, profile.customer_id}, profile_to_payload(profile),
            std::nullopt, now);
}

void apply_feedback_event(FeatureStore& store, const FeedbackEvent& ev, const Product& product,
                          std::int64_t now, std::int64_t half_life_s) {
  UserProfile profile;
  if (auto existing = load_profile(store, ev.customer_id, now)) {
    profile = std::move(*existing);
  } else {
    profile.customer_id = ev.customer_id;
    profile.last_updated = now;
  }
  UserProfile next = update_user_profile(profile, ev, product, now, half_life_s);
  store_profile(store, next, now);
}

}  // namespace rankserve
