#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "rankserve/catalog.hpp"
#include "rankserve/common.hpp"
#include "rankserve/feature_store.hpp"
#include "rankserve/lexicon.hpp"
#include "rankserve/ranker.hpp"
#include "rankserve/retrieval.hpp"
#include "rankserve/user_profile.hpp"

namespace rankserve {

struct DuplicateEventId : Error {
  explicit DuplicateEventId(const std::string& id) : Error("duplicate event_id: " + id) {}
};

struct CustomerMismatch : Error {
  CustomerMismatch() : Error("event customer_id does not match profile") {}
};

enum class EventType { impression, click, atc, purchase, reject };

std::string to_string(EventType type);
EventType event_type_from_string(const std::string& s);

inline bool is_engagement(EventType type) {
  return type == EventType::click || type == EventType::atc || type == EventType::purchase;
}

struct FeedbackEvent {
  std::string event_id;
  std::string session_id;
  std::string customer_id;
  std::string query_text;
  std::string product_id;
  EventType event_type = EventType::impression;
  std::int64_t position = 1;  // rank at which the product was shown
  std::int64_t timestamp = 0;

  bool operator==(const FeedbackEvent&) const = default;
};

nlohmann::json event_to_json(const FeedbackEvent& ev);
FeedbackEvent event_from_json(const nlohmann::json& obj);

// Append-only JSON Lines log. Appends serialize and flush before
// returning; duplicate event ids are rejected. The file is replayed on
// open so restarts keep the dedup set.
class EventLog {
 public:
  explicit EventLog(const std::string& path);

  void append(const FeedbackEvent& ev);
  std::vector<FeedbackEvent> events() const;  // append order
  std::size_t size() const;

 private:
  std::string path_;
  mutable std::mutex mutex_;
  std::ofstream out_;
  std::vector<FeedbackEvent> events_;
  std::set<std::string> seen_ids_;
};

struct Impression {
  std::int64_t position = 0;
  std::string product_id;

  bool operator==(const Impression&) const = default;
};

struct Session {
  std::string session_id;
  std::string customer_id;
  std::string query_text;
  std::vector<FeedbackEvent> events;   // time-ordered
  std::vector<Impression> impressions;  // position-ordered, first wins on duplicates
};

// Groups events by session_id and orders sessions by id. Within a session
// events sort by timestamp (stable on ties, preserving append order).
std::vector<Session> sessionize(const std::vector<FeedbackEvent>& events);

// One training pair before feature materialization. channel 0 is
// skip-above, channel 1 is reject; the channel orders otherwise-equal
// pairs deterministically.
struct PairSkeleton {
  std::string session_id;
  std::string pos_product;
  std::string neg_product;
  double weight = 1.0;
  std::int64_t pos_position = 0;
  std::int64_t neg_position = 0;
  int channel = 0;

  bool operator==(const PairSkeleton&) const = default;
};

// Skip-above pairs: each engaged item (click/atc/purchase) paired against
// every unengaged impression shown above it, weighted by the strongest
// engagement (purchase 3.0, atc 2.0, click 1.0). Each reject event adds
// (engaged item, rejected item) pairs at weight 1.0. Output is sorted by
// (pos_position, neg_position, channel).
std::vector<PairSkeleton> session_pair_skeletons(const Session& session);

struct PairBuildContext {
  const Catalog* catalog = nullptr;
  const InvertedIndex* index = nullptr;
  const Lexicon* lexicon = nullptr;
  const FeatureStore* store = nullptr;
  std::int64_t now = 0;
};

// Materializes feature vectors for every session's pair skeletons, with
// profile features as of build time. Sessions whose query fails to parse
// or whose products are missing from the catalog contribute no pairs.
std::vector<TrainingPair> build_training_pairs(const std::vector<Session>& sessions,
                                               const PairBuildContext& ctx);

inline constexpr std::int64_t kDefaultHalfLifeSeconds = 2592000;  // 30 days

double profile_increment_for(EventType type);
double pair_weight_for(EventType type);

// Multiplies every affinity by 2^(-(now - last_updated) / half_life),
// prunes entries below 1e-9 magnitude, and stamps last_updated = now.
// Negative elapsed time is treated as zero.
void decay_profile(UserProfile& profile, std::int64_t now, std::int64_t half_life_s);

UserProfile update_user_profile(const UserProfile& profile, const FeedbackEvent& ev,
                                const Product& product, std::int64_t now,
                                std::int64_t half_life_s = kDefaultHalfLifeSeconds);

FeaturePayload profile_to_payload(const UserProfile& profile);
UserProfile profile_from_payload(const std::string& customer_id, const FeaturePayload& payload);

std::optional<UserProfile> load_profile(const FeatureStore& store,
                                        const std::string& customer_id, std::int64_t now);
void store_profile(FeatureStore& store, const UserProfile& profile, std::int64_t now);

// Loads (or creates) the customer's profile, applies the event, and
// writes it back. The store write is what fires retrain notifications.
void apply_feedback_event(FeatureStore& store, const FeedbackEvent& ev, const Product& product,
                          std::int64_t now, std::int64_t half_life_s = kDefaultHalfLifeSeconds);

}  // namespace rankserve
