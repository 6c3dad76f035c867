#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "doctest.h"
#include "rankserve/feedback.hpp"
#include "test_util.hpp"

using namespace rankserve;

namespace {

// Independent pair enumeration: no early exit on sorted impressions, plain
// std::sort at the end, weights written out literally.
std::vector<PairSkeleton> oracle_skeletons(const Session& session) {
  struct Eng {
    double weight;
    std::int64_t position;
  };
  std::map<std::string, Eng> engaged;
  for (const auto& ev : session.events) {
    double w = 0.0;
    if (ev.event_type == EventType::purchase) w = 3.0;
    else if (ev.event_type == EventType::atc) w = 2.0;
    else if (ev.event_type == EventType::click) w = 1.0;
    else continue;
    auto it = engaged.find(ev.product_id);
    if (it == engaged.end()) {
      engaged.emplace(ev.product_id, Eng{w, ev.position});
    } else if (w > it->second.weight) {
      it->second = {w, ev.position};
    }
  }

  std::vector<PairSkeleton> out;
  for (const auto& [pos_product, eng] : engaged) {
    for (const auto& imp : session.impressions) {
      if (imp.position >= eng.position) continue;
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
  std::sort(out.begin(), out.end(), [](const PairSkeleton& a, const PairSkeleton& b) {
    return std::tie(a.pos_position, a.neg_position, a.channel, a.pos_product, a.neg_product) <
           std::tie(b.pos_position, b.neg_position, b.channel, b.pos_product, b.neg_product);
  });
  return out;
}

}  // namespace

TEST_SUITE("feedback") {

TEST_CASE("event json round-trips and is validated field by field") {
  FeedbackEvent ev = testutil::make_event("e1", "s1", "u1", "p1", EventType::atc, 3, 1700000000,
                                          "organic milk");
  nlohmann::json obj = event_to_json(ev);
  CHECK(obj["event_type"] == "atc");
  CHECK(event_from_json(obj) == ev);

  for (EventType type : {EventType::impression, EventType::click, EventType::purchase,
                         EventType::reject}) {
    ev.event_type = type;
    CHECK(event_from_json(event_to_json(ev)) == ev);
  }

  auto broken = [&](const char* field, nlohmann::json value) {
    nlohmann::json bad = event_to_json(ev);
    bad[field] = std::move(value);
    CHECK_THROWS_AS(event_from_json(bad), Error);
  };
  broken("event_id", 7);
  broken("event_id", "");
  broken("session_id", "");
  broken("customer_id", nullptr);
  broken("product_id", "");
  broken("event_type", "hover");
  broken("position", 0);
  broken("position", 1.5);
  broken("timestamp", "soon");

  nlohmann::json missing = event_to_json(ev);
  missing.erase("query_text");
  CHECK_THROWS_AS(event_from_json(missing), Error);
  CHECK_THROWS_AS(event_from_json(nlohmann::json::array()), Error);
}

TEST_CASE("event log appends survive a reopen in order") {
  testutil::TempDir dir;
  std::string path = dir.file("events.jsonl");

  FeedbackEvent e1 = testutil::make_event("e1", "s1", "u1", "p1", EventType::impression, 1, 100);
  FeedbackEvent e2 = testutil::make_event("e2", "s1", "u1", "p2", EventType::impression, 2, 100);
  FeedbackEvent e3 = testutil::make_event("e3", "s1", "u1", "p1", EventType::click, 1, 105);
  {
    EventLog log(path);
    CHECK(log.size() == 0);
    log.append(e1);
    log.append(e2);
    CHECK_THROWS_AS(log.append(e1), DuplicateEventId);
    CHECK(log.size() == 2);
  }
  {
    EventLog log(path);
    CHECK(log.size() == 2);
    CHECK(log.events() == std::vector<FeedbackEvent>{e1, e2});
    CHECK_THROWS_AS(log.append(e2), DuplicateEventId);  // dedup set replayed
    log.append(e3);
  }
  EventLog log(path);
  CHECK(log.events() == std::vector<FeedbackEvent>{e1, e2, e3});

  FeedbackEvent bad_id = e3;
  bad_id.event_id = "";
  CHECK_THROWS_AS(log.append(bad_id), Error);
  FeedbackEvent bad_pos = testutil::make_event("e9", "s1", "u1", "p1", EventType::click, 0, 1);
  CHECK_THROWS_AS(log.append(bad_pos), Error);
}

TEST_CASE("corrupt or duplicated log lines abort the replay") {
  testutil::TempDir dir;

  std::string good = event_to_json(
      testutil::make_event("e1", "s1", "u1", "p1", EventType::click, 1, 100)).dump();

  testutil::write_file(dir.file("garbage.jsonl"), good + "\n{broken\n");
  CHECK_THROWS_WITH_AS(EventLog(dir.file("garbage.jsonl")),
                       doctest::Contains("corrupt event log at line 2"), Error);

  testutil::write_file(dir.file("dup.jsonl"), good + "\n" + good + "\n");
  CHECK_THROWS_WITH_AS(EventLog(dir.file("dup.jsonl")),
                       doctest::Contains("duplicate event_id e1"), Error);

  CHECK_THROWS_AS(EventLog(dir.str() + "/no_dir/events.jsonl"), FileUnreadable);
}

TEST_CASE("sessionize groups sorts and dedups impressions") {
  std::vector<FeedbackEvent> events = {
      testutil::make_event("e1", "s2", "u2", "p9", EventType::impression, 1, 500, "bread"),
      testutil::make_event("e2", "s1", "u1", "p2", EventType::impression, 2, 103),
      testutil::make_event("e3", "s1", "u1", "p1", EventType::impression, 1, 101),
      testutil::make_event("e4", "s1", "u1", "p1", EventType::click, 1, 110),
      // same position later in time loses the dedup
      testutil::make_event("e5", "s1", "u1", "px", EventType::impression, 2, 104),
      // tie on timestamp with e3 keeps append order
      testutil::make_event("e6", "s1", "u1", "p3", EventType::impression, 3, 101),
  };

  std::vector<Session> sessions = sessionize(events);
  REQUIRE(sessions.size() == 2);
  CHECK(sessions[0].session_id == "s1");
  CHECK(sessions[1].session_id == "s2");

  const Session& s1 = sessions[0];
  CHECK(s1.customer_id == "u1");
  CHECK(s1.query_text == "milk");
  REQUIRE(s1.events.size() == 5);
  CHECK(s1.events[0].event_id == "e3");  // earliest timestamp
  CHECK(s1.events[1].event_id == "e6");  // equal timestamp, later append
  CHECK(s1.events[2].event_id == "e2");
  CHECK(s1.events[3].event_id == "e5");
  CHECK(s1.events[4].event_id == "e4");
  CHECK(s1.impressions == std::vector<Impression>{{1, "p1"}, {2, "p2"}, {3, "p3"}});

  CHECK(sessions[1].impressions == std::vector<Impression>{{1, "p9"}});
  CHECK(sessionize({}).empty());
}

TEST_CASE("profile increments and pair weights match the ladder") {
  CHECK(profile_increment_for(EventType::purchase) == 1.0);
  CHECK(profile_increment_for(EventType::atc) == 0.5);
  CHECK(profile_increment_for(EventType::click) == 0.25);
  CHECK(profile_increment_for(EventType::reject) == -0.5);
  CHECK(profile_increment_for(EventType::impression) == 0.0);

  CHECK(pair_weight_for(EventType::purchase) == 3.0);
  CHECK(pair_weight_for(EventType::atc) == 2.0);
  CHECK(pair_weight_for(EventType::click) == 1.0);
  CHECK_THROWS_AS(pair_weight_for(EventType::impression), Error);
  CHECK_THROWS_AS(pair_weight_for(EventType::reject), Error);
}

TEST_CASE("a click pairs the engaged item against unengaged items above") {
  std::vector<FeedbackEvent> events;
  for (int i = 1; i <= 4; ++i) {
    events.push_back(testutil::make_event("i" + std::to_string(i), "s1", "u1",
                                          "p" + std::to_string(i), EventType::impression, i, i));
  }
  events.push_back(testutil::make_event("c1", "s1", "u1", "p3", EventType::click, 3, 10));

  std::vector<Session> sessions = sessionize(events);
  REQUIRE(sessions.size() == 1);
  std::vector<PairSkeleton> pairs = session_pair_skeletons(sessions[0]);

  std::vector<PairSkeleton> expected = {
      {"s1", "p3", "p1", 1.0, 3, 1, 0},
      {"s1", "p3", "p2", 1.0, 3, 2, 0},
  };
  CHECK(pairs == expected);
}

TEST_CASE("the strongest engagement per product sets weight and position") {
  std::vector<FeedbackEvent> events = {
      testutil::make_event("i1", "s1", "u1", "p1", EventType::impression, 1, 1),
      testutil::make_event("i2", "s1", "u1", "p2", EventType::impression, 2, 2),
      testutil::make_event("i3", "s1", "u1", "p3", EventType::impression, 3, 3),
      testutil::make_event("c1", "s1", "u1", "p3", EventType::click, 3, 10),
      testutil::make_event("b1", "s1", "u1", "p3", EventType::purchase, 3, 11),
      testutil::make_event("c2", "s1", "u1", "p3", EventType::atc, 3, 12),  // weaker, ignored
  };
  std::vector<PairSkeleton> pairs = session_pair_skeletons(sessionize(events)[0]);
  std::vector<PairSkeleton> expected = {
      {"s1", "p3", "p1", 3.0, 3, 1, 0},
      {"s1", "p3", "p2", 3.0, 3, 2, 0},
  };
  CHECK(pairs == expected);
}

TEST_CASE("engaged items never appear as negatives") {
  std::vector<FeedbackEvent> events = {
      testutil::make_event("i1", "s1", "u1", "p1", EventType::impression, 1, 1),
      testutil::make_event("i2", "s1", "u1", "p2", EventType::impression, 2, 2),
      testutil::make_event("i3", "s1", "u1", "p3", EventType::impression, 3, 3),
      testutil::make_event("c1", "s1", "u1", "p1", EventType::click, 1, 10),
      testutil::make_event("c2", "s1", "u1", "p3", EventType::click, 3, 11),
  };
  std::vector<PairSkeleton> pairs = session_pair_skeletons(sessionize(events)[0]);
  // p1 sits at position 1, so only p3 produces a pair, and p1 is excluded
  // from its negatives.
  std::vector<PairSkeleton> expected = {
      {"s1", "p3", "p2", 1.0, 3, 2, 0},
  };
  CHECK(pairs == expected);
}

TEST_CASE("rejects pair every engaged item at weight one on channel one") {
  std::vector<FeedbackEvent> events = {
      testutil::make_event("i1", "s1", "u1", "p1", EventType::impression, 1, 1),
      testutil::make_event("i2", "s1", "u1", "p2", EventType::impression, 2, 2),
      testutil::make_event("i3", "s1", "u1", "p3", EventType::impression, 3, 3),
      testutil::make_event("a1", "s1", "u1", "p2", EventType::atc, 2, 10),
      testutil::make_event("r1", "s1", "u1", "p3", EventType::reject, 3, 11),
  };
  std::vector<PairSkeleton> pairs = session_pair_skeletons(sessionize(events)[0]);
  std::vector<PairSkeleton> expected = {
      {"s1", "p2", "p1", 2.0, 2, 1, 0},
      {"s1", "p2", "p3", 1.0, 2, 3, 1},
  };
  CHECK(pairs == expected);

  // A reject without any engagement yields nothing.
  std::vector<FeedbackEvent> lonely = {
      testutil::make_event("i1", "s2", "u1", "p1", EventType::impression, 1, 1),
      testutil::make_event("r1", "s2", "u1", "p1", EventType::reject, 1, 5),
  };
  CHECK(session_pair_skeletons(sessionize(lonely)[0]).empty());

  // An engagement at position 1 with no rejects yields nothing either.
  std::vector<FeedbackEvent> top = {
      testutil::make_event("i1", "s3", "u1", "p1", EventType::impression, 1, 1),
      testutil::make_event("c1", "s3", "u1", "p1", EventType::click, 1, 5),
  };
  CHECK(session_pair_skeletons(sessionize(top)[0]).empty());
}

TEST_CASE("exhaustive small sessions match the independent enumeration") {
  // Every engagement pattern over n impressions: each slot is one of
  // none, click, atc, purchase, reject.
  for (int n = 1; n <= 3; ++n) {
    std::size_t total = 1;
    for (int i = 0; i < n; ++i) total *= 5;
    for (std::size_t code = 0; code < total; ++code) {
      std::vector<FeedbackEvent> events;
      std::size_t rest = code;
      for (int i = 1; i <= n; ++i) {
        events.push_back(testutil::make_event("i" + std::to_string(i), "s", "u",
                                              "p" + std::to_string(i), EventType::impression, i,
                                              i));
      }
      for (int i = 1; i <= n; ++i) {
        int state = static_cast<int>(rest % 5);
        rest /= 5;
        if (state == 0) continue;
        EventType type = state == 1   ? EventType::click
                         : state == 2 ? EventType::atc
                         : state == 3 ? EventType::purchase
                                      : EventType::reject;
        events.push_back(testutil::make_event("e" + std::to_string(i), "s", "u",
                                              "p" + std::to_string(i), type, i, 100 + i));
      }
      Session session = sessionize(events)[0];
      CHECK(session_pair_skeletons(session) == oracle_skeletons(session));
    }
  }
}

TEST_CASE("randomized messy sessions match the independent enumeration") {
  DetRng rng(606);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<FeedbackEvent> events;
    int next_id = 0;
    std::size_t imps = 1 + rng.below(6);
    for (std::size_t i = 0; i < imps; ++i) {
      // Positions may repeat or skip; products may repeat.
      std::int64_t pos = 1 + static_cast<std::int64_t>(rng.below(7));
      events.push_back(testutil::make_event("ev" + std::to_string(next_id++), "s", "u",
                                            "p" + std::to_string(rng.below(6)),
                                            EventType::impression, pos,
                                            static_cast<std::int64_t>(rng.below(50))));
    }
    std::size_t actions = rng.below(6);
    const EventType kinds[] = {EventType::click, EventType::atc, EventType::purchase,
                               EventType::reject};
    for (std::size_t i = 0; i < actions; ++i) {
      events.push_back(testutil::make_event("ev" + std::to_string(next_id++), "s", "u",
                                            "p" + std::to_string(rng.below(6)),
                                            kinds[rng.below(4)],
                                            1 + static_cast<std::int64_t>(rng.below(7)),
                                            50 + static_cast<std::int64_t>(rng.below(50))));
    }
    Session session = sessionize(events)[0];
    CHECK(session_pair_skeletons(session) == oracle_skeletons(session));
  }
}

TEST_CASE("profile decay halves scores per half life and prunes dust") {
  UserProfile profile;
  profile.customer_id = "u1";
  profile.last_updated = 1000;
  profile.product_affinity = {{"p1", 1.0}, {"tiny", 1.9e-9}};
  profile.brand_affinity = {{"acme", -0.5}};

  decay_profile(profile, 3000, 2000);
  CHECK(profile.product_affinity.at("p1") == 0.5);
  CHECK(profile.brand_affinity.at("acme") == -0.25);
  CHECK(profile.product_affinity.count("tiny") == 0);  // 0.95e-9 falls below the floor
  CHECK(profile.last_updated == 3000);

  decay_profile(profile, 7000, 2000);  // two more half lives
  CHECK(profile.product_affinity.at("p1") == 0.125);

  // Clock going backwards decays nothing.
  decay_profile(profile, 6000, 2000);
  CHECK(profile.product_affinity.at("p1") == 0.125);
  CHECK(profile.last_updated == 6000);

  CHECK_THROWS_AS(decay_profile(profile, 8000, 0), Error);
}

TEST_CASE("decaying in two steps composes like one step") {
  UserProfile one;
  one.customer_id = "u1";
  one.last_updated = 0;
  one.product_affinity = {{"p1", 0.8}};
  UserProfile two = one;

  decay_profile(one, 1000, 777);
  decay_profile(one, 1700, 777);
  decay_profile(two, 1700, 777);
  CHECK(one.product_affinity.at("p1") ==
        doctest::Approx(two.product_affinity.at("p1")).epsilon(1e-12));
}

TEST_CASE("events bump product brand and facet affinities") {
  Lexicon lex = testutil::sample_lexicon();
  Product product = testutil::make_product("p1", "acme organic gluten free milk", lex);

  UserProfile profile;
  profile.customer_id = "u1";
  profile.last_updated = 100;

  FeedbackEvent click = testutil::make_event("e1", "s1", "u1", "p1", EventType::click, 1, 100);
  UserProfile next = update_user_profile(profile, click, product, 100);
  CHECK(next.product_affinity.at("p1") == 0.25);
  CHECK(next.brand_affinity.at("acme") == 0.25);
  CHECK(next.facet_affinity.at("organic") == 0.25);
  CHECK(next.facet_affinity.at("gluten free") == 0.25);
  CHECK(next.facet_affinity.size() == 2);

  // Impressions decay but do not bump.
  FeedbackEvent imp = testutil::make_event("e2", "s1", "u1", "p1", EventType::impression, 1, 100);
  UserProfile same = update_user_profile(next, imp, product, 100);
  CHECK(same.product_affinity == next.product_affinity);

  // A reject then an atc at the same instant cancel to zero and prune.
  FeedbackEvent reject = testutil::make_event("e3", "s1", "u1", "p1", EventType::reject, 1, 100);
  FeedbackEvent atc = testutil::make_event("e4", "s1", "u1", "p1", EventType::atc, 1, 100);
  UserProfile fresh;
  fresh.customer_id = "u1";
  fresh.last_updated = 100;
  UserProfile rejected = update_user_profile(fresh, reject, product, 100);
  CHECK(rejected.product_affinity.at("p1") == -0.5);
  UserProfile cancelled = update_user_profile(rejected, atc, product, 100);
  CHECK(cancelled.product_affinity.count("p1") == 0);
  CHECK(cancelled.brand_affinity.count("acme") == 0);

  FeedbackEvent other_user = testutil::make_event("e5", "s1", "u2", "p1", EventType::click, 1, 100);
  CHECK_THROWS_AS(update_user_profile(profile, other_user, product, 100), CustomerMismatch);
  FeedbackEvent other_product = testutil::make_event("e6", "s1", "u1", "p9", EventType::click, 1, 100);
  CHECK_THROWS_AS(update_user_profile(profile, other_product, product, 100), Error);
}

TEST_CASE("profiles round-trip through the payload encoding") {
  UserProfile profile;
  profile.customer_id = "u1";
  profile.last_updated = 1700000123;
  profile.product_affinity = {{"p1", 0.25}, {"p2", -0.5}};
  profile.brand_affinity = {{"acme", 1.75}};
  profile.facet_affinity = {{"organic", 0.0625}};

  FeaturePayload payload = profile_to_payload(profile);
  CHECK(payload.size() == 5);
  CHECK(std::get<double>(payload.at("p:p1")) == 0.25);
  CHECK(std::get<double>(payload.at("b:acme")) == 1.75);
  CHECK(std::get<double>(payload.at("f:organic")) == 0.0625);

  UserProfile back = profile_from_payload("u1", payload);
  CHECK(back == profile);

  FeaturePayload unknown = payload;
  unknown["x:oops"] = 1.0;
  CHECK_THROWS_AS(profile_from_payload("u1", unknown), Error);
  FeaturePayload bad_type = payload;
  bad_type["p:p1"] = std::string("high");
  CHECK_THROWS_AS(profile_from_payload("u1", bad_type), Error);
}

TEST_CASE("profiles persist through the feature store") {
  FeatureStore store;
  CHECK_FALSE(load_profile(store, "u1", 100).has_value());

  UserProfile profile;
  profile.customer_id = "u1";
  profile.last_updated = 100;
  profile.brand_affinity = {{"acme", 0.25}};
  store_profile(store, profile, 100);

  auto loaded = load_profile(store, "u1", 200);
  REQUIRE(loaded.has_value());
  CHECK(*loaded == profile);
}

TEST_CASE("apply_feedback_event creates updates and notifies") {
  Lexicon lex = testutil::sample_lexicon();
  Product product = testutil::make_product("p1", "acme organic milk", lex);

  FeatureStore store;
  std::vector<FeatureKey> notified;
  store.subscribe([&](const FeatureKey& key) { notified.push_back(key); });

  FeedbackEvent click = testutil::make_event("e1", "s1", "u1", "p1", EventType::click, 1, 1000);
  apply_feedback_event(store, click, product, 1000);
  REQUIRE(notified.size() == 1);
  CHECK(notified[0] == FeatureKey{FeatureNamespace::user, "u1"});

  auto profile = load_profile(store, "u1", 1000);
  REQUIRE(profile.has_value());
  CHECK(profile->product_affinity.at("p1") == 0.25);

  FeedbackEvent buy = testutil::make_event("e2", "s1", "u1", "p1", EventType::purchase, 1, 1000);
  apply_feedback_event(store, buy, product, 1000);
  profile = load_profile(store, "u1", 1000);
  CHECK(profile->product_affinity.at("p1") == 1.25);
  CHECK(notified.size() == 2);
}

TEST_CASE("replaying the event log rebuilds identical profiles") {
  Lexicon lex = testutil::sample_lexicon();
  Catalog catalog;
  catalog.insert(testutil::make_product("p1", "acme organic milk", lex));
  catalog.insert(testutil::make_product("p2", "blue river bread", lex));

  testutil::TempDir dir;
  std::vector<FeedbackEvent> events = {
      testutil::make_event("e1", "s1", "u1", "p1", EventType::click, 1, 1000),
      testutil::make_event("e2", "s1", "u1", "p2", EventType::reject, 2, 1100),
      testutil::make_event("e3", "s2", "u1", "p1", EventType::purchase, 1, 5000000),
      testutil::make_event("e4", "s3", "u2", "p2", EventType::atc, 2, 6000000),
  };

  FeatureStore direct;
  {
    EventLog log(dir.file("events.jsonl"));
    for (const auto& ev : events) {
      log.append(ev);
      apply_feedback_event(direct, ev, *catalog.find(ev.product_id), ev.timestamp);
    }
  }

  FeatureStore replayed;
  EventLog reopened(dir.file("events.jsonl"));
  for (const auto& ev : reopened.events()) {
    apply_feedback_event(replayed, ev, *catalog.find(ev.product_id), ev.timestamp);
  }

  for (const char* customer : {"u1", "u2"}) {
    auto a = load_profile(direct, customer, 6000000);
    auto b = load_profile(replayed, customer, 6000000);
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    CHECK(*a == *b);
  }
}

TEST_CASE("training pairs are materialized with session-level features") {
  Lexicon lex = testutil::sample_lexicon();
  Catalog catalog;
  catalog.insert(testutil::make_product("p1", "acme whole milk", lex, 3.0, 50));
  catalog.insert(testutil::make_product("p2", "plain bread", lex, 2.0, 10));
  catalog.insert(testutil::make_product("p3", "organic whole milk", lex, 4.0, 100));
  InvertedIndex index = InvertedIndex::build(catalog);

  FeatureStore store;
  UserProfile profile;
  profile.customer_id = "u1";
  profile.last_updated = 0;
  profile.brand_affinity = {{"acme", 1.0}};
  store_profile(store, profile, 0);

  std::vector<FeedbackEvent> events = {
      testutil::make_event("i1", "s1", "u1", "p1", EventType::impression, 1, 1),
      testutil::make_event("i2", "s1", "u1", "p2", EventType::impression, 2, 2),
      testutil::make_event("i3", "s1", "u1", "p3", EventType::impression, 3, 3),
      testutil::make_event("c1", "s1", "u1", "p3", EventType::purchase, 3, 10),
  };
  std::vector<Session> sessions = sessionize(events);

  PairBuildContext ctx{&catalog, &index, &lex, &store, 100};
  std::vector<TrainingPair> pairs = build_training_pairs(sessions, ctx);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].weight == 3.0);
  CHECK(pairs[1].weight == 3.0);

  // Mirror the expected feature computation for the (p3, p1) pair.
  ParsedQuery pq = parse_query("milk", lex);
  double lex_p1 = lexical_score_for(pq, *catalog.find("p1"), index);
  double lex_p2 = lexical_score_for(pq, *catalog.find("p2"), index);
  double lex_p3 = lexical_score_for(pq, *catalog.find("p3"), index);
  double max_lex = std::max({lex_p1, lex_p2, lex_p3});
  UserProfile as_of = *load_profile(store, "u1", 100);
  FeatureVector x_pos = extract_features(pq, {"p3", lex_p3}, *catalog.find("p3"), &as_of,
                                         max_lex, catalog.max_purchase_count());
  FeatureVector x_neg = extract_features(pq, {"p1", lex_p1}, *catalog.find("p1"), &as_of,
                                         max_lex, catalog.max_purchase_count());
  CHECK(pairs[0].x_pos == x_pos);
  CHECK(pairs[0].x_neg == x_neg);
  CHECK(x_neg[kUserBrandAffinity] == 0.5);  // squash of the acme affinity

  // Unparseable queries are skipped without failing the batch.
  std::vector<FeedbackEvent> noise = {
      testutil::make_event("i4", "s2", "u1", "p1", EventType::impression, 1, 1, ",,"),
      testutil::make_event("i5", "s2", "u1", "p2", EventType::impression, 2, 2, ",,"),
      testutil::make_event("c2", "s2", "u1", "p2", EventType::click, 2, 10, ",,"),
  };
  CHECK(build_training_pairs(sessionize(noise), ctx).empty());

  // Pairs touching unknown products are dropped, others survive.
  std::vector<FeedbackEvent> partial = {
      testutil::make_event("i6", "s3", "u1", "ghost", EventType::impression, 1, 1),
      testutil::make_event("i7", "s3", "u1", "p2", EventType::impression, 2, 2),
      testutil::make_event("c3", "s3", "u1", "p3", EventType::impression, 3, 3),
      testutil::make_event("c4", "s3", "u1", "p3", EventType::click, 3, 10),
  };
  std::vector<TrainingPair> kept = build_training_pairs(sessionize(partial), ctx);
  CHECK(kept.size() == 1);  // (p3, ghost) dropped, (p3, p2) kept

  // Sessions with no engagement contribute nothing.
  std::vector<FeedbackEvent> idle = {
      testutil::make_event("i8", "s4", "u1", "p1", EventType::impression, 1, 1),
  };
  CHECK(build_training_pairs(sessionize(idle), ctx).empty());
}

}  // TEST_SUITE
