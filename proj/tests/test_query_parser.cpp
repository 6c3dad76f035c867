#include <chrono>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "rankserve/common.hpp"
#include "rankserve/lexicon.hpp"
#include "rankserve/query_parser.hpp"
#include "test_util.hpp"

using namespace rankserve;

namespace {

// Multiset accounting of where every token went. Size consumes its two
// tokens, each facet/brand phrase its token sequence, and whatever remains
// beyond head_terms must be a stopword.
void check_token_conservation(const ParsedQuery& pq, const Lexicon& lexicon) {
  std::map<std::string, int> remaining;
  for (const auto& tok : pq.tokens) remaining[tok] += 1;

  auto consume = [&](const std::string& tok) {
    auto it = remaining.find(tok);
    REQUIRE(it != remaining.end());
    REQUIRE(it->second > 0);
    it->second -= 1;
  };

  for (const auto& term : pq.head_terms) consume(term);
  for (const auto& facet : pq.facets) {
    for (const auto& tok : tokenize(facet)) consume(tok);
  }
  if (pq.brand) {
    for (const auto& tok : tokenize(*pq.brand)) consume(tok);
  }
  if (pq.size) {
    bool found_magnitude = false;
    for (auto& [tok, count] : remaining) {
      if (count > 0 && is_number_token(tok) && parse_number_token(tok) == pq.size->magnitude) {
        count -= 1;
        found_magnitude = true;
        break;
      }
    }
    CHECK(found_magnitude);
    bool found_unit = false;
    for (auto& [tok, count] : remaining) {
      auto it = lexicon.unit_aliases.find(tok);
      if (count > 0 && it != lexicon.unit_aliases.end() && it->second == pq.size->unit) {
        count -= 1;
        found_unit = true;
        break;
      }
    }
    CHECK(found_unit);
  }
  std::set<std::string> facet_tokens;
  for (const auto& facet : pq.facets) {
    for (const auto& tok : tokenize(facet)) facet_tokens.insert(tok);
  }
  for (const auto& [tok, count] : remaining) {
    if (count > 0) {
      // A facet phrase consumes every occurrence but lands in the facet
      // set once; beyond that only stopwords may be dropped silently.
      CHECK_MESSAGE((facet_tokens.count(tok) == 1 || lexicon.stopwords.count(tok) == 1),
                    "unaccounted token: ", tok);
    }
  }
}

}  // namespace

TEST_SUITE("query_parser") {

TEST_CASE("size facet brand and stopwords are extracted in pipeline order") {
  Lexicon lex = testutil::sample_lexicon();

  ParsedQuery pq = parse_query("organic whole milk 1 gal", lex);
  CHECK(pq.raw == "organic whole milk 1 gal");
  CHECK(pq.head_terms == std::vector<std::string>{"whole", "milk"});
  CHECK(pq.facets == std::set<std::string>{"organic"});
  REQUIRE(pq.size.has_value());
  CHECK(pq.size->magnitude == 1.0);
  CHECK(pq.size->unit == "gallon");
  CHECK_FALSE(pq.brand.has_value());
  CHECK(pq.tokens == std::vector<std::string>{"organic", "whole", "milk", "1", "gal"});
}

TEST_CASE("plain query keeps everything in head terms") {
  Lexicon lex = testutil::sample_lexicon();
  ParsedQuery pq = parse_query("milk", lex);
  CHECK(pq.head_terms == std::vector<std::string>{"milk"});
  CHECK(pq.facets.empty());
  CHECK_FALSE(pq.size.has_value());
  CHECK_FALSE(pq.brand.has_value());
}

TEST_CASE("whitespace and punctuation only input raises EmptyQuery") {
  Lexicon lex = testutil::sample_lexicon();
  CHECK_THROWS_AS(parse_query("   ,,  ", lex), EmptyQuery);
  CHECK_THROWS_AS(parse_query("", lex), EmptyQuery);
}

TEST_CASE("longest facet match wins over its sub-phrase") {
  Lexicon lex = testutil::sample_lexicon();

  ParsedQuery pq = parse_query("gluten free bread", lex);
  CHECK(pq.facets == std::set<std::string>{"gluten free"});
  CHECK(pq.head_terms == std::vector<std::string>{"bread"});

  ParsedQuery only_free = parse_query("free bread", lex);
  CHECK(only_free.facets == std::set<std::string>{"free"});

  ParsedQuery both = parse_query("gluten free organic bread", lex);
  CHECK(both.facets == std::set<std::string>{"gluten free", "organic"});
  CHECK(both.head_terms == std::vector<std::string>{"bread"});
}

TEST_CASE("at most one brand is consumed and the longest wins") {
  Lexicon lex = testutil::sample_lexicon();

  ParsedQuery pq = parse_query("great value milk", lex);
  REQUIRE(pq.brand.has_value());
  CHECK(*pq.brand == "great value");
  CHECK(pq.head_terms == std::vector<std::string>{"milk"});

  // The second brand occurrence stays in head terms.
  ParsedQuery two = parse_query("great value value milk", lex);
  REQUIRE(two.brand.has_value());
  CHECK(*two.brand == "great value");
  CHECK(two.head_terms == std::vector<std::string>{"value", "milk"});
}

TEST_CASE("only the first number-unit pair becomes the size") {
  Lexicon lex = testutil::sample_lexicon();

  ParsedQuery pq = parse_query("1 gal 2 gal milk", lex);
  REQUIRE(pq.size.has_value());
  CHECK(pq.size->magnitude == 1.0);
  CHECK(pq.size->unit == "gallon");
  CHECK(pq.head_terms == std::vector<std::string>{"2", "gal", "milk"});

  ParsedQuery dec = parse_query("1.5 l juice", lex);
  REQUIRE(dec.size.has_value());
  CHECK(dec.size->magnitude == 1.5);
  CHECK(dec.size->unit == "liter");

  // A number without an adjacent unit is not a size.
  ParsedQuery none = parse_query("2 milk", lex);
  CHECK_FALSE(none.size.has_value());
  CHECK(none.head_terms == std::vector<std::string>{"2", "milk"});
}

TEST_CASE("stopwords are dropped from head terms") {
  Lexicon lex = testutil::sample_lexicon();
  ParsedQuery pq = parse_query("milk for the family", lex);
  CHECK(pq.head_terms == std::vector<std::string>{"milk", "family"});
}

TEST_CASE("empty lexicon parses everything into head terms") {
  Lexicon lex = load_lexicon_from_string("{}");
  CHECK(lex.brand_phrases.empty());
  CHECK(lex.facet_phrases.empty());
  CHECK(lex.unit_aliases.empty());
  CHECK(lex.stopwords.empty());

  ParsedQuery pq = parse_query("organic milk 1 gal", lex);
  CHECK(pq.head_terms == std::vector<std::string>{"organic", "milk", "1", "gal"});
  CHECK(pq.facets.empty());
  CHECK_FALSE(pq.size.has_value());
}

TEST_CASE("load_lexicon normalizes phrases and reads unit aliases") {
  testutil::TempDir dir;
  testutil::write_file(dir.file("lexicon.json"), R"({
    "brands": ["Great  Value"],
    "facets": ["Gluten   FREE"],
    "units": {"gal": "gallon"},
    "stopwords": ["THE"]
  })");
  Lexicon lex = load_lexicon(dir.file("lexicon.json"));
  CHECK(lex.brand_phrases == std::set<std::string>{"great value"});
  CHECK(lex.facet_phrases == std::set<std::string>{"gluten free"});
  CHECK(lex.unit_aliases.at("gal") == "gallon");
  CHECK(lex.stopwords == std::set<std::string>{"the"});
}

TEST_CASE("lexicon rejects empty phrases and multi-token aliases") {
  CHECK_THROWS_AS(load_lexicon_from_string(R"({"brands": [",,"]})"), MalformedLexicon);
  CHECK_THROWS_AS(load_lexicon_from_string(R"({"units": {"fl oz": "ounce"}})"),
                  MalformedLexicon);
  CHECK_THROWS_AS(load_lexicon_from_string(R"({"stopwords": ["of the"]})"), MalformedLexicon);
  CHECK_THROWS_AS(load_lexicon(std::string("/nonexistent/lexicon.json")), FileUnreadable);
}

TEST_CASE("lexicon save and load round-trips") {
  testutil::TempDir dir;
  Lexicon lex = testutil::sample_lexicon();
  save_lexicon(lex, dir.file("lexicon.json"));
  Lexicon reloaded = load_lexicon(dir.file("lexicon.json"));
  CHECK(reloaded == lex);
}

TEST_CASE("ten thousand random queries: determinism, conservation, dominance, speed") {
  Lexicon lex = testutil::sample_lexicon();

  // Pool mixing phrase fragments, numbers, units, stopwords and noise.
  const std::vector<std::string> pool = {
      "organic", "gluten",  "free",  "low",    "fat",   "whole", "grain", "great",
      "value",   "acme",    "blue",  "river",  "milk",  "bread", "juice", "cheese",
      "1",       "2",       "12.5",  "0.5",    "gal",   "oz",    "l",     "ct",
      "the",     "for",     "a",     "of",     "and",   "zzz",   "qqq",   "family",
  };

  DetRng rng(20240817);
  std::vector<std::string> queries;
  queries.reserve(10000);
  for (int i = 0; i < 10000; ++i) {
    std::size_t len = 1 + rng.below(7);
    std::string q;
    for (std::size_t t = 0; t < len; ++t) {
      if (t > 0) q += ' ';
      q += pool[rng.below(pool.size())];
    }
    queries.push_back(std::move(q));
  }

  auto started = std::chrono::steady_clock::now();
  std::vector<ParsedQuery> parsed;
  parsed.reserve(queries.size());
  for (const auto& q : queries) parsed.push_back(parse_query(q, lex));
  auto elapsed = std::chrono::steady_clock::now() - started;
  double mean_ms =
      std::chrono::duration<double, std::milli>(elapsed).count() / double(queries.size());
  CHECK_MESSAGE(mean_ms < 1.0, "mean parse time ", mean_ms, " ms");

  for (std::size_t i = 0; i < queries.size(); ++i) {
    const ParsedQuery& pq = parsed[i];

    ParsedQuery again = parse_query(queries[i], lex);
    CHECK(again == pq);

    CHECK(pq.tokens == tokenize(queries[i]));
    check_token_conservation(pq, lex);

    // Longest-match dominance: an adjacent "gluten free" can never decay
    // into the facet "free" alone, unless the size scan consumed one of
    // the two tokens first (it cannot: neither is a number or unit).
    for (std::size_t t = 0; t + 1 < pq.tokens.size(); ++t) {
      if (pq.tokens[t] == "gluten" && pq.tokens[t + 1] == "free") {
        CHECK(pq.facets.count("gluten free") == 1);
        break;
      }
    }
  }
}

}  // TEST_SUITE
