#include "rankserve/lexicon.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace rankserve {

using nlohmann::json;

namespace {

std::string require_phrase(const std::string& raw, const char* what) {
  std::string norm = normalize_phrase(raw);
  if (norm.empty()) {
    throw MalformedLexicon(std::string(what) + " entry has no token content: \"" + raw + "\"");
  }
  return norm;
}

std::string require_single_token(const std::string& raw, const char* what) {
  std::string norm = require_phrase(raw, what);
  if (norm.find(' ') != std::string::npos) {
    throw MalformedLexicon(std::string(what) + " entry must be a single token: \"" + raw + "\"");
  }
  return norm;
}

}  // namespace

std::set<std::string> Lexicon::canonical_units() const {
  std::set<std::string> out;
  for (const auto& [alias, canonical] : unit_aliases) out.insert(canonical);
  return out;
}

Lexicon load_lexicon_from_string(const std::string& json_text) {
  json doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw MalformedLexicon("lexicon is not a JSON object");
  }
  Lexicon lex;
  if (doc.contains("brands")) {
    if (!doc["brands"].is_array()) throw MalformedLexicon("brands must be an array");
    for (const auto& b : doc["brands"]) {
      if (!b.is_string()) throw MalformedLexicon("brands entries must be strings");
      lex.brand_phrases.insert(require_phrase(b.get<std::string>(), "brand"));
    }
  }
  if (doc.contains("facets")) {
    if (!doc["facets"].is_array()) throw MalformedLexicon("facets must be an array");
    for (const auto& f : doc["facets"]) {
      if (!f.is_string()) throw MalformedLexicon("facets entries must be strings");
      lex.facet_phrases.insert(require_phrase(f.get<std::string>(), "facet"));
    }
  }
  if (doc.contains("units")) {
    if (!doc["units"].is_object()) throw MalformedLexicon("units must be an object");
    for (const auto& [alias, canonical] : doc["units"].items()) {
      if (!canonical.is_string()) throw MalformedLexicon("unit canonical names must be strings");
      lex.unit_aliases[require_single_token(alias, "unit alias")] =
          require_single_token(canonical.get<std::string>(), "unit canonical");
    }
  }
  if (doc.contains("stopwords")) {
    if (!doc["stopwords"].is_array()) throw MalformedLexicon("stopwords must be an array");
    for (const auto& s : doc["stopwords"]) {
      if (!s.is_string()) throw MalformedLexicon("stopwords entries must be strings");
      lex.stopwords.insert(require_single_token(s.get<std::string>(), "stopword"));
    }
  }
  return lex;
}

Lexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileUnreadable(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return load_lexicon_from_string(buf.str());
}

void save_lexicon(const Lexicon& lex, const std::string& path) {
  json doc = {
      {"brands", lex.brand_phrases},
      {"facets", lex.facet_phrases},
      {"units", lex.unit_aliases},
      {"stopwords", lex.stopwords},
  };
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileUnreadable(path);
  out << doc.dump(2) << '\n';
  if (!out.flush()) throw FileUnreadable(path);
}

Lexicon default_lexicon_base() {
  Lexicon lex;
  lex.unit_aliases = {
      {"oz", "ounce"}, {"lb", "pound"},      {"g", "gram"},   {"kg", "kilogram"},
      {"ml", "milliliter"}, {"l", "liter"},  {"gal", "gallon"}, {"ct", "count"},
  };
  lex.stopwords = {"a", "the", "of", "for", "and"};
  return lex;
}

std::vector<PhraseMatch> scan_phrases(const std::vector<std::string>& tokens,
                                      const std::set<std::string>& phrases,
                                      std::vector<bool>& consumed,
                                      bool single_match) {
  std::vector<PhraseMatch> matches;
  if (phrases.empty() || tokens.empty()) return matches;

  std::size_t max_len = 1;
  for (const auto& p : phrases) {
    std::size_t len = 1 + static_cast<std::size_t>(std::count(p.begin(), p.end(), ' '));
    if (len > max_len) max_len = len;
  }
  max_len = std::min(max_len, tokens.size());

  for (std::size_t len = max_len; len >= 1; --len) {
    for (std::size_t start = 0; start + len <= tokens.size(); ++start) {
      bool free = true;
      for (std::size_t i = start; i < start + len; ++i) {
        if (consumed[i]) {
          free = false;
          break;
        }
      }
      if (!free) continue;
      std::string joined = tokens[start];
      for (std::size_t i = start + 1; i < start + len; ++i) {
        joined.push_back(' ');
        joined += tokens[i];
      }
      if (!phrases.count(joined)) continue;
      for (std::size_t i = start; i < start + len; ++i) consumed[i] = true;
      matches.push_back({start, len, std::move(joined)});
      if (single_match) return matches;
      start += len - 1;  // tokens up to start+len are consumed now
    }
  }
  return matches;
}

}  // namespace rankserve
