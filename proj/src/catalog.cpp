#include "rankserve/catalog.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace rankserve {

using nlohmann::json;

ExtractedAttributes extract_product_attributes(std::string_view title,
                                               const std::optional<std::string>& brand_hint,
                                               const Lexicon& lexicon) {
  ExtractedAttributes out;
  std::vector<std::string> tokens = tokenize(title);

  std::vector<bool> facet_consumed(tokens.size(), false);
  for (const auto& m : scan_phrases(tokens, lexicon.facet_phrases, facet_consumed)) {
    out.facets.insert(m.phrase);
  }

  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (!is_number_token(tokens[i])) continue;
    auto it = lexicon.unit_aliases.find(tokens[i + 1]);
    if (it == lexicon.unit_aliases.end()) continue;
    double magnitude = parse_number_token(tokens[i]);
    if (magnitude > 0.0) out.size = SizeSpec{magnitude, it->second};
    break;
  }

  if (brand_hint) {
    std::string norm = normalize_phrase(*brand_hint);
    if (!norm.empty()) out.brand = norm;
  }
  if (!out.brand) {
    std::vector<bool> brand_consumed(tokens.size(), false);
    auto matches =
        scan_phrases(tokens, lexicon.brand_phrases, brand_consumed, /*single_match=*/true);
    if (!matches.empty()) out.brand = matches.front().phrase;
  }
  return out;
}

const Product* Catalog::find(const std::string& product_id) const {
  auto it = products_.find(product_id);
  return it == products_.end() ? nullptr : &it->second;
}

void Catalog::insert(Product p) {
  if (products_.count(p.product_id)) throw DuplicateProductId(p.product_id);
  for (const auto& f : p.facets) facet_vocabulary_.insert(f);
  if (p.brand) brand_vocabulary_.insert(*p.brand);
  if (p.purchase_count > max_purchase_count_) max_purchase_count_ = p.purchase_count;
  products_.emplace(p.product_id, std::move(p));
}

namespace {

Product product_from_line(const std::string& line, std::size_t line_no, const Lexicon& lexicon) {
  json doc = json::parse(line, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw MalformedRecord(line_no, "not a JSON object");
  }
  if (!doc.contains("product_id") || !doc["product_id"].is_string()) {
    throw MalformedRecord(line_no, "product_id missing or not a string");
  }
  if (!doc.contains("title") || !doc["title"].is_string()) {
    throw MalformedRecord(line_no, "title missing or not a string");
  }

  Product p;
  p.product_id = doc["product_id"].get<std::string>();
  p.title = doc["title"].get<std::string>();
  if (p.product_id.empty()) throw MalformedRecord(line_no, "product_id is empty");
  if (p.title.empty()) throw MalformedRecord(line_no, "title is empty");

  std::optional<std::string> brand_hint;
  if (doc.contains("brand") && !doc["brand"].is_null()) {
    if (!doc["brand"].is_string()) throw MalformedRecord(line_no, "brand must be a string");
    brand_hint = doc["brand"].get<std::string>();
  }
  if (doc.contains("price")) {
    if (!doc["price"].is_number()) throw MalformedRecord(line_no, "price must be a number");
    p.price = doc["price"].get<double>();
    if (!(p.price >= 0.0) || !std::isfinite(p.price)) {
      throw MalformedRecord(line_no, "price must be finite and >= 0");
    }
  }
  if (doc.contains("purchase_count")) {
    if (!doc["purchase_count"].is_number_integer()) {
      throw MalformedRecord(line_no, "purchase_count must be an integer");
    }
    p.purchase_count = doc["purchase_count"].get<std::int64_t>();
    if (p.purchase_count < 0) throw MalformedRecord(line_no, "purchase_count must be >= 0");
  }

  ExtractedAttributes attrs = extract_product_attributes(p.title, brand_hint, lexicon);
  p.facets = std::move(attrs.facets);
  p.size = attrs.size;
  p.brand = attrs.brand;
  return p;
}

}  // namespace

Catalog load_catalog(const std::string& path, const Lexicon& lexicon) {
  std::ifstream in(path);
  if (!in) throw FileUnreadable(path);
  Catalog catalog;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    catalog.insert(product_from_line(line, line_no, lexicon));
  }
  return catalog;
}

void save_catalog(const Catalog& catalog, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FileUnreadable(path);
  for (const auto& [id, p] : catalog.products()) {
    json doc;
    doc["product_id"] = p.product_id;
    doc["title"] = p.title;
    if (p.brand) doc["brand"] = *p.brand;
    doc["price"] = p.price;
    doc["purchase_count"] = p.purchase_count;
    out << doc.dump() << "\n";
  }
  if (!out) throw FileUnreadable(path);
}

}  // namespace rankserve
