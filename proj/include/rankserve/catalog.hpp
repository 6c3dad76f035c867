#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "rankserve/lexicon.hpp"

namespace rankserve {

class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line_no, const std::string& why)
      : Error("malformed catalog record at line " + std::to_string(line_no) + ": " + why),
        line_no_(line_no) {}
  std::size_t line_no() const { return line_no_; }

 private:
  std::size_t line_no_;
};

class DuplicateProductId : public Error {
 public:
  explicit DuplicateProductId(const std::string& id)
      : Error("duplicate product_id: " + id), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

struct Product {
  std::string product_id;
  std::string title;
  std::optional<std::string> brand;  // normalized phrase form
  std::set<std::string> facets;      // lowercase lexicon facet tags
  std::optional<SizeSpec> size;
  double price = 0.0;
  std::int64_t purchase_count = 0;

  friend bool operator==(const Product&, const Product&) = default;
};

struct ExtractedAttributes {
  std::set<std::string> facets;
  std::optional<SizeSpec> size;
  std::optional<std::string> brand;
};

// Lexicon-driven extraction from a title: all facet phrases by
// longest-match-first scan, first (number, unit) pair as size, brand_hint
// or else the longest brand phrase found in the title.
ExtractedAttributes extract_product_attributes(std::string_view title,
                                               const std::optional<std::string>& brand_hint,
                                               const Lexicon& lexicon);

// Immutable after load; iteration over products() is product_id-ascending.
class Catalog {
 public:
  const std::map<std::string, Product>& products() const { return products_; }
  const std::set<std::string>& facet_vocabulary() const { return facet_vocabulary_; }
  const std::set<std::string>& brand_vocabulary() const { return brand_vocabulary_; }

  const Product* find(const std::string& product_id) const;
  std::size_t size() const { return products_.size(); }
  std::int64_t max_purchase_count() const { return max_purchase_count_; }

  // Throws DuplicateProductId. Vocabularies track inserted products.
  void insert(Product p);

  friend bool operator==(const Catalog&, const Catalog&) = default;

 private:
  std::map<std::string, Product> products_;
  std::set<std::string> facet_vocabulary_;
  std::set<std::string> brand_vocabulary_;
  std::int64_t max_purchase_count_ = 0;
};

// JSON Lines, one product per line: product_id, title, brand (optional),
// price, purchase_count (optional). Facets/size/brand are derived through
// the lexicon at load time. Malformed lines abort the load.
Catalog load_catalog(const std::string& path, const Lexicon& lexicon);

// Writes the source-schema fields; derived attributes are re-extracted on
// the next load.
void save_catalog(const Catalog& catalog, const std::string& path);

}  // namespace rankserve
