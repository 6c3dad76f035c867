#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace rankserve {

// Decayed engagement scores per product, brand, and facet. Scores are
// current as of last_updated; readers wanting fresher values apply the
// half-life decay themselves.
struct UserProfile {
  std::string customer_id;
  std::map<std::string, double> product_affinity;
  std::map<std::string, double> brand_affinity;
  std::map<std::string, double> facet_affinity;
  std::int64_t last_updated = 0;

  bool operator==(const UserProfile&) const = default;
};

}  // namespace rankserve
