#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include "rankserve/common.hpp"

namespace rankserve {

struct InvalidTtl : Error {
  InvalidTtl() : Error("ttl must be a positive number of seconds") {}
};

struct CorruptSnapshot : Error {
  explicit CorruptSnapshot(std::size_t line_no, const std::string& why)
      : Error("corrupt snapshot at line " + std::to_string(line_no) + ": " + why) {}
};

enum class FeatureNamespace { user, query, product };

std::string to_string(FeatureNamespace ns);
FeatureNamespace namespace_from_string(const std::string& s);

struct FeatureKey {
  FeatureNamespace ns = FeatureNamespace::user;
  std::string id;

  auto operator<=>(const FeatureKey&) const = default;
};

// Payload values are numbers, strings, or string sets.
using FeatureValue = std::variant<double, std::string, std::set<std::string>>;
using FeaturePayload = std::map<std::string, FeatureValue>;

struct FeatureRecord {
  FeatureKey key;
  FeaturePayload payload;
  std::int64_t version = 0;
  std::int64_t updated_at = 0;
  std::optional<std::int64_t> ttl_seconds;

  bool expired_at(std::int64_t now) const {
    return ttl_seconds && *ttl_seconds + updated_at < now;
  }
};

// Versioned in-memory key-value store with optional per-record TTL and
// JSON Lines snapshots. Safe for concurrent readers and writers. Update
// listeners run outside the store lock and receive only the key.
class FeatureStore {
 public:
  using Listener = std::function<void(const FeatureKey&)>;

  // Returns the new version (1 for an absent key). Throws InvalidTtl on
  // non-positive ttl.
  std::int64_t put(const FeatureKey& key, FeaturePayload payload,
                   std::optional<std::int64_t> ttl_seconds, std::int64_t now);

  std::optional<FeatureRecord> get(const FeatureKey& key, std::int64_t now) const;
  std::map<FeatureKey, std::optional<FeatureRecord>> get_batch(
      const std::vector<FeatureKey>& keys, std::int64_t now) const;

  // Writes every record (expired ones included, so versions survive a
  // round trip) to a JSON Lines file via a temp file and rename.
  std::size_t snapshot(const std::string& path) const;
  // Replaces the store contents with the file's records.
  std::size_t restore(const std::string& path);

  void subscribe(Listener listener);

  std::size_t size() const;

 private:
  mutable std::shared_mutex mutex_;
  std::map<FeatureKey, FeatureRecord> records_;

  mutable std::mutex listener_mutex_;
  std::vector<Listener> listeners_;

  void notify(const FeatureKey& key);
};

}  // namespace rankserve
