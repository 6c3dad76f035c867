#include "rankserve/feature_store.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace rankserve {

using nlohmann::json;

std::string to_string(FeatureNamespace ns) {
  switch (ns) {
    case FeatureNamespace::user: return "user";
    case FeatureNamespace::query: return "query";
    case FeatureNamespace::product: return "product";
  }
  throw Error("unknown feature namespace");
}

FeatureNamespace namespace_from_string(const std::string& s) {
  if (s == "user") return FeatureNamespace::user;
  if (s == "query") return FeatureNamespace::query;
  if (s == "product") return FeatureNamespace::product;
  throw Error("unknown feature namespace: " + s);
}

namespace {

json payload_to_json(const FeaturePayload& payload) {
  json out = json::object();
  for (const auto& [name, value] : payload) {
    if (std::holds_alternative<double>(value)) {
      out[name] = std::get<double>(value);
    } else if (std::holds_alternative<std::string>(value)) {
      out[name] = std::get<std::string>(value);
    } else {
      out[name] = std::get<std::set<std::string>>(value);
    }
  }
  return out;
}

FeaturePayload payload_from_json(const json& obj, std::size_t line_no) {
  if (!obj.is_object()) throw CorruptSnapshot(line_no, "payload is not an object");
  FeaturePayload payload;
  for (const auto& [name, value] : obj.items()) {
    if (value.is_number()) {
      payload[name] = value.get<double>();
    } else if (value.is_string()) {
      payload[name] = value.get<std::string>();
    } else if (value.is_array()) {
      std::set<std::string> items;
      for (const auto& item : value) {
        if (!item.is_string()) throw CorruptSnapshot(line_no, "set element is not a string");
        items.insert(item.get<std::string>());
      }
      payload[name] = std::move(items);
    } else {
      throw CorruptSnapshot(line_no, "payload value for '" + name + "' has unsupported type");
    }
  }
  return payload;
}

}  // namespace

std::int64_t FeatureStore::put(const FeatureKey& key, FeaturePayload payload,
                               std::optional<std::int64_t> ttl_seconds, std::int64_t now) {
  if (key.id.empty()) throw Error("feature key id must be nonempty");
  if (ttl_seconds && *ttl_seconds <= 0) throw InvalidTtl();
  std::int64_t version = 0;
  {
    std::unique_lock lock(mutex_);
    auto& rec = records_[key];
    rec.key = key;
    rec.payload = std::move(payload);
    rec.version += 1;
    rec.updated_at = now;
    rec.ttl_seconds = ttl_seconds;
    version = rec.version;
  }
  notify(key);
  return version;
}

std::optional<FeatureRecord> FeatureStore::get(const FeatureKey& key, std::int64_t now) const {
  std::shared_lock lock(mutex_);
  auto it = records_.find(key);
  if (it == records_.end() || it->second.expired_at(now)) return std::nullopt;
  return it->second;
}

std::map<FeatureKey, std::optional<FeatureRecord>> FeatureStore::get_batch(
    const std::vector<FeatureKey>& keys, std::int64_t now) const {
  std::map<FeatureKey, std::optional<FeatureRecord>> out;
  std::shared_lock lock(mutex_);
  for (const auto& key : keys) {
    auto it = records_.find(key);
    if (it == records_.end() || it->second.expired_at(now)) {
      out[key] = std::nullopt;
    } else {
      out[key] = it->second;
    }
  }
  return out;
}

std::size_t FeatureStore::snapshot(const std::string& path) const {
  std::ostringstream body;
  std::size_t count = 0;
  {
    std::shared_lock lock(mutex_);
    for (const auto& [key, rec] : records_) {
      json line = {
          {"namespace", to_string(key.ns)},
          {"id", key.id},
          {"payload", payload_to_json(rec.payload)},
          {"version", rec.version},
          {"updated_at", rec.updated_at},
          {"ttl_seconds", rec.ttl_seconds ? json(*rec.ttl_seconds) : json(nullptr)},
      };
      body << line.dump() << '\n';
      ++count;
    }
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw FileUnreadable(tmp);
    out << body.str();
    if (!out.flush()) throw FileUnreadable(tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw FileUnreadable(path);
  return count;
}

std::size_t FeatureStore::restore(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileUnreadable(path);
  std::map<FeatureKey, FeatureRecord> loaded;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw CorruptSnapshot(line_no, e.what());
    }
    if (!obj.is_object()) throw CorruptSnapshot(line_no, "not an object");
    for (const char* field : {"namespace", "id", "payload", "version", "updated_at"}) {
      if (!obj.contains(field)) throw CorruptSnapshot(line_no, std::string("missing ") + field);
    }
    FeatureRecord rec;
    try {
      rec.key.ns = namespace_from_string(obj.at("namespace").get<std::string>());
    } catch (const Error& e) {
      throw CorruptSnapshot(line_no, e.what());
    }
    if (!obj.at("id").is_string()) throw CorruptSnapshot(line_no, "id is not a string");
    rec.key.id = obj.at("id").get<std::string>();
    if (rec.key.id.empty()) throw CorruptSnapshot(line_no, "id is empty");
    rec.payload = payload_from_json(obj.at("payload"), line_no);
    if (!obj.at("version").is_number_integer()) throw CorruptSnapshot(line_no, "bad version");
    rec.version = obj.at("version").get<std::int64_t>();
    if (rec.version <= 0) throw CorruptSnapshot(line_no, "version must be positive");
    if (!obj.at("updated_at").is_number_integer()) throw CorruptSnapshot(line_no, "bad updated_at");
    rec.updated_at = obj.at("updated_at").get<std::int64_t>();
    if (obj.contains("ttl_seconds") && !obj.at("ttl_seconds").is_null()) {
      if (!obj.at("ttl_seconds").is_number_integer()) throw CorruptSnapshot(line_no, "bad ttl_seconds");
      rec.ttl_seconds = obj.at("ttl_seconds").get<std::int64_t>();
      if (*rec.ttl_seconds <= 0) throw CorruptSnapshot(line_no, "ttl_seconds must be positive");
    }
    loaded[rec.key] = std::move(rec);
  }
  std::unique_lock lock(mutex_);
  records_ = std::move(loaded);
  return records_.size();
}

void FeatureStore::subscribe(Listener listener) {
  std::lock_guard lock(listener_mutex_);
  listeners_.push_back(std::move(listener));
}

std::size_t FeatureStore::size() const {
  std::shared_lock lock(mutex_);
  return records_.size();
}

void FeatureStore::notify(const FeatureKey& key) {
  std::vector<Listener> snapshot;
  {
    std::lock_guard lock(listener_mutex_);
    snapshot = listeners_;
  }
  for (const auto& listener : snapshot) listener(key);
}

}  // namespace rankserve
