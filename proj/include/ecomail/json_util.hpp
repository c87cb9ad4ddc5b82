#pragma once

#include <set>
#include <string>

#include "json.hpp"

#include "ecomail/errors.hpp"

namespace ecomail {

// Reads a JSON object field by field and rejects any key that was never
// asked for, so typos in config files fail loudly.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw config_error(where_ + ": expected a JSON object");
  }

  template <typename T>
  T required(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) throw config_error(where_ + ": missing key '" + key + "'");
    return convert<T>(*it, key);
  }

  template <typename T>
  T optional(const std::string& key, T fallback) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return fallback;
    return convert<T>(*it, key);
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const nlohmann::json& sub(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) throw config_error(where_ + ": missing key '" + key + "'");
    return *it;
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  // Call once all fields are read.
  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw config_error(where_ + ": unknown key '" + key + "'");
    }
  }

 private:
  template <typename T>
  T convert(const nlohmann::json& v, const std::string& key) {
    try {
      return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw config_error(where_ + "." + key + ": " + e.what());
    }
  }

  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace ecomail
