#pragma once

#include <atomic>
#include <cstdint>
#include <string>

#include "json.hpp"

namespace ecomail {

struct TrafficSnapshot {
  std::uint64_t bytes_to_upstream = 0;
  std::uint64_t bytes_from_upstream = 0;
  std::uint64_t requests_to_upstream = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t hit_bytes = 0;
  std::uint64_t miss_bytes = 0;

  TrafficSnapshot& operator+=(const TrafficSnapshot& o);
  friend bool operator==(const TrafficSnapshot&, const TrafficSnapshot&) = default;
  double hit_rate() const { return hits + misses ? static_cast<double>(hits) / static_cast<double>(hits + misses) : 0.0; }
};

// Process-wide ledger shared by all sessions.
class TrafficLedger {
 public:
  void add(const TrafficSnapshot& delta);
  TrafficSnapshot snapshot() const;

 private:
  std::atomic<std::uint64_t> bytes_to_upstream_{0}, bytes_from_upstream_{0}, requests_to_upstream_{0}, hits_{0},
      misses_{0}, hit_bytes_{0}, miss_bytes_{0};
};

// A session's slice; every increment is mirrored into the global ledger.
class SessionLedger {
 public:
  explicit SessionLedger(TrafficLedger& global) : global_(global) {}

  void upstream_bytes(std::uint64_t to, std::uint64_t from) { apply({.bytes_to_upstream = to, .bytes_from_upstream = from}); }
  void upstream_request() { apply({.requests_to_upstream = 1}); }
  void hit(std::uint64_t bytes) { apply({.hits = 1, .hit_bytes = bytes}); }
  void miss(std::uint64_t bytes) { apply({.misses = 1, .miss_bytes = bytes}); }

  const TrafficSnapshot& local() const { return local_; }

 private:
  void apply(const TrafficSnapshot& d) {
    local_ += d;
    global_.add(d);
  }
  TrafficLedger& global_;
  TrafficSnapshot local_;
};

void to_json(nlohmann::json& j, const TrafficSnapshot& s);
void from_json(const nlohmann::json& j, TrafficSnapshot& s);

}  // namespace ecomail
