#include "ecomail/traffic_ledger.hpp"

#include "ecomail/json_util.hpp"

namespace ecomail {

TrafficSnapshot& TrafficSnapshot::operator+=(const TrafficSnapshot& o) {
  bytes_to_upstream += o.bytes_to_upstream;
  bytes_from_upstream += o.bytes_from_upstream;
  requests_to_upstream += o.requests_to_upstream;
  hits += o.hits;
  misses += o.misses;
  hit_bytes += o.hit_bytes;
  miss_bytes += o.miss_bytes;
  return *this;
}

void TrafficLedger::add(const TrafficSnapshot& d) {
  constexpr auto relaxed = std::memory_order_relaxed;
  if (d.bytes_to_upstream) bytes_to_upstream_.fetch_add(d.bytes_to_upstream, relaxed);
  if (d.bytes_from_upstream) bytes_from_upstream_.fetch_add(d.bytes_from_upstream, relaxed);
  if (d.requests_to_upstream) requests_to_upstream_.fetch_add(d.requests_to_upstream, relaxed);
  if (d.hits) hits_.fetch_add(d.hits, relaxed);
  if (d.misses) misses_.fetch_add(d.misses, relaxed);
  if (d.hit_bytes) hit_bytes_.fetch_add(d.hit_bytes, relaxed);
  if (d.miss_bytes) miss_bytes_.fetch_add(d.miss_bytes, relaxed);
}

TrafficSnapshot TrafficLedger::snapshot() const {
  return {bytes_to_upstream_.load(), bytes_from_upstream_.load(), requests_to_upstream_.load(), hits_.load(),
          misses_.load(),            hit_bytes_.load(),           miss_bytes_.load()};
}

void to_json(nlohmann::json& j, const TrafficSnapshot& s) {
  j = {{"bytes_to_upstream", s.bytes_to_upstream},
       {"bytes_from_upstream", s.bytes_from_upstream},
       {"requests_to_upstream", s.requests_to_upstream},
       {"hits", s.hits},
       {"misses", s.misses},
       {"hit_bytes", s.hit_bytes},
       {"miss_bytes", s.miss_bytes}};
}

void from_json(const nlohmann::json& j, TrafficSnapshot& s) {
  StrictObject o(j, "traffic");
  s.bytes_to_upstream = o.optional<std::uint64_t>("bytes_to_upstream", 0);
  s.bytes_from_upstream = o.optional<std::uint64_t>("bytes_from_upstream", 0);
  s.requests_to_upstream = o.optional<std::uint64_t>("requests_to_upstream", 0);
  s.hits = o.optional<std::uint64_t>("hits", 0);
  s.misses = o.optional<std::uint64_t>("misses", 0);
  s.hit_bytes = o.optional<std::uint64_t>("hit_bytes", 0);
  s.miss_bytes = o.optional<std::uint64_t>("miss_bytes", 0);
  o.finish();
}

}  // namespace ecomail
