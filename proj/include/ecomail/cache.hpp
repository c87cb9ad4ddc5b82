#pragma once

// Byte-bounded LRU cache sharded over logical nodes by a consistent-hash
// ring. Values are full message payloads; the tier never truncates one.

#include <atomic>
#include <cstdint>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "ecomail/hash_ring.hpp"

namespace ecomail {

using Payload = std::shared_ptr<const std::string>;

inline Payload make_payload(std::string bytes) { return std::make_shared<const std::string>(std::move(bytes)); }

struct CacheKey {
  std::string account;
  std::string mailbox;
  std::uint64_t uid = 0;
  std::string section;  // "BODY[]" or "RFC822"

  // Fields joined by '|'; '|' and '\' inside fields are backslash-escaped,
  // so distinct keys never share a canonical form.
  std::string canonical() const;
  // Canonical prefix shared by every key of one mailbox.
  static std::string mailbox_prefix(const std::string& account, const std::string& mailbox);

  friend bool operator==(const CacheKey&, const CacheKey&) = default;
};

struct CacheStatsSnapshot {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t get_bytes = 0;
  std::uint64_t set_bytes = 0;
  std::uint64_t evictions = 0;
  std::uint64_t rejected = 0;  // payloads larger than the target node
};

class CacheStats {
 public:
  void record_hit(std::uint64_t bytes) {
    hits_.fetch_add(1, std::memory_order_relaxed);
    get_bytes_.fetch_add(bytes, std::memory_order_relaxed);
  }
  void record_miss() { misses_.fetch_add(1, std::memory_order_relaxed); }
  void record_set(std::uint64_t bytes, std::uint64_t evicted) {
    set_bytes_.fetch_add(bytes, std::memory_order_relaxed);
    evictions_.fetch_add(evicted, std::memory_order_relaxed);
  }
  void record_rejected() { rejected_.fetch_add(1, std::memory_order_relaxed); }
  CacheStatsSnapshot snapshot() const;

 private:
  std::atomic<std::uint64_t> hits_{0}, misses_{0}, get_bytes_{0}, set_bytes_{0}, evictions_{0}, rejected_{0};
};

struct SetOutcome {
  bool stored = false;
  std::vector<CacheKey> evicted;  // LRU first
};

// One shard. All operations are serialized by the node's mutex.
class CacheNode {
 public:
  CacheNode(std::string id, std::uint64_t capacity_bytes);

  const std::string& id() const { return id_; }
  std::uint64_t capacity_bytes() const { return capacity_; }
  std::uint64_t used_bytes() const;
  std::size_t size() const;

  std::optional<Payload> get(const CacheKey& key);
  SetOutcome set(const CacheKey& key, Payload payload);
  std::size_t erase_prefix(const std::string& canonical_prefix);
  // Most-recently-used first.
  std::vector<CacheKey> keys_by_recency() const;

 private:
  struct Entry {
    CacheKey key;
    Payload payload;
  };
  std::string id_;
  std::uint64_t capacity_;
  mutable std::mutex mu_;
  std::uint64_t used_ = 0;
  std::list<Entry> lru_;  // front = most recent
  std::unordered_map<std::string, std::list<Entry>::iterator> index_;
};

struct NodeConfig {
  std::string id;
  std::uint64_t capacity_bytes = 0;
};

struct RemapReport {
  std::size_t sample_size = 0;
  std::size_t moved = 0;
  double moved_fraction() const { return sample_size ? static_cast<double>(moved) / sample_size : 0.0; }
};

// Ring plus nodes plus one stats ledger. Lookups share the ring lock;
// add_node/remove_node take it exclusively.
class CacheTier {
 public:
  CacheTier(const std::vector<NodeConfig>& nodes, int virtual_points = kDefaultVirtualPoints);

  std::optional<Payload> get(const CacheKey& key);
  SetOutcome set(const CacheKey& key, Payload payload);
  std::string locate(const CacheKey& key) const;

  // Moved fraction is measured over `sample`. Stored values are not migrated;
  // remapped keys miss once.
  RemapReport add_node(const NodeConfig& node, const std::vector<CacheKey>& sample);
  RemapReport remove_node(const std::string& node_id, const std::vector<CacheKey>& sample);

  // Drops every cached message of one mailbox, on all nodes.
  std::size_t invalidate_mailbox(const std::string& account, const std::string& mailbox);

  CacheStatsSnapshot stats() const { return stats_.snapshot(); }
  std::vector<std::string> node_ids() const;
  // nullptr if absent. The pointer stays valid until the node is removed.
  const CacheNode* node(const std::string& id) const;
  std::uint64_t total_capacity() const;
  std::uint64_t used_bytes() const;

 private:
  mutable std::shared_mutex ring_mu_;
  HashRing ring_;
  std::unordered_map<std::string, std::unique_ptr<CacheNode>> nodes_;
  CacheStats stats_;
};

void to_json(nlohmann::json& j, const CacheStatsSnapshot& s);

// Time series of stats snapshots; CSV columns
// timestamp,hits,misses,get_bytes,set_bytes,evictions.
struct StatsSample {
  double timestamp = 0.0;
  CacheStatsSnapshot stats;
};
void write_stats_csv(const std::string& path, const std::vector<StatsSample>& samples);

}  // namespace ecomail
