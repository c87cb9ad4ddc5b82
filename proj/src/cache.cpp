#include "ecomail/cache.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <mutex>

#include "ecomail/errors.hpp"

namespace ecomail {

namespace {

void append_escaped(std::string& out, const std::string& field) {
  for (char c : field) {
    if (c == '|' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
}

}  // namespace

std::string CacheKey::canonical() const {
  std::string out;
  out.reserve(account.size() + mailbox.size() + section.size() + 24);
  append_escaped(out, account);
  out.push_back('|');
  append_escaped(out, mailbox);
  out.push_back('|');
  out += std::to_string(uid);
  out.push_back('|');
  append_escaped(out, section);
  return out;
}

std::string CacheKey::mailbox_prefix(const std::string& account, const std::string& mailbox) {
  std::string out;
  append_escaped(out, account);
  out.push_back('|');
  append_escaped(out, mailbox);
  out.push_back('|');
  return out;
}

CacheStatsSnapshot CacheStats::snapshot() const {
  return {hits_.load(), misses_.load(), get_bytes_.load(), set_bytes_.load(), evictions_.load(), rejected_.load()};
}

CacheNode::CacheNode(std::string id, std::uint64_t capacity_bytes) : id_(std::move(id)), capacity_(capacity_bytes) {
  if (capacity_bytes == 0) throw config_error("cache node '" + id_ + "' needs a positive capacity");
}

std::uint64_t CacheNode::used_bytes() const {
  std::lock_guard lock(mu_);
  return used_;
}

std::size_t CacheNode::size() const {
  std::lock_guard lock(mu_);
  return lru_.size();
}

std::optional<Payload> CacheNode::get(const CacheKey& key) {
  std::lock_guard lock(mu_);
  auto it = index_.find(key.canonical());
  if (it == index_.end()) return std::nullopt;
  lru_.splice(lru_.begin(), lru_, it->second);
  return it->second->payload;
}

SetOutcome CacheNode::set(const CacheKey& key, Payload payload) {
  SetOutcome out;
  const std::uint64_t size = payload->size();
  if (size > capacity_) return out;

  std::lock_guard lock(mu_);
  const std::string canon = key.canonical();
  if (auto it = index_.find(canon); it != index_.end()) {
    used_ -= it->second->payload->size();
    lru_.erase(it->second);
    index_.erase(it);
  }
  while (used_ + size > capacity_) {
    Entry& victim = lru_.back();
    used_ -= victim.payload->size();
    index_.erase(victim.key.canonical());
    out.evicted.push_back(std::move(victim.key));
    lru_.pop_back();
  }
  lru_.push_front({key, std::move(payload)});
  index_.emplace(canon, lru_.begin());
  used_ += size;
  out.stored = true;
  return out;
}

std::size_t CacheNode::erase_prefix(const std::string& prefix) {
  std::lock_guard lock(mu_);
  std::size_t erased = 0;
  for (auto it = index_.begin(); it != index_.end();) {
    if (it->first.compare(0, prefix.size(), prefix) == 0) {
      used_ -= it->second->payload->size();
      lru_.erase(it->second);
      it = index_.erase(it);
      ++erased;
    } else {
      ++it;
    }
  }
  return erased;
}

std::vector<CacheKey> CacheNode::keys_by_recency() const {
  std::lock_guard lock(mu_);
  std::vector<CacheKey> out;
  out.reserve(lru_.size());
  for (const auto& e : lru_) out.push_back(e.key);
  return out;
}

CacheTier::CacheTier(const std::vector<NodeConfig>& nodes, int virtual_points) : ring_(virtual_points) {
  if (nodes.empty()) throw config_error("cache tier needs at least one node");
  for (const auto& n : nodes) {
    if (nodes_.count(n.id)) throw config_error("duplicate cache node '" + n.id + "'");
    nodes_.emplace(n.id, std::make_unique<CacheNode>(n.id, n.capacity_bytes));
    ring_.add_node(n.id);
  }
}

std::optional<Payload> CacheTier::get(const CacheKey& key) {
  std::shared_lock lock(ring_mu_);
  auto& node = *nodes_.at(ring_.locate(key.canonical()));
  auto hit = node.get(key);
  if (hit) {
    stats_.record_hit((*hit)->size());
  } else {
    stats_.record_miss();
  }
  return hit;
}

SetOutcome CacheTier::set(const CacheKey& key, Payload payload) {
  std::shared_lock lock(ring_mu_);
  auto& node = *nodes_.at(ring_.locate(key.canonical()));
  const std::uint64_t size = payload->size();
  SetOutcome out = node.set(key, std::move(payload));
  if (out.stored) {
    stats_.record_set(size, out.evicted.size());
  } else {
    stats_.record_rejected();
  }
  return out;
}

std::string CacheTier::locate(const CacheKey& key) const {
  std::shared_lock lock(ring_mu_);
  return ring_.locate(key.canonical());
}

RemapReport CacheTier::add_node(const NodeConfig& node, const std::vector<CacheKey>& sample) {
  std::unique_lock lock(ring_mu_);
  if (nodes_.count(node.id)) throw config_error("node '" + node.id + "' already exists");
  std::vector<std::string> before;
  before.reserve(sample.size());
  for (const auto& k : sample) before.push_back(ring_.locate(k.canonical()));
  auto fresh = std::make_unique<CacheNode>(node.id, node.capacity_bytes);
  ring_.add_node(node.id);
  nodes_.emplace(node.id, std::move(fresh));
  RemapReport rep{sample.size(), 0};
  for (std::size_t i = 0; i < sample.size(); ++i) rep.moved += ring_.locate(sample[i].canonical()) != before[i];
  return rep;
}

RemapReport CacheTier::remove_node(const std::string& node_id, const std::vector<CacheKey>& sample) {
  std::unique_lock lock(ring_mu_);
  std::vector<std::string> before;
  before.reserve(sample.size());
  for (const auto& k : sample) before.push_back(ring_.locate(k.canonical()));
  ring_.remove_node(node_id);
  nodes_.erase(node_id);
  RemapReport rep{sample.size(), 0};
  for (std::size_t i = 0; i < sample.size(); ++i) rep.moved += ring_.locate(sample[i].canonical()) != before[i];
  return rep;
}

std::size_t CacheTier::invalidate_mailbox(const std::string& account, const std::string& mailbox) {
  std::shared_lock lock(ring_mu_);
  const std::string prefix = CacheKey::mailbox_prefix(account, mailbox);
  std::size_t erased = 0;
  for (auto& [_, node] : nodes_) erased += node->erase_prefix(prefix);
  return erased;
}

std::vector<std::string> CacheTier::node_ids() const {
  std::shared_lock lock(ring_mu_);
  return ring_.nodes();
}

const CacheNode* CacheTier::node(const std::string& id) const {
  std::shared_lock lock(ring_mu_);
  auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : it->second.get();
}

std::uint64_t CacheTier::total_capacity() const {
  std::shared_lock lock(ring_mu_);
  std::uint64_t total = 0;
  for (const auto& [_, n] : nodes_) total += n->capacity_bytes();
  return total;
}

std::uint64_t CacheTier::used_bytes() const {
  std::shared_lock lock(ring_mu_);
  std::uint64_t total = 0;
  for (const auto& [_, n] : nodes_) total += n->used_bytes();
  return total;
}

void to_json(nlohmann::json& j, const CacheStatsSnapshot& s) {
  j = {{"hits", s.hits},
       {"misses", s.misses},
       {"get_bytes", s.get_bytes},
       {"set_bytes", s.set_bytes},
       {"evictions", s.evictions},
       {"rejected", s.rejected}};
}

void write_stats_csv(const std::string& path, const std::vector<StatsSample>& samples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "timestamp,hits,misses,get_bytes,set_bytes,evictions\n";
  char ts[64];
  for (const auto& s : samples) {
    std::snprintf(ts, sizeof ts, "%.3f", s.timestamp);
    out << ts << ',' << s.stats.hits << ',' << s.stats.misses << ',' << s.stats.get_bytes << ','
        << s.stats.set_bytes << ',' << s.stats.evictions << '\n';
  }
}

}  // namespace ecomail
