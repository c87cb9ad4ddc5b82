#include "ecomail/hash_ring.hpp"

#include <algorithm>

#include "ecomail/errors.hpp"

namespace ecomail {

std::uint64_t stable_hash64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

HashRing::HashRing(int virtual_points) : virtual_points_(virtual_points) {
  if (virtual_points < 1) throw config_error("virtual_points must be >= 1");
}

void HashRing::add_node(const std::string& node_id) {
  if (contains(node_id)) throw config_error("node '" + node_id + "' is already on the ring");
  for (int i = 0; i < virtual_points_; ++i) {
    const std::string label = node_id + "#" + std::to_string(i);
    std::uint64_t point = stable_hash64(label);
    // Collisions are astronomically rare; probe deterministically so every
    // node still owns exactly virtual_points_ points.
    for (int salt = 1; ring_.count(point); ++salt) {
      point = stable_hash64(label + "/" + std::to_string(salt));
    }
    ring_.emplace(point, node_id);
  }
  nodes_.push_back(node_id);
}

void HashRing::remove_node(const std::string& node_id) {
  if (!contains(node_id)) throw config_error("node '" + node_id + "' is not on the ring");
  if (nodes_.size() == 1) throw config_error("cannot remove the last node from the ring");
  std::erase_if(ring_, [&](const auto& kv) { return kv.second == node_id; });
  std::erase(nodes_, node_id);
}

const std::string& HashRing::locate(std::string_view key) const {
  if (ring_.empty()) throw config_error("hash ring is empty");
  auto it = ring_.lower_bound(stable_hash64(key));
  if (it == ring_.end()) it = ring_.begin();
  return it->second;
}

bool HashRing::contains(const std::string& node_id) const {
  return std::find(nodes_.begin(), nodes_.end(), node_id) != nodes_.end();
}

std::size_t HashRing::points_of(const std::string& node_id) const {
  return static_cast<std::size_t>(
      std::count_if(ring_.begin(), ring_.end(), [&](const auto& kv) { return kv.second == node_id; }));
}

}  // namespace ecomail
