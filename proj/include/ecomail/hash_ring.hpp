#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ecomail {

inline constexpr int kDefaultVirtualPoints = 128;
inline constexpr const char* kDefaultHash = "fnv1a64";

// FNV-1a over the bytes followed by the splitmix64 finalizer (raw FNV-1a
// clusters badly on short, similar keys such as "node-1#17").
std::uint64_t stable_hash64(std::string_view bytes);

// Consistent-hash ring. Each node owns `virtual_points` points; a key belongs
// to the node owning the first point at or after the key's hash, wrapping.
class HashRing {
 public:
  explicit HashRing(int virtual_points = kDefaultVirtualPoints);

  // Throws config_error on a duplicate id.
  void add_node(const std::string& node_id);
  // Throws config_error if the node is absent or is the last one.
  void remove_node(const std::string& node_id);

  // Throws config_error on an empty ring.
  const std::string& locate(std::string_view key) const;

  bool empty() const { return ring_.empty(); }
  bool contains(const std::string& node_id) const;
  std::vector<std::string> nodes() const { return nodes_; }
  int virtual_points() const { return virtual_points_; }
  // Point count per node, for checking the ring invariant.
  std::size_t points_of(const std::string& node_id) const;

 private:
  int virtual_points_;
  std::map<std::uint64_t, std::string> ring_;
  std::vector<std::string> nodes_;
};

}  // namespace ecomail
