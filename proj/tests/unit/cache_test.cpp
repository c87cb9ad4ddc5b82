#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <thread>

#include "doctest.h"

#include "ecomail/cache.hpp"
#include "ecomail/errors.hpp"
#include "support/oracles.hpp"

using namespace ecomail;

namespace {

CacheKey key(std::uint64_t uid, const std::string& box = "INBOX", const std::string& acct = "alice") {
  return {acct, box, uid, "BODY[]"};
}

std::vector<CacheKey> sample_keys(std::size_t n) {
  std::vector<CacheKey> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({"user" + std::to_string(i % 97), "INBOX", i + 1, "BODY[]"});
  return out;
}

// Zipf ranks by inverse CDF, kept local to the test.
struct Zipf {
  std::vector<double> cdf;
  Zipf(std::size_t n, double s) {
    double sum = 0;
    for (std::size_t k = 1; k <= n; ++k) cdf.push_back(sum += std::pow(double(k), -s));
    for (auto& c : cdf) c /= sum;
  }
  std::size_t operator()(std::mt19937_64& rng) const {
    const double u = oracle::uniform(rng, 0, 1);
    return std::min<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin(), cdf.size() - 1);
  }
};

}  // namespace

TEST_CASE("get after set returns the exact payload; unknown keys miss") {
  CacheTier tier({{"n0", 1000}});
  CHECK_FALSE(tier.get(key(1)));
  CHECK(tier.stats().misses == 1);
  std::string bytes("a\0b\r\n", 5);
  tier.set(key(1), make_payload(bytes));
  auto got = tier.get(key(1));
  REQUIRE(got);
  CHECK(**got == bytes);
  CHECK(tier.stats().hits == 1);
  CHECK(tier.stats().get_bytes == 5);
  CHECK(tier.stats().set_bytes == 5);
}

TEST_CASE("forced single eviction") {
  CacheNode node("n", 100);
  node.set(key(1), make_payload(std::string(60, 'a')));
  const auto out = node.set(key(2), make_payload(std::string(60, 'b')));
  REQUIRE(out.evicted.size() == 1);
  CHECK(out.evicted[0] == key(1));
  CHECK_FALSE(node.get(key(1)));
  CHECK(node.get(key(2)));
}

TEST_CASE("overwrite keeps only the second payload") {
  CacheNode node("n", 100);
  node.set(key(1), make_payload("first payload"));
  node.set(key(1), make_payload("2nd"));
  CHECK(node.used_bytes() == 3);
  CHECK(node.size() == 1);
  CHECK(**node.get(key(1)) == "2nd");
}

TEST_CASE("oversized payloads are rejected without eviction") {
  CacheTier tier({{"n0", 100}});
  tier.set(key(1), make_payload(std::string(50, 'a')));
  const auto out = tier.set(key(2), make_payload(std::string(101, 'b')));
  CHECK_FALSE(out.stored);
  CHECK(out.evicted.empty());
  CHECK(tier.get(key(1)));
  CHECK_FALSE(tier.get(key(2)));
  CHECK(tier.stats().rejected == 1);
  CHECK(tier.stats().evictions == 0);
}

TEST_CASE("recency follows the last access") {
  CacheNode node("n", 30);
  for (int i = 1; i <= 3; ++i) node.set(key(i), make_payload(std::string(10, 'x')));
  node.get(key(1));
  node.set(key(4), make_payload(std::string(10, 'x')));  // evicts 2
  const auto order = node.keys_by_recency();
  REQUIRE(order.size() == 3);
  CHECK(order[0] == key(4));
  CHECK(order[1] == key(1));
  CHECK(order[2] == key(3));
}

TEST_CASE("canonical keys are injective under separator characters") {
  const CacheKey a{"a|b", "c", 1, "BODY[]"};
  const CacheKey b{"a", "b|c", 1, "BODY[]"};
  const CacheKey c{"a\\", "|c", 1, "BODY[]"};
  CHECK(a.canonical() != b.canonical());
  CHECK(a.canonical() != c.canonical());
  CHECK(b.canonical() != c.canonical());

  std::mt19937_64 rng(41);
  const std::string alphabet = "ab|\\";
  std::map<std::string, CacheKey> seen;
  for (int i = 0; i < 20000; ++i) {
    auto field = [&] {
      std::string s;
      const auto len = oracle::uniform_int(rng, 0, 3);
      for (int k = 0; k < len; ++k) s.push_back(alphabet[rng() % alphabet.size()]);
      return s;
    };
    CacheKey k{field(), field(), static_cast<std::uint64_t>(oracle::uniform_int(rng, 1, 3)), field()};
    auto [it, inserted] = seen.emplace(k.canonical(), k);
    if (!inserted) CHECK(it->second == k);
  }
}

TEST_CASE("invalidation drops exactly one mailbox") {
  CacheTier tier({{"n0", 10000}, {"n1", 10000}});
  for (int i = 1; i <= 20; ++i) {
    tier.set(key(i, "INBOX"), make_payload("x"));
    tier.set(key(i, "INBOX|old"), make_payload("y"));
    tier.set(key(i, "INBOX", "bob"), make_payload("z"));
  }
  CHECK(tier.invalidate_mailbox("alice", "INBOX") == 20);
  for (int i = 1; i <= 20; ++i) {
    CHECK_FALSE(tier.get(key(i, "INBOX")));
    CHECK(tier.get(key(i, "INBOX|old")));
    CHECK(tier.get(key(i, "INBOX", "bob")));
  }
}

TEST_CASE("ring basics") {
  HashRing one;
  one.add_node("solo");
  for (const auto& k : sample_keys(500)) CHECK(one.locate(k.canonical()) == "solo");
  CHECK(one.points_of("solo") == kDefaultVirtualPoints);
  CHECK_THROWS_AS(one.add_node("solo"), config_error);
  CHECK_THROWS_AS(one.remove_node("ghost"), config_error);
  CHECK_THROWS_AS(one.remove_node("solo"), config_error);
  HashRing empty;
  CHECK_THROWS_AS(empty.locate("k"), config_error);
  CHECK_THROWS_AS(CacheTier({}), config_error);

  HashRing ring;
  for (int i = 0; i < 4; ++i) ring.add_node("node" + std::to_string(i));
  const std::string first = ring.locate("alice|INBOX|7|BODY[]");
  for (int i = 0; i < 1000; ++i) CHECK(ring.locate("alice|INBOX|7|BODY[]") == first);
  for (int i = 0; i < 4; ++i) CHECK(ring.points_of("node" + std::to_string(i)) == kDefaultVirtualPoints);
}

TEST_CASE("ring load is balanced across four nodes") {
  HashRing ring;
  for (int i = 0; i < 4; ++i) ring.add_node("node" + std::to_string(i));
  std::map<std::string, int> share;
  for (const auto& k : sample_keys(10000)) share[ring.locate(k.canonical())]++;
  REQUIRE(share.size() == 4);
  for (const auto& [node, n] : share) {
    CHECK(n >= 1500);
    CHECK(n <= 3500);
  }
}

TEST_CASE("rebalancing moves only keys of the changed node") {
  const auto sample = sample_keys(10000);
  CacheTier tier({{"node0", 1000}, {"node1", 1000}, {"node2", 1000}, {"node3", 1000}});
  std::vector<std::string> before;
  for (const auto& k : sample) before.push_back(tier.locate(k));

  const auto added = tier.add_node({"node4", 1000}, sample);
  CHECK(added.moved_fraction() >= 0.1);
  CHECK(added.moved_fraction() <= 0.4);
  std::size_t moved = 0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const auto now = tier.locate(sample[i]);
    if (now != before[i]) {
      ++moved;
      CHECK(now == "node4");
    }
  }
  CHECK(moved == added.moved);

  const auto removed = tier.remove_node("node4", sample);
  CHECK(removed.moved == added.moved);
  for (std::size_t i = 0; i < sample.size(); ++i) CHECK(tier.locate(sample[i]) == before[i]);

  std::vector<std::string> mid;
  for (const auto& k : sample) mid.push_back(tier.locate(k));
  tier.remove_node("node2", sample);
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (mid[i] != "node2") CHECK(tier.locate(sample[i]) == mid[i]);
  }
  CHECK_THROWS_AS(tier.add_node({"node0", 10}, sample), config_error);
}

TEST_CASE("tier replay matches a reference LRU partitioned by the same ring") {
  const std::vector<NodeConfig> nodes{{"a", 4000}, {"b", 3000}, {"c", 5000}};
  CacheTier tier(nodes);
  HashRing ring;
  std::map<std::string, oracle::ReferenceLru> refs;
  for (const auto& n : nodes) {
    ring.add_node(n.id);
    refs.emplace(n.id, oracle::ReferenceLru(n.capacity_bytes));
  }
  std::mt19937_64 rng(42);
  std::map<std::uint64_t, std::uint64_t> sizes;
  std::uint64_t gets = 0, hit_bytes = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto uid = static_cast<std::uint64_t>(oracle::uniform_int(rng, 1, 60));
    if (!sizes.count(uid)) sizes[uid] = static_cast<std::uint64_t>(oracle::uniform_int(rng, 50, 900));
    const CacheKey k = key(uid);
    auto& ref = refs.at(ring.locate(k.canonical()));
    if (rng() % 2) {
      ++gets;
      const bool ref_hit = ref.get(k.canonical());
      const auto got = tier.get(k);
      CHECK(bool(got) == ref_hit);
      if (got) hit_bytes += (*got)->size();
    } else {
      ref.set(k.canonical(), sizes[uid]);
      tier.set(k, make_payload(std::string(sizes[uid], 'p')));
    }
  }
  std::uint64_t hits = 0, misses = 0;
  for (const auto& [id, ref] : refs) {
    hits += ref.hits();
    misses += ref.misses();
    std::vector<std::string> resident;
    for (const auto& k : tier.node(id)->keys_by_recency()) resident.push_back(k.canonical());
    CHECK(resident == ref.keys());
    CHECK(tier.node(id)->used_bytes() == ref.used());
  }
  const auto s = tier.stats();
  CHECK(s.hits == hits);
  CHECK(s.misses == misses);
  CHECK(s.hits + s.misses == gets);
  CHECK(s.get_bytes == hit_bytes);
}

TEST_CASE("Zipf set trace evicts in the same order as the reference LRU") {
  CacheNode node("n", 4000000);
  oracle::ReferenceLru ref(4000000);
  const Zipf zipf(1000, 1.0);
  std::mt19937_64 rng(43);
  std::vector<std::uint64_t> sizes(1000);
  for (auto& s : sizes) s = static_cast<std::uint64_t>(oracle::uniform_int(rng, 1000, 80000));
  for (int i = 0; i < 10000; ++i) {
    const auto r = zipf(rng);
    const CacheKey k = key(r + 1);
    const auto got = node.set(k, make_payload(std::string(sizes[r], 'z')));
    const auto expect = ref.set(k.canonical(), sizes[r]);
    std::vector<std::string> evicted;
    for (const auto& e : got.evicted) evicted.push_back(e.canonical());
    REQUIRE(evicted == expect);
    REQUIRE(node.used_bytes() <= node.capacity_bytes());
  }
}

TEST_CASE("property: capacity safety and stats conservation on random traces") {
  std::mt19937_64 rng(44);
  for (int round = 0; round < 20; ++round) {
    std::vector<NodeConfig> nodes;
    const auto count = oracle::uniform_int(rng, 1, 5);
    for (int i = 0; i < count; ++i) {
      nodes.push_back({"n" + std::to_string(i), static_cast<std::uint64_t>(oracle::uniform_int(rng, 100, 5000))});
    }
    CacheTier tier(nodes, static_cast<int>(oracle::uniform_int(rng, 1, 200)));
    std::uint64_t gets = 0;
    for (int i = 0; i < 2000; ++i) {
      const CacheKey k = key(static_cast<std::uint64_t>(oracle::uniform_int(rng, 1, 200)));
      if (rng() % 3 == 0) {
        tier.set(k, make_payload(std::string(static_cast<std::size_t>(oracle::uniform_int(rng, 1, 3000)), 'q')));
      } else {
        ++gets;
        tier.get(k);
      }
      if (i % 97 == 0) {
        for (const auto& n : nodes) REQUIRE(tier.node(n.id)->used_bytes() <= n.capacity_bytes);
      }
    }
    const auto s = tier.stats();
    CHECK(s.hits + s.misses == gets);
  }
}

TEST_CASE("property: single-node miss count never grows with capacity") {
  std::mt19937_64 rng(45);
  for (int round = 0; round < 30; ++round) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> trace;
    std::map<std::uint64_t, std::uint64_t> sizes;
    for (int i = 0; i < 1000; ++i) {
      const auto uid = static_cast<std::uint64_t>(oracle::uniform_int(rng, 1, 80));
      if (!sizes.count(uid)) sizes[uid] = static_cast<std::uint64_t>(oracle::uniform_int(rng, 10, 500));
      trace.push_back({uid, sizes[uid]});
    }
    std::uint64_t prev = ~0ull;
    for (std::uint64_t cap = 500; cap <= 20000; cap += 1500) {
      CacheNode node("n", cap);
      std::uint64_t misses = 0;
      for (const auto& [uid, size] : trace) {
        if (!node.get(key(uid))) {
          ++misses;
          node.set(key(uid), make_payload(std::string(size, 'm')));
        }
      }
      CHECK(misses <= prev);
      prev = misses;
    }
  }
}

TEST_CASE("concurrent sessions keep nodes within capacity and counters consistent") {
  CacheTier tier({{"a", 20000}, {"b", 20000}, {"c", 20000}});
  std::atomic<std::uint64_t> gets{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      std::mt19937_64 rng(100 + t);
      for (int i = 0; i < 5000; ++i) {
        const CacheKey k = key(static_cast<std::uint64_t>(oracle::uniform_int(rng, 1, 300)));
        if (!tier.get(k)) tier.set(k, make_payload(std::string(static_cast<std::size_t>(100 + k.uid), 'c')));
        ++gets;
        if (t == 0 && i % 1000 == 0) tier.invalidate_mailbox("alice", "INBOX");
      }
    });
  }
  std::thread reconfig([&] {
    const auto sample = sample_keys(100);
    for (int i = 0; i < 20; ++i) {
      tier.add_node({"d", 20000}, sample);
      tier.remove_node("d", sample);
    }
  });
  for (auto& t : threads) t.join();
  reconfig.join();
  const auto s = tier.stats();
  CHECK(s.hits + s.misses == gets.load());
  for (const auto& id : tier.node_ids()) CHECK(tier.node(id)->used_bytes() <= tier.node(id)->capacity_bytes());
}

TEST_CASE("stats CSV time series") {
  const auto path = (std::filesystem::temp_directory_path() / "ecomail_stats_test.csv").string();
  write_stats_csv(path, {{0.0, {1, 2, 3, 4, 5, 0}}, {1.5, {2, 2, 6, 4, 5, 0}}});
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "timestamp,hits,misses,get_bytes,set_bytes,evictions");
  CHECK(row == "0.000,1,2,3,4,5");
  std::filesystem::remove(path);
}
