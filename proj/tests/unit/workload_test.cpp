#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "json.hpp"

#include "ecomail/errors.hpp"
#include "ecomail/miss_rate.hpp"
#include "ecomail/workload.hpp"
#include "support/oracles.hpp"

using namespace ecomail;

namespace {

WorkloadSpec small_spec() {
  WorkloadSpec s;
  s.num_messages = 500;
  s.active_messages = 60;
  s.size_mean = 4000;
  s.size_stddev = 1000;
  s.arrival_rate = 5;
  s.duration = 400;
  return s;
}

// Replays a trace on one hand-rolled LRU, miss => set.
std::uint64_t reference_misses(const std::vector<TraceEvent>& trace, std::uint64_t capacity) {
  oracle::ReferenceLru lru(capacity);
  for (const auto& e : trace) {
    const std::string k = e.account + "/" + e.mailbox + "/" + std::to_string(e.uid);
    if (!lru.get(k)) lru.set(k, e.size);
  }
  return lru.misses();
}

}  // namespace

TEST_CASE("same spec and seed give identical traces; a new seed does not") {
  const auto s = small_spec();
  const auto a = generate_trace(s);
  CHECK(a == generate_trace(s));
  CHECK(trace_to_csv(a) == trace_to_csv(generate_trace(s)));
  auto t = s;
  t.seed = 7;
  CHECK_FALSE(a == generate_trace(t));
}

TEST_CASE("timestamps are non-decreasing and inside the run") {
  auto s = small_spec();
  s.devices_per_account = 3;
  s.accounts = 2;
  const auto trace = generate_trace(s);
  REQUIRE_FALSE(trace.empty());
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i - 1].timestamp <= trace[i].timestamp);
  CHECK(trace.back().timestamp <= s.duration);
  std::set<std::string> accounts;
  for (const auto& e : trace) accounts.insert(e.account);
  CHECK(accounts.size() == 2);
}

TEST_CASE("Poisson arrival count is within three standard deviations") {
  WorkloadSpec s;
  s.arrival_rate = 1;
  s.duration = 10000;
  const auto n = static_cast<double>(generate_trace(s).size());
  CHECK(std::abs(n - 10000) <= 300);
}

TEST_CASE("inter-arrival gaps look exponential") {
  WorkloadSpec s;
  s.arrival_rate = 2;
  s.duration = 50000;
  const auto trace = generate_trace(s);
  std::vector<double> gaps;
  for (std::size_t i = 1; i < trace.size(); ++i) gaps.push_back(trace[i].timestamp - trace[i - 1].timestamp);
  const double mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) / double(gaps.size());
  CHECK(mean == doctest::Approx(0.5).epsilon(0.02));
  // For an exponential, P(gap > mean) = 1/e.
  const double above = double(std::count_if(gaps.begin(), gaps.end(), [&](double g) { return g > mean; })) / double(gaps.size());
  CHECK(above == doctest::Approx(std::exp(-1.0)).epsilon(0.03));
}

TEST_CASE("Zipf popularity: the top 100 messages outdraw every other band of 100") {
  WorkloadSpec s;
  s.active_messages = 0;
  s.arrival_rate = 10;
  s.duration = 10000;
  const auto trace = generate_trace(s);
  CHECK(trace.size() > 95000);
  // Popularity rank r maps to uid = num_messages - r.
  std::vector<std::uint64_t> bands(s.num_messages / 100, 0);
  for (const auto& e : trace) bands[(s.num_messages - e.uid) / 100]++;
  for (std::size_t b = 1; b < bands.size(); ++b) CHECK(bands[0] > bands[b]);
  CHECK(double(bands[0]) / double(trace.size()) > 0.5);
}

TEST_CASE("hot set limits which messages are requested") {
  WorkloadSpec s = small_spec();
  std::set<std::uint64_t> uids;
  for (const auto& e : generate_trace(s)) uids.insert(e.uid);
  CHECK(uids.size() <= s.active_messages);
  CHECK(*uids.begin() > s.num_messages - s.active_messages);
}

TEST_CASE("mailbox sizes: mean within 2 percent, floor respected, trace sizes consistent") {
  WorkloadSpec s;
  for (std::uint64_t seed : {1, 2, 3}) {
    s.seed = seed;
    const auto sizes = message_sizes(s, 0);
    REQUIRE(sizes.size() == 10000);
    const double mean = std::accumulate(sizes.begin(), sizes.end(), 0.0) / double(sizes.size());
    CHECK(std::abs(mean - 40000) / 40000 < 0.02);
    CHECK(*std::min_element(sizes.begin(), sizes.end()) >= 1000);
  }
  auto skinny = s;
  skinny.size_mean = 1500;
  skinny.size_stddev = 2000;
  const auto low = message_sizes(skinny, 0);
  CHECK(*std::min_element(low.begin(), low.end()) >= 1000);

  const auto small = small_spec();
  const auto sizes = message_sizes(small, 0);
  for (const auto& e : generate_trace(small)) CHECK(e.size == sizes[e.uid - 1]);
}

TEST_CASE("uniform sizes stay in mean +- sqrt(3) stddev") {
  WorkloadSpec s;
  s.size_distribution = SizeDistribution::Uniform;
  const auto sizes = message_sizes(s, 0);
  const double half = std::sqrt(3.0) * s.size_stddev;
  for (auto v : sizes) {
    CHECK(double(v) >= s.size_mean - half - 1);
    CHECK(double(v) <= s.size_mean + half + 1);
  }
}

TEST_CASE("invalid specs are rejected") {
  auto bad = [](auto mutate) {
    WorkloadSpec s;
    mutate(s);
    return s;
  };
  CHECK_THROWS_AS(bad([](WorkloadSpec& s) { s.popularity = 0; }).validate(), domain_error);
  CHECK_THROWS_AS(bad([](WorkloadSpec& s) { s.size_floor = 0; }).validate(), domain_error);
  CHECK_THROWS_AS(bad([](WorkloadSpec& s) { s.num_messages = 0; }).validate(), domain_error);
  CHECK_THROWS_AS(bad([](WorkloadSpec& s) { s.arrival_rate = -1; }).validate(), domain_error);
  CHECK_THROWS_AS(bad([](WorkloadSpec& s) { s.devices_per_account = 0; }).validate(), domain_error);
  CHECK_THROWS_AS(workload_spec_from_json(nlohmann::json{{"nope", 1}}), config_error);
  CHECK_THROWS_AS(workload_spec_from_json(nlohmann::json{{"popularity", -1}}), config_error);
  const auto s = workload_spec_from_json(nlohmann::json{{"seed", 9}, {"size_distribution", "uniform"}});
  CHECK(s.seed == 9);
  CHECK(s.size_distribution == SizeDistribution::Uniform);
  CHECK(workload_spec_from_json(nlohmann::json(s)).seed == 9);
}

TEST_CASE("trace CSV round trip") {
  auto s = small_spec();
  s.devices_per_account = 2;
  const auto trace = generate_trace(s);
  CHECK(trace_from_csv(trace_to_csv(trace)) == trace);
  CHECK_THROWS_AS(trace_from_csv("time,account\n"), ingest_error);
  CHECK_THROWS_AS(trace_from_csv("timestamp,account,mailbox,uid,op,size\n2,a,INBOX,1,fetch,10\n1,a,INBOX,1,fetch,10\n"),
                  ingest_error);
  CHECK_THROWS_AS(trace_from_csv("timestamp,account,mailbox,uid,op,size\n1,a,INBOX,1,peek,10\n"), ingest_error);
}

TEST_CASE("replay matches a reference LRU on short traces") {
  auto s = small_spec();
  s.duration = 40;  // about 200 events
  const auto trace = generate_trace(s);
  CHECK(trace.size() > 150);
  for (std::uint64_t cap : {20000, 60000, 150000}) {
    const auto r = replay(trace, {{"n", cap}});
    CHECK(r.misses == reference_misses(trace, cap));
    CHECK(r.hits + r.misses == trace.size());
  }
}

TEST_CASE("cold misses: enough capacity leaves only first touches") {
  const auto s = small_spec();
  const auto trace = generate_trace(s);
  const auto r = replay(trace, {{"n", 100000000}});
  std::set<std::uint64_t> distinct;
  for (const auto& e : trace) distinct.insert(e.uid);
  CHECK(r.misses == distinct.size());
  CHECK(r.cold_misses == distinct.size());
  CHECK(r.distinct_keys == distinct.size());
  CHECK(r.evictions == 0);
  CHECK(r.steady_miss_rate_excl_cold == 0.0);

  const auto tight = replay(trace, {{"n", 30000}});
  CHECK(tight.cold_misses == distinct.size());
  CHECK(tight.misses > tight.cold_misses);
  CHECK(tight.steady_miss_rate > 0.0);
}

TEST_CASE("interval series sum to the run totals") {
  const auto trace = generate_trace(small_spec());
  const auto r = replay(trace, {{"a", 20000}, {"b", 30000}}, {17.0, 0.25});
  IntervalStats sum;
  for (const auto& i : r.intervals) {
    sum.hits += i.hits;
    sum.misses += i.misses;
    sum.get_bytes += i.get_bytes;
    sum.set_bytes += i.set_bytes;
  }
  CHECK(sum.hits == r.hits);
  CHECK(sum.misses == r.misses);
  CHECK(sum.get_bytes == r.get_bytes);
  CHECK(sum.set_bytes == r.set_bytes);
  const auto csv = intervals_to_csv(r);
  CHECK(csv.rfind("interval_start,hits,misses,get_bytes,set_bytes\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(r.intervals.size() + 1));
}

TEST_CASE("miss-rate curve examples") {
  WorkloadSpec s;
  s.duration = 3000;
  const std::uint64_t mb = 1000000;
  const auto curve = miss_rate_curve(s, {16 * mb, 4 * mb, 8 * mb});
  REQUIRE(curve.size() == 3);
  CHECK(curve[0].capacity_bytes == 4 * mb);
  CHECK(curve[0].instances == 1.0);
  CHECK(curve[2].instances == 4.0);
  CHECK(curve[0].miss_rate > 0.0);
  CHECK(curve[1].miss_rate <= curve[0].miss_rate);
  CHECK(curve[2].miss_rate <= curve[1].miss_rate);
  // The sufficient capacities barely miss once warm.
  CHECK(curve[2].miss_rate_excl_cold == 0.0);
  CHECK(curve[0].miss_rate - curve[1].miss_rate >= curve[1].miss_rate - curve[2].miss_rate);

  const auto twins = miss_rate_curve(s, {5 * mb, 5 * mb});
  CHECK(twins[0].miss_rate == twins[1].miss_rate);
  CHECK_THROWS_AS(miss_rate_curve(s, {}), domain_error);
}

TEST_CASE("curve fitted with an exponential passes validation") {
  WorkloadSpec s;
  s.active_messages = 0;
  s.duration = 3000;
  const std::uint64_t mb = 1000000;
  const auto curve = miss_rate_curve(s, {4 * mb, 8 * mb, 16 * mb, 32 * mb});
  for (const auto& p : curve) CHECK(p.miss_rate > 0.0);
  const auto model = fit_miss_rate(to_observations(curve), FitVariant::Exponential);
  CHECK(validate_model(model).passed());
}

TEST_CASE("property: curves are non-increasing with diminishing returns") {
  std::mt19937_64 rng(71);
  for (int i = 0; i < 8; ++i) {
    WorkloadSpec s;
    s.num_messages = 2000;
    s.active_messages = static_cast<std::uint64_t>(oracle::uniform_int(rng, 50, 400));
    s.popularity = oracle::uniform(rng, 0.6, 1.4);
    s.duration = 1500;
    s.seed = rng();
    std::vector<std::uint64_t> caps;
    for (int k = 1; k <= 6; ++k) caps.push_back(static_cast<std::uint64_t>(k) * 1500000);
    const auto curve = miss_rate_curve(s, caps);
    const auto shape = check_curve_shape(curve, 0.02);
    CHECK(shape.non_increasing);
    CHECK(shape.diminishing_returns);
  }
}

TEST_CASE("curve shape checks flag violations") {
  std::vector<CurvePoint> up{{1, 1, 0.2, 0}, {2, 2, 0.3, 0}, {3, 3, 0.1, 0}};
  CHECK_FALSE(check_curve_shape(up, 0.02).non_increasing);
  std::vector<CurvePoint> concave{{1, 1, 0.9, 0}, {2, 2, 0.85, 0}, {3, 3, 0.1, 0}};
  CHECK_FALSE(check_curve_shape(concave, 0.02).diminishing_returns);
  std::vector<CurvePoint> fine{{1, 1, 0.5, 0}, {2, 2, 0.2, 0}, {4, 4, 0.05, 0}};
  CHECK(check_curve_shape(fine, 0.02).diminishing_returns);
}

TEST_CASE("more devices per account never lower the steady hit rate") {
  WorkloadSpec s;
  s.active_messages = 0;
  s.num_messages = 3000;
  s.arrival_rate = 2;
  s.duration = 6000;
  double prev = -1;
  for (std::uint64_t k : {1, 2, 4}) {
    s.devices_per_account = k;
    const auto r = replay(generate_trace(s), {{"n", 8000000}});
    CHECK(r.steady_hit_rate >= prev);
    prev = r.steady_hit_rate;
  }
}
