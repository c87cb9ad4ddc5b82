#pragma once

// Synthetic email workloads: Poisson arrivals, Zipf popularity and
// truncated-Gaussian sizes, replayed against cache configurations to
// produce miss-rate-versus-capacity curves.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "ecomail/cache.hpp"
#include "ecomail/miss_rate.hpp"

namespace ecomail {

enum class SizeDistribution { Gaussian, Uniform };

struct WorkloadSpec {
  std::uint64_t num_messages = 10000;  // per account mailbox
  // Messages that ever receive requests (the hot set), drawn Zipf-ranked
  // from the mailbox. 0 means all of them.
  std::uint64_t active_messages = 150;
  double size_mean = 40000;   // bytes
  double size_stddev = 10000;  // bytes
  double size_floor = 1000;   // bytes, sizes below are redrawn
  SizeDistribution size_distribution = SizeDistribution::Gaussian;
  double popularity = 1.0;     // Zipf exponent s
  double arrival_rate = 10.0;  // primary fetches / second
  double duration = 10000.0;   // seconds
  std::uint64_t accounts = 1;
  std::uint64_t devices_per_account = 1;
  double poll_delay = 300.0;  // mean seconds until another device re-reads
  std::uint64_t seed = 42;

  void validate() const;
  std::uint64_t hot_set() const { return active_messages == 0 ? num_messages : std::min(active_messages, num_messages); }
};

void to_json(nlohmann::json& j, const WorkloadSpec& s);
// Strict: unknown keys are rejected, missing keys keep their defaults.
WorkloadSpec workload_spec_from_json(const nlohmann::json& j, WorkloadSpec base = {});

enum class TraceOp { Fetch, Poll };

struct TraceEvent {
  double timestamp = 0.0;  // seconds from trace start
  std::string account;
  std::string mailbox;
  std::uint64_t uid = 0;
  TraceOp op = TraceOp::Fetch;
  std::uint64_t size = 0;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

// Deterministic in (spec, spec.seed); portable RNG transforms, no
// std::*_distribution.
std::vector<TraceEvent> generate_trace(const WorkloadSpec& spec);

// Size in bytes of every message in one account's mailbox, index = uid - 1.
std::vector<std::uint64_t> message_sizes(const WorkloadSpec& spec, std::uint64_t account_index);

std::string trace_to_csv(const std::vector<TraceEvent>& trace);
std::vector<TraceEvent> trace_from_csv(const std::string& text);

struct IntervalStats {
  double start = 0.0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t get_bytes = 0;
  std::uint64_t set_bytes = 0;
};

struct SimReport {
  std::vector<IntervalStats> intervals;
  std::uint64_t events = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t cold_misses = 0;
  std::uint64_t get_bytes = 0;
  std::uint64_t set_bytes = 0;
  std::uint64_t evictions = 0;
  std::uint64_t distinct_keys = 0;
  std::uint64_t footprint_bytes = 0;  // sum of sizes of distinct keys
  std::uint64_t capacity_bytes = 0;
  std::uint64_t used_bytes = 0;  // at the end of the run
  double miss_rate = 0.0;
  // Over the trailing steady-state window.
  std::uint64_t steady_events = 0;
  std::uint64_t steady_misses = 0;
  std::uint64_t steady_cold_misses = 0;
  double steady_miss_rate = 0.0;
  double steady_miss_rate_excl_cold = 0.0;
  double steady_hit_rate = 0.0;
};

struct ReplayOptions {
  double interval_seconds = 60.0;
  double steady_fraction = 1.0 / 3.0;  // trailing share of events
};

SimReport replay(const std::vector<TraceEvent>& trace, const std::vector<NodeConfig>& nodes,
                 const ReplayOptions& options = {}, int virtual_points = kDefaultVirtualPoints);

void to_json(nlohmann::json& j, const IntervalStats& s);
void to_json(nlohmann::json& j, const SimReport& r);
std::string intervals_to_csv(const SimReport& r);

struct CurvePoint {
  std::uint64_t capacity_bytes = 0;
  double instances = 0.0;  // capacity / shard_bytes
  double miss_rate = 0.0;  // steady-state, cold misses included
  double miss_rate_excl_cold = 0.0;
};

// One trace, replayed once per capacity on a single shard of that size.
// shard_bytes = 0 uses the smallest capacity. Output sorted by capacity.
std::vector<CurvePoint> miss_rate_curve(const WorkloadSpec& spec, std::vector<std::uint64_t> capacities,
                                        std::uint64_t shard_bytes = 0, const ReplayOptions& options = {});
std::vector<CurvePoint> miss_rate_curve(const std::vector<TraceEvent>& trace, std::vector<std::uint64_t> capacities,
                                        std::uint64_t shard_bytes = 0, const ReplayOptions& options = {});

std::vector<MissRatePoint> to_observations(const std::vector<CurvePoint>& curve);

struct CurveShape {
  bool non_increasing = true;
  bool diminishing_returns = true;
  double worst_second_difference = 0.0;  // most negative, spacing-normalized
};

// Second differences are taken on slopes scaled by the local spacing, which
// is the plain second difference for evenly spaced capacities.
CurveShape check_curve_shape(const std::vector<CurvePoint>& curve, double slack);

}  // namespace ecomail
