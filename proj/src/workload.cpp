#include "ecomail/workload.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "ecomail/errors.hpp"
#include "ecomail/json_util.hpp"

namespace ecomail {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Uniform in [0, 1) from the top 53 bits.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double exponential(std::mt19937_64& rng, double rate) { return -std::log1p(-uniform01(rng)) / rate; }

double standard_normal(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class ZipfSampler {
 public:
  ZipfSampler(std::uint64_t n, double s) : cdf_(n) {
    double sum = 0.0;
    for (std::uint64_t k = 0; k < n; ++k) {
      sum += std::pow(static_cast<double>(k + 1), -s);
      cdf_[k] = sum;
    }
    for (auto& c : cdf_) c /= sum;
  }
  // Rank in [0, n).
  std::uint64_t operator()(std::mt19937_64& rng) const {
    const double u = uniform01(rng);
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) --it;
    return static_cast<std::uint64_t>(it - cdf_.begin());
  }

 private:
  std::vector<double> cdf_;
};

std::string account_name(std::uint64_t i) { return "user" + std::to_string(i); }

const char* op_name(TraceOp op) { return op == TraceOp::Fetch ? "fetch" : "poll"; }

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

void WorkloadSpec::validate() const {
  if (num_messages == 0) throw domain_error("workload: num_messages must be > 0");
  if (!finite_positive(size_mean)) throw domain_error("workload: size_mean must be > 0");
  if (!(size_stddev >= 0.0) || !std::isfinite(size_stddev)) throw domain_error("workload: size_stddev must be >= 0");
  if (!finite_positive(size_floor)) throw domain_error("workload: size_floor must be > 0");
  if (size_floor > size_mean + 3.0 * size_stddev) {
    throw domain_error("workload: size_floor leaves almost no mass to sample");
  }
  if (!finite_positive(popularity)) throw domain_error("workload: popularity exponent must be > 0");
  if (!finite_positive(arrival_rate)) throw domain_error("workload: arrival_rate must be > 0");
  if (!finite_positive(duration)) throw domain_error("workload: duration must be > 0");
  if (accounts == 0) throw domain_error("workload: accounts must be > 0");
  if (devices_per_account == 0) throw domain_error("workload: devices_per_account must be > 0");
  if (!finite_positive(poll_delay)) throw domain_error("workload: poll_delay must be > 0");
}

void to_json(nlohmann::json& j, const WorkloadSpec& s) {
  j = {{"num_messages", s.num_messages},
       {"active_messages", s.active_messages},
       {"size_mean", s.size_mean},
       {"size_stddev", s.size_stddev},
       {"size_floor", s.size_floor},
       {"size_distribution", s.size_distribution == SizeDistribution::Gaussian ? "gaussian" : "uniform"},
       {"popularity", s.popularity},
       {"arrival_rate", s.arrival_rate},
       {"duration", s.duration},
       {"accounts", s.accounts},
       {"devices_per_account", s.devices_per_account},
       {"poll_delay", s.poll_delay},
       {"seed", s.seed}};
}

WorkloadSpec workload_spec_from_json(const nlohmann::json& j, WorkloadSpec s) {
  StrictObject o(j, "workload");
  s.num_messages = o.optional("num_messages", s.num_messages);
  s.active_messages = o.optional("active_messages", s.active_messages);
  s.size_mean = o.optional("size_mean", s.size_mean);
  s.size_stddev = o.optional("size_stddev", s.size_stddev);
  s.size_floor = o.optional("size_floor", s.size_floor);
  const auto dist = o.optional<std::string>("size_distribution", s.size_distribution == SizeDistribution::Gaussian
                                                                     ? "gaussian"
                                                                     : "uniform");
  if (dist == "gaussian") {
    s.size_distribution = SizeDistribution::Gaussian;
  } else if (dist == "uniform") {
    s.size_distribution = SizeDistribution::Uniform;
  } else {
    throw config_error("workload.size_distribution: expected 'gaussian' or 'uniform'");
  }
  s.popularity = o.optional("popularity", s.popularity);
  s.arrival_rate = o.optional("arrival_rate", s.arrival_rate);
  s.duration = o.optional("duration", s.duration);
  s.accounts = o.optional("accounts", s.accounts);
  s.devices_per_account = o.optional("devices_per_account", s.devices_per_account);
  s.poll_delay = o.optional("poll_delay", s.poll_delay);
  s.seed = o.optional("seed", s.seed);
  o.finish();
  try {
    s.validate();
  } catch (const domain_error& e) {
    throw config_error(e.what());
  }
  return s;
}

std::vector<std::uint64_t> message_sizes(const WorkloadSpec& spec, std::uint64_t account_index) {
  std::mt19937_64 rng(mix(spec.seed ^ mix(account_index + 1)));
  std::vector<std::uint64_t> sizes(spec.num_messages);
  const double half_width = std::sqrt(3.0) * spec.size_stddev;
  for (auto& sz : sizes) {
    double v;
    do {
      v = spec.size_distribution == SizeDistribution::Gaussian
              ? spec.size_mean + spec.size_stddev * standard_normal(rng)
              : spec.size_mean - half_width + 2.0 * half_width * uniform01(rng);
    } while (v < spec.size_floor);
    sz = static_cast<std::uint64_t>(std::llround(v));
  }
  return sizes;
}

std::vector<TraceEvent> generate_trace(const WorkloadSpec& spec) {
  spec.validate();
  const std::uint64_t hot = spec.hot_set();
  std::vector<std::vector<std::uint64_t>> sizes;
  for (std::uint64_t a = 0; a < spec.accounts; ++a) sizes.push_back(message_sizes(spec, a));
  const ZipfSampler zipf(hot, spec.popularity);
  std::mt19937_64 rng(mix(spec.seed));

  std::vector<TraceEvent> events;
  events.reserve(static_cast<std::size_t>(spec.arrival_rate * spec.duration * spec.devices_per_account * 1.1) + 16);
  double t = 0.0;
  for (;;) {
    t += exponential(rng, spec.arrival_rate);
    if (t > spec.duration) break;
    const std::uint64_t a =
        spec.accounts == 1 ? 0 : std::min(spec.accounts - 1, static_cast<std::uint64_t>(uniform01(rng) * spec.accounts));
    // Rank 0 is the newest message; popularity decays with age.
    const std::uint64_t uid = spec.num_messages - zipf(rng);
    const std::uint64_t size = sizes[a][uid - 1];
    events.push_back({t, account_name(a), "INBOX", uid, TraceOp::Fetch, size});
    for (std::uint64_t d = 1; d < spec.devices_per_account; ++d) {
      const double tp = t + exponential(rng, 1.0 / spec.poll_delay);
      if (tp <= spec.duration) events.push_back({tp, account_name(a), "INBOX", uid, TraceOp::Poll, size});
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const TraceEvent& x, const TraceEvent& y) { return x.timestamp < y.timestamp; });
  return events;
}

std::string trace_to_csv(const std::vector<TraceEvent>& trace) {
  std::string out = "timestamp,account,mailbox,uid,op,size\n";
  char ts[40];
  for (const auto& e : trace) {
    std::snprintf(ts, sizeof ts, "%.17g", e.timestamp);
    out += ts;
    out += ',' + e.account + ',' + e.mailbox + ',' + std::to_string(e.uid) + ',' + op_name(e.op) + ',' +
           std::to_string(e.size) + '\n';
  }
  return out;
}

std::vector<TraceEvent> trace_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || (line != "timestamp,account,mailbox,uid,op,size" &&
                                  line != "timestamp,account,mailbox,uid,op,size\r")) {
    throw ingest_error("trace: expected header timestamp,account,mailbox,uid,op,size");
  }
  std::vector<TraceEvent> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    const std::string where = "trace line " + std::to_string(lineno);
    if (cols.size() != 6) throw ingest_error(where + ": expected 6 columns");
    TraceEvent e;
    try {
      std::size_t used = 0;
      e.timestamp = std::stod(cols[0], &used);
      if (used != cols[0].size()) throw std::invalid_argument("timestamp");
      e.uid = std::stoull(cols[3], &used);
      if (used != cols[3].size()) throw std::invalid_argument("uid");
      e.size = std::stoull(cols[5], &used);
      if (used != cols[5].size()) throw std::invalid_argument("size");
    } catch (const std::exception&) {
      throw ingest_error(where + ": bad number");
    }
    e.account = cols[1];
    e.mailbox = cols[2];
    if (cols[4] == "fetch") {
      e.op = TraceOp::Fetch;
    } else if (cols[4] == "poll") {
      e.op = TraceOp::Poll;
    } else {
      throw ingest_error(where + ": op must be fetch or poll");
    }
    if (!out.empty() && e.timestamp < out.back().timestamp) throw ingest_error(where + ": timestamps decrease");
    out.push_back(std::move(e));
  }
  return out;
}

SimReport replay(const std::vector<TraceEvent>& trace, const std::vector<NodeConfig>& nodes,
                 const ReplayOptions& options, int virtual_points) {
  if (trace.empty()) throw domain_error("replay: empty trace");
  if (!(options.interval_seconds > 0.0)) throw domain_error("replay: interval_seconds must be > 0");
  if (!(options.steady_fraction > 0.0 && options.steady_fraction <= 1.0)) {
    throw domain_error("replay: steady_fraction must lie in (0, 1]");
  }
  CacheTier tier(nodes, virtual_points);
  SimReport r;
  r.capacity_bytes = tier.total_capacity();
  r.events = trace.size();

  const std::size_t steady_start =
      trace.size() - static_cast<std::size_t>(std::ceil(static_cast<double>(trace.size()) * options.steady_fraction));
  std::unordered_set<std::string> seen;
  std::unordered_map<std::uint64_t, Payload> payloads;  // by size; content is irrelevant

  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& e = trace[i];
    const CacheKey key{e.account, e.mailbox, e.uid, "BODY[]"};
    const auto idx = static_cast<std::size_t>(e.timestamp / options.interval_seconds);
    if (r.intervals.size() <= idx) {
      const std::size_t from = r.intervals.size();
      r.intervals.resize(idx + 1);
      for (std::size_t k = from; k <= idx; ++k) r.intervals[k].start = static_cast<double>(k) * options.interval_seconds;
    }
    auto& iv = r.intervals[idx];
    const bool steady = i >= steady_start;
    if (steady) ++r.steady_events;

    if (auto hit = tier.get(key)) {
      ++r.hits;
      ++iv.hits;
      r.get_bytes += (*hit)->size();
      iv.get_bytes += (*hit)->size();
      continue;
    }
    ++r.misses;
    ++iv.misses;
    const bool cold = seen.insert(key.canonical()).second;
    if (cold) {
      ++r.cold_misses;
      r.footprint_bytes += e.size;
    }
    if (steady) {
      ++r.steady_misses;
      if (cold) ++r.steady_cold_misses;
    }
    auto& p = payloads[e.size];
    if (!p) p = make_payload(std::string(e.size, 'm'));
    const auto outcome = tier.set(key, p);
    if (outcome.stored) {
      r.set_bytes += e.size;
      iv.set_bytes += e.size;
    }
    r.evictions += outcome.evicted.size();
  }
  r.distinct_keys = seen.size();
  r.used_bytes = tier.used_bytes();
  r.miss_rate = static_cast<double>(r.misses) / static_cast<double>(r.events);
  if (r.steady_events > 0) {
    const auto n = static_cast<double>(r.steady_events);
    r.steady_miss_rate = static_cast<double>(r.steady_misses) / n;
    r.steady_hit_rate = 1.0 - r.steady_miss_rate;
    const double warm = n - static_cast<double>(r.steady_cold_misses);
    r.steady_miss_rate_excl_cold =
        warm > 0 ? static_cast<double>(r.steady_misses - r.steady_cold_misses) / warm : 0.0;
  }
  return r;
}

void to_json(nlohmann::json& j, const IntervalStats& s) {
  j = {{"start", s.start},
       {"hits", s.hits},
       {"misses", s.misses},
       {"get_bytes", s.get_bytes},
       {"set_bytes", s.set_bytes}};
}

void to_json(nlohmann::json& j, const SimReport& r) {
  j = {{"events", r.events},
       {"hits", r.hits},
       {"misses", r.misses},
       {"cold_misses", r.cold_misses},
       {"get_bytes", r.get_bytes},
       {"set_bytes", r.set_bytes},
       {"evictions", r.evictions},
       {"distinct_keys", r.distinct_keys},
       {"footprint_bytes", r.footprint_bytes},
       {"capacity_bytes", r.capacity_bytes},
       {"used_bytes", r.used_bytes},
       {"miss_rate", r.miss_rate},
       {"steady_events", r.steady_events},
       {"steady_misses", r.steady_misses},
       {"steady_cold_misses", r.steady_cold_misses},
       {"steady_miss_rate", r.steady_miss_rate},
       {"steady_miss_rate_excl_cold", r.steady_miss_rate_excl_cold},
       {"steady_hit_rate", r.steady_hit_rate},
       {"intervals", r.intervals}};
}

std::string intervals_to_csv(const SimReport& r) {
  std::string out = "interval_start,hits,misses,get_bytes,set_bytes\n";
  char buf[160];
  for (const auto& iv : r.intervals) {
    std::snprintf(buf, sizeof buf, "%.6g,%llu,%llu,%llu,%llu\n", iv.start, static_cast<unsigned long long>(iv.hits),
                  static_cast<unsigned long long>(iv.misses), static_cast<unsigned long long>(iv.get_bytes),
                  static_cast<unsigned long long>(iv.set_bytes));
    out += buf;
  }
  return out;
}

std::vector<CurvePoint> miss_rate_curve(const WorkloadSpec& spec, std::vector<std::uint64_t> capacities,
                                        std::uint64_t shard_bytes, const ReplayOptions& options) {
  return miss_rate_curve(generate_trace(spec), std::move(capacities), shard_bytes, options);
}

std::vector<CurvePoint> miss_rate_curve(const std::vector<TraceEvent>& trace, std::vector<std::uint64_t> capacities,
                                        std::uint64_t shard_bytes, const ReplayOptions& options) {
  if (capacities.empty()) throw domain_error("miss_rate_curve: no capacities");
  std::sort(capacities.begin(), capacities.end());
  if (capacities.front() == 0) throw domain_error("miss_rate_curve: capacity must be > 0");
  if (shard_bytes == 0) shard_bytes = capacities.front();
  std::vector<CurvePoint> out;
  for (auto cap : capacities) {
    const auto r = replay(trace, {{"shard", cap}}, options);
    out.push_back({cap, static_cast<double>(cap) / static_cast<double>(shard_bytes), r.steady_miss_rate,
                   r.steady_miss_rate_excl_cold});
  }
  return out;
}

std::vector<MissRatePoint> to_observations(const std::vector<CurvePoint>& curve) {
  std::vector<MissRatePoint> out;
  for (const auto& c : curve) out.push_back({c.instances, c.miss_rate});
  return out;
}

CurveShape check_curve_shape(const std::vector<CurvePoint>& curve, double slack) {
  CurveShape s;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].miss_rate > curve[i - 1].miss_rate) s.non_increasing = false;
  }
  for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
    const double x0 = curve[i - 1].instances, x1 = curve[i].instances, x2 = curve[i + 1].instances;
    if (x1 == x0 || x2 == x1) continue;
    const double d1 = (curve[i].miss_rate - curve[i - 1].miss_rate) / (x1 - x0);
    const double d2 = (curve[i + 1].miss_rate - curve[i].miss_rate) / (x2 - x1);
    const double sd = (d2 - d1) * (x2 - x0) / 2.0;
    s.worst_second_difference = std::min(s.worst_second_difference, sd);
    if (sd < -slack) s.diminishing_returns = false;
  }
  return s;
}

}  // namespace ecomail
