#include "ecomail/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "ecomail/errors.hpp"
#include "ecomail/json_util.hpp"

#ifndef ECOMAIL_DATA_DIR
#define ECOMAIL_DATA_DIR "data"
#endif

namespace ecomail {

namespace {

std::string resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

std::chrono::milliseconds millis(StrictObject& o, const std::string& key, std::chrono::milliseconds fallback) {
  const auto v = o.optional<std::int64_t>(key, fallback.count());
  if (v <= 0) throw config_error(o.path(key) + ": must be > 0");
  return std::chrono::milliseconds(v);
}

ProxySection parse_proxy(const nlohmann::json& j, const std::string& base_dir) {
  ProxySection s;
  StrictObject o(j, "proxy");
  s.proxy.listen_host = o.optional("listen_host", s.proxy.listen_host);
  const auto port = o.optional<int>("listen_port", s.proxy.listen_port);
  if (port < 0 || port > 65535) throw config_error("proxy.listen_port: out of range");
  s.proxy.listen_port = static_cast<std::uint16_t>(port);
  if (o.has("upstream")) s.proxy.upstream = parse_endpoint(o.required<std::string>("upstream"));
  if (o.has("domain_upstreams")) {
    const auto& m = o.sub("domain_upstreams");
    if (!m.is_object()) throw config_error("proxy.domain_upstreams: expected an object");
    for (const auto& [domain, ep] : m.items()) {
      if (!ep.is_string()) throw config_error("proxy.domain_upstreams." + domain + ": expected \"host:port\"");
      s.proxy.domain_upstreams[domain] = parse_endpoint(ep.get<std::string>());
    }
  }
  s.proxy.upstream_timeout = millis(o, "upstream_timeout_ms", s.proxy.upstream_timeout);
  s.proxy.client_idle_timeout = millis(o, "client_idle_timeout_ms", s.proxy.client_idle_timeout);
  s.snapshot_interval_seconds = o.optional("snapshot_interval_seconds", s.snapshot_interval_seconds);
  if (!(s.snapshot_interval_seconds > 0)) throw config_error("proxy.snapshot_interval_seconds: must be > 0");
  s.ledger_path = resolve(o.optional("ledger_path", s.ledger_path), base_dir);
  o.finish();
  return s;
}

CacheSection parse_cache(const nlohmann::json& j) {
  CacheSection s;
  StrictObject o(j, "cache");
  if (o.has("nodes")) {
    const auto& arr = o.sub("nodes");
    if (!arr.is_array() || arr.empty()) throw config_error("cache.nodes: expected a non-empty array");
    s.nodes.clear();
    std::set<std::string> ids;
    for (const auto& n : arr) {
      StrictObject no(n, "cache.nodes[]");
      NodeConfig nc{no.required<std::string>("id"), no.required<std::uint64_t>("capacity_bytes")};
      no.finish();
      if (nc.id.empty()) throw config_error("cache.nodes[]: empty id");
      if (nc.capacity_bytes == 0) throw config_error("cache.nodes[" + nc.id + "]: capacity_bytes must be > 0");
      if (!ids.insert(nc.id).second) throw config_error("cache.nodes: duplicate id '" + nc.id + "'");
      s.nodes.push_back(nc);
    }
  }
  s.virtual_points = o.optional("virtual_points", s.virtual_points);
  if (s.virtual_points < 1) throw config_error("cache.virtual_points: must be >= 1");
  s.hash = o.optional("hash", s.hash);
  if (s.hash != kDefaultHash) throw config_error("cache.hash: only '" + std::string(kDefaultHash) + "' is supported");
  o.finish();
  return s;
}

CarbonSection parse_carbon(const nlohmann::json& j, const std::string& base_dir) {
  CarbonSection s;
  StrictObject o(j, "carbon");
  s.intensity.kwh_per_gb = o.optional("kwh_per_gb", s.intensity.kwh_per_gb);
  if (!(s.intensity.kwh_per_gb > 0)) throw config_error("carbon.kwh_per_gb: must be > 0");
  if (o.has("region_table")) s.region_table = resolve(o.required<std::string>("region_table"), base_dir);
  s.ignore_link_energy = o.optional("ignore_link_energy", s.ignore_link_energy);
  s.requests_per_user_per_year = o.optional("requests_per_user_per_year", s.requests_per_user_per_year);
  if (!(s.requests_per_user_per_year > 0)) throw config_error("carbon.requests_per_user_per_year: must be > 0");
  if (o.has("server_profile")) {
    StrictObject p(o.sub("server_profile"), "carbon.server_profile");
    s.profile.users_served = p.optional("users_served", s.profile.users_served);
    s.profile.annual_energy_per_user = p.optional("annual_energy_per_user", s.profile.annual_energy_per_user);
    s.profile.annual_carbon_per_user = p.optional("annual_carbon_per_user", s.profile.annual_carbon_per_user);
    p.finish();
    try {
      s.profile.validate();
    } catch (const domain_error& e) {
      throw config_error(std::string("carbon.server_profile: ") + e.what());
    }
  }
  o.finish();
  return s;
}

SimulationSection parse_simulation(const nlohmann::json& j) {
  SimulationSection s;
  StrictObject o(j, "simulation");
  s.capacities = o.optional("capacities", s.capacities);
  if (s.capacities.empty()) throw config_error("simulation.capacities: must not be empty");
  for (auto c : s.capacities) {
    if (c == 0) throw config_error("simulation.capacities: capacity must be > 0");
  }
  s.shard_bytes = o.optional("shard_bytes", s.shard_bytes);
  s.interval_seconds = o.optional("interval_seconds", s.interval_seconds);
  if (!(s.interval_seconds > 0)) throw config_error("simulation.interval_seconds: must be > 0");
  s.steady_fraction = o.optional("steady_fraction", s.steady_fraction);
  if (!(s.steady_fraction > 0 && s.steady_fraction <= 1)) {
    throw config_error("simulation.steady_fraction: must lie in (0, 1]");
  }
  o.finish();
  return s;
}

}  // namespace

std::string default_region_table_path() { return std::string(ECOMAIL_DATA_DIR) + "/region_intensity.json"; }

Config config_from_json(const nlohmann::json& j, const std::string& base_dir) {
  Config c;
  StrictObject o(j, "config");
  if (o.has("proxy")) c.proxy = parse_proxy(o.sub("proxy"), base_dir);
  if (o.has("cache")) c.cache = parse_cache(o.sub("cache"));
  if (o.has("carbon")) c.carbon = parse_carbon(o.sub("carbon"), base_dir);
  if (o.has("cost")) c.cost = o.sub("cost").get<CostParams>();
  if (o.has("model")) {
    try {
      c.model = miss_rate_model_from_json(o.sub("model"));
    } catch (const domain_error& e) {
      throw config_error(std::string("model: ") + e.what());
    }
  }
  if (o.has("workload")) c.workload = workload_spec_from_json(o.sub("workload"));
  if (o.has("simulation")) c.simulation = parse_simulation(o.sub("simulation"));
  o.finish();
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw config_error(path + ": " + e.what());
  }
  return config_from_json(j, std::filesystem::path(path).parent_path().string());
}

}  // namespace ecomail
