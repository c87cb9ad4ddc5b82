#pragma once

// Single JSON configuration document. Every section is optional and falls
// back to defaults; unknown keys anywhere are rejected.
//
// Units: bytes for sizes and capacities, milliseconds for timeouts, seconds
// for simulation time, kWh/GB for link intensity, kg CO2/MWh for carbon
// intensity. Cost fields follow cost_model.hpp.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ecomail/cache.hpp"
#include "ecomail/carbon.hpp"
#include "ecomail/cost_model.hpp"
#include "ecomail/miss_rate.hpp"
#include "ecomail/proxy.hpp"
#include "ecomail/workload.hpp"

namespace ecomail {

std::string default_region_table_path();

struct ProxySection {
  ProxyConfig proxy;
  double snapshot_interval_seconds = 10.0;
  std::string ledger_path = "ledger.json";
};

struct CacheSection {
  std::vector<NodeConfig> nodes{{"node0", 64ull * 1000 * 1000}};
  int virtual_points = kDefaultVirtualPoints;
  std::string hash = kDefaultHash;
};

struct CarbonSection {
  EnergyIntensity intensity;
  std::string region_table = default_region_table_path();
  bool ignore_link_energy = true;
  ServerProfile profile;
  double requests_per_user_per_year = 18250;
};

struct SimulationSection {
  std::vector<std::uint64_t> capacities{4000000, 8000000, 16000000};
  std::uint64_t shard_bytes = 0;  // 0: smallest capacity
  double interval_seconds = 60.0;
  double steady_fraction = 1.0 / 3.0;
};

struct Config {
  ProxySection proxy;
  CacheSection cache;
  CarbonSection carbon;
  std::optional<CostParams> cost;
  std::optional<MissRateModel> model;
  WorkloadSpec workload;
  SimulationSection simulation;
};

// Relative file paths inside the document resolve against base_dir.
Config config_from_json(const nlohmann::json& j, const std::string& base_dir = "");
Config load_config(const std::string& path);

}  // namespace ecomail
