#pragma once

// Energy and carbon outside the proxy: link transmission, upstream server
// consumption and route-weighted regional carbon intensity. Produces the u,
// G and H inputs of the cost model and the offset a deployment must buy.

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ecomail/cost_model.hpp"
#include "ecomail/traffic_ledger.hpp"
#include "ecomail/units.hpp"

namespace ecomail {

struct ServerProfile {
  double users_served = 500;
  double annual_energy_per_user = 28.4;  // kWh / user / year
  double annual_carbon_per_user = 16.7;  // kg CO2 / user / year

  void validate() const;
  EnergyAmount aggregate_annual_energy() const { return {users_served * annual_energy_per_user}; }
  // kg CO2 per kWh of server energy.
  double carbon_per_kwh() const { return annual_carbon_per_user / annual_energy_per_user; }
};

struct EnergyIntensity {
  double kwh_per_gb = 24.3;
};

EnergyAmount link_energy(double bytes, EnergyIntensity intensity);

// H: server energy attributable to one request.
EnergyAmount server_energy_per_request(const ServerProfile& profile, double requests_per_user_per_year);

struct RouteHop {
  int hop_index = 0;
  std::string address;
  std::string region;
  double carbon_intensity = 0.0;  // kg CO2 / MWh
  bool unknown_region = false;    // intensity came from the table default

  friend bool operator==(const RouteHop&, const RouteHop&) = default;
};

// Region -> kg CO2 / MWh, plus the fallback for unlisted regions.
struct RegionTable {
  double default_intensity = 0.0;
  std::map<std::string, double> regions;

  std::optional<double> lookup(const std::string& region) const;
};

RegionTable region_table_from_json(const nlohmann::json& j);
RegionTable load_region_table(const std::string& path);

// Energy split equally across hops; kg CO2.
double route_carbon(const std::vector<RouteHop>& route, EnergyAmount route_energy);

// CSV with header hop_index,ip,region. Hops are returned in index order.
std::vector<RouteHop> parse_route_csv(const std::string& text, const RegionTable& table);
std::vector<RouteHop> ingest_route_file(const std::string& path, const RegionTable& table);
std::string export_route_csv(const std::vector<RouteHop>& route);

struct EmissionSnapshot {
  double link_energy_kwh = 0.0;
  double server_energy_kwh = 0.0;
  double offset_credit_kwh = 0.0;  // N * Ev * (r - rT), may be negative
  double uncovered_energy_kwh = 0.0;
  double total_carbon_kg = 0.0;
  double rec_cost_usd = 0.0;
  std::int64_t first_update = 0;  // unix seconds, 0 before any accumulation
  std::int64_t last_update = 0;
};

void to_json(nlohmann::json& j, const EmissionSnapshot& s);

// Running emission totals shared by proxy sessions.
class EmissionLedger {
 public:
  EmissionLedger(double rec_price, double offset_credit_kwh) : rec_price_(rec_price), credit_(offset_credit_kwh) {}

  // Negative inputs are rejected so every total stays monotone.
  void accumulate(EnergyAmount link, EnergyAmount server, double carbon_kg);
  EmissionSnapshot snapshot() const;

 private:
  mutable std::mutex mu_;
  double rec_price_;
  double credit_;
  EmissionSnapshot s_;
};

struct OffsetInputs {
  TrafficSnapshot traffic;
  ServerProfile profile;
  EnergyIntensity intensity;
  CostParams cost;
  std::int64_t instances = 1;
  double requests_per_user_per_year = 18250;
  bool ignore_link_energy = true;
  double link_carbon_intensity = 1030;  // kg CO2 / MWh applied to link energy
};

// Bytes that crossed a network link: both legs of every request.
std::uint64_t link_bytes(const TrafficSnapshot& t);

EmissionSnapshot offset_requirement(const OffsetInputs& in);

// Population-level traffic description, e.g. 500 users reading 50 mails of
// 0.1 MB per day for a year, turned into the upstream traffic it implies
// when every read goes to the mail server.
struct TrafficAssumptions {
  double users = 500;
  double emails_per_user_per_day = 50;
  double email_bytes = 100000;
  double days = 365;
  double miss_rate = 1.0;

  void validate() const;
  double requests() const { return users * emails_per_user_per_day * days; }
  double bytes() const { return requests() * email_bytes; }
  TrafficSnapshot to_traffic() const;
};

TrafficAssumptions traffic_assumptions_from_json(const nlohmann::json& j);

}  // namespace ecomail
