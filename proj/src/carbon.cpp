#include "ecomail/carbon.hpp"

#include <arpa/inet.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ecomail/errors.hpp"
#include "ecomail/json_util.hpp"

namespace ecomail {

namespace {

bool positive(double v) { return std::isfinite(v) && v > 0.0; }

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool valid_ip(const std::string& s) {
  unsigned char buf[sizeof(in6_addr)];
  return inet_pton(AF_INET, s.c_str(), buf) == 1 || inet_pton(AF_INET6, s.c_str(), buf) == 1;
}

std::int64_t now_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

void ServerProfile::validate() const {
  if (!positive(users_served)) throw domain_error("users_served must be > 0");
  if (!positive(annual_energy_per_user)) throw domain_error("annual_energy_per_user must be > 0");
  if (!positive(annual_carbon_per_user)) throw domain_error("annual_carbon_per_user must be > 0");
}

EnergyAmount link_energy(double bytes, EnergyIntensity intensity) {
  if (!(bytes >= 0.0)) throw domain_error("byte count must be non-negative");
  if (!positive(intensity.kwh_per_gb)) throw domain_error("kwh_per_gb must be > 0");
  return {bytes / kBytesPerGb * intensity.kwh_per_gb};
}

EnergyAmount server_energy_per_request(const ServerProfile& profile, double requests_per_user_per_year) {
  profile.validate();
  if (!positive(requests_per_user_per_year)) throw domain_error("requests_per_user_per_year must be > 0");
  return {profile.annual_energy_per_user / requests_per_user_per_year};
}

std::optional<double> RegionTable::lookup(const std::string& region) const {
  auto it = regions.find(region);
  if (it == regions.end()) return std::nullopt;
  return it->second;
}

RegionTable region_table_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ingest_error("region table: expected a JSON object");
  RegionTable t;
  bool have_default = false;
  for (const auto& [region, v] : j.items()) {
    if (!v.is_number()) throw ingest_error("region table: '" + region + "' is not a number");
    const double kg = v.get<double>();
    if (!(kg >= 0.0) || !std::isfinite(kg)) throw ingest_error("region table: '" + region + "' must be >= 0");
    if (region == "default") {
      t.default_intensity = kg;
      have_default = true;
    } else {
      t.regions[region] = kg;
    }
  }
  if (!have_default) throw ingest_error("region table: missing 'default'");
  return t;
}

RegionTable load_region_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ingest_error("cannot open region table " + path);
  try {
    return region_table_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ingest_error("region table " + path + ": " + e.what());
  }
}

double route_carbon(const std::vector<RouteHop>& route, EnergyAmount route_energy) {
  if (!(route_energy.kwh >= 0.0)) throw domain_error("route energy must be non-negative");
  if (route.empty()) return 0.0;
  const double share_mwh = route_energy.mwh() / static_cast<double>(route.size());
  double kg = 0.0;
  for (const auto& hop : route) kg += share_mwh * hop.carbon_intensity;
  return kg;
}

std::vector<RouteHop> parse_route_csv(const std::string& text, const RegionTable& table) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool header = false;
  std::vector<RouteHop> hops;
  std::set<int> seen;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(trim(col));
    if (!line.empty() && line.back() == ',') cols.emplace_back();
    const std::string where = "route line " + std::to_string(lineno);
    if (!header) {
      if (cols != std::vector<std::string>{"hop_index", "ip", "region"}) {
        throw ingest_error(where + ": expected header hop_index,ip,region");
      }
      header = true;
      continue;
    }
    if (cols.size() != 3) throw ingest_error(where + ": expected 3 columns");
    RouteHop hop;
    std::size_t used = 0;
    try {
      hop.hop_index = std::stoi(cols[0], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != cols[0].size() || hop.hop_index < 0) {
      throw ingest_error(where + ": bad hop_index '" + cols[0] + "'");
    }
    if (!seen.insert(hop.hop_index).second) {
      throw ingest_error(where + ": duplicate hop_index " + cols[0]);
    }
    if (!valid_ip(cols[1])) throw ingest_error(where + ": bad ip '" + cols[1] + "'");
    if (cols[2].empty()) throw ingest_error(where + ": empty region");
    hop.address = cols[1];
    hop.region = cols[2];
    if (auto kg = table.lookup(hop.region)) {
      hop.carbon_intensity = *kg;
    } else {
      hop.carbon_intensity = table.default_intensity;
      hop.unknown_region = true;
    }
    hops.push_back(std::move(hop));
  }
  if (!header) throw ingest_error("route file is empty");
  std::sort(hops.begin(), hops.end(), [](const auto& a, const auto& b) { return a.hop_index < b.hop_index; });
  return hops;
}

std::vector<RouteHop> ingest_route_file(const std::string& path, const RegionTable& table) {
  std::ifstream in(path);
  if (!in) throw ingest_error("cannot open route file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_route_csv(ss.str(), table);
}

std::string export_route_csv(const std::vector<RouteHop>& route) {
  std::string out = "hop_index,ip,region\n";
  for (const auto& h : route) {
    out += std::to_string(h.hop_index) + "," + h.address + "," + h.region + "\n";
  }
  return out;
}

void to_json(nlohmann::json& j, const EmissionSnapshot& s) {
  j = {{"link_energy_kwh", s.link_energy_kwh},
       {"server_energy_kwh", s.server_energy_kwh},
       {"offset_credit_kwh", s.offset_credit_kwh},
       {"uncovered_energy_kwh", s.uncovered_energy_kwh},
       {"total_carbon_kg", s.total_carbon_kg},
       {"rec_cost_usd", s.rec_cost_usd},
       {"first_update", s.first_update},
       {"last_update", s.last_update}};
}

void EmissionLedger::accumulate(EnergyAmount link, EnergyAmount server, double carbon_kg) {
  if (!(link.kwh >= 0.0) || !(server.kwh >= 0.0) || !(carbon_kg >= 0.0)) {
    throw domain_error("emission increments must be non-negative");
  }
  const auto now = now_seconds();
  std::lock_guard lock(mu_);
  s_.link_energy_kwh += link.kwh;
  s_.server_energy_kwh += server.kwh;
  s_.total_carbon_kg += carbon_kg;
  s_.offset_credit_kwh = credit_;
  s_.uncovered_energy_kwh = std::max(0.0, s_.link_energy_kwh + s_.server_energy_kwh - credit_);
  s_.rec_cost_usd = rec_price_ * s_.uncovered_energy_kwh;
  if (s_.first_update == 0) s_.first_update = now;
  s_.last_update = now;
}

EmissionSnapshot EmissionLedger::snapshot() const {
  std::lock_guard lock(mu_);
  EmissionSnapshot s = s_;
  s.offset_credit_kwh = credit_;
  return s;
}

std::uint64_t link_bytes(const TrafficSnapshot& t) {
  return t.bytes_to_upstream + t.bytes_from_upstream + t.hit_bytes + t.miss_bytes;
}

EmissionSnapshot offset_requirement(const OffsetInputs& in) {
  in.profile.validate();
  in.cost.validate();
  if (in.instances < 1) throw domain_error("instances must be >= 1");
  const EnergyAmount link =
      in.ignore_link_energy ? EnergyAmount{} : link_energy(static_cast<double>(link_bytes(in.traffic)), in.intensity);
  const EnergyAmount per_request = server_energy_per_request(in.profile, in.requests_per_user_per_year);
  const EnergyAmount server = per_request * static_cast<double>(in.traffic.misses);
  const double credit = static_cast<double>(in.instances) * in.cost.surplus_per_instance();

  EmissionLedger ledger(in.cost.rec_price, credit);
  const double carbon = server.kwh * in.profile.carbon_per_kwh() + link.mwh() * in.link_carbon_intensity;
  ledger.accumulate(link, server, carbon);
  // A pure function of its inputs: no wall-clock stamps.
  EmissionSnapshot out = ledger.snapshot();
  out.first_update = out.last_update = 0;
  return out;
}

void TrafficAssumptions::validate() const {
  if (!(users >= 0) || !(emails_per_user_per_day >= 0) || !(email_bytes >= 0) || !(days >= 0)) {
    throw domain_error("traffic assumptions must be non-negative");
  }
  if (!(miss_rate >= 0.0 && miss_rate <= 1.0)) throw domain_error("miss_rate must lie in [0, 1]");
}

TrafficSnapshot TrafficAssumptions::to_traffic() const {
  validate();
  TrafficSnapshot t;
  const auto n = static_cast<std::uint64_t>(std::llround(requests()));
  t.bytes_from_upstream = static_cast<std::uint64_t>(std::llround(bytes()));
  t.requests_to_upstream = n;
  t.misses = static_cast<std::uint64_t>(std::llround(requests() * miss_rate));
  t.hits = n - std::min(n, t.misses);
  return t;
}

TrafficAssumptions traffic_assumptions_from_json(const nlohmann::json& j) {
  StrictObject o(j, "assumptions");
  TrafficAssumptions a;
  a.users = o.optional("users", a.users);
  a.emails_per_user_per_day = o.optional("emails_per_user_per_day", a.emails_per_user_per_day);
  a.email_bytes = o.optional("email_bytes", a.email_bytes);
  a.days = o.optional("days", a.days);
  a.miss_rate = o.optional("miss_rate", a.miss_rate);
  o.finish();
  try {
    a.validate();
  } catch (const domain_error& e) {
    throw config_error(std::string("assumptions: ") + e.what());
  }
  return a;
}

}  // namespace ecomail
