#pragma once

// Operating-cost model of a green caching proxy.
//
// Total cost over a period T is the renewable-energy-credit (REC) bill for
// the energy the proxy cannot cover itself plus the instance rental:
//
//   rec      = c0 * max(0, lambda*T*u + lambda*T*(G+H)*M(N) - N*Ev*(r - rT))
//   instance = N * cv * T
//
// subject to the throughput constraint beta * N >= lambda.
//
// Units (fixed, never inferred):
//   time          hours
//   lambda, beta  requests / hour
//   u, G, H       kWh / request
//   Ev            kWh per instance over the whole period T
//   c0            USD / kWh
//   cv            USD / instance / hour
//   r, rT         dimensionless ratios (1.0 == 100%)

#include <cstdint>

#include "json.hpp"

#include "ecomail/units.hpp"

namespace ecomail {

struct CostParams {
  double arrival_rate = 0.0;            // lambda_
  double period_hours = 1.0;            // T
  double service_rate = 1.0;            // beta
  double client_link_energy = 0.0;      // u
  double upstream_link_energy = 0.0;    // G
  double upstream_server_energy = 0.0;  // H
  double rec_price = 0.0;               // c0
  double instance_price = 0.0;          // cv
  double instance_energy = 0.0;         // Ev
  double host_offset_ratio = 1.0;       // r
  double target_offset_ratio = 1.0;     // rT

  // Throws domain_error naming the first offending field.
  void validate() const;

  double total_requests() const { return arrival_rate * period_hours; }
  // Surplus renewable energy one instance contributes over T.
  double surplus_per_instance() const {
    return instance_energy * (host_offset_ratio - target_offset_ratio);
  }
};

// Period aggregates, in kWh.
struct AggregateLoad {
  double total_requests = 0.0;
  EnergyAmount client_link_energy;
  EnergyAmount upstream_link_energy;
  EnergyAmount upstream_server_energy;

  static AggregateLoad from_params(const CostParams& p);
};

// Energy (kWh) still to be covered by RECs, before flooring at zero.
// Real-valued N so that the optimizer and derivative checks can use it.
double uncovered_energy(const CostParams& p, double instances, double miss_rate);

MoneyAmount rec_cost(const CostParams& p, std::int64_t instances, double miss_rate);
MoneyAmount instance_cost(const CostParams& p, std::int64_t instances);
MoneyAmount total_cost(const CostParams& p, std::int64_t instances, double miss_rate);

// Real-N total cost with the REC term floored at zero (same as total_cost on
// integers).
double total_cost_continuous(const CostParams& p, double instances, double miss_rate);

// Smallest N >= 1 with beta * N >= lambda.
std::int64_t sla_min_instances(const CostParams& p);

// Energies converted to joules and back; used to check unit neutrality.
CostParams with_energies_roundtripped_through_joules(const CostParams& p);

void to_json(nlohmann::json& j, const CostParams& p);
void from_json(const nlohmann::json& j, CostParams& p);

}  // namespace ecomail
