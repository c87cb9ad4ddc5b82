#include "ecomail/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ecomail/errors.hpp"
#include "ecomail/json_util.hpp"

namespace ecomail {

namespace {

void require_non_negative(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw domain_error(std::string("cost parameter '") + name + "' must be finite and >= 0");
  }
}

void require_miss_rate(double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw domain_error("miss rate must lie in [0, 1]");
}

void require_instances(std::int64_t n) {
  if (n < 1) throw domain_error("instance count must be >= 1");
}

}  // namespace

void CostParams::validate() const {
  require_non_negative(arrival_rate, "lambda_");
  require_non_negative(period_hours, "T");
  require_non_negative(service_rate, "beta");
  require_non_negative(client_link_energy, "u");
  require_non_negative(upstream_link_energy, "G");
  require_non_negative(upstream_server_energy, "H");
  require_non_negative(rec_price, "c0");
  require_non_negative(instance_price, "cv");
  require_non_negative(instance_energy, "Ev");
  require_non_negative(host_offset_ratio, "r");
  require_non_negative(target_offset_ratio, "rT");
  if (period_hours <= 0.0) throw domain_error("cost parameter 'T' must be > 0");
  if (service_rate <= 0.0) throw domain_error("cost parameter 'beta' must be > 0");
  if (host_offset_ratio < target_offset_ratio) {
    throw domain_error("host offset ratio r must be >= target offset ratio rT");
  }
}

AggregateLoad AggregateLoad::from_params(const CostParams& p) {
  const double n = p.total_requests();
  return {n, {n * p.client_link_energy}, {n * p.upstream_link_energy}, {n * p.upstream_server_energy}};
}

double uncovered_energy(const CostParams& p, double instances, double miss_rate) {
  const double requests = p.total_requests();
  return requests * p.client_link_energy +
         requests * (p.upstream_link_energy + p.upstream_server_energy) * miss_rate -
         instances * p.surplus_per_instance();
}

MoneyAmount rec_cost(const CostParams& p, std::int64_t instances, double miss_rate) {
  p.validate();
  require_instances(instances);
  require_miss_rate(miss_rate);
  const double energy = uncovered_energy(p, static_cast<double>(instances), miss_rate);
  return {p.rec_price * std::max(0.0, energy)};
}

MoneyAmount instance_cost(const CostParams& p, std::int64_t instances) {
  p.validate();
  require_instances(instances);
  return {static_cast<double>(instances) * p.instance_price * p.period_hours};
}

MoneyAmount total_cost(const CostParams& p, std::int64_t instances, double miss_rate) {
  return rec_cost(p, instances, miss_rate) + instance_cost(p, instances);
}

double total_cost_continuous(const CostParams& p, double instances, double miss_rate) {
  return p.rec_price * std::max(0.0, uncovered_energy(p, instances, miss_rate)) +
         instances * p.instance_price * p.period_hours;
}

std::int64_t sla_min_instances(const CostParams& p) {
  if (!(p.service_rate > 0.0)) throw domain_error("beta must be > 0 for the SLA bound");
  if (!(p.arrival_rate >= 0.0)) throw domain_error("lambda_ must be >= 0");
  const double ratio = p.arrival_rate / p.service_rate;
  auto n = static_cast<std::int64_t>(std::ceil(ratio));
  // ceil of a ratio that is an exact integer in real arithmetic can land one
  // above after rounding; step back while the smaller count still suffices.
  while (n > 1 && p.service_rate * static_cast<double>(n - 1) >= p.arrival_rate) --n;
  while (p.service_rate * static_cast<double>(n) < p.arrival_rate) ++n;
  return std::max<std::int64_t>(1, n);
}

CostParams with_energies_roundtripped_through_joules(const CostParams& p) {
  auto rt = [](double kwh) { return EnergyAmount::from_joules(EnergyAmount{kwh}.joules()).kwh; };
  CostParams q = p;
  q.client_link_energy = rt(p.client_link_energy);
  q.upstream_link_energy = rt(p.upstream_link_energy);
  q.upstream_server_energy = rt(p.upstream_server_energy);
  q.instance_energy = rt(p.instance_energy);
  return q;
}

void to_json(nlohmann::json& j, const CostParams& p) {
  j = nlohmann::json{{"lambda_", p.arrival_rate},
                     {"T", p.period_hours},
                     {"beta", p.service_rate},
                     {"u", p.client_link_energy},
                     {"G", p.upstream_link_energy},
                     {"H", p.upstream_server_energy},
                     {"c0", p.rec_price},
                     {"cv", p.instance_price},
                     {"Ev", p.instance_energy},
                     {"r", p.host_offset_ratio},
                     {"rT", p.target_offset_ratio}};
}

void from_json(const nlohmann::json& j, CostParams& p) {
  StrictObject o(j, "cost");
  p.arrival_rate = o.required<double>("lambda_");
  p.period_hours = o.required<double>("T");
  p.service_rate = o.required<double>("beta");
  p.client_link_energy = o.required<double>("u");
  p.upstream_link_energy = o.required<double>("G");
  p.upstream_server_energy = o.required<double>("H");
  p.rec_price = o.required<double>("c0");
  p.instance_price = o.required<double>("cv");
  p.instance_energy = o.required<double>("Ev");
  p.host_offset_ratio = o.required<double>("r");
  p.target_offset_ratio = o.required<double>("rT");
  o.finish();
  try {
    p.validate();
  } catch (const domain_error& e) {
    throw config_error(std::string("cost: ") + e.what());
  }
}

}  // namespace ecomail
