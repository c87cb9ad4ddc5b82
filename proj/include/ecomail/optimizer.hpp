#pragma once

// Instance-count optimizer: minimizes total operating cost over N subject to
// the SLA throughput bound.

#include <cstdint>
#include <string>

#include "json.hpp"

#include "ecomail/cost_model.hpp"
#include "ecomail/miss_rate.hpp"

namespace ecomail {

enum class BindingConstraint { CostMinimum, SlaBound };
std::string to_string(BindingConstraint b);

inline constexpr double kBracketMax = 1e6;
inline constexpr double kBisectionTolerance = 1e-9;

struct OptimizerResult {
  std::int64_t n_star = 1;
  BindingConstraint binding_constraint = BindingConstraint::SlaBound;
  double c1 = 0.0;  // lambda*T*(G+H)*c0
  double c2 = 0.0;  // cv*T - Ev*c0*(r - rT)
  MoneyAmount cost_at_n_star;
  MoneyAmount rec_cost_at_n_star;
  MoneyAmount instance_cost_at_n_star;
  double miss_rate_at_n_star = 0.0;
  // Real-valued minimizer before the SLA clamp and integer rounding.
  double continuous_optimum = 1.0;
  std::int64_t sla_min = 1;
  // The derivative never changed sign inside [1, kBracketMax].
  bool bracket_exhausted = false;
  // A non-convex table forced an exhaustive integer scan.
  bool grid_search = false;
};

// C1 * M'(N) + C2: derivative of the unclamped total cost with respect to N.
double cost_derivative(const CostParams& p, const MissRateModel& model, double instances);

double cost_coefficient_c1(const CostParams& p);
double cost_coefficient_c2(const CostParams& p);

// Throws domain_error if params are invalid or the model fails validation.
OptimizerResult solve_optimal_instances(const CostParams& p, const MissRateModel& model);

void to_json(nlohmann::json& j, const OptimizerResult& r);

}  // namespace ecomail
