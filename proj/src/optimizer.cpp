#include "ecomail/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ecomail/errors.hpp"

namespace ecomail {

namespace {

// Root of a function that is negative at lo and non-negative at hi.
template <typename F>
double bisect(F&& f, double lo, double hi) {
  while (hi - lo > kBisectionTolerance * std::max(1.0, lo)) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

double cost_at(const CostParams& p, const MissRateModel& m, std::int64_t n) {
  return total_cost(p, n, m.evaluate(static_cast<double>(n))).usd;
}

// Minimizer of the unclamped objective on [1, kBracketMax].
double unclamped_minimizer(const CostParams& p, const MissRateModel& model, bool& exhausted) {
  const double c1 = cost_coefficient_c1(p);
  const double c2 = cost_coefficient_c2(p);
  auto d = [&](double n) { return cost_derivative(p, model, n); };
  if (d(1.0) >= 0.0) return 1.0;
  if (d(kBracketMax) < 0.0) {
    exhausted = true;
    return kBracketMax;
  }
  if (const auto* e = std::get_if<ExponentialMissRate>(&model.variant())) {
    // -c1*k*m0*exp(-k N) + c2 = 0; d(1) < 0 < d(max) guarantees c2 > 0 and k*m0 > 0.
    const double n = std::log(c1 * e->k * e->m0 / c2) / e->k;
    return std::clamp(n, 1.0, kBracketMax);
  }
  return bisect(d, 1.0, kBracketMax);
}

}  // namespace

std::string to_string(BindingConstraint b) {
  return b == BindingConstraint::CostMinimum ? "CostMinimum" : "SlaBound";
}

double cost_coefficient_c1(const CostParams& p) {
  return p.total_requests() * (p.upstream_link_energy + p.upstream_server_energy) * p.rec_price;
}

double cost_coefficient_c2(const CostParams& p) {
  return p.instance_price * p.period_hours - p.instance_energy * p.rec_price * (p.host_offset_ratio - p.target_offset_ratio);
}

double cost_derivative(const CostParams& p, const MissRateModel& model, double instances) {
  return cost_coefficient_c1(p) * model.derivative(instances) + cost_coefficient_c2(p);
}

OptimizerResult solve_optimal_instances(const CostParams& p, const MissRateModel& model) {
  p.validate();
  const ValidationReport report = validate_model(model);
  if (!report.passed()) throw domain_error("miss-rate model fails validation: " + nlohmann::json(report).dump());

  OptimizerResult res;
  res.c1 = cost_coefficient_c1(p);
  res.c2 = cost_coefficient_c2(p);
  res.sla_min = sla_min_instances(p);

  std::int64_t best_n = res.sla_min;
  double best_cost = cost_at(p, model, best_n);
  auto consider = [&](std::int64_t n) {
    if (n < res.sla_min) return;
    const double c = cost_at(p, model, n);
    if (c < best_cost || (c == best_cost && n < best_n)) {
      best_cost = c;
      best_n = n;
    }
  };

  if (report.table && !report.convex.passed) {
    // No convexity: scan integers. Past the last table point M is constant
    // and the cost is convex, so the scan stops once it turns upward there.
    res.grid_search = true;
    const auto& pts = std::get<EmpiricalMissRate>(model.variant()).points;
    const double table_end = pts.back().instances;
    double prev = best_cost;
    for (std::int64_t n = res.sla_min + 1; n <= static_cast<std::int64_t>(kBracketMax); ++n) {
      const double c = cost_at(p, model, n);
      consider(n);
      if (static_cast<double>(n) > table_end + 1.0 && c > prev) break;
      prev = c;
    }
    res.continuous_optimum = static_cast<double>(best_n);
  } else {
    // The objective is convex: max(0, R(N)) + N*cv*T with R convex.
    double x = unclamped_minimizer(p, model, res.bracket_exhausted);
    auto uncovered = [&](double n) { return uncovered_energy(p, n, model.evaluate(n)); };
    if (p.rec_price > 0.0 && uncovered(x) < 0.0) {
      // R is decreasing on [1, x]; the REC bill hits zero at its root, after
      // which only instance cost grows.
      res.bracket_exhausted = false;
      if (uncovered(1.0) <= 0.0) {
        x = 1.0;
      } else {
        x = bisect([&](double n) { return -uncovered(n); }, 1.0, x);
      }
    }
    res.continuous_optimum = x;
    const double clamped = std::max(x, static_cast<double>(res.sla_min));
    const int window = report.table ? 2 : 1;
    const auto lo = static_cast<std::int64_t>(std::floor(clamped)) - window;
    const auto hi = static_cast<std::int64_t>(std::ceil(clamped)) + window;
    best_cost = std::numeric_limits<double>::infinity();
    for (std::int64_t n = std::max(lo, res.sla_min); n <= hi; ++n) consider(n);
  }

  res.n_star = best_n;
  res.binding_constraint = (best_n == res.sla_min && res.continuous_optimum <= static_cast<double>(res.sla_min))
                               ? BindingConstraint::SlaBound
                               : BindingConstraint::CostMinimum;
  res.miss_rate_at_n_star = model.evaluate(static_cast<double>(best_n));
  res.rec_cost_at_n_star = rec_cost(p, best_n, res.miss_rate_at_n_star);
  res.instance_cost_at_n_star = instance_cost(p, best_n);
  res.cost_at_n_star = total_cost(p, best_n, res.miss_rate_at_n_star);
  return res;
}

void to_json(nlohmann::json& j, const OptimizerResult& r) {
  j = {{"n_star", r.n_star},
       {"binding_constraint", to_string(r.binding_constraint)},
       {"c1", r.c1},
       {"c2", r.c2},
       {"cost_at_n_star", r.cost_at_n_star.usd},
       {"rec_cost_at_n_star", r.rec_cost_at_n_star.usd},
       {"instance_cost_at_n_star", r.instance_cost_at_n_star.usd},
       {"miss_rate_at_n_star", r.miss_rate_at_n_star},
       {"continuous_optimum", r.continuous_optimum},
       {"sla_min", r.sla_min},
       {"bracket_exhausted", r.bracket_exhausted},
       {"grid_search", r.grid_search}};
}

}  // namespace ecomail
