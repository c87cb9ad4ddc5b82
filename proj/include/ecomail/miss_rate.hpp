#pragma once

// Miss-rate function M(N): fraction of fetches that must go upstream when N
// cache instances are provisioned.

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

namespace ecomail {

// m0 * exp(-k * N)
struct ExponentialMissRate {
  double m0 = 1.0;
  double k = 0.0;
};

// min(1, a * N^-b)
struct PowerLawMissRate {
  double a = 1.0;
  double b = 0.0;
};

struct MissRatePoint {
  double instances = 1.0;
  double miss_rate = 0.0;
};

// Piecewise-linear through the points (sorted by N), clamped at the ends.
struct EmpiricalMissRate {
  std::vector<MissRatePoint> points;
};

class MissRateModel {
 public:
  using Variant = std::variant<ExponentialMissRate, PowerLawMissRate, EmpiricalMissRate>;

  MissRateModel(ExponentialMissRate e) : v_(e) {}
  MissRateModel(PowerLawMissRate p) : v_(p) {}
  // Sorts points by N; rejects empty tables, N < 1, miss rates outside [0,1]
  // and repeated N.
  MissRateModel(EmpiricalMissRate e);

  const Variant& variant() const { return v_; }
  bool is_parametric() const { return !std::holds_alternative<EmpiricalMissRate>(v_); }
  std::string kind() const;

  // M(N); N < 1 is a domain error.
  double evaluate(double instances) const;
  // dM/dN. Closed form for parametric variants; central difference with unit
  // step for tables (one-sided where N - 1 < 1).
  double derivative(double instances) const;

 private:
  double evaluate_unchecked(double instances) const;
  Variant v_;
};

enum class FitVariant { Exponential, PowerLaw, Empirical };
FitVariant parse_fit_variant(const std::string& s);

struct AssumptionCheck {
  bool passed = true;
  // Where applicable, the first N (or for tables the pair of N values) at
  // which the assumption fails.
  std::optional<std::pair<double, double>> first_violation;
  std::string detail;
};

struct ValidationReport {
  AssumptionCheck vanishing;   // M >= 0 and M -> 0 as N -> infinity
  AssumptionCheck monotone;    // non-increasing
  AssumptionCheck convex;      // diminishing returns (M' non-decreasing)
  // Tables cannot show a limit or guarantee convexity; for them only
  // non-negativity and monotonicity are required.
  bool table = false;

  bool passed() const {
    if (table) return vanishing.passed && monotone.passed;
    return vanishing.passed && monotone.passed && convex.passed;
  }
};

// Grid used for parametric checks.
inline constexpr double kValidationGridMax = 1000.0;
inline constexpr double kValidationGridStep = 0.25;

ValidationReport validate_model(const MissRateModel& model);

// Least-squares in log space (Exponential: ln M on N; PowerLaw: ln M on ln N).
// Zero miss rates carry no log information and are left out of the
// regression. Empirical pools non-monotone runs by isotonic averaging.
MissRateModel fit_miss_rate(const std::vector<MissRatePoint>& observations, FitVariant variant);

// Observations CSV: header "N,miss_rate", one row per point.
std::vector<MissRatePoint> read_observations_csv(const std::string& path);
void write_observations_csv(const std::string& path, const std::vector<MissRatePoint>& points);

void to_json(nlohmann::json& j, const MissRateModel& m);
MissRateModel miss_rate_model_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const ValidationReport& r);

}  // namespace ecomail
