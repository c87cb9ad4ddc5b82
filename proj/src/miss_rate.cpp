#include "ecomail/miss_rate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "ecomail/errors.hpp"
#include "ecomail/json_util.hpp"

namespace ecomail {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw domain_error(std::string("miss-rate parameter ") + what + " is not finite");
}

double interpolate(const std::vector<MissRatePoint>& pts, double n) {
  if (n <= pts.front().instances) return pts.front().miss_rate;
  if (n >= pts.back().instances) return pts.back().miss_rate;
  auto hi = std::upper_bound(pts.begin(), pts.end(), n,
                             [](double x, const MissRatePoint& p) { return x < p.instances; });
  auto lo = hi - 1;
  const double t = (n - lo->instances) / (hi->instances - lo->instances);
  return lo->miss_rate + t * (hi->miss_rate - lo->miss_rate);
}

struct LineFit {
  double intercept;
  double slope;
};

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  const double slope = sxy / sxx;
  return {my - slope * mx, slope};
}

// Pool-adjacent-violators for a non-increasing fit.
std::vector<MissRatePoint> isotonic_non_increasing(const std::vector<MissRatePoint>& sorted,
                                                   const std::vector<double>& weights) {
  struct Block {
    double sum;
    double weight;
    std::size_t count;
    double mean() const { return sum / weight; }
  };
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    blocks.push_back({sorted[i].miss_rate * weights[i], weights[i], 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean() < blocks.back().mean()) {
      Block b = blocks.back();
      blocks.pop_back();
      blocks.back().sum += b.sum;
      blocks.back().weight += b.weight;
      blocks.back().count += b.count;
    }
  }
  std::vector<MissRatePoint> out;
  std::size_t i = 0;
  for (const auto& b : blocks) {
    for (std::size_t c = 0; c < b.count; ++c, ++i) out.push_back({sorted[i].instances, b.mean()});
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

MissRateModel::MissRateModel(EmpiricalMissRate e) {
  if (e.points.empty()) throw domain_error("empirical miss-rate table is empty");
  for (const auto& p : e.points) {
    require_finite(p.instances, "N");
    require_finite(p.miss_rate, "miss_rate");
    if (p.instances < 1.0) throw domain_error("empirical miss-rate table has N < 1");
    if (p.miss_rate < 0.0 || p.miss_rate > 1.0) throw domain_error("empirical miss rate outside [0, 1]");
  }
  std::stable_sort(e.points.begin(), e.points.end(),
                   [](const MissRatePoint& a, const MissRatePoint& b) { return a.instances < b.instances; });
  for (std::size_t i = 1; i < e.points.size(); ++i) {
    if (e.points[i].instances == e.points[i - 1].instances) {
      throw domain_error("empirical miss-rate table repeats N = " + fmt(e.points[i].instances));
    }
  }
  v_ = std::move(e);
}

std::string MissRateModel::kind() const {
  return std::visit(overloaded{[](const ExponentialMissRate&) { return std::string("exponential"); },
                               [](const PowerLawMissRate&) { return std::string("power_law"); },
                               [](const EmpiricalMissRate&) { return std::string("empirical"); }},
                    v_);
}

double MissRateModel::evaluate_unchecked(double n) const {
  return std::visit(overloaded{[n](const ExponentialMissRate& e) { return e.m0 * std::exp(-e.k * n); },
                               [n](const PowerLawMissRate& p) { return std::min(1.0, p.a * std::pow(n, -p.b)); },
                               [n](const EmpiricalMissRate& t) { return interpolate(t.points, n); }},
                    v_);
}

double MissRateModel::evaluate(double n) const {
  if (!(n >= 1.0)) throw domain_error("miss-rate model evaluated at N < 1");
  return evaluate_unchecked(n);
}

double MissRateModel::derivative(double n) const {
  if (!(n >= 1.0)) throw domain_error("miss-rate derivative evaluated at N < 1");
  return std::visit(
      overloaded{[n](const ExponentialMissRate& e) { return -e.k * e.m0 * std::exp(-e.k * n); },
                 [n](const PowerLawMissRate& p) {
                   if (p.a * std::pow(n, -p.b) > 1.0) return 0.0;
                   return -p.a * p.b * std::pow(n, -p.b - 1.0);
                 },
                 [this, n](const EmpiricalMissRate&) {
                   if (n - 1.0 >= 1.0) return (evaluate_unchecked(n + 1.0) - evaluate_unchecked(n - 1.0)) / 2.0;
                   return evaluate_unchecked(n + 1.0) - evaluate_unchecked(n);
                 }},
      v_);
}

FitVariant parse_fit_variant(const std::string& s) {
  if (s == "exponential") return FitVariant::Exponential;
  if (s == "power_law") return FitVariant::PowerLaw;
  if (s == "empirical") return FitVariant::Empirical;
  throw config_error("unknown miss-rate variant '" + s + "' (expected exponential, power_law or empirical)");
}

ValidationReport validate_model(const MissRateModel& model) {
  ValidationReport rep;
  if (const auto* t = std::get_if<EmpiricalMissRate>(&model.variant())) {
    rep.table = true;
    const auto& pts = t->points;
    rep.vanishing.detail = "limit not observable from a finite table; non-negativity checked";
    for (const auto& p : pts) {
      if (p.miss_rate < 0.0) {
        rep.vanishing.passed = false;
        rep.vanishing.first_violation = std::pair{p.instances, p.instances};
        break;
      }
    }
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (pts[i].miss_rate > pts[i - 1].miss_rate) {
        rep.monotone.passed = false;
        rep.monotone.first_violation = std::pair{pts[i - 1].instances, pts[i].instances};
        break;
      }
    }
    for (std::size_t i = 2; i < pts.size(); ++i) {
      const double s1 = (pts[i - 1].miss_rate - pts[i - 2].miss_rate) / (pts[i - 1].instances - pts[i - 2].instances);
      const double s2 = (pts[i].miss_rate - pts[i - 1].miss_rate) / (pts[i].instances - pts[i - 1].instances);
      if (s2 < s1 - 1e-12) {
        rep.convex.passed = false;
        rep.convex.first_violation = std::pair{pts[i - 1].instances, pts[i].instances};
        rep.convex.detail = "informational for tables";
        break;
      }
    }
    return rep;
  }

  // Parametric: analytic limit plus a dense grid for shape.
  std::visit(overloaded{[&](const ExponentialMissRate& e) {
                          if (!(e.m0 == 0.0 || e.k > 0.0)) {
                            rep.vanishing.passed = false;
                            rep.vanishing.detail = "exponential needs k > 0 for M -> 0";
                          }
                        },
                        [&](const PowerLawMissRate& p) {
                          if (!(p.a == 0.0 || p.b > 0.0)) {
                            rep.vanishing.passed = false;
                            rep.vanishing.detail = "power law needs b > 0 for M -> 0";
                          }
                        },
                        [](const EmpiricalMissRate&) {}},
             model.variant());

  double prev_m = 0, prev_d = 0;
  for (double n = 1.0; n <= kValidationGridMax; n += kValidationGridStep) {
    const double m = model.evaluate(n);
    const double d = model.derivative(n);
    if (rep.vanishing.passed && (m < 0.0 || m > 1.0)) {
      rep.vanishing.passed = false;
      rep.vanishing.first_violation = std::pair{n, n};
      rep.vanishing.detail = "M(N) outside [0, 1]";
    }
    if (n > 1.0) {
      const double scale = std::max({std::abs(m), std::abs(prev_m), 1e-300});
      if (rep.monotone.passed && m > prev_m + 1e-12 * scale) {
        rep.monotone.passed = false;
        rep.monotone.first_violation = std::pair{n - kValidationGridStep, n};
      }
      const double dscale = std::max({std::abs(d), std::abs(prev_d), 1e-300});
      if (rep.convex.passed && d < prev_d - 1e-12 * dscale) {
        rep.convex.passed = false;
        rep.convex.first_violation = std::pair{n - kValidationGridStep, n};
      }
    }
    prev_m = m;
    prev_d = d;
  }
  return rep;
}

MissRateModel fit_miss_rate(const std::vector<MissRatePoint>& obs, FitVariant variant) {
  if (obs.size() < 3) throw fit_error("need at least 3 observations, got " + std::to_string(obs.size()));
  std::map<double, std::pair<double, double>> by_n;  // N -> (sum, count)
  for (const auto& o : obs) {
    if (!std::isfinite(o.instances) || o.instances < 1.0) throw fit_error("observation with N < 1");
    if (!(o.miss_rate >= 0.0 && o.miss_rate <= 1.0)) {
      throw fit_error("observed miss rate " + fmt(o.miss_rate) + " outside [0, 1]");
    }
    by_n[o.instances].first += o.miss_rate;
    by_n[o.instances].second += 1.0;
  }
  if (by_n.size() < 2) throw fit_error("need observations at 2 or more distinct N");

  if (variant == FitVariant::Empirical) {
    std::vector<MissRatePoint> sorted;
    std::vector<double> weights;
    for (const auto& [n, sc] : by_n) {
      sorted.push_back({n, sc.first / sc.second});
      weights.push_back(sc.second);
    }
    return MissRateModel(EmpiricalMissRate{isotonic_non_increasing(sorted, weights)});
  }

  std::vector<double> x, y;
  std::map<double, int> distinct;
  for (const auto& o : obs) {
    if (o.miss_rate <= 0.0) continue;
    x.push_back(variant == FitVariant::PowerLaw ? std::log(o.instances) : o.instances);
    y.push_back(std::log(o.miss_rate));
    distinct[o.instances]++;
  }
  if (x.empty()) throw fit_error("all miss rates are zero; log-space fit undefined");
  if (distinct.size() < 2) throw fit_error("need non-zero miss rates at 2 or more distinct N for a log-space fit");
  const LineFit f = least_squares(x, y);
  if (variant == FitVariant::Exponential) return MissRateModel(ExponentialMissRate{std::exp(f.intercept), -f.slope});
  return MissRateModel(PowerLawMissRate{std::exp(f.intercept), -f.slope});
}

std::vector<MissRatePoint> read_observations_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fit_error("cannot open observations file " + path);
  std::string line;
  if (!std::getline(in, line)) throw fit_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "N,miss_rate") throw fit_error(path + ": expected header 'N,miss_rate'");
  std::vector<MissRatePoint> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw fit_error(path + ":" + std::to_string(lineno) + ": expected 2 columns");
    try {
      std::size_t used = 0;
      const double n = std::stod(line.substr(0, comma));
      const std::string rest = line.substr(comma + 1);
      const double m = std::stod(rest, &used);
      if (used != rest.size()) throw std::invalid_argument("trailing data");
      out.push_back({n, m});
    } catch (const std::exception&) {
      throw fit_error(path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return out;
}

void write_observations_csv(const std::string& path, const std::vector<MissRatePoint>& points) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "N,miss_rate\n";
  for (const auto& p : points) out << fmt(p.instances) << ',' << fmt(p.miss_rate) << '\n';
}

void to_json(nlohmann::json& j, const MissRateModel& m) {
  std::visit(overloaded{[&](const ExponentialMissRate& e) {
                          j = {{"variant", "exponential"}, {"m0", e.m0}, {"k", e.k}};
                        },
                        [&](const PowerLawMissRate& p) {
                          j = {{"variant", "power_law"}, {"a", p.a}, {"b", p.b}};
                        },
                        [&](const EmpiricalMissRate& t) {
                          auto pts = nlohmann::json::array();
                          for (const auto& p : t.points) pts.push_back({p.instances, p.miss_rate});
                          j = {{"variant", "empirical"}, {"points", pts}};
                        }},
             m.variant());
}

MissRateModel miss_rate_model_from_json(const nlohmann::json& j) {
  StrictObject o(j, "model");
  const auto variant = parse_fit_variant(o.required<std::string>("variant"));
  switch (variant) {
    case FitVariant::Exponential: {
      ExponentialMissRate e{o.required<double>("m0"), o.required<double>("k")};
      o.finish();
      return e;
    }
    case FitVariant::PowerLaw: {
      PowerLawMissRate p{o.required<double>("a"), o.required<double>("b")};
      o.finish();
      return p;
    }
    case FitVariant::Empirical: {
      EmpiricalMissRate t;
      for (const auto& p : o.sub("points")) {
        if (!p.is_array() || p.size() != 2) throw config_error("model.points: expected [N, miss_rate] pairs");
        t.points.push_back({p[0].get<double>(), p[1].get<double>()});
      }
      o.finish();
      return MissRateModel(std::move(t));
    }
  }
  throw config_error("unreachable");
}

void to_json(nlohmann::json& j, const ValidationReport& r) {
  auto check = [](const AssumptionCheck& c) {
    nlohmann::json out{{"passed", c.passed}};
    if (c.first_violation) out["first_violation"] = {c.first_violation->first, c.first_violation->second};
    if (!c.detail.empty()) out["detail"] = c.detail;
    return out;
  };
  j = {{"vanishing", check(r.vanishing)},
       {"monotone", check(r.monotone)},
       {"diminishing_returns", check(r.convex)},
       {"passed", r.passed()}};
}

}  // namespace ecomail
