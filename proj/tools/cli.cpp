#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "ecomail/carbon.hpp"
#include "ecomail/config.hpp"
#include "ecomail/errors.hpp"
#include "ecomail/json_util.hpp"
#include "ecomail/mock_upstream.hpp"
#include "ecomail/optimizer.hpp"
#include "ecomail/proxy.hpp"
#include "ecomail/workload.hpp"

namespace ecomail::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

Config load(const std::string& path) { return path.empty() ? Config{} : load_config(path); }

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << text;
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw config_error(path + ": " + e.what());
  }
}

bool parse_bool(const std::string& s) {
  std::string v = s;
  for (auto& c : v) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw config_error("expected a boolean, got '" + s + "'");
}

std::vector<std::uint64_t> parse_capacities(const std::string& list) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(item));
  if (out.empty()) throw config_error("--capacities: empty list");
  return out;
}

std::string fmt_usd(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// ---- optimize ------------------------------------------------------------

struct OptimizeArgs {
  std::string config;
  std::string observations;
  std::string model = "exponential";
  std::optional<double> fixed_miss_rate;
  std::optional<std::int64_t> instances;
  std::string out;
};

int cmd_optimize(const OptimizeArgs& a, std::ostream& out, std::ostream& err) {
  const Config cfg = load(a.config);
  if (!cfg.cost) throw config_error("optimize needs a 'cost' section in the config");
  const CostParams& p = *cfg.cost;
  p.validate();

  json result;
  if (a.fixed_miss_rate || a.instances) {
    double m;
    if (a.fixed_miss_rate) {
      m = *a.fixed_miss_rate;
      if (!(m >= 0.0 && m <= 1.0)) throw config_error("--fixed-miss-rate must lie in [0, 1]");
    } else if (cfg.model) {
      m = cfg.model->evaluate(static_cast<double>(a.instances.value_or(sla_min_instances(p))));
    } else {
      throw config_error("--instances needs --fixed-miss-rate or a 'model' section");
    }
    const std::int64_t n = a.instances.value_or(sla_min_instances(p));
    if (n < 1) throw config_error("--instances must be >= 1");
    const auto rec = rec_cost(p, n, m);
    const auto inst = instance_cost(p, n);
    result = {{"mode", "evaluate"},
              {"instances", n},
              {"miss_rate", m},
              {"sla_min", sla_min_instances(p)},
              {"sla_satisfied", n >= sla_min_instances(p)},
              {"rec_cost_usd", rec.usd},
              {"instance_cost_usd", inst.usd},
              {"total_cost_usd", (rec + inst).usd}};
    err << "N=" << n << " rec=" << fmt_usd(rec.usd) << " instance=" << fmt_usd(inst.usd)
        << " total=" << fmt_usd((rec + inst).usd) << " USD\n";
  } else {
    MissRateModel model = [&] {
      if (!a.observations.empty()) {
        return fit_miss_rate(read_observations_csv(a.observations), parse_fit_variant(a.model));
      }
      if (cfg.model) return *cfg.model;
      throw config_error("optimize needs --observations or a 'model' section");
    }();
    const auto report = validate_model(model);
    result = {{"mode", "optimize"}, {"model", model}, {"validation", report}};
    if (!report.passed()) {
      out << result.dump(2) << "\n";
      err << "error: miss-rate model fails validation\n";
      return kExitRuntime;
    }
    const auto r = solve_optimal_instances(p, model);
    result["result"] = r;
    err << "N*=" << r.n_star << " (" << to_string(r.binding_constraint) << ") rec="
        << fmt_usd(r.rec_cost_at_n_star.usd) << " instance=" << fmt_usd(r.instance_cost_at_n_star.usd)
        << " total=" << fmt_usd(r.cost_at_n_star.usd) << " USD\n";
  }
  if (!a.out.empty()) write_file(fs::path(a.out) / "optimize.json", result.dump(2) + "\n");
  out << result.dump(2) << "\n";
  return kExitOk;
}

// ---- simulate ------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string capacities;
  std::string out = "sim-out";
  std::string model = "empirical";
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  Config cfg = load(a.config);
  if (a.seed) cfg.workload.seed = *a.seed;
  if (!a.capacities.empty()) cfg.simulation.capacities = parse_capacities(a.capacities);
  cfg.workload.validate();
  const FitVariant variant = parse_fit_variant(a.model);

  const auto trace = generate_trace(cfg.workload);
  const ReplayOptions opts{cfg.simulation.interval_seconds, cfg.simulation.steady_fraction};
  auto caps = cfg.simulation.capacities;
  std::sort(caps.begin(), caps.end());
  const std::uint64_t shard = cfg.simulation.shard_bytes ? cfg.simulation.shard_bytes : caps.front();

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_file(dir / "trace.csv", trace_to_csv(trace));

  std::vector<CurvePoint> curve;
  json summary = {{"workload", cfg.workload}, {"shard_bytes", shard}, {"events", trace.size()}};
  for (auto cap : caps) {
    const auto r = replay(trace, {{"shard", cap}}, opts);
    const std::string stem = "report_" + std::to_string(cap);
    write_file(dir / (stem + ".json"), json(r).dump(2) + "\n");
    write_file(dir / (stem + "_intervals.csv"), intervals_to_csv(r));
    curve.push_back({cap, static_cast<double>(cap) / static_cast<double>(shard), r.steady_miss_rate,
                     r.steady_miss_rate_excl_cold});
  }

  std::string csv = "capacity_bytes,instances,miss_rate,miss_rate_excl_cold\n";
  char line[160];
  for (const auto& c : curve) {
    std::snprintf(line, sizeof line, "%llu,%.12g,%.12g,%.12g\n", static_cast<unsigned long long>(c.capacity_bytes),
                  c.instances, c.miss_rate, c.miss_rate_excl_cold);
    csv += line;
  }
  write_file(dir / "curve.csv", csv);
  write_observations_csv((dir / "observations.csv").string(), to_observations(curve));

  json jc = json::array();
  for (const auto& c : curve) {
    jc.push_back({{"capacity_bytes", c.capacity_bytes},
                  {"instances", c.instances},
                  {"miss_rate", c.miss_rate},
                  {"miss_rate_excl_cold", c.miss_rate_excl_cold}});
  }
  summary["curve"] = jc;
  const auto shape = check_curve_shape(curve, 0.02);
  summary["shape"] = {{"non_increasing", shape.non_increasing},
                      {"diminishing_returns", shape.diminishing_returns},
                      {"worst_second_difference", shape.worst_second_difference}};

  int code = kExitOk;
  try {
    const auto model = fit_miss_rate(to_observations(curve), variant);
    summary["fit"] = {{"model", model}, {"validation", validate_model(model)}};
  } catch (const fit_error& e) {
    summary["fit"] = {{"error", e.what()}};
    err << "error: fit refused: " << e.what() << "\n";
    code = kExitConfig;
  }
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  out << summary.dump(2) << "\n";
  return code;
}

// ---- estimate ------------------------------------------------------------

struct EstimateArgs {
  std::string config;
  std::string traffic;
  std::string route;
  double route_energy_kwh = -1.0;
  std::optional<std::int64_t> instances;
  std::string ignore_link_energy;
  std::string out;
};

// Accepts a proxy ledger snapshot ({"traffic": ...}) or population-level
// assumptions ({"assumptions": ...}).
TrafficSnapshot read_traffic(const std::string& path) {
  const json j = read_json_file(path);
  StrictObject o(j, path);
  TrafficSnapshot t;
  const bool has_traffic = o.has("traffic"), has_assumptions = o.has("assumptions");
  if (has_traffic == has_assumptions) throw config_error(path + ": expected exactly one of 'traffic' or 'assumptions'");
  if (has_traffic) t = o.sub("traffic").get<TrafficSnapshot>();
  if (has_assumptions) t = traffic_assumptions_from_json(o.sub("assumptions")).to_traffic();
  // Extra keys a proxy ledger file carries.
  for (const char* k : {"cache", "sessions", "timestamp", "emission"}) {
    if (o.has(k)) o.sub(k);
  }
  o.finish();
  return t;
}

json estimate(const Config& cfg, const TrafficSnapshot& traffic, std::int64_t instances, bool ignore_links) {
  const RegionTable table = load_region_table(cfg.carbon.region_table);
  OffsetInputs in;
  in.traffic = traffic;
  in.profile = cfg.carbon.profile;
  in.intensity = cfg.carbon.intensity;
  in.cost = cfg.cost.value_or(CostParams{});
  in.instances = instances;
  in.requests_per_user_per_year = cfg.carbon.requests_per_user_per_year;
  in.ignore_link_energy = ignore_links;
  in.link_carbon_intensity = table.default_intensity;
  const auto e = offset_requirement(in);
  json j = e;
  j["link_bytes"] = link_bytes(traffic);
  j["link_energy_if_counted_kwh"] = link_energy(static_cast<double>(link_bytes(traffic)), cfg.carbon.intensity).kwh;
  j["ignore_link_energy"] = ignore_links;
  j["server_energy_per_request_kwh"] =
      server_energy_per_request(cfg.carbon.profile, cfg.carbon.requests_per_user_per_year).kwh;
  return j;
}

int cmd_estimate(const EstimateArgs& a, std::ostream& out, std::ostream& err) {
  const Config cfg = load(a.config);
  const bool ignore = a.ignore_link_energy.empty() ? cfg.carbon.ignore_link_energy : parse_bool(a.ignore_link_energy);
  const TrafficSnapshot traffic = a.traffic.empty() ? TrafficSnapshot{} : read_traffic(a.traffic);
  const std::int64_t n = a.instances.value_or(1);
  if (n < 1) throw config_error("--instances must be >= 1");

  json result = {{"traffic", traffic}, {"emission", estimate(cfg, traffic, n, ignore)}};
  if (!a.route.empty()) {
    const RegionTable table = load_region_table(cfg.carbon.region_table);
    const auto hops = ingest_route_file(a.route, table);
    json jh = json::array();
    for (const auto& h : hops) {
      jh.push_back({{"hop_index", h.hop_index},
                    {"ip", h.address},
                    {"region", h.region},
                    {"carbon_intensity", h.carbon_intensity},
                    {"unknown_region", h.unknown_region}});
      if (h.unknown_region) err << "warning: hop " << h.hop_index << " region '" << h.region << "' not in table\n";
    }
    const double kwh = a.route_energy_kwh >= 0 ? a.route_energy_kwh : result["emission"]["link_energy_if_counted_kwh"].get<double>();
    result["route"] = {{"hops", jh}, {"energy_kwh", kwh}, {"carbon_kg", route_carbon(hops, EnergyAmount::of(kwh))}};
  }
  if (!a.out.empty()) write_file(a.out, result.dump(2) + "\n");
  out << result.dump(2) << "\n";
  return kExitOk;
}

// ---- proxy ---------------------------------------------------------------

struct ProxyArgs {
  std::string config;
  std::string upstream;
  std::optional<int> listen_port;
  std::string ledger;
  double duration = 0.0;
};

json ledger_document(const Config& cfg, const TrafficLedger& ledger, const CacheTier& cache, std::size_t sessions) {
  const auto t = ledger.snapshot();
  json j = {{"timestamp", std::chrono::duration_cast<std::chrono::seconds>(
                              std::chrono::system_clock::now().time_since_epoch())
                              .count()},
            {"traffic", t},
            {"cache", cache.stats()},
            {"sessions", sessions}};
  if (cfg.cost) j["emission"] = estimate(cfg, t, 1, cfg.carbon.ignore_link_energy);
  return j;
}

int cmd_proxy(const ProxyArgs& a, std::ostream& out, std::ostream& err) {
  Config cfg = load(a.config);
  if (!a.upstream.empty()) cfg.proxy.proxy.upstream = parse_endpoint(a.upstream);
  if (a.listen_port) {
    if (*a.listen_port < 0 || *a.listen_port > 65535) throw config_error("--listen-port out of range");
    cfg.proxy.proxy.listen_port = static_cast<std::uint16_t>(*a.listen_port);
  }
  if (!a.ledger.empty()) cfg.proxy.ledger_path = a.ledger;

  const auto& up = cfg.proxy.proxy.upstream;
  try {
    auto probe = net::TcpStream::connect(up.host, up.port, cfg.proxy.proxy.upstream_timeout);
    probe.close();
  } catch (const net::net_error& e) {
    throw config_error("upstream " + up.host + ":" + std::to_string(up.port) + " unreachable: " + e.what());
  }

  CacheTier cache(cfg.cache.nodes, cfg.cache.virtual_points);
  TrafficLedger ledger;
  ProxyServer server(cfg.proxy.proxy, cache, ledger);
  try {
    server.start();
  } catch (const net::net_error& e) {
    throw config_error(std::string("cannot listen: ") + e.what());
  }
  out << json{{"listening", cfg.proxy.proxy.listen_host}, {"port", server.port()}}.dump() << std::endl;

  g_stop = false;
  auto prev_int = std::signal(SIGINT, on_signal);
  auto prev_term = std::signal(SIGTERM, on_signal);
  const auto started = std::chrono::steady_clock::now();
  auto next_snapshot = started;
  const auto every = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(cfg.proxy.snapshot_interval_seconds));
  for (;;) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= next_snapshot) {
      write_file(cfg.proxy.ledger_path,
                 ledger_document(cfg, ledger, cache, server.finished_sessions().size()).dump(2) + "\n");
      next_snapshot = now + every;
    }
    if (g_stop) break;
    if (a.duration > 0 && now - started >= std::chrono::duration<double>(a.duration)) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  server.stop();
  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);
  const auto doc = ledger_document(cfg, ledger, cache, server.finished_sessions().size());
  write_file(cfg.proxy.ledger_path, doc.dump(2) + "\n");
  err << "ledger written to " << cfg.proxy.ledger_path << "\n";
  out << doc.dump(2) << "\n";
  return kExitOk;
}

// ---- report --------------------------------------------------------------

int cmd_report(const std::string& config, const std::string& ledger_path, std::ostream& out) {
  const Config cfg = load(config);
  const json doc = read_json_file(ledger_path);
  const TrafficSnapshot t = read_traffic(ledger_path);
  const auto served = t.hit_bytes + t.miss_bytes;
  json r = {{"requests", t.hits + t.misses},
            {"hits", t.hits},
            {"misses", t.misses},
            {"hit_rate", t.hit_rate()},
            {"hit_bytes", t.hit_bytes},
            {"miss_bytes", t.miss_bytes},
            {"hit_byte_share", served ? static_cast<double>(t.hit_bytes) / static_cast<double>(served) : 0.0},
            {"requests_to_upstream", t.requests_to_upstream},
            {"bytes_to_upstream", t.bytes_to_upstream},
            {"bytes_from_upstream", t.bytes_from_upstream},
            {"emission", estimate(cfg, t, 1, cfg.carbon.ignore_link_energy)}};
  if (doc.contains("cache")) r["cache"] = doc["cache"];
  out << r.dump(2) << "\n";
  return kExitOk;
}

// ---- mock-upstream -------------------------------------------------------

int cmd_mock(const std::string& fixture, int port, int latency_ms, double duration, std::ostream& out) {
  if (port < 0 || port > 65535) throw config_error("--port out of range");
  MockUpstream mock(mock_fixture_from_json(read_json_file(fixture)),
                    MockOptions{std::chrono::milliseconds(latency_ms), false});
  try {
    mock.start(static_cast<std::uint16_t>(port));
  } catch (const net::net_error& e) {
    throw config_error(std::string("cannot listen: ") + e.what());
  }
  out << json{{"port", mock.port()}}.dump() << std::endl;
  g_stop = false;
  auto prev_int = std::signal(SIGINT, on_signal);
  auto prev_term = std::signal(SIGTERM, on_signal);
  const auto started = std::chrono::steady_clock::now();
  while (!g_stop) {
    if (duration > 0 && std::chrono::steady_clock::now() - started >= std::chrono::duration<double>(duration)) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  mock.stop();
  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);
  out << json(mock.counts()).dump() << "\n";
  return kExitOk;
}

}  // namespace

std::uint64_t parse_size(const std::string& raw) {
  std::string s;
  for (char c : raw) {
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
  }
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw config_error("bad size '" + raw + "'");
  }
  std::string unit = s.substr(used);
  for (auto& c : unit) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  double mult = 1;
  if (unit.empty() || unit == "B") {
    mult = 1;
  } else if (unit == "KB") {
    mult = 1e3;
  } else if (unit == "MB") {
    mult = 1e6;
  } else if (unit == "GB") {
    mult = 1e9;
  } else if (unit == "KIB") {
    mult = 1024.0;
  } else if (unit == "MIB") {
    mult = 1024.0 * 1024;
  } else if (unit == "GIB") {
    mult = 1024.0 * 1024 * 1024;
  } else {
    throw config_error("bad size unit in '" + raw + "'");
  }
  const double bytes = v * mult;
  if (!(bytes >= 1) || bytes > 1e15) throw config_error("size out of range: '" + raw + "'");
  return static_cast<std::uint64_t>(std::llround(bytes));
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"caching IMAP proxy with carbon-aware provisioning", "ecomail"};
  app.require_subcommand(1);

  OptimizeArgs opt;
  auto* o = app.add_subcommand("optimize", "choose the instance count that minimizes REC + instance cost");
  o->add_option("--config", opt.config, "config JSON");
  o->add_option("--observations", opt.observations, "CSV N,miss_rate to fit");
  o->add_option("--model", opt.model, "fit variant: exponential, power_law, empirical");
  o->add_option("--fixed-miss-rate", opt.fixed_miss_rate, "evaluate with a constant miss rate");
  o->add_option("--instances", opt.instances, "evaluate at this N instead of solving");
  o->add_option("--out", opt.out, "directory for optimize.json");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "replay a synthetic workload against cache capacities");
  s->add_option("--config", sim.config, "config JSON");
  s->add_option("--seed", sim.seed, "workload seed");
  s->add_option("--capacities", sim.capacities, "comma list, e.g. 4MB,8MB,16MB");
  s->add_option("--out", sim.out, "output directory");
  s->add_option("--model", sim.model, "fit variant for the curve");

  EstimateArgs est;
  auto* e = app.add_subcommand("estimate", "energy and carbon outside the proxy");
  e->add_option("--config", est.config, "config JSON");
  e->add_option("--traffic", est.traffic, "ledger snapshot or traffic assumptions JSON");
  e->add_option("--route", est.route, "route CSV hop_index,ip,region");
  e->add_option("--route-energy-kwh", est.route_energy_kwh, "energy to attribute along the route");
  e->add_option("--instances", est.instances, "proxy instances for the offset credit");
  e->add_option("--ignore-link-energy", est.ignore_link_energy, "true/false");
  e->add_option("--out", est.out, "write the result JSON here");

  ProxyArgs px;
  auto* p = app.add_subcommand("proxy", "run the caching IMAP proxy");
  p->add_option("--config", px.config, "config JSON");
  p->add_option("--upstream", px.upstream, "host:port");
  p->add_option("--listen-port", px.listen_port, "0 picks a free port");
  p->add_option("--ledger", px.ledger, "ledger snapshot path");
  p->add_option("--duration", px.duration, "seconds to run, 0 = until interrupted");

  std::string rep_config, rep_ledger;
  auto* r = app.add_subcommand("report", "summarize a proxy ledger snapshot");
  r->add_option("--config", rep_config, "config JSON");
  r->add_option("--ledger", rep_ledger, "ledger snapshot")->required();

  std::string mock_fixture;
  int mock_port = 0, mock_latency = 0;
  double mock_duration = 0;
  auto* m = app.add_subcommand("mock-upstream", "serve a fixture mailbox over IMAP");
  m->add_option("--fixture", mock_fixture, "fixture JSON")->required();
  m->add_option("--port", mock_port, "0 picks a free port");
  m->add_option("--latency-ms", mock_latency, "delay before each response");
  m->add_option("--duration", mock_duration, "seconds to run, 0 = until interrupted");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*o) return cmd_optimize(opt, out, err);
    if (*s) return cmd_simulate(sim, out, err);
    if (*e) return cmd_estimate(est, out, err);
    if (*p) return cmd_proxy(px, out, err);
    if (*r) return cmd_report(rep_config, rep_ledger, out);
    if (*m) return cmd_mock(mock_fixture, mock_port, mock_latency, mock_duration, out);
  } catch (const config_error& ex) {
    err << "config error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const ingest_error& ex) {
    err << "input error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const fit_error& ex) {
    err << "fit error: " << ex.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace ecomail::cli
