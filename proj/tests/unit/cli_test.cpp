#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "json.hpp"

#include "cli.hpp"
#include "ecomail/config.hpp"
#include "ecomail/errors.hpp"
#include "ecomail/mock_upstream.hpp"
#include "ecomail/net.hpp"
#include "support/imap_client.hpp"
#include "support/proxy_harness.hpp"

using namespace ecomail;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kSource = ECOMAIL_SOURCE_DIR;

struct Run {
  int code;
  std::string out, err;
  json j() const { return json::parse(out); }
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int n = 0;
    path = fs::temp_directory_path() / ("ecomail_cli_" + std::to_string(::getpid()) + "_" + std::to_string(++n));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name, const std::string& text) const {
    const auto p = path / name;
    std::ofstream(p) << text;
    return p.string();
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint16_t free_port() {
  net::TcpListener l("127.0.0.1", 0);
  return l.port();
}

}  // namespace

TEST_CASE("size parsing") {
  CHECK(cli::parse_size("4MB") == 4000000);
  CHECK(cli::parse_size("512KiB") == 524288);
  CHECK(cli::parse_size("1000") == 1000);
  CHECK(cli::parse_size("1.5 GB") == 1500000000);
  CHECK_THROWS_AS(cli::parse_size("4XB"), config_error);
  CHECK_THROWS_AS(cli::parse_size("-4MB"), config_error);
  CHECK_THROWS_AS(cli::parse_size("MB"), config_error);
}

TEST_CASE("usage errors exit 2") {
  CHECK(run({}).code == cli::kExitConfig);
  CHECK(run({"frobnicate"}).code == cli::kExitConfig);
  CHECK(run({"optimize", "--bogus"}).code == cli::kExitConfig);
  CHECK(run({"report"}).code == cli::kExitConfig);
  CHECK(run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("bundled configs load") {
  for (const auto* name : {"default.json", "annual_cost.json", "surplus_host.json"}) {
    CAPTURE(name);
    CHECK_NOTHROW(load_config(kSource + "/configs/" + name));
  }
  const auto cfg = load_config(kSource + "/configs/default.json");
  CHECK(cfg.cache.nodes.size() == 2);
  CHECK(fs::exists(cfg.carbon.region_table));
  CHECK(cfg.proxy.proxy.upstream == UpstreamEndpoint{"127.0.0.1", 143});
}

TEST_CASE("config strictness") {
  CHECK_THROWS_AS(config_from_json(json{{"cahce", json::object()}}, "."), config_error);
  CHECK_THROWS_AS(config_from_json(json{{"cache", {{"nodes", json::array()}}}}, "."), config_error);
  CHECK_THROWS_AS(config_from_json(json{{"cache", {{"hash", "md5"}}}}, "."), config_error);
  CHECK_THROWS_AS(
      config_from_json(json{{"cache", {{"nodes", {{{"id", "a"}, {"capacity_bytes", 1}}, {{"id", "a"}, {"capacity_bytes", 1}}}}}}}, "."),
      config_error);
  CHECK_THROWS_AS(config_from_json(json{{"cache", {{"nodes", {{{"id", "a"}, {"capacity_bytes", 0}}}}}}}, "."),
                  config_error);
  CHECK_THROWS_AS(config_from_json(json{{"proxy", {{"upstream", "nohost"}}}}, "."), config_error);
  CHECK_THROWS_AS(config_from_json(json{{"cost", {{"lambda_", 1}}}}, "."), config_error);
  CHECK_THROWS_AS(config_from_json(json{{"carbon", {{"kwh_per_gb", -1}}}}, "."), config_error);
  CHECK_THROWS_AS(config_from_json(json{{"simulation", {{"capacities", json::array()}}}}, "."), config_error);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), config_error);

  TempDir d;
  const auto bad = d.file("bad.json", "{\"workload\": {\"seed\": 1, \"colour\": 2}}");
  const auto r = run({"simulate", "--config", bad, "--out", d / "o"});
  CHECK(r.code == cli::kExitConfig);
  CHECK(r.err.find("colour") != std::string::npos);
  CHECK(run({"optimize", "--config", d.file("broken.json", "{")}).code == cli::kExitConfig);
}

TEST_CASE("optimize evaluates the annual operating cost") {
  const auto r = run({"optimize", "--config", kSource + "/configs/annual_cost.json", "--fixed-miss-rate", "0.88",
                      "--instances", "1"});
  REQUIRE(r.code == 0);
  const auto j = r.j();
  CHECK(j["rec_cost_usd"].get<double>() == doctest::Approx(249.92).epsilon(1e-9));
  CHECK(j["instance_cost_usd"].get<double>() == doctest::Approx(315.36).epsilon(1e-9));
  CHECK(j["total_cost_usd"].get<double>() == doctest::Approx(565.28).epsilon(1e-9));
  CHECK(j["sla_satisfied"] == true);
  CHECK(r.err.find("565.28") != std::string::npos);
  CHECK(run({"optimize", "--config", kSource + "/configs/annual_cost.json", "--fixed-miss-rate", "1.2"}).code ==
        cli::kExitConfig);
}

TEST_CASE("optimize on a surplus host is bound by the SLA") {
  TempDir d;
  const auto r = run({"optimize", "--config", kSource + "/configs/surplus_host.json", "--out", d / "o"});
  REQUIRE(r.code == 0);
  const auto j = r.j();
  CHECK(j["result"]["n_star"] == 4);
  CHECK(j["result"]["binding_constraint"] == "SlaBound");
  CHECK(json::parse(slurp(d / "o/optimize.json")) == j);
}

TEST_CASE("optimize fits observations and refuses bad ones") {
  TempDir d;
  const auto obs = d.file("obs.csv", "N,miss_rate\n1,0.6\n2,0.36\n3,0.216\n4,0.1296\n");
  const auto r = run({"optimize", "--config", kSource + "/configs/annual_cost.json", "--observations", obs});
  REQUIRE(r.code == 0);
  CHECK(r.j()["model"]["variant"] == "exponential");
  CHECK(r.j()["result"]["n_star"].get<int>() >= 1);

  const auto flat = d.file("flat.csv", "N,miss_rate\n1,0.5\n2,0.5\n3,0.5\n");
  CHECK(run({"optimize", "--config", kSource + "/configs/annual_cost.json", "--observations", flat}).code ==
        cli::kExitRuntime);
  const auto two = d.file("two.csv", "N,miss_rate\n1,0.5\n2,0.4\n");
  CHECK(run({"optimize", "--config", kSource + "/configs/annual_cost.json", "--observations", two}).code ==
        cli::kExitRuntime);
  CHECK(run({"optimize", "--config", kSource + "/configs/annual_cost.json"}).code == cli::kExitConfig);
}

TEST_CASE("simulate writes one report per capacity and is reproducible") {
  TempDir d;
  const auto cfg = kSource + "/configs/default.json";
  const auto a = run({"simulate", "--config", cfg, "--out", d / "a"});
  REQUIRE(a.code == 0);
  for (const auto* cap : {"4000000", "8000000", "16000000"}) {
    CHECK(fs::exists(d / (std::string("a/report_") + cap + ".json")));
    CHECK(fs::exists(d / (std::string("a/report_") + cap + "_intervals.csv")));
  }
  CHECK(fs::exists(d / "a/trace.csv"));
  CHECK(fs::exists(d / "a/observations.csv"));
  const auto j = a.j();
  CHECK(j["shape"]["non_increasing"] == true);
  CHECK(j["curve"].size() == 3);

  const auto b = run({"simulate", "--config", cfg, "--out", d / "b"});
  CHECK(b.out == a.out);
  CHECK(slurp(d / "a/trace.csv") == slurp(d / "b/trace.csv"));
  CHECK(slurp(d / "a/report_4000000.json") == slurp(d / "b/report_4000000.json"));

  const auto c = run({"simulate", "--config", cfg, "--seed", "7", "--out", d / "c"});
  CHECK(slurp(d / "c/trace.csv") != slurp(d / "a/trace.csv"));

  const auto one = run({"simulate", "--config", cfg, "--capacities", "4MB", "--out", d / "one"});
  CHECK(one.code == cli::kExitConfig);
  CHECK(one.err.find("fit refused") != std::string::npos);
  CHECK(fs::exists(d / "one/report_4000000.json"));
  CHECK(run({"simulate", "--config", cfg, "--capacities", "4QB", "--out", d / "x"}).code == cli::kExitConfig);
}

TEST_CASE("estimate with no traffic reports zeros") {
  const auto r = run({"estimate"});
  REQUIRE(r.code == 0);
  const auto e = r.j()["emission"];
  CHECK(e["link_energy_kwh"] == 0.0);
  CHECK(e["server_energy_kwh"] == 0.0);
  CHECK(e["rec_cost_usd"] == 0.0);
}

TEST_CASE("estimate from traffic assumptions") {
  const auto traffic = kSource + "/configs/traffic_assumptions.json";
  const auto cfg = kSource + "/configs/annual_cost.json";
  const auto off = run({"estimate", "--config", cfg, "--traffic", traffic});
  REQUIRE(off.code == 0);
  CHECK(off.j()["emission"]["server_energy_kwh"].get<double>() == doctest::Approx(12496).epsilon(1e-12));
  CHECK(off.j()["emission"]["rec_cost_usd"].get<double>() == doctest::Approx(249.92).epsilon(1e-12));
  const auto on = run({"estimate", "--config", cfg, "--traffic", traffic, "--ignore-link-energy", "false"});
  REQUIRE(on.code == 0);
  CHECK(on.j()["emission"]["link_energy_kwh"].get<double>() == doctest::Approx(22173.75).epsilon(1e-12));
  CHECK(on.j()["emission"]["uncovered_energy_kwh"].get<double>() -
            off.j()["emission"]["uncovered_energy_kwh"].get<double>() ==
        doctest::Approx(22173.75).epsilon(1e-9));
  CHECK(run({"estimate", "--traffic", traffic}).out == run({"estimate", "--traffic", traffic}).out);
  CHECK(run({"estimate", "--ignore-link-energy", "maybe"}).code == cli::kExitConfig);
}

TEST_CASE("estimate with a route") {
  TempDir d;
  const auto route = d.file("route.csv", "hop_index,ip,region\n1,192.0.2.1,US-OH\n2,192.0.2.2,Atlantis\n");
  const auto r = run({"estimate", "--route", route, "--route-energy-kwh", "1000"});
  REQUIRE(r.code == 0);
  CHECK(r.j()["route"]["carbon_kg"].get<double>() == doctest::Approx(1030));
  CHECK(r.err.find("Atlantis") != std::string::npos);
  const auto dup = d.file("dup.csv", "hop_index,ip,region\n1,192.0.2.1,US-OH\n1,192.0.2.2,US-OH\n");
  CHECK(run({"estimate", "--route", dup}).code == cli::kExitConfig);
  const auto traffic = d.file("t.json", "{\"traffic\": {}, \"assumptions\": {}}");
  CHECK(run({"estimate", "--traffic", traffic}).code == cli::kExitConfig);
}

TEST_CASE("proxy refuses an unreachable upstream at startup") {
  const auto r = run({"proxy", "--upstream", "127.0.0.1:" + std::to_string(free_port()), "--listen-port", "0"});
  CHECK(r.code == cli::kExitConfig);
  CHECK(r.err.find("unreachable") != std::string::npos);
}

TEST_CASE("proxy runs for a fixed duration and leaves a ledger that report reads") {
  MockUpstream mock(testing_support::make_fixture(1, 4));
  mock.start();
  TempDir d;
  const auto port = free_port();
  const auto ledger = d / "ledger.json";
  Run result{};
  std::thread proxy([&] {
    result = run({"proxy", "--config", kSource + "/configs/annual_cost.json", "--upstream",
                  "127.0.0.1:" + std::to_string(mock.port()), "--listen-port", std::to_string(port), "--ledger",
                  ledger, "--duration", "2"});
  });
  std::unique_ptr<testing_support::ImapClient> c;
  for (int i = 0; i < 100 && !c; ++i) {
    try {
      c = std::make_unique<testing_support::ImapClient>(port);
    } catch (const net::net_error&) {
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }
  REQUIRE(c);
  REQUIRE(c->command("LOGIN user0 pw0").ok());
  REQUIRE(c->command("SELECT INBOX").ok());
  c->command("UID FETCH 1 BODY[]");
  c->command("UID FETCH 1 BODY[]");
  c->command("LOGOUT");
  proxy.join();
  mock.stop();
  REQUIRE(result.code == 0);
  const auto doc = json::parse(slurp(ledger));
  CHECK(doc["traffic"]["hits"] == 1);
  CHECK(doc["traffic"]["misses"] == 1);
  CHECK(doc.contains("emission"));

  const auto rep = run({"report", "--ledger", ledger});
  REQUIRE(rep.code == 0);
  CHECK(rep.j()["hit_rate"].get<double>() == doctest::Approx(0.5));
  CHECK(rep.j()["requests"] == 2);
  CHECK(run({"report", "--ledger", d / "missing.json"}).code == cli::kExitConfig);
}

TEST_CASE("mock-upstream needs a readable fixture") {
  CHECK(run({"mock-upstream", "--fixture", "/nonexistent.json"}).code == cli::kExitConfig);
  TempDir d;
  const auto fx = d.file("fx.json", R"({"accounts":[{"user":"a","password":"b","mailboxes":{"INBOX":[{"uid":1,"payload":"hi"}]}}]})");
  const auto r = run({"mock-upstream", "--fixture", fx, "--duration", "0.1"});
  CHECK(r.code == 0);
}
