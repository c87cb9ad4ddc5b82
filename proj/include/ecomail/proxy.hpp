#pragma once

// Caching IMAP proxy. One thread per client session; sessions share the
// cache tier and the global traffic ledger.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "ecomail/cache.hpp"
#include "ecomail/imap/command.hpp"
#include "ecomail/imap/response.hpp"
#include "ecomail/net.hpp"
#include "ecomail/traffic_ledger.hpp"

namespace ecomail {

struct UpstreamEndpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 143;

  friend bool operator==(const UpstreamEndpoint&, const UpstreamEndpoint&) = default;
};

// "host:port" -> endpoint; throws config_error.
UpstreamEndpoint parse_endpoint(const std::string& s);

struct ProxyConfig {
  std::string listen_host = "127.0.0.1";
  std::uint16_t listen_port = 1143;  // 0 = ephemeral
  UpstreamEndpoint upstream;
  // Account domain (part after '@') -> upstream; others use `upstream`.
  std::map<std::string, UpstreamEndpoint> domain_upstreams;
  std::chrono::milliseconds upstream_timeout{30000};
  std::chrono::milliseconds client_idle_timeout{30 * 60 * 1000};
};

enum class SessionPhase { NotAuthenticated, Authenticated, Selected, Closed };
std::string to_string(SessionPhase p);

struct SessionState {
  SessionPhase phase = SessionPhase::NotAuthenticated;
  std::string account;
  std::string mailbox;
  bool read_only = false;
  // seq - 1 -> UID for the selected mailbox, learned at SELECT time.
  std::vector<std::uint64_t> uids_by_seq;
};

struct SessionSummary {
  TrafficSnapshot traffic;
  SessionPhase final_phase = SessionPhase::Closed;
  std::string account;
  std::uint64_t commands = 0;
};

// Runs one client connection to completion.
class ProxySession {
 public:
  ProxySession(net::TcpStream client, const ProxyConfig& config, CacheTier& cache, TrafficLedger& global);
  SessionSummary run();

  // Unblocks a session running in another thread.
  void interrupt();

 private:
  struct UpstreamLost {};

  bool connect_upstream(const UpstreamEndpoint& ep, bool relay_greeting);
  // Reconnects after a lost upstream and replays LOGIN and SELECT so the
  // client session can continue. False if the upstream cannot be restored.
  bool restore_upstream();
  void dispatch(const imap::ImapCommand& cmd);
  void handle_login(const imap::ImapCommand& cmd);
  void handle_select(const imap::ImapCommand& cmd);
  void handle_fetch(const imap::ImapCommand& cmd);
  void handle_logout(const imap::ImapCommand& cmd);
  void handle_opaque(const imap::ImapCommand& cmd);

  // Sends a client line upstream (plus literal continuation) and relays the
  // response. Returns the completion unit.
  imap::ResponseUnit forward_and_relay(const imap::ImapCommand& cmd);
  void send_upstream(std::string_view bytes);
  imap::ResponseUnit read_upstream_unit();
  imap::TaggedResponse read_upstream_tagged(const std::string& tag);
  void observe(const imap::ResponseUnit& unit);
  void learn_uid_map();
  void reply(std::string_view bytes);
  void fail_upstream();

  net::TcpStream client_;
  net::TcpStream upstream_;
  UpstreamEndpoint upstream_ep_;
  bool upstream_alive_ = false;
  const ProxyConfig& config_;
  CacheTier& cache_;
  SessionLedger ledger_;
  SessionState state_;
  std::uint64_t commands_ = 0;
  std::uint64_t internal_tag_ = 0;
  std::string password_;
};

class ProxyServer {
 public:
  ProxyServer(ProxyConfig config, CacheTier& cache, TrafficLedger& ledger);
  ~ProxyServer();

  // Binds and starts accepting. Throws net::net_error if the port is taken.
  void start();
  // Stops accepting, interrupts live sessions and joins them.
  void stop();
  std::uint16_t port() const { return port_; }

  std::vector<SessionSummary> finished_sessions() const;
  std::size_t active_sessions() const;

 private:
  struct Live {
    std::shared_ptr<ProxySession> session;
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };
  void accept_loop();
  void reap(bool all);

  ProxyConfig config_;
  CacheTier& cache_;
  TrafficLedger& ledger_;
  std::unique_ptr<net::TcpListener> listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  mutable std::mutex mu_;
  std::vector<Live> live_;
  std::vector<SessionSummary> finished_;
};

}  // namespace ecomail
