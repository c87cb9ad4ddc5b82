#pragma once

// Scriptable in-process IMAP server standing in for a real mail provider in
// tests and demos. Supports the verb subset the proxy handles plus UID
// SEARCH ALL, STORE, EXPUNGE and APPEND, and counts every command received.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "ecomail/net.hpp"

namespace ecomail {

struct MockMessage {
  std::uint64_t uid = 0;
  std::string payload;
};

struct MockAccount {
  std::string user;
  std::string password;
  std::map<std::string, std::vector<MockMessage>> mailboxes;  // UIDs ascending
};

struct MockFixture {
  std::vector<MockAccount> accounts;
};

// {"accounts":[{"user":..,"password":..,"mailboxes":{"INBOX":[{"uid":1,"payload":".."}]}}]}
MockFixture mock_fixture_from_json(const nlohmann::json& j);

struct MockOptions {
  std::chrono::milliseconds latency{0};  // slept before every response
  // Cut the connection halfway through the next BODY[]/RFC822 literal.
  bool truncate_fetch = false;
};

class MockUpstream {
 public:
  explicit MockUpstream(MockFixture fixture, MockOptions options = {});
  ~MockUpstream();

  void start(std::uint16_t port = 0, const std::string& host = "127.0.0.1");
  void stop();
  std::uint16_t port() const { return port_; }

  // Commands received, keyed by upper-cased name ("LOGIN", "UID FETCH", ...).
  std::uint64_t count(const std::string& command) const;
  std::map<std::string, std::uint64_t> counts() const;
  void set_truncate_fetch(bool on) { truncate_fetch_ = on; }

 private:
  void accept_loop();
  void serve(net::TcpStream& stream);

  mutable std::mutex mu_;
  MockFixture fixture_;
  MockOptions options_;
  std::atomic<bool> truncate_fetch_{false};
  std::map<std::string, std::uint64_t> counts_;

  std::unique_ptr<net::TcpListener> listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::vector<std::thread> workers_;
  std::vector<std::shared_ptr<net::TcpStream>> streams_;
};

}  // namespace ecomail
