#pragma once

// Minimal blocking TCP wrappers for the proxy and the mock upstream.

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ecomail::net {

class net_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Owns a file descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.release()) {}
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket();

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release() {
    int f = fd_;
    fd_ = -1;
    return f;
  }
  void close();

 private:
  int fd_ = -1;
};

struct LineRead {
  std::string data;  // including the terminating LF (and CR if sent)
  bool truncated = false;  // longer than the limit; the remainder was discarded
};

class TcpStream {
 public:
  TcpStream() = default;
  explicit TcpStream(Socket s) : sock_(std::move(s)) {}

  // Throws net_error on resolution or connection failure.
  static TcpStream connect(const std::string& host, std::uint16_t port,
                           std::chrono::milliseconds timeout = std::chrono::seconds(10));

  bool valid() const { return sock_.valid(); }
  // Zero disables the timeout.
  void set_read_timeout(std::chrono::milliseconds t);

  // nullopt on clean EOF before any byte. Throws net_error on EOF mid-line,
  // timeout or socket error.
  std::optional<LineRead> read_line(std::size_t max_len);
  std::string read_exact(std::size_t n);
  void write_all(std::string_view bytes);

  // Unblocks a reader in another thread.
  void shutdown();
  void close() { sock_.close(); }

  std::uint64_t bytes_read() const { return bytes_read_; }
  std::uint64_t bytes_written() const { return bytes_written_; }

 private:
  bool fill();  // false on EOF
  Socket sock_;
  std::string buf_;
  std::size_t pos_ = 0;
  std::uint64_t bytes_read_ = 0;
  std::uint64_t bytes_written_ = 0;
};

class TcpListener {
 public:
  // Port 0 picks an ephemeral port. Throws net_error.
  TcpListener(const std::string& host, std::uint16_t port);
  std::uint16_t port() const { return port_; }
  // Waits up to `wait`; nullopt on timeout or after close().
  std::optional<TcpStream> accept(std::chrono::milliseconds wait);
  void close() { sock_.close(); }

 private:
  Socket sock_;
  std::uint16_t port_ = 0;
};

}  // namespace ecomail::net
