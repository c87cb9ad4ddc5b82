#include "ecomail/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace ecomail::net {

namespace {

std::string sys_error(const std::string& what) { return what + ": " + std::strerror(errno); }

}  // namespace

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.release();
  }
  return *this;
}

Socket::~Socket() { close(); }

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

TcpStream TcpStream::connect(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw net_error("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  std::string last_error = "no addresses";
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
    if (!s.valid()) {
      last_error = sys_error("socket");
      continue;
    }
    const int flags = ::fcntl(s.fd(), F_GETFL);
    ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(s.fd(), ai->ai_addr, ai->ai_addrlen);
    if (rc != 0 && errno == EINPROGRESS) {
      pollfd pfd{s.fd(), POLLOUT, 0};
      rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
      if (rc == 1) {
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
        errno = err;
        rc = err == 0 ? 0 : -1;
      } else {
        errno = rc == 0 ? ETIMEDOUT : errno;
        rc = -1;
      }
    }
    if (rc != 0) {
      last_error = sys_error("connect " + host + ":" + service);
      continue;
    }
    ::fcntl(s.fd(), F_SETFL, flags);
    int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    ::freeaddrinfo(res);
    return TcpStream(std::move(s));
  }
  ::freeaddrinfo(res);
  throw net_error(last_error);
}

void TcpStream::set_read_timeout(std::chrono::milliseconds t) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(t.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((t.count() % 1000) * 1000);
  ::setsockopt(sock_.fd(), SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
}

bool TcpStream::fill() {
  if (pos_ > 0 && pos_ == buf_.size()) {
    buf_.clear();
    pos_ = 0;
  }
  char chunk[16384];
  for (;;) {
    const ssize_t n = ::recv(sock_.fd(), chunk, sizeof chunk, 0);
    if (n > 0) {
      buf_.append(chunk, static_cast<std::size_t>(n));
      bytes_read_ += static_cast<std::uint64_t>(n);
      return true;
    }
    if (n == 0) return false;
    if (errno == EINTR) continue;
    if (errno == EAGAIN || errno == EWOULDBLOCK) throw net_error("read timed out");
    throw net_error(sys_error("recv"));
  }
}

std::optional<LineRead> TcpStream::read_line(std::size_t max_len) {
  LineRead out;
  for (;;) {
    const auto nl = buf_.find('\n', pos_);
    const std::size_t end = nl == std::string::npos ? buf_.size() : nl + 1;
    const std::size_t take = end - pos_;
    if (!out.truncated) {
      if (out.data.size() + take > max_len) {
        out.data.append(buf_, pos_, max_len - out.data.size());
        out.truncated = true;
      } else {
        out.data.append(buf_, pos_, take);
      }
    }
    pos_ = end;
    if (nl != std::string::npos) return out;
    if (!fill()) {
      if (out.data.empty() && !out.truncated) return std::nullopt;
      throw net_error("connection closed mid-line");
    }
  }
}

std::string TcpStream::read_exact(std::size_t n) {
  std::string out;
  out.reserve(n);
  while (out.size() < n) {
    if (pos_ == buf_.size() && !fill()) throw net_error("connection closed inside a literal");
    const std::size_t take = std::min(n - out.size(), buf_.size() - pos_);
    out.append(buf_, pos_, take);
    pos_ += take;
  }
  return out;
}

void TcpStream::write_all(std::string_view bytes) {
  while (!bytes.empty()) {
    const ssize_t n = ::send(sock_.fd(), bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw net_error(sys_error("send"));
    }
    bytes_written_ += static_cast<std::uint64_t>(n);
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

void TcpStream::shutdown() {
  if (sock_.valid()) ::shutdown(sock_.fd(), SHUT_RDWR);
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw net_error("listen address must be an IPv4 literal, got '" + host + "'");
  }
  sock_ = Socket(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!sock_.valid()) throw net_error(sys_error("socket"));
  int one = 1;
  ::setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    throw net_error(sys_error("bind " + host + ":" + std::to_string(port)));
  }
  if (::listen(sock_.fd(), 128) != 0) throw net_error(sys_error("listen"));
  socklen_t len = sizeof addr;
  ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

std::optional<TcpStream> TcpListener::accept(std::chrono::milliseconds wait) {
  if (!sock_.valid()) return std::nullopt;
  pollfd pfd{sock_.fd(), POLLIN, 0};
  const int rc = ::poll(&pfd, 1, static_cast<int>(wait.count()));
  if (rc <= 0) return std::nullopt;
  Socket s(::accept4(sock_.fd(), nullptr, nullptr, SOCK_CLOEXEC));
  if (!s.valid()) return std::nullopt;
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return TcpStream(std::move(s));
}

}  // namespace ecomail::net
