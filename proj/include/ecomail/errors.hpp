#pragma once

#include <stdexcept>
#include <string>

namespace ecomail {

// Input outside the mathematical domain of an operation (negative energy,
// miss rate above one, N < 1, ...).
class domain_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Bad or inconsistent configuration: empty ring, unknown config key,
// duplicate node, unreachable upstream at startup.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Miss-rate fitting could not produce a model from the observations.
class fit_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed IMAP input. `tag` is whatever tag could be recovered (may be
// empty, in which case the reply uses "*").
class protocol_error : public std::runtime_error {
 public:
  protocol_error(std::string tag, const std::string& what)
      : std::runtime_error(what), tag_(std::move(tag)) {}
  const std::string& tag() const noexcept { return tag_; }

 private:
  std::string tag_;
};

// Malformed route CSV or region table.
class ingest_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ecomail
