#pragma once

// Server-side IMAP responses as the proxy sees them: units of one line plus
// any literals it announces, kept byte-exact for relaying.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ecomail/net.hpp"

namespace ecomail::imap {

inline constexpr std::size_t kMaxResponseLine = 1024 * 1024;
inline constexpr std::size_t kMaxLiteral = 256 * 1024 * 1024;

struct ResponseUnit {
  std::string bytes;      // exact wire bytes
  std::string tag;        // "*" for untagged, "+" for continuation
  std::string status;     // OK / NO / BAD / BYE / PREAUTH, upper-cased; empty otherwise
  bool tagged() const { return tag != "*" && tag != "+"; }
  bool continuation() const { return tag == "+"; }
};

// Reads one unit (a line, then for each trailing {n} the literal and the
// continuation of the line). Throws net::net_error on EOF.
ResponseUnit read_response_unit(net::TcpStream& in);

struct TaggedResponse {
  std::vector<ResponseUnit> units;  // untagged units then the completion
  const ResponseUnit& completion() const { return units.back(); }
  bool ok() const { return completion().status == "OK"; }
  std::uint64_t byte_count() const;
};

// Reads until the completion carrying `tag`. A BYE before it is kept in the
// units and reading continues, as the completion normally follows.
TaggedResponse read_until_tagged(net::TcpStream& in, const std::string& tag);

// Classify a unit from its bytes.
ResponseUnit classify(std::string bytes);

struct FetchData {
  std::uint64_t seq = 0;
  std::optional<std::uint64_t> uid;
  // Payload of BODY[] or RFC822 when present, with the item name.
  std::optional<std::string> body;
  std::string body_item;
};

// Parses "* n FETCH (...)". nullopt if the unit is not a FETCH response or is
// malformed.
std::optional<FetchData> parse_fetch_response(std::string_view unit);

// "* SEARCH 1 5 9" -> {1, 5, 9}; nullopt if not a SEARCH response.
std::optional<std::vector<std::uint64_t>> parse_search_response(std::string_view unit);

// "* 3 EXPUNGE" -> 3.
std::optional<std::uint64_t> parse_expunge_response(std::string_view unit);

// Untagged FETCH response carrying a full message.
std::string synthesize_fetch_response(std::uint64_t seq, std::uint64_t uid, std::string_view item,
                                      std::string_view payload);

}  // namespace ecomail::imap
