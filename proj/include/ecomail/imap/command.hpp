#pragma once

// Client-side IMAP command lines, parsed just far enough for the proxy to
// route them. Anything unrecognized stays OPAQUE and is relayed byte-exact.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ecomail::imap {

inline constexpr std::size_t kMaxCommandLine = 64 * 1024;

enum class Verb { Login, Select, List, Fetch, Noop, Logout, Opaque };
std::string_view to_string(Verb v);

struct LoginArgs {
  std::string user;
  std::string password;
};

struct SelectArgs {
  std::string mailbox;
  bool read_only = false;  // EXAMINE
};

struct FetchArgs {
  bool uid = false;             // UID FETCH vs sequence-number FETCH
  std::string set;              // as written
  std::string items;            // as written, e.g. "BODY[]" or "(FLAGS UID)"
  std::vector<std::uint64_t> ids;  // expanded set; empty when it uses '*' or is huge
  bool has_star = false;
  // "BODY[]" or "RFC822" when the item list is exactly that one item.
  std::optional<std::string> cacheable_section;

  bool cacheable() const { return uid && cacheable_section && !ids.empty(); }
};

struct ImapCommand {
  std::string tag;
  Verb verb = Verb::Opaque;
  std::string name;  // upper-cased command word(s), e.g. "UID STORE"
  std::variant<std::monostate, LoginArgs, SelectArgs, FetchArgs> args;
  std::string raw;   // the full line including CRLF
  // Byte count of a trailing literal announced on this line ({n} or {n+}).
  std::optional<std::size_t> literal;
  bool literal_nonsync = false;

  const FetchArgs& fetch() const { return std::get<FetchArgs>(args); }
};

// Throws protocol_error (tag empty when no valid tag could be recovered).
ImapCommand parse_command(std::string_view line);

// Expands "1,3:5" style sets. nullopt when the set contains '*', is
// malformed, or would expand past `limit` ids.
std::optional<std::vector<std::uint64_t>> expand_sequence_set(std::string_view set, std::size_t limit = 100000);

// Trailing literal marker of a line ("... {12}\r\n"): size and whether it is
// non-synchronizing ({12+}).
std::optional<std::pair<std::size_t, bool>> trailing_literal(std::string_view line);

// Parses one astring (atom or quoted string) starting at pos; advances pos.
std::optional<std::string> read_astring(std::string_view s, std::size_t& pos);

// Quotes a string for the wire if it is not a plain atom.
std::string quote_if_needed(std::string_view s);

}  // namespace ecomail::imap
