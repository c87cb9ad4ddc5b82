#include "ecomail/imap/command.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "ecomail/errors.hpp"

namespace ecomail::imap {

namespace {

bool is_tag_char(unsigned char c) {
  if (c <= 0x20 || c >= 0x7f) return false;
  switch (c) {
    case '(': case ')': case '{': case '%': case '*': case '"': case '\\': case '+':
      return false;
    default:
      return true;
  }
}

bool is_atom_char(unsigned char c) { return is_tag_char(c) || c == '+'; }

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

bool all_alpha(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalpha(c); });
}

std::string_view next_token(std::string_view s, std::size_t& pos) {
  const std::size_t start = pos;
  while (pos < s.size() && s[pos] != ' ') ++pos;
  return s.substr(start, pos - start);
}

void skip_spaces(std::string_view s, std::size_t& pos) {
  while (pos < s.size() && s[pos] == ' ') ++pos;
}

bool known_command(const std::string& w) {
  static const char* const names[] = {"LOGIN", "SELECT", "EXAMINE", "LIST", "FETCH", "NOOP", "LOGOUT", "UID",
                                      "CAPABILITY", "STORE", "EXPUNGE", "APPEND", "CLOSE", "SEARCH", "STATUS"};
  return std::any_of(std::begin(names), std::end(names), [&](const char* n) { return w == n; });
}

// Section of a single-item fetch list, if it is one the proxy caches.
std::optional<std::string> cacheable_section_of(std::string_view items) {
  std::string s = upper(items);
  if (s.size() >= 2 && s.front() == '(' && s.back() == ')') s = s.substr(1, s.size() - 2);
  if (s == "BODY[]" || s == "RFC822") return s;
  return std::nullopt;
}

}  // namespace

std::string_view to_string(Verb v) {
  switch (v) {
    case Verb::Login: return "LOGIN";
    case Verb::Select: return "SELECT";
    case Verb::List: return "LIST";
    case Verb::Fetch: return "FETCH";
    case Verb::Noop: return "NOOP";
    case Verb::Logout: return "LOGOUT";
    case Verb::Opaque: return "OPAQUE";
  }
  return "OPAQUE";
}

std::optional<std::vector<std::uint64_t>> expand_sequence_set(std::string_view set, std::size_t limit) {
  std::vector<std::uint64_t> out;
  if (set.empty()) return std::nullopt;
  std::size_t pos = 0;
  auto number = [&](std::uint64_t& v) {
    const char* first = set.data() + pos;
    const char* last = set.data() + set.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr == first || v == 0) return false;
    pos += static_cast<std::size_t>(ptr - first);
    return true;
  };
  while (pos < set.size()) {
    if (set[pos] == '*') return std::nullopt;
    std::uint64_t lo = 0, hi = 0;
    if (!number(lo)) return std::nullopt;
    hi = lo;
    if (pos < set.size() && set[pos] == ':') {
      ++pos;
      if (pos < set.size() && set[pos] == '*') return std::nullopt;
      if (!number(hi)) return std::nullopt;
      if (hi < lo) std::swap(lo, hi);
    }
    if (hi - lo >= limit || out.size() + (hi - lo + 1) > limit) return std::nullopt;
    for (std::uint64_t v = lo; v <= hi; ++v) out.push_back(v);
    if (pos < set.size()) {
      if (set[pos] != ',') return std::nullopt;
      ++pos;
      if (pos == set.size()) return std::nullopt;
    }
  }
  return out;
}

std::optional<std::pair<std::size_t, bool>> trailing_literal(std::string_view line) {
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
  if (line.empty() || line.back() != '}') return std::nullopt;
  const auto open = line.rfind('{');
  if (open == std::string_view::npos) return std::nullopt;
  std::string_view body = line.substr(open + 1, line.size() - open - 2);
  bool nonsync = false;
  if (!body.empty() && body.back() == '+') {
    nonsync = true;
    body.remove_suffix(1);
  }
  std::size_t n = 0;
  auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), n);
  if (ec != std::errc() || ptr != body.data() + body.size() || body.empty()) return std::nullopt;
  return std::pair{n, nonsync};
}

std::optional<std::string> read_astring(std::string_view s, std::size_t& pos) {
  if (pos >= s.size()) return std::nullopt;
  if (s[pos] == '"') {
    std::string out;
    for (std::size_t i = pos + 1; i < s.size(); ++i) {
      if (s[i] == '\\' && i + 1 < s.size()) {
        out.push_back(s[++i]);
      } else if (s[i] == '"') {
        pos = i + 1;
        return out;
      } else {
        out.push_back(s[i]);
      }
    }
    return std::nullopt;
  }
  const std::size_t start = pos;
  while (pos < s.size() && (is_atom_char(static_cast<unsigned char>(s[pos])) || s[pos] == '*' || s[pos] == '%')) {
    ++pos;
  }
  if (pos == start) return std::nullopt;
  return std::string(s.substr(start, pos - start));
}

std::string quote_if_needed(std::string_view s) {
  const bool atom = !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return is_atom_char(c); });
  if (atom) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

ImapCommand parse_command(std::string_view line) {
  ImapCommand cmd;
  cmd.raw = std::string(line);

  std::string_view head = line;
  while (!head.empty() && (head.back() == '\n' || head.back() == '\r')) head.remove_suffix(1);
  std::size_t pos = 0;
  const std::string_view first = next_token(head, pos);
  const bool tag_ok =
      !first.empty() && std::all_of(first.begin(), first.end(), [](unsigned char c) { return is_tag_char(c); });
  const std::string tag = tag_ok ? std::string(first) : std::string();

  if (line.size() > kMaxCommandLine) throw protocol_error(tag, "command line too long");
  if (line.size() < 2 || line.substr(line.size() - 2) != "\r\n") {
    throw protocol_error(tag, "command line must end with CRLF");
  }
  std::string_view body = line.substr(0, line.size() - 2);
  if (!tag_ok) throw protocol_error("", "missing or invalid tag");
  cmd.tag = tag;

  pos = first.size();
  if (pos >= body.size() || body[pos] != ' ') {
    throw protocol_error(known_command(upper(first)) ? "" : tag, "missing command");
  }
  ++pos;
  const std::string word = upper(next_token(body, pos));
  if (!all_alpha(word)) {
    // "FETCH 1 BODY[]" parses as tag FETCH, command "1": the tag is missing.
    throw protocol_error(known_command(upper(first)) ? "" : tag, "missing command");
  }

  if (auto lit = trailing_literal(body)) {
    cmd.literal = lit->first;
    cmd.literal_nonsync = lit->second;
  }

  auto rest = [&]() {
    skip_spaces(body, pos);
    return body.substr(pos);
  };

  bool uid = false;
  std::string verb_word = word;
  if (word == "UID") {
    skip_spaces(body, pos);
    verb_word = upper(next_token(body, pos));
    if (!all_alpha(verb_word)) throw protocol_error(tag, "UID needs a command");
    uid = true;
  }
  cmd.name = uid ? "UID " + verb_word : verb_word;

  if (uid && verb_word != "FETCH") {
    cmd.verb = Verb::Opaque;
    return cmd;
  }

  if (verb_word == "LOGIN") {
    if (cmd.literal) throw protocol_error(tag, "LOGIN with literals is not supported");
    skip_spaces(body, pos);
    auto user = read_astring(body, pos);
    skip_spaces(body, pos);
    auto pass = read_astring(body, pos);
    if (!user || !pass || !rest().empty()) throw protocol_error(tag, "LOGIN expects user and password");
    cmd.verb = Verb::Login;
    cmd.args = LoginArgs{*user, *pass};
  } else if (verb_word == "SELECT" || verb_word == "EXAMINE") {
    if (cmd.literal) throw protocol_error(tag, "SELECT with literals is not supported");
    skip_spaces(body, pos);
    auto mailbox = read_astring(body, pos);
    if (!mailbox || !rest().empty()) throw protocol_error(tag, verb_word + " expects a mailbox name");
    cmd.verb = Verb::Select;
    // INBOX is case-insensitive.
    if (upper(*mailbox) == "INBOX") *mailbox = "INBOX";
    cmd.args = SelectArgs{*mailbox, verb_word == "EXAMINE"};
  } else if (verb_word == "LIST") {
    cmd.verb = Verb::List;
  } else if (verb_word == "NOOP") {
    cmd.verb = Verb::Noop;
  } else if (verb_word == "LOGOUT") {
    cmd.verb = Verb::Logout;
  } else if (verb_word == "FETCH") {
    skip_spaces(body, pos);
    const std::string_view set = next_token(body, pos);
    const std::string_view items = rest();
    if (set.empty() || items.empty()) throw protocol_error(tag, "FETCH expects a set and items");
    FetchArgs f;
    f.uid = uid;
    f.set = std::string(set);
    f.items = std::string(items);
    f.has_star = set.find('*') != std::string_view::npos;
    if (auto ids = expand_sequence_set(set)) {
      f.ids = std::move(*ids);
    } else if (!f.has_star) {
      if (set.find_first_not_of("0123456789:,") != std::string_view::npos) {
        throw protocol_error(tag, "malformed sequence set");
      }
    }
    f.cacheable_section = cacheable_section_of(items);
    cmd.verb = Verb::Fetch;
    cmd.args = std::move(f);
  } else {
    cmd.verb = Verb::Opaque;
  }
  return cmd;
}

}  // namespace ecomail::imap
