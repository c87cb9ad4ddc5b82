#include "ecomail/imap/response.hpp"

#include <cctype>
#include <charconv>

#include "ecomail/imap/command.hpp"

namespace ecomail::imap {

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

bool read_number(std::string_view s, std::size_t& pos, std::uint64_t& v) {
  auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + s.size(), v);
  if (ec != std::errc() || ptr == s.data() + pos) return false;
  pos = static_cast<std::size_t>(ptr - s.data());
  return true;
}

bool expect(std::string_view s, std::size_t& pos, std::string_view lit) {
  if (s.substr(pos, lit.size()) != lit) return false;
  pos += lit.size();
  return true;
}

// Reader for the body of a FETCH response.
class FetchParser {
 public:
  explicit FetchParser(std::string_view s) : s_(s) {}

  std::optional<FetchData> parse() {
    FetchData out;
    if (!expect(s_, pos_, "* ")) return std::nullopt;
    if (!read_number(s_, pos_, out.seq)) return std::nullopt;
    if (!expect(s_, pos_, " ")) return std::nullopt;
    if (upper(s_.substr(pos_, 6)) != "FETCH ") return std::nullopt;
    pos_ += 6;
    if (!expect(s_, pos_, "(")) return std::nullopt;
    while (pos_ < s_.size() && s_[pos_] != ')') {
      skip_spaces();
      const std::string name = upper(item_name());
      if (name.empty()) return std::nullopt;
      skip_spaces();
      if (name == "UID") {
        std::uint64_t uid = 0;
        if (!read_number(s_, pos_, uid)) return std::nullopt;
        out.uid = uid;
      } else if (name == "BODY[]" || name == "RFC822") {
        auto v = string_value();
        if (!v) return std::nullopt;
        out.body = std::move(*v);
        out.body_item = name;
      } else if (!skip_value()) {
        return std::nullopt;
      }
      skip_spaces();
    }
    if (pos_ >= s_.size()) return std::nullopt;
    return out;
  }

 private:
  void skip_spaces() {
    while (pos_ < s_.size() && s_[pos_] == ' ') ++pos_;
  }

  // Item names may carry a bracketed section with spaces and a <partial>.
  std::string item_name() {
    const std::size_t start = pos_;
    int depth = 0;
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == '[') ++depth;
      if (c == ']') --depth;
      if (depth == 0 && (c == ' ' || c == ')')) break;
      ++pos_;
    }
    return std::string(s_.substr(start, pos_ - start));
  }

  std::optional<std::string> literal() {
    std::uint64_t n = 0;
    ++pos_;  // '{'
    if (!read_number(s_, pos_, n)) return std::nullopt;
    expect(s_, pos_, "+");
    if (!expect(s_, pos_, "}\r\n")) return std::nullopt;
    if (pos_ + n > s_.size()) return std::nullopt;
    std::string out(s_.substr(pos_, n));
    pos_ += n;
    return out;
  }

  std::optional<std::string> quoted() {
    std::size_t p = pos_;
    auto v = read_astring(s_, p);
    if (!v) return std::nullopt;
    pos_ = p;
    return v;
  }

  std::optional<std::string> string_value() {
    if (pos_ >= s_.size()) return std::nullopt;
    if (s_[pos_] == '{') return literal();
    if (s_[pos_] == '"') return quoted();
    if (upper(s_.substr(pos_, 3)) == "NIL") {
      pos_ += 3;
      return std::string();
    }
    return std::nullopt;
  }

  bool skip_value() {
    if (pos_ >= s_.size()) return false;
    const char c = s_[pos_];
    if (c == '{') return literal().has_value();
    if (c == '"') return quoted().has_value();
    if (c == '(') {
      ++pos_;
      for (;;) {
        skip_spaces();
        if (pos_ >= s_.size()) return false;
        if (s_[pos_] == ')') {
          ++pos_;
          return true;
        }
        if (!skip_value()) return false;
      }
    }
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ' ' && s_[pos_] != ')' && s_[pos_] != '(') ++pos_;
    return pos_ > start;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

ResponseUnit classify(std::string bytes) {
  ResponseUnit u;
  std::size_t sp = bytes.find(' ');
  std::string_view first = std::string_view(bytes).substr(0, std::min(sp, bytes.find('\r')));
  u.tag = std::string(first);
  if (u.tag.empty() && !bytes.empty() && bytes[0] == '+') u.tag = "+";
  if (sp != std::string::npos && u.tag != "+") {
    std::size_t p = sp + 1;
    const std::size_t end = bytes.find_first_of(" \r\n", p);
    const std::string word = upper(std::string_view(bytes).substr(p, end - p));
    if (word == "OK" || word == "NO" || word == "BAD" || word == "BYE" || word == "PREAUTH") u.status = word;
  }
  u.bytes = std::move(bytes);
  return u;
}

ResponseUnit read_response_unit(net::TcpStream& in) {
  std::string bytes;
  for (;;) {
    auto line = in.read_line(kMaxResponseLine);
    if (!line) throw net::net_error("upstream closed the connection");
    if (line->truncated) throw net::net_error("upstream response line too long");
    bytes += line->data;
    auto lit = trailing_literal(line->data);
    if (!lit) break;
    if (lit->first > kMaxLiteral) throw net::net_error("upstream literal too large");
    bytes += in.read_exact(lit->first);
  }
  return classify(std::move(bytes));
}

std::uint64_t TaggedResponse::byte_count() const {
  std::uint64_t n = 0;
  for (const auto& u : units) n += u.bytes.size();
  return n;
}

TaggedResponse read_until_tagged(net::TcpStream& in, const std::string& tag) {
  TaggedResponse r;
  for (;;) {
    r.units.push_back(read_response_unit(in));
    if (r.units.back().tag == tag) return r;
  }
}

std::optional<FetchData> parse_fetch_response(std::string_view unit) { return FetchParser(unit).parse(); }

std::optional<std::vector<std::uint64_t>> parse_search_response(std::string_view unit) {
  if (upper(unit.substr(0, 8)) != "* SEARCH") return std::nullopt;
  std::size_t pos = 8;
  std::vector<std::uint64_t> out;
  for (;;) {
    while (pos < unit.size() && unit[pos] == ' ') ++pos;
    if (pos >= unit.size() || unit[pos] == '\r' || unit[pos] == '\n') break;
    std::uint64_t v = 0;
    if (!read_number(unit, pos, v)) return std::nullopt;
    out.push_back(v);
  }
  return out;
}

std::optional<std::uint64_t> parse_expunge_response(std::string_view unit) {
  std::size_t pos = 0;
  std::uint64_t n = 0;
  if (!expect(unit, pos, "* ") || !read_number(unit, pos, n)) return std::nullopt;
  if (upper(unit.substr(pos, 8)) != " EXPUNGE") return std::nullopt;
  return n;
}

std::string synthesize_fetch_response(std::uint64_t seq, std::uint64_t uid, std::string_view item,
                                      std::string_view payload) {
  std::string out = "* " + std::to_string(seq) + " FETCH (UID " + std::to_string(uid) + " " + std::string(item) +
                    " {" + std::to_string(payload.size()) + "}\r\n";
  out += payload;
  out += ")\r\n";
  return out;
}

}  // namespace ecomail::imap
