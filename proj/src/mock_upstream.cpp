#include "ecomail/mock_upstream.hpp"

#include <algorithm>
#include <cctype>

#include "ecomail/errors.hpp"
#include "ecomail/imap/command.hpp"
#include "ecomail/json_util.hpp"

namespace ecomail {

namespace {

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

// Splits "(FLAGS BODY[HEADER.FIELDS (FROM)])" into top-level items.
std::vector<std::string> split_items(std::string items) {
  if (items.size() >= 2 && items.front() == '(' && items.back() == ')') items = items.substr(1, items.size() - 2);
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : items) {
    if (c == '[' || c == '(') ++depth;
    if (c == ']' || c == ')') --depth;
    if (c == ' ' && depth == 0) {
      if (!cur.empty()) out.push_back(upper(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(upper(cur));
  return out;
}

struct Session {
  MockAccount* account = nullptr;
  std::vector<MockMessage>* mailbox = nullptr;
  std::string mailbox_name;
};

}  // namespace

MockFixture mock_fixture_from_json(const nlohmann::json& j) {
  MockFixture f;
  StrictObject root(j, "fixture");
  for (const auto& a : root.sub("accounts")) {
    StrictObject ao(a, "fixture.accounts[]");
    MockAccount acc;
    acc.user = ao.required<std::string>("user");
    acc.password = ao.required<std::string>("password");
    for (const auto& [name, msgs] : ao.sub("mailboxes").items()) {
      auto& box = acc.mailboxes[name];
      for (const auto& m : msgs) {
        StrictObject mo(m, "fixture.message");
        box.push_back({mo.required<std::uint64_t>("uid"), mo.required<std::string>("payload")});
        mo.finish();
      }
      std::sort(box.begin(), box.end(), [](const auto& x, const auto& y) { return x.uid < y.uid; });
    }
    ao.finish();
    f.accounts.push_back(std::move(acc));
  }
  root.finish();
  return f;
}

MockUpstream::MockUpstream(MockFixture fixture, MockOptions options)
    : fixture_(std::move(fixture)), options_(options), truncate_fetch_(options.truncate_fetch) {}

MockUpstream::~MockUpstream() { stop(); }

void MockUpstream::start(std::uint16_t port, const std::string& host) {
  listener_ = std::make_unique<net::TcpListener>(host, port);
  port_ = listener_->port();
  acceptor_ = std::thread([this] { accept_loop(); });
}

void MockUpstream::stop() {
  if (!acceptor_.joinable()) return;
  stopping_ = true;
  acceptor_.join();
  {
    std::lock_guard lock(mu_);
    for (auto& s : streams_) s->shutdown();
  }
  for (auto& w : workers_) w.join();
  workers_.clear();
  streams_.clear();
  listener_->close();
}

std::uint64_t MockUpstream::count(const std::string& command) const {
  std::lock_guard lock(mu_);
  auto it = counts_.find(command);
  return it == counts_.end() ? 0 : it->second;
}

std::map<std::string, std::uint64_t> MockUpstream::counts() const {
  std::lock_guard lock(mu_);
  return counts_;
}

void MockUpstream::accept_loop() {
  while (!stopping_) {
    auto s = listener_->accept(std::chrono::milliseconds(50));
    if (!s) continue;
    auto stream = std::make_shared<net::TcpStream>(std::move(*s));
    std::lock_guard lock(mu_);
    streams_.push_back(stream);
    workers_.emplace_back([this, stream] {
      try {
        serve(*stream);
      } catch (const std::exception&) {
      }
      stream->close();
    });
  }
}

void MockUpstream::serve(net::TcpStream& io) {
  Session s;
  auto send = [&](const std::string& bytes) {
    if (options_.latency.count() > 0) std::this_thread::sleep_for(options_.latency);
    io.write_all(bytes);
  };
  send("* OK [CAPABILITY IMAP4rev1 LITERAL+] mock upstream ready\r\n");

  for (;;) {
    auto line = io.read_line(imap::kMaxCommandLine + 2);
    if (!line) return;
    imap::ImapCommand cmd;
    try {
      cmd = imap::parse_command(line->data);
    } catch (const protocol_error& e) {
      send((e.tag().empty() ? "*" : e.tag()) + " BAD " + e.what() + "\r\n");
      continue;
    }
    {
      std::lock_guard lock(mu_);
      ++counts_[cmd.name];
    }
    const std::string& tag = cmd.tag;

    if (cmd.name == "CAPABILITY") {
      send("* CAPABILITY IMAP4rev1 LITERAL+\r\n" + tag + " OK CAPABILITY completed\r\n");
    } else if (cmd.name == "NOOP") {
      send(tag + " OK NOOP completed\r\n");
    } else if (cmd.name == "LOGOUT") {
      send("* BYE mock upstream logging out\r\n" + tag + " OK LOGOUT completed\r\n");
      return;
    } else if (cmd.verb == imap::Verb::Login) {
      const auto& l = std::get<imap::LoginArgs>(cmd.args);
      std::lock_guard lock(mu_);
      auto it = std::find_if(fixture_.accounts.begin(), fixture_.accounts.end(),
                             [&](const MockAccount& a) { return a.user == l.user && a.password == l.password; });
      if (it == fixture_.accounts.end()) {
        send(tag + " NO [AUTHENTICATIONFAILED] invalid credentials\r\n");
      } else {
        s.account = &*it;
        send(tag + " OK LOGIN completed\r\n");
      }
    } else if (!s.account) {
      send(tag + " BAD not authenticated\r\n");
    } else if (cmd.verb == imap::Verb::Select) {
      const auto& sel = std::get<imap::SelectArgs>(cmd.args);
      std::lock_guard lock(mu_);
      auto it = s.account->mailboxes.find(sel.mailbox);
      if (it == s.account->mailboxes.end()) {
        s.mailbox = nullptr;
        send(tag + " NO [NONEXISTENT] no such mailbox\r\n");
      } else {
        s.mailbox = &it->second;
        s.mailbox_name = sel.mailbox;
        const std::uint64_t next = it->second.empty() ? 1 : it->second.back().uid + 1;
        send("* FLAGS (\\Seen \\Deleted)\r\n* " + std::to_string(it->second.size()) +
             " EXISTS\r\n* OK [UIDVALIDITY 1] UIDs valid\r\n* OK [UIDNEXT " + std::to_string(next) +
             "] predicted next UID\r\n" + tag + (sel.read_only ? " OK [READ-ONLY]" : " OK [READ-WRITE]") +
             " SELECT completed\r\n");
      }
    } else if (cmd.verb == imap::Verb::List) {
      std::string out;
      std::lock_guard lock(mu_);
      for (const auto& [name, _] : s.account->mailboxes) {
        out += "* LIST () \"/\" " + imap::quote_if_needed(name) + "\r\n";
      }
      send(out + tag + " OK LIST completed\r\n");
    } else if (cmd.name == "APPEND") {
      std::size_t pos = cmd.raw.find(' ', cmd.raw.find(' ') + 1) + 1;
      auto box = imap::read_astring(cmd.raw, pos);
      if (!box || !cmd.literal) {
        send(tag + " BAD APPEND needs a mailbox and a literal\r\n");
        continue;
      }
      if (!cmd.literal_nonsync) send("+ Ready for literal data\r\n");
      std::string data = io.read_exact(*cmd.literal);
      io.read_line(imap::kMaxCommandLine + 2);
      std::lock_guard lock(mu_);
      auto& msgs = s.account->mailboxes[*box];
      const std::uint64_t uid = msgs.empty() ? 1 : msgs.back().uid + 1;
      msgs.push_back({uid, std::move(data)});
      send(tag + " OK [APPENDUID 1 " + std::to_string(uid) + "] APPEND completed\r\n");
    } else if (!s.mailbox) {
      send(tag + " BAD no mailbox selected\r\n");
    } else if (cmd.name == "UID SEARCH") {
      std::string out = "* SEARCH";
      std::lock_guard lock(mu_);
      for (const auto& m : *s.mailbox) out += " " + std::to_string(m.uid);
      send(out + "\r\n" + tag + " OK SEARCH completed\r\n");
    } else if (cmd.name == "STORE" || cmd.name == "UID STORE") {
      send(tag + " OK STORE completed\r\n");
    } else if (cmd.name == "EXPUNGE" || cmd.name == "CLOSE") {
      send(tag + " OK " + cmd.name + " completed\r\n");
      if (cmd.name == "CLOSE") s.mailbox = nullptr;
    } else if (cmd.verb == imap::Verb::Fetch) {
      const auto& f = cmd.fetch();
      const auto items = split_items(f.items);
      std::string out;
      bool cut = false;
      {
        std::lock_guard lock(mu_);
        const auto& msgs = *s.mailbox;
        for (std::size_t i = 0; i < msgs.size() && !cut; ++i) {
          const std::uint64_t seq = i + 1;
          const std::uint64_t key = f.uid ? msgs[i].uid : seq;
          const bool wanted = f.has_star ? true : std::find(f.ids.begin(), f.ids.end(), key) != f.ids.end();
          if (!wanted) continue;
          std::string resp = "* " + std::to_string(seq) + " FETCH (";
          bool first = true;
          auto item = [&](const std::string& text) {
            if (!first) resp += ' ';
            resp += text;
            first = false;
          };
          if (f.uid) item("UID " + std::to_string(msgs[i].uid));
          for (const auto& it : items) {
            if (it == "UID") {
              if (!f.uid) item("UID " + std::to_string(msgs[i].uid));
            } else if (it == "FLAGS") {
              item("FLAGS ()");
            } else if (it == "RFC822.SIZE") {
              item("RFC822.SIZE " + std::to_string(msgs[i].payload.size()));
            } else if (it == "BODY[]" || it == "BODY.PEEK[]" || it == "RFC822") {
              const std::string name = it == "RFC822" ? "RFC822" : "BODY[]";
              const std::string& p = msgs[i].payload;
              if (truncate_fetch_) {
                item(name + " {" + std::to_string(p.size()) + "}\r\n" + p.substr(0, p.size() / 2));
                cut = true;
                break;
              }
              item(name + " {" + std::to_string(p.size()) + "}\r\n" + p);
            }
          }
          out += resp;
          if (!cut) out += ")\r\n";
        }
      }
      if (cut) {
        send(out);
        return;  // drop the connection mid-literal
      }
      send(out + tag + " OK " + (f.uid ? "UID FETCH" : "FETCH") + " completed\r\n");
    } else {
      send(tag + " BAD unsupported command\r\n");
    }
  }
}

}  // namespace ecomail
