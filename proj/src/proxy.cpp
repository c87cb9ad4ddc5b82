#include "ecomail/proxy.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include "ecomail/errors.hpp"

namespace ecomail {

using imap::ImapCommand;
using imap::ResponseUnit;
using imap::Verb;

namespace {

bool one_of(const std::string& s, std::initializer_list<const char*> names) {
  return std::any_of(names.begin(), names.end(), [&](const char* n) { return s == n; });
}

std::string bad(const std::string& tag, std::string_view text) {
  return (tag.empty() ? std::string("*") : tag) + " BAD " + std::string(text) + "\r\n";
}

std::string recover_tag(std::string_view line) {
  const auto sp = line.find(' ');
  std::string tag(line.substr(0, sp == std::string_view::npos ? 0 : sp));
  if (tag.empty() || tag.size() > 64) return "";
  return tag;
}

}  // namespace

UpstreamEndpoint parse_endpoint(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == s.size()) {
    throw config_error("expected host:port, got '" + s + "'");
  }
  unsigned port = 0;
  const char* first = s.data() + colon + 1;
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, port);
  if (ec != std::errc() || ptr != last || port == 0 || port > 65535) {
    throw config_error("invalid port in '" + s + "'");
  }
  return {s.substr(0, colon), static_cast<std::uint16_t>(port)};
}

std::string to_string(SessionPhase p) {
  switch (p) {
    case SessionPhase::NotAuthenticated: return "NotAuthenticated";
    case SessionPhase::Authenticated: return "Authenticated";
    case SessionPhase::Selected: return "Selected";
    case SessionPhase::Closed: return "Closed";
  }
  return "Closed";
}

ProxySession::ProxySession(net::TcpStream client, const ProxyConfig& config, CacheTier& cache, TrafficLedger& global)
    : client_(std::move(client)), config_(config), cache_(cache), ledger_(global) {}

void ProxySession::interrupt() {
  client_.shutdown();
  upstream_.shutdown();
}

SessionSummary ProxySession::run() {
  SessionSummary summary;
  try {
    if (config_.client_idle_timeout.count() > 0) client_.set_read_timeout(config_.client_idle_timeout);
    if (!connect_upstream(config_.upstream, true)) {
      if (!upstream_alive_) reply("* BYE upstream server unavailable\r\n");
      state_.phase = SessionPhase::Closed;
    }
    while (state_.phase != SessionPhase::Closed) {
      auto line = client_.read_line(imap::kMaxCommandLine + 2);
      if (!line) break;
      ++commands_;
      if (line->truncated) {
        reply(bad(recover_tag(line->data), "command line too long"));
        continue;
      }
      ImapCommand cmd;
      try {
        cmd = imap::parse_command(line->data);
      } catch (const protocol_error& e) {
        reply(bad(e.tag(), e.what()));
        continue;
      }
      try {
        dispatch(cmd);
      } catch (const UpstreamLost&) {
        reply("* BYE upstream connection lost\r\n");
        break;
      }
    }
  } catch (const net::net_error&) {
    // Client went away or timed out.
  }
  upstream_.close();
  client_.close();
  summary.traffic = ledger_.local();
  summary.final_phase = state_.phase;
  summary.account = state_.account;
  summary.commands = commands_;
  return summary;
}

bool ProxySession::connect_upstream(const UpstreamEndpoint& ep, bool relay_greeting) {
  upstream_.close();
  upstream_alive_ = false;
  try {
    upstream_ = net::TcpStream::connect(ep.host, ep.port, config_.upstream_timeout);
    upstream_.set_read_timeout(config_.upstream_timeout);
    ResponseUnit greeting = imap::read_response_unit(upstream_);
    ledger_.upstream_bytes(0, greeting.bytes.size());
    upstream_ep_ = ep;
    if (relay_greeting) reply(greeting.bytes);
    if (greeting.status == "BYE") {
      upstream_.close();
      return false;
    }
    upstream_alive_ = true;
    return true;
  } catch (const net::net_error&) {
    upstream_.close();
    return false;
  }
}

void ProxySession::reply(std::string_view bytes) { client_.write_all(bytes); }

void ProxySession::fail_upstream() {
  upstream_alive_ = false;
  upstream_.close();
}

void ProxySession::send_upstream(std::string_view bytes) {
  if (!upstream_alive_) throw UpstreamLost{};
  try {
    upstream_.write_all(bytes);
  } catch (const net::net_error&) {
    fail_upstream();
    throw UpstreamLost{};
  }
  ledger_.upstream_bytes(bytes.size(), 0);
}

ResponseUnit ProxySession::read_upstream_unit() {
  if (!upstream_alive_) throw UpstreamLost{};
  try {
    ResponseUnit u = imap::read_response_unit(upstream_);
    ledger_.upstream_bytes(0, u.bytes.size());
    return u;
  } catch (const net::net_error&) {
    fail_upstream();
    throw UpstreamLost{};
  }
}

imap::TaggedResponse ProxySession::read_upstream_tagged(const std::string& tag) {
  imap::TaggedResponse r;
  for (;;) {
    r.units.push_back(read_upstream_unit());
    if (r.units.back().tag == tag) return r;
  }
}

void ProxySession::observe(const ResponseUnit& unit) {
  if (unit.tag != "*" || state_.phase != SessionPhase::Selected) return;
  if (auto seq = imap::parse_expunge_response(unit.bytes)) {
    if (*seq >= 1 && *seq <= state_.uids_by_seq.size()) {
      state_.uids_by_seq.erase(state_.uids_by_seq.begin() + static_cast<std::ptrdiff_t>(*seq - 1));
    }
    return;
  }
  if (auto f = imap::parse_fetch_response(unit.bytes); f && f->uid && f->seq >= 1) {
    if (state_.uids_by_seq.size() < f->seq) state_.uids_by_seq.resize(f->seq, 0);
    state_.uids_by_seq[f->seq - 1] = *f->uid;
  }
}

bool ProxySession::restore_upstream() {
  if (!connect_upstream(upstream_ep_, false)) return false;
  try {
    const std::string login = "ecm" + std::to_string(++internal_tag_);
    send_upstream(login + " LOGIN " + imap::quote_if_needed(state_.account) + " " + imap::quote_if_needed(password_) +
                  "\r\n");
    if (!read_upstream_tagged(login).ok()) {
      fail_upstream();
      return false;
    }
    if (state_.phase == SessionPhase::Selected) {
      const std::string sel = "ecm" + std::to_string(++internal_tag_);
      send_upstream(sel + (state_.read_only ? " EXAMINE " : " SELECT ") + imap::quote_if_needed(state_.mailbox) +
                    "\r\n");
      if (!read_upstream_tagged(sel).ok()) {
        fail_upstream();
        return false;
      }
      learn_uid_map();
    }
  } catch (const UpstreamLost&) {
    return false;
  }
  return true;
}

void ProxySession::dispatch(const ImapCommand& cmd) {
  if (!upstream_alive_ && cmd.verb != Verb::Logout && cmd.verb != Verb::Login &&
      state_.phase != SessionPhase::NotAuthenticated && !restore_upstream()) {
    reply(cmd.tag + " NO [UNAVAILABLE] upstream server unavailable\r\n");
    return;
  }
  switch (cmd.verb) {
    case Verb::Login:
      if (state_.phase != SessionPhase::NotAuthenticated) {
        reply(bad(cmd.tag, "already authenticated"));
        return;
      }
      handle_login(cmd);
      return;
    case Verb::Select:
      if (state_.phase == SessionPhase::NotAuthenticated) {
        reply(bad(cmd.tag, "SELECT requires LOGIN first"));
        return;
      }
      handle_select(cmd);
      return;
    case Verb::Fetch:
      if (state_.phase != SessionPhase::Selected) {
        reply(bad(cmd.tag, "FETCH requires a selected mailbox"));
        return;
      }
      handle_fetch(cmd);
      return;
    case Verb::Logout:
      handle_logout(cmd);
      return;
    case Verb::List:
    case Verb::Noop:
      forward_and_relay(cmd);
      return;
    case Verb::Opaque:
      handle_opaque(cmd);
      return;
  }
}

void ProxySession::handle_login(const ImapCommand& cmd) {
  const auto& login = std::get<imap::LoginArgs>(cmd.args);
  UpstreamEndpoint ep = config_.upstream;
  if (const auto at = login.user.rfind('@'); at != std::string::npos) {
    if (auto it = config_.domain_upstreams.find(login.user.substr(at + 1)); it != config_.domain_upstreams.end()) {
      ep = it->second;
    }
  }
  if (!upstream_alive_ || !(ep == upstream_ep_)) {
    if (!connect_upstream(ep, false)) {
      reply(cmd.tag + " NO [UNAVAILABLE] upstream server unavailable\r\n");
      return;
    }
  }
  const ResponseUnit done = forward_and_relay(cmd);
  if (done.status == "OK") {
    state_.phase = SessionPhase::Authenticated;
    state_.account = login.user;
    password_ = login.password;
  }
}

void ProxySession::handle_select(const ImapCommand& cmd) {
  const auto& sel = std::get<imap::SelectArgs>(cmd.args);
  const ResponseUnit done = forward_and_relay(cmd);
  state_.uids_by_seq.clear();
  if (done.status == "OK") {
    state_.phase = SessionPhase::Selected;
    state_.mailbox = sel.mailbox;
    state_.read_only = sel.read_only;
    learn_uid_map();
  } else {
    state_.phase = SessionPhase::Authenticated;
    state_.mailbox.clear();
  }
}

void ProxySession::learn_uid_map() {
  const std::string tag = "ecm" + std::to_string(++internal_tag_);
  send_upstream(tag + " UID SEARCH ALL\r\n");
  const imap::TaggedResponse r = read_upstream_tagged(tag);
  if (!r.ok()) return;
  for (const auto& u : r.units) {
    if (auto uids = imap::parse_search_response(u.bytes)) {
      std::sort(uids->begin(), uids->end());
      state_.uids_by_seq = std::move(*uids);
    }
  }
}

void ProxySession::handle_fetch(const ImapCommand& cmd) {
  const imap::FetchArgs& f = cmd.fetch();
  if (!f.cacheable()) {
    forward_and_relay(cmd);
    return;
  }
  const std::string& section = *f.cacheable_section;
  auto key_of = [&](std::uint64_t uid) { return CacheKey{state_.account, state_.mailbox, uid, section}; };

  std::vector<std::uint64_t> missing;
  std::set<std::uint64_t> seen;
  std::string hit_bytes;
  for (std::uint64_t uid : f.ids) {
    if (!seen.insert(uid).second) continue;
    const auto& map = state_.uids_by_seq;
    const auto it = std::find(map.begin(), map.end(), uid);
    if (it != map.end()) {
      if (auto payload = cache_.get(key_of(uid))) {
        const auto seq = static_cast<std::uint64_t>(it - map.begin()) + 1;
        hit_bytes += imap::synthesize_fetch_response(seq, uid, section, **payload);
        ledger_.hit((*payload)->size());
        continue;
      }
    }
    missing.push_back(uid);
  }
  if (!hit_bytes.empty()) reply(hit_bytes);
  if (missing.empty()) {
    reply(cmd.tag + " OK UID FETCH completed\r\n");
    return;
  }

  std::string set;
  for (std::uint64_t uid : missing) {
    if (!set.empty()) set += ',';
    set += std::to_string(uid);
  }
  imap::TaggedResponse resp;
  try {
    ledger_.upstream_request();
    send_upstream(cmd.tag + " UID FETCH " + set + " " + f.items + "\r\n");
    resp = read_upstream_tagged(cmd.tag);
  } catch (const UpstreamLost&) {
    for (std::size_t i = 0; i < missing.size(); ++i) ledger_.miss(0);
    reply(cmd.tag + " NO [UNAVAILABLE] upstream connection lost during FETCH\r\n");
    return;
  }

  std::map<std::uint64_t, std::string> fetched;
  std::string relay;
  for (const auto& u : resp.units) {
    observe(u);
    relay += u.bytes;
    if (u.tag != "*") continue;
    if (auto data = imap::parse_fetch_response(u.bytes); data && data->uid && data->body) {
      if (std::find(missing.begin(), missing.end(), *data->uid) != missing.end()) {
        fetched[*data->uid] = std::move(*data->body);
      }
    }
  }
  for (std::uint64_t uid : missing) {
    auto it = fetched.find(uid);
    ledger_.miss(it == fetched.end() ? 0 : it->second.size());
  }
  // Fill only from a complete, successful response.
  if (resp.ok()) {
    for (auto& [uid, body] : fetched) cache_.set(key_of(uid), make_payload(std::move(body)));
  }
  reply(relay);
}

void ProxySession::handle_logout(const ImapCommand& cmd) {
  if (upstream_alive_) {
    try {
      forward_and_relay(cmd);
    } catch (const UpstreamLost&) {
      reply("* BYE logging out\r\n" + cmd.tag + " OK LOGOUT completed\r\n");
    }
  } else {
    reply("* BYE logging out\r\n" + cmd.tag + " OK LOGOUT completed\r\n");
  }
  state_.phase = SessionPhase::Closed;
}

void ProxySession::handle_opaque(const ImapCommand& cmd) {
  if (one_of(cmd.name, {"IDLE", "AUTHENTICATE", "STARTTLS", "COMPRESS"})) {
    reply(bad(cmd.tag, cmd.name + " is not supported by this proxy"));
    return;
  }
  const bool writes = one_of(cmd.name, {"STORE", "UID STORE", "EXPUNGE", "UID EXPUNGE", "APPEND", "MOVE",
                                        "UID MOVE", "CLOSE"});
  if (writes && !state_.account.empty()) {
    if (state_.phase == SessionPhase::Selected) cache_.invalidate_mailbox(state_.account, state_.mailbox);
    if (cmd.name == "APPEND") {
      // "tag APPEND <mailbox> ..."
      std::size_t pos = cmd.raw.find(' ');
      pos = cmd.raw.find(' ', pos + 1);
      if (pos != std::string::npos) {
        ++pos;
        if (auto mailbox = imap::read_astring(cmd.raw, pos)) cache_.invalidate_mailbox(state_.account, *mailbox);
      }
    }
  }
  const ResponseUnit done = forward_and_relay(cmd);
  if (done.status == "OK" && one_of(cmd.name, {"CLOSE", "UNSELECT"})) {
    state_.phase = SessionPhase::Authenticated;
    state_.mailbox.clear();
    state_.uids_by_seq.clear();
  }
}

ResponseUnit ProxySession::forward_and_relay(const ImapCommand& cmd) {
  ledger_.upstream_request();
  send_upstream(cmd.raw);
  auto literal = cmd.literal ? std::optional<std::pair<std::size_t, bool>>({*cmd.literal, cmd.literal_nonsync})
                             : std::nullopt;
  while (literal) {
    if (!literal->second) {
      // Synchronizing literal: the server must invite it first.
      ResponseUnit u = read_upstream_unit();
      observe(u);
      reply(u.bytes);
      if (u.tag == cmd.tag) return u;
      if (!u.continuation()) continue;
    }
    std::string chunk = client_.read_exact(literal->first);
    auto rest = client_.read_line(imap::kMaxCommandLine + 2);
    if (!rest || rest->truncated) throw net::net_error("client literal continuation invalid");
    chunk += rest->data;
    send_upstream(chunk);
    literal = imap::trailing_literal(rest->data);
  }
  for (;;) {
    ResponseUnit u = read_upstream_unit();
    observe(u);
    reply(u.bytes);
    if (u.tag == cmd.tag) return u;
  }
}

ProxyServer::ProxyServer(ProxyConfig config, CacheTier& cache, TrafficLedger& ledger)
    : config_(std::move(config)), cache_(cache), ledger_(ledger) {}

ProxyServer::~ProxyServer() { stop(); }

void ProxyServer::start() {
  listener_ = std::make_unique<net::TcpListener>(config_.listen_host, config_.listen_port);
  port_ = listener_->port();
  stopping_ = false;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void ProxyServer::accept_loop() {
  while (!stopping_) {
    auto stream = listener_->accept(std::chrono::milliseconds(50));
    reap(false);
    if (!stream) continue;
    auto session = std::make_shared<ProxySession>(std::move(*stream), config_, cache_, ledger_);
    auto done = std::make_shared<std::atomic<bool>>(false);
    std::lock_guard lock(mu_);
    std::thread t([this, session, done] {
      SessionSummary s = session->run();
      {
        std::lock_guard inner(mu_);
        finished_.push_back(std::move(s));
      }
      *done = true;
    });
    live_.push_back({session, std::move(t), done});
  }
}

void ProxyServer::reap(bool all) {
  std::vector<std::thread> to_join;
  {
    std::lock_guard lock(mu_);
    for (auto it = live_.begin(); it != live_.end();) {
      if (all || *it->done) {
        to_join.push_back(std::move(it->thread));
        it = live_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& t : to_join) t.join();
}

void ProxyServer::stop() {
  if (!acceptor_.joinable()) return;
  stopping_ = true;
  acceptor_.join();
  {
    std::lock_guard lock(mu_);
    for (auto& l : live_) l.session->interrupt();
  }
  reap(true);
  if (listener_) listener_->close();
}

std::vector<SessionSummary> ProxyServer::finished_sessions() const {
  std::lock_guard lock(mu_);
  return finished_;
}

std::size_t ProxyServer::active_sessions() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& l : live_) n += !*l.done;
  return n;
}

}  // namespace ecomail
