// SPDX-License-Identifier: Apache-2.0
#include "pftlog/net.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <variant>

#include <json.hpp>

#include "pftlog/crypto.hpp"
#include "pftlog/kv.hpp"
#include "pftlog/wire.hpp"

namespace pftlog {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

int set_nodelay(int fd) {
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

// Connect with a bounded wait; -1 on failure.
int dial(const HostPort& hp, int timeout_ms) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(hp.host.c_str(), std::to_string(hp.port).c_str(), &hints, &res) != 0) return -1;
  int fd = -1;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = socket(ai->ai_family, SOCK_STREAM, 0);
    if (fd < 0) continue;
    const int flags = fcntl(fd, F_GETFL, 0);
    fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = connect(fd, ai->ai_addr, ai->ai_addrlen);
    bool ok = rc == 0;
    if (!ok && errno == EINPROGRESS) {
      pollfd p{fd, POLLOUT, 0};
      if (poll(&p, 1, timeout_ms) == 1) {
        int err = 0;
        socklen_t len = sizeof err;
        getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        ok = err == 0;
      }
    }
    if (ok) {
      fcntl(fd, F_SETFL, flags);
      break;
    }
    close(fd);
    fd = -1;
  }
  freeaddrinfo(res);
  return fd < 0 ? -1 : set_nodelay(fd);
}

int listen_on(const HostPort& hp) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (getaddrinfo(hp.host.empty() ? nullptr : hp.host.c_str(), std::to_string(hp.port).c_str(),
                  &hints, &res) != 0)
    throw std::runtime_error("cannot resolve listen address " + hp.host);
  int fd = -1;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = socket(ai->ai_family, SOCK_STREAM, 0);
    if (fd < 0) continue;
    int one = 1;
    setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && listen(fd, 64) == 0) break;
    close(fd);
    fd = -1;
  }
  freeaddrinfo(res);
  if (fd < 0)
    throw std::runtime_error("cannot bind " + hp.host + ":" + std::to_string(hp.port));
  return fd;
}

bool send_all(int fd, const Bytes& b) {
  std::size_t off = 0;
  while (off < b.size()) {
    const ssize_t n = send(fd, b.data() + off, b.size() - off, MSG_NOSIGNAL);
    if (n <= 0) {
      if (n < 0 && (errno == EINTR)) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

Bytes frame_message(const Message& m) { return encode_frame(kFrameTypeMessage, encode_message(m)); }

}  // namespace

HostPort parse_host_port(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon + 1 >= s.size())
    throw std::invalid_argument("expected host:port, got '" + s + "'");
  HostPort hp;
  hp.host = s.substr(0, colon);
  const std::string port = s.substr(colon + 1);
  const unsigned long v = std::stoul(port);
  if (v == 0 || v > 65535) throw std::invalid_argument("bad port in '" + s + "'");
  hp.port = static_cast<std::uint16_t>(v);
  if (hp.host.empty()) hp.host = "127.0.0.1";
  return hp;
}

std::string runner_config_to_json(const RunnerConfig& cfg) {
  json j;
  j["id"] = cfg.id;
  j["params"] = {{"platforms", cfg.params.platform_sizes},
                 {"pi_safe", cfg.params.pi_safe},
                 {"pi_live", cfg.params.pi_live},
                 {"c", cfg.params.c}};
  json opts;
  opts["signing_interval"] = cfg.options.signing_interval;
  opts["lag_window"] = cfg.options.lag_window;
  opts["timeout_base"] = cfg.options.timeout_base;
  opts["timeout_backoff"] = cfg.options.timeout_backoff;
  opts["max_backoff_doublings"] = cfg.options.max_backoff_doublings;
  opts["auditing_enabled"] = cfg.options.auditing_enabled;
  opts["stabilization_enabled"] = cfg.options.stabilization_enabled;
  opts["relaxed_rule1"] = cfg.options.relaxed_rule1;
  if (cfg.options.fast_path_override.has_value())
    opts["fast_path_override"] = *cfg.options.fast_path_override;
  opts["max_batch_txns"] = cfg.options.max_batch_txns;
  opts["max_sync_batches"] = cfg.options.max_sync_batches;
  j["options"] = opts;
  j["crypto"] = cfg.crypto;
  j["cluster_seed"] = cfg.cluster_seed;
  j["peers"] = cfg.peers;
  j["wal_path"] = cfg.wal_path;
  j["tick_ms"] = cfg.tick_ms;
  j["heartbeat_ms"] = cfg.heartbeat_ms;
  j["quiet"] = cfg.quiet;
  return j.dump(2);
}

RunnerConfig runner_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  RunnerConfig cfg;
  cfg.id = j.value("id", cfg.id);
  if (j.contains("params")) {
    const auto& p = j.at("params");
    cfg.params.platform_sizes = p.value("platforms", std::vector<std::uint32_t>{});
    cfg.params.pi_safe = p.value("pi_safe", cfg.params.pi_safe);
    cfg.params.pi_live = p.value("pi_live", cfg.params.pi_live);
    cfg.params.c = p.value("c", cfg.params.c);
  }
  if (j.contains("options")) {
    const auto& o = j.at("options");
    cfg.options.signing_interval = o.value("signing_interval", cfg.options.signing_interval);
    cfg.options.lag_window = o.value("lag_window", cfg.options.lag_window);
    cfg.options.timeout_base = o.value("timeout_base", cfg.options.timeout_base);
    cfg.options.timeout_backoff = o.value("timeout_backoff", cfg.options.timeout_backoff);
    cfg.options.max_backoff_doublings =
        o.value("max_backoff_doublings", cfg.options.max_backoff_doublings);
    cfg.options.auditing_enabled = o.value("auditing_enabled", cfg.options.auditing_enabled);
    cfg.options.stabilization_enabled =
        o.value("stabilization_enabled", cfg.options.stabilization_enabled);
    cfg.options.relaxed_rule1 = o.value("relaxed_rule1", cfg.options.relaxed_rule1);
    if (o.contains("fast_path_override") && !o.at("fast_path_override").is_null())
      cfg.options.fast_path_override = o.at("fast_path_override").get<bool>();
    cfg.options.max_batch_txns = o.value("max_batch_txns", cfg.options.max_batch_txns);
    cfg.options.max_sync_batches = o.value("max_sync_batches", cfg.options.max_sync_batches);
  }
  cfg.crypto = j.value("crypto", cfg.crypto);
  cfg.cluster_seed = j.value("cluster_seed", cfg.cluster_seed);
  cfg.peers = j.value("peers", cfg.peers);
  cfg.wal_path = j.value("wal_path", cfg.wal_path);
  cfg.tick_ms = j.value("tick_ms", cfg.tick_ms);
  cfg.heartbeat_ms = j.value("heartbeat_ms", cfg.heartbeat_ms);
  cfg.quiet = j.value("quiet", cfg.quiet);
  return cfg;
}

// ---------------------------------------------------------------------------

struct NetReplica::Impl {
  struct Conn {
    int fd = -1;
    std::mutex write_mu;
    std::atomic<bool> open{true};
  };

  struct Event {
    enum class Kind { peer, client, status };
    Kind kind = Kind::peer;
    ReplicaId from = 0;
    Message msg;
    std::shared_ptr<Conn> conn;
  };

  struct PeerLink {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Bytes> q;
    std::thread th;
    int fd = -1;
    Clock::time_point next_dial{};
  };

  RunnerConfig cfg;
  QuorumProfile profile;
  const SignatureScheme* scheme = nullptr;
  std::vector<PublicKey> keys;
  std::unique_ptr<Replica> engine;
  KvApp kv;
  std::unique_ptr<WriteAheadLog> wal;
  SeqNo walled_tip = 0;

  std::mutex mu;
  std::condition_variable cv;
  std::deque<Event> queue;
  std::atomic<bool> stopping{false};
  std::atomic<bool> running{false};
  bool started = false;

  std::optional<Clock::time_point> timer_at;
  std::uint64_t timer_gen = 0;
  Clock::time_point heartbeat_at{};

  int listen_fd = -1;
  int wake_pipe[2] = {-1, -1};
  std::thread accept_th;
  std::thread engine_th;
  std::vector<std::unique_ptr<PeerLink>> links;

  std::mutex conns_mu;
  std::vector<std::shared_ptr<Conn>> conns;
  std::vector<std::thread> readers;
  std::map<std::uint64_t, std::weak_ptr<Conn>> client_conns;

  std::mutex snap_mu;
  ReplicaSnapshot snap;

  explicit Impl(RunnerConfig c)
      : cfg(std::move(c)), profile(validate_config(cfg.params)) {
    scheme = scheme_by_name(cfg.crypto);
    if (scheme == nullptr) throw std::runtime_error("unknown signature scheme: " + cfg.crypto);
    if (cfg.peers.size() != profile.n)
      throw std::runtime_error("peer list size does not match replica count");
    if (cfg.id >= profile.n) throw std::runtime_error("replica id out of range");
    SecretKey sk{};
    for (std::uint32_t i = 0; i < profile.n; ++i) {
      KeyPair kp = keypair_for_replica(*scheme, cfg.cluster_seed, i);
      keys.push_back(kp.pk);
      if (i == cfg.id) sk = kp.sk;
    }
    engine = std::make_unique<Replica>(cfg.id, profile, cfg.options, *scheme, keys, sk);
    links.resize(profile.n);
    for (std::uint32_t i = 0; i < profile.n; ++i)
      if (i != cfg.id) links[i] = std::make_unique<PeerLink>();
  }

  void note(const std::string& line) {
    if (cfg.quiet) return;
    std::fprintf(stderr, "[replica %u] %s\n", cfg.id, line.c_str());
  }

  KvApp::BatchFetch fetch() {
    return [this](SeqNo s) { return engine->batch_at(s); };
  }

  // Durable capture of one effect list: view transitions, the deepest
  // rollback, then new chain suffix batches, then this replica's own votes.
  // The order mirrors what replay feeds back through the restore calls.
  void wal_capture(const Effects& fx) {
    if (wal == nullptr) return;
    std::optional<SeqNo> rollback_to;
    for (const auto& e : fx) {
      if (const auto* va = std::get_if<ViewAdvancedEffect>(&e)) wal->append_view(va->view, false);
      if (const auto* st = std::get_if<StabilizedEffect>(&e)) wal->append_view(st->view, true);
      if (const auto* rb = std::get_if<RolledBackEffect>(&e))
        rollback_to = rollback_to ? std::min(*rollback_to, rb->to) : rb->to;
    }
    if (rollback_to) {
      wal->append_rollback(*rollback_to);
      walled_tip = std::min(walled_tip, *rollback_to);
    }
    for (SeqNo s = walled_tip + 1; s <= engine->tip_seq(); ++s) {
      const Batch* b = engine->batch_at(s);
      if (b == nullptr) break;
      wal->append_batch(*b);
      walled_tip = s;
    }
    for (const auto& e : fx) {
      if (const auto* se = std::get_if<SendEffect>(&e)) {
        if (const auto* v = std::get_if<VoteMsg>(&se->msg))
          wal->append_vote(engine->view(), v->seq, v->batch_digest);
      }
      if (const auto* pe = std::get_if<ProposedEffect>(&e)) {
        if (engine->chain().covers(pe->seq))
          wal->append_vote(engine->view(), pe->seq, engine->chain().at(pe->seq));
      }
    }
    wal->flush();
  }

  void peer_send(ReplicaId to, const Message& m) {
    if (to >= profile.n || to == cfg.id || links[to] == nullptr) return;
    PeerLink& link = *links[to];
    Bytes frame = frame_message(m);
    std::lock_guard lk(link.mu);
    if (link.q.size() >= 8192) link.q.pop_front();
    link.q.push_back(std::move(frame));
    link.cv.notify_one();
  }

  void client_send(std::uint64_t client_id, const ClientReplyMsg& reply) {
    ClientReplyMsg out = reply;
    // Surface the value a read observed, when the application has it.
    if (out.status == ClientReplyStatus::committed || out.status == ClientReplyStatus::audited) {
      auto r = kv.read_result(out.client_id, out.client_seq,
                              out.status == ClientReplyStatus::audited);
      if (r.has_value() && r->has_value()) {
        out.has_value = true;
        out.value = **r;
      }
    }
    std::shared_ptr<Conn> conn;
    {
      std::lock_guard lk(conns_mu);
      auto it = client_conns.find(client_id);
      if (it != client_conns.end()) conn = it->second.lock();
    }
    if (conn == nullptr || !conn->open.load()) return;
    const Bytes frame = frame_message(Message{out});
    std::lock_guard lk(conn->write_mu);
    if (conn->open.load()) send_all(conn->fd, frame);
  }

  void handle_effects(const Effects& fx) {
    if (fx.empty()) return;
    wal_capture(fx);
    for (const auto& e : fx) {
      std::visit(
          [&](const auto& eff) {
            using T = std::decay_t<decltype(eff)>;
            if constexpr (std::is_same_v<T, SendEffect>) {
              peer_send(eff.to, eff.msg);
            } else if constexpr (std::is_same_v<T, BroadcastEffect>) {
              for (std::uint32_t r = 0; r < profile.n; ++r)
                if (r != cfg.id) peer_send(r, eff.msg);
            } else if constexpr (std::is_same_v<T, ClientSendEffect>) {
              client_send(eff.client_id, std::get<ClientReplyMsg>(eff.msg));
            } else if constexpr (std::is_same_v<T, ArmTimerEffect>) {
              timer_gen = eff.gen;
              timer_at = Clock::now() + std::chrono::milliseconds(eff.duration * cfg.tick_ms);
            } else if constexpr (std::is_same_v<T, CommittedEffect>) {
              const Batch* b = engine->batch_at(eff.upto);
              if (b != nullptr) kv.apply_committed(*b);
            } else if constexpr (std::is_same_v<T, AuditedEffect>) {
              kv.advance_audited(eff.upto, fetch());
            } else if constexpr (std::is_same_v<T, RolledBackEffect>) {
              note("rolled back to " + std::to_string(eff.to));
              kv.rollback_committed(std::min(kv.committed_seq(), eff.to), fetch());
            } else if constexpr (std::is_same_v<T, ViewAdvancedEffect>) {
              note("view " + std::to_string(eff.view) + ", leader " + std::to_string(eff.leader));
            } else if constexpr (std::is_same_v<T, StabilizedEffect>) {
              note("view " + std::to_string(eff.view) + " stable");
            }
          },
          e);
    }
    std::lock_guard lk(snap_mu);
    snap = engine->snapshot();
  }

  void restore() {
    std::size_t records = 0;
    if (!cfg.wal_path.empty()) {
      wal = std::make_unique<WriteAheadLog>(cfg.wal_path);
      WalReplayHooks hooks;
      hooks.on_batch = [this](const Batch& b) { engine->restore_batch(b); };
      hooks.on_vote = [this](const WalVoteRecord& v) {
        engine->restore_vote(v.view, v.seq, v.digest);
      };
      hooks.on_view = [this](const WalViewRecord& v) { engine->restore_view(v.view, v.stable); };
      hooks.on_rollback = [this](SeqNo to) { engine->restore_rollback(to); };
      records = wal->open_and_replay(hooks);
      walled_tip = engine->tip_seq();
      for (SeqNo s = 1; s <= engine->commit_index(); ++s) {
        const Batch* b = engine->batch_at(s);
        if (b != nullptr) kv.apply_committed(*b);
      }
      kv.advance_audited(engine->audit_index(), fetch());
    }
    if (records > 0) {
      note("replayed " + std::to_string(records) + " log records, tip " +
           std::to_string(engine->tip_seq()) + ", view " + std::to_string(engine->view()));
      handle_effects(engine->finish_restore());
    } else {
      handle_effects(engine->start());
    }
    std::lock_guard lk(snap_mu);
    snap = engine->snapshot();
  }

  void enqueue(Event ev) {
    std::lock_guard lk(mu);
    queue.push_back(std::move(ev));
    cv.notify_one();
  }

  void engine_loop() {
    heartbeat_at = Clock::now() + std::chrono::milliseconds(cfg.heartbeat_ms);
    for (;;) {
      std::vector<Event> batch;
      {
        std::unique_lock lk(mu);
        Clock::time_point until = heartbeat_at;
        if (timer_at && *timer_at < until) until = *timer_at;
        cv.wait_until(lk, until, [&] { return stopping.load() || !queue.empty(); });
        if (stopping.load()) return;
        while (!queue.empty()) {
          batch.push_back(std::move(queue.front()));
          queue.pop_front();
        }
      }
      for (auto& ev : batch) {
        switch (ev.kind) {
          case Event::Kind::peer:
            handle_effects(engine->on_message(ev.from, ev.msg));
            break;
          case Event::Kind::client: {
            const auto& req = std::get<ClientRequestMsg>(ev.msg);
            handle_effects(engine->on_client_request(req.client_id, req));
            break;
          }
          case Event::Kind::status: {
            const ReplicaSnapshot s = engine->snapshot();
            StatusReplyMsg reply{s.id,           s.view,        s.view_stable, s.leader,
                                 s.commit_index, s.audit_index, s.tip_seq,     s.tip};
            if (ev.conn != nullptr && ev.conn->open.load()) {
              const Bytes frame = frame_message(Message{reply});
              std::lock_guard lk(ev.conn->write_mu);
              if (ev.conn->open.load()) send_all(ev.conn->fd, frame);
            }
            break;
          }
        }
      }
      const auto now = Clock::now();
      if (timer_at && now >= *timer_at) {
        const std::uint64_t gen = timer_gen;
        timer_at.reset();
        handle_effects(engine->on_timer(gen));
      }
      if (now >= heartbeat_at) {
        while (heartbeat_at <= now) heartbeat_at += std::chrono::milliseconds(cfg.heartbeat_ms);
        handle_effects(engine->on_heartbeat());
      }
    }
  }

  void link_loop(ReplicaId r) {
    PeerLink& link = *links[r];
    const HostPort hp = parse_host_port(cfg.peers[r]);
    for (;;) {
      Bytes frame;
      {
        std::unique_lock lk(link.mu);
        link.cv.wait(lk, [&] { return stopping.load() || !link.q.empty(); });
        if (stopping.load()) break;
        frame = std::move(link.q.front());
        link.q.pop_front();
      }
      if (link.fd < 0) {
        const auto now = Clock::now();
        if (now < link.next_dial) continue;  // peer recently unreachable: shed
        link.fd = dial(hp, 250);
        if (link.fd < 0) {
          link.next_dial = now + std::chrono::milliseconds(500);
          continue;
        }
        HelloMsg hello;
        hello.sender = cfg.id;
        hello.is_client = false;
        if (!send_all(link.fd, frame_message(Message{hello}))) {
          close(link.fd);
          link.fd = -1;
          continue;
        }
      }
      if (!send_all(link.fd, frame)) {
        close(link.fd);
        link.fd = -1;
        link.next_dial = Clock::now() + std::chrono::milliseconds(100);
      }
    }
    if (link.fd >= 0) close(link.fd);
  }

  void conn_loop(std::shared_ptr<Conn> conn) {
    FrameReader reader;
    bool greeted = false;
    bool is_client = false;
    ReplicaId peer_id = 0;
    std::vector<std::uint8_t> buf(1u << 16);
    for (;;) {
      const ssize_t n = recv(conn->fd, buf.data(), buf.size(), 0);
      if (n <= 0) {
        if (n < 0 && errno == EINTR) continue;
        break;
      }
      reader.feed(buf.data(), static_cast<std::size_t>(n));
      bool bad = false;
      for (;;) {
        std::optional<Frame> f;
        try {
          f = reader.next();
        } catch (const DecodeError&) {
          bad = true;
          break;
        }
        if (!f) break;
        if (f->type != kFrameTypeMessage) continue;
        Message m;
        try {
          ByteReader r(f->body);
          m = decode_message(r);
        } catch (const DecodeError&) {
          bad = true;
          break;
        }
        if (const auto* hello = std::get_if<HelloMsg>(&m)) {
          greeted = true;
          is_client = hello->is_client;
          peer_id = hello->sender;
          continue;
        }
        if (!greeted) continue;  // require the handshake first
        if (is_client) {
          if (const auto* req = std::get_if<ClientRequestMsg>(&m)) {
            {
              std::lock_guard lk(conns_mu);
              client_conns[req->client_id] = conn;
            }
            enqueue(Event{Event::Kind::client, 0, std::move(m), conn});
          } else if (std::holds_alternative<StatusRequestMsg>(m)) {
            enqueue(Event{Event::Kind::status, 0, std::move(m), conn});
          }
        } else if (peer_id < profile.n && peer_id != cfg.id) {
          enqueue(Event{Event::Kind::peer, peer_id, std::move(m), nullptr});
        }
      }
      if (bad) break;
    }
    conn->open.store(false);
    shutdown(conn->fd, SHUT_RDWR);
  }

  void accept_loop() {
    for (;;) {
      pollfd fds[2] = {{listen_fd, POLLIN, 0}, {wake_pipe[0], POLLIN, 0}};
      if (poll(fds, 2, -1) < 0) {
        if (errno == EINTR) continue;
        break;
      }
      if (fds[1].revents != 0 || stopping.load()) break;
      if ((fds[0].revents & POLLIN) == 0) continue;
      const int fd = accept(listen_fd, nullptr, nullptr);
      if (fd < 0) continue;
      set_nodelay(fd);
      auto conn = std::make_shared<Conn>();
      conn->fd = fd;
      std::lock_guard lk(conns_mu);
      conns.push_back(conn);
      readers.emplace_back([this, conn] { conn_loop(conn); });
    }
  }

  void start() {
    if (started) throw std::logic_error("already started");
    started = true;
    restore();
    const HostPort hp = parse_host_port(cfg.peers[cfg.id]);
    listen_fd = listen_on(hp);
    if (pipe(wake_pipe) != 0) throw std::runtime_error("cannot create wake pipe");
    running.store(true);
    note("listening on " + cfg.peers[cfg.id] + ", cluster of " + std::to_string(profile.n));
    engine_th = std::thread([this] { engine_loop(); });
    accept_th = std::thread([this] { accept_loop(); });
    for (std::uint32_t r = 0; r < profile.n; ++r)
      if (r != cfg.id) links[r]->th = std::thread([this, r] { link_loop(r); });
  }

  void stop() {
    if (!started || stopping.exchange(true)) return;
    {
      std::lock_guard lk(mu);
      cv.notify_all();
    }
    if (wake_pipe[1] >= 0) {
      const char x = 'x';
      ssize_t ignored = write(wake_pipe[1], &x, 1);
      (void)ignored;
    }
    for (auto& link : links) {
      if (link == nullptr) continue;
      std::lock_guard lk(link->mu);
      link->cv.notify_all();
    }
    {
      std::lock_guard lk(conns_mu);
      for (auto& c : conns) {
        c->open.store(false);
        shutdown(c->fd, SHUT_RDWR);
      }
    }
    if (engine_th.joinable()) engine_th.join();
    if (accept_th.joinable()) accept_th.join();
    for (auto& link : links)
      if (link != nullptr && link->th.joinable()) link->th.join();
    {
      std::lock_guard lk(conns_mu);
      for (auto& t : readers)
        if (t.joinable()) t.join();
      for (auto& c : conns) close(c->fd);
      conns.clear();
      readers.clear();
    }
    if (listen_fd >= 0) close(listen_fd);
    for (int& fd : wake_pipe)
      if (fd >= 0) close(fd);
    if (wal != nullptr) wal->flush();
    running.store(false);
    note("stopped");
    cv.notify_all();
  }
};

NetReplica::NetReplica(RunnerConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}

NetReplica::~NetReplica() {
  if (impl_ != nullptr) impl_->stop();
}

void NetReplica::start() { impl_->start(); }

void NetReplica::stop() { impl_->stop(); }

void NetReplica::wait() {
  std::unique_lock lk(impl_->mu);
  impl_->cv.wait(lk, [&] { return impl_->stopping.load(); });
}

bool NetReplica::running() const { return impl_->running.load(); }

ReplicaSnapshot NetReplica::current_snapshot() {
  std::lock_guard lk(impl_->snap_mu);
  return impl_->snap;
}

// ---------------------------------------------------------------------------

struct NetClient::Impl {
  std::vector<HostPort> peers;
  std::uint64_t client_id = 0;
  int fd = -1;
  std::size_t target = 0;
  FrameReader reader;

  void disconnect() {
    if (fd >= 0) close(fd);
    fd = -1;
    reader = FrameReader{};
  }

  bool connect_to(std::size_t idx) {
    disconnect();
    fd = dial(peers[idx % peers.size()], 300);
    if (fd < 0) return false;
    HelloMsg hello;
    hello.sender = static_cast<ReplicaId>(client_id & 0xffffffffu);
    hello.is_client = true;
    if (!send_all(fd, frame_message(Message{hello}))) {
      disconnect();
      return false;
    }
    return true;
  }

  // One message within `wait_ms`, nullopt on silence or connection loss.
  std::optional<Message> recv_msg(int wait_ms) {
    const auto deadline = Clock::now() + std::chrono::milliseconds(wait_ms);
    std::vector<std::uint8_t> buf(1u << 16);
    for (;;) {
      try {
        if (auto f = reader.next()) {
          if (f->type != kFrameTypeMessage) continue;
          ByteReader r(f->body);
          return decode_message(r);
        }
      } catch (const DecodeError&) {
        disconnect();
        return std::nullopt;
      }
      const auto now = Clock::now();
      if (now >= deadline || fd < 0) return std::nullopt;
      const int left =
          static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now)
                               .count());
      pollfd p{fd, POLLIN, 0};
      const int rc = poll(&p, 1, std::max(1, left));
      if (rc <= 0) {
        if (rc < 0 && errno == EINTR) continue;
        return std::nullopt;
      }
      const ssize_t n = recv(fd, buf.data(), buf.size(), 0);
      if (n <= 0) {
        disconnect();
        return std::nullopt;
      }
      reader.feed(buf.data(), static_cast<std::size_t>(n));
    }
  }
};

NetClient::NetClient(std::vector<std::string> peers, std::uint64_t client_id)
    : impl_(std::make_unique<Impl>()) {
  for (const auto& p : peers) impl_->peers.push_back(parse_host_port(p));
  if (impl_->peers.empty()) throw std::invalid_argument("empty peer list");
  impl_->client_id = client_id;
}

NetClient::~NetClient() { impl_->disconnect(); }

std::optional<ClientReplyMsg> NetClient::submit(const ClientRequestMsg& req,
                                                std::uint64_t timeout_ms) {
  const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
  bool resend = true;
  for (;;) {
    if (Clock::now() >= deadline) return std::nullopt;
    if (impl_->fd < 0) {
      if (!impl_->connect_to(impl_->target)) {
        impl_->target = (impl_->target + 1) % impl_->peers.size();
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        continue;
      }
      resend = true;
    }
    if (resend) {
      if (!send_all(impl_->fd, frame_message(Message{req}))) {
        impl_->disconnect();
        continue;
      }
      resend = false;
    }
    auto m = impl_->recv_msg(600);
    if (!m) {
      // Silence: try the next replica with the same request.
      impl_->disconnect();
      impl_->target = (impl_->target + 1) % impl_->peers.size();
      continue;
    }
    const auto* reply = std::get_if<ClientReplyMsg>(&*m);
    if (reply == nullptr || reply->client_seq != req.client_seq) continue;
    switch (reply->status) {
      case ClientReplyStatus::redirect:
        impl_->target = reply->leader_hint % impl_->peers.size();
        impl_->disconnect();
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        break;
      case ClientReplyStatus::committed:
        if (req.mode == ReceiptMode::commit) return *reply;
        break;  // waiting for the audited confirmation
      case ClientReplyStatus::audited:
      case ClientReplyStatus::value:
      case ClientReplyStatus::rejected:
        return *reply;
    }
  }
}

std::optional<StatusReplyMsg> NetClient::status(ReplicaId target, std::uint64_t timeout_ms) {
  const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
  for (;;) {
    if (Clock::now() >= deadline) return std::nullopt;
    if (!impl_->connect_to(target)) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      continue;
    }
    if (!send_all(impl_->fd, frame_message(Message{StatusRequestMsg{}}))) {
      impl_->disconnect();
      continue;
    }
    auto m = impl_->recv_msg(500);
    impl_->disconnect();
    if (m) {
      if (const auto* reply = std::get_if<StatusReplyMsg>(&*m)) return *reply;
    }
  }
}

}  // namespace pftlog
