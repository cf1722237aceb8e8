// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pftlog/config.hpp"
#include "pftlog/messages.hpp"
#include "pftlog/replica.hpp"

namespace pftlog {

struct HostPort {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

// Parses "host:port". Throws std::invalid_argument on a malformed string.
HostPort parse_host_port(const std::string& s);

// Per-process configuration of a replica endpoint. `peers[i]` is the address
// of replica i; the entry at `id` is the local listen address.
struct RunnerConfig {
  ReplicaId id = 0;
  PftParameters params;
  ReplicaOptions options;
  std::string crypto = "ed25519";
  std::uint64_t cluster_seed = 1;
  std::vector<std::string> peers;
  std::string wal_path;          // empty: run without a durable log
  std::uint64_t tick_ms = 5;     // wall-clock length of one engine tick
  std::uint64_t heartbeat_ms = 50;
  bool quiet = false;
};

std::string runner_config_to_json(const RunnerConfig& cfg);
RunnerConfig runner_config_from_json(const std::string& text);

// One replica process: a TCP endpoint, the deterministic engine on its own
// thread, the durable log, and the key-value state the log carries. All
// sockets and clocks live here; the engine stays event-in, effects-out.
class NetReplica {
 public:
  explicit NetReplica(RunnerConfig cfg);
  ~NetReplica();
  NetReplica(const NetReplica&) = delete;
  NetReplica& operator=(const NetReplica&) = delete;

  // Replays the durable log through the engine, binds the listen socket,
  // and spawns the service threads. Throws on bind or replay failure.
  void start();
  void stop();
  void wait();  // blocks until stop() is called (e.g. from a signal handler)
  bool running() const;

  ReplicaSnapshot current_snapshot();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Blocking client used by the command-line tool and the loopback tests.
// Follows leader redirects and rotates through peers on silence.
class NetClient {
 public:
  NetClient(std::vector<std::string> peers, std::uint64_t client_id);
  ~NetClient();
  NetClient(const NetClient&) = delete;
  NetClient& operator=(const NetClient&) = delete;

  // Submits `req` and waits for a terminal reply (committed in commit mode,
  // audited in audit mode, or rejected). Returns nullopt past the deadline.
  std::optional<ClientReplyMsg> submit(const ClientRequestMsg& req, std::uint64_t timeout_ms);

  // Snapshot of one replica's indices, nullopt if unreachable in time.
  std::optional<StatusReplyMsg> status(ReplicaId target, std::uint64_t timeout_ms);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pftlog
