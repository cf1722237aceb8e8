// SPDX-License-Identifier: Apache-2.0
// In-process cluster driver shared by the engine test suites: routes
// Send/Broadcast effects through an explicit queue so tests control ordering
// and loss, and records every non-network effect per node for inspection.
#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include <pftlog/bytes.hpp>
#include <pftlog/config.hpp>
#include <pftlog/crypto.hpp>
#include <pftlog/ledger.hpp>
#include <pftlog/messages.hpp>
#include <pftlog/replica.hpp>

namespace harness {

using namespace pftlog;

inline Bytes ascii(const std::string& s) { return Bytes(s.begin(), s.end()); }

inline const SignatureScheme& scheme() { return *scheme_by_name("mock"); }

inline QuorumProfile flat_profile(std::uint32_t n, std::uint32_t pi_safe, std::uint32_t c) {
  PftParameters p;
  p.platform_sizes.assign(n, 1);
  p.pi_safe = pi_safe;
  p.c = c;
  return validate_config(p);
}

struct Cluster {
  using Envelope = std::tuple<ReplicaId, ReplicaId, Message>;  // from, to, msg
  using DropFn = std::function<bool(const Envelope&)>;

  QuorumProfile profile;
  std::vector<KeyPair> ks;
  std::vector<PublicKey> pks;
  std::vector<std::unique_ptr<Replica>> nodes;
  std::deque<Envelope> wire;
  std::vector<Envelope> dropped;
  std::vector<std::vector<Effect>> events;  // per node: everything but sends
  std::vector<std::vector<Message>> sent;   // per node: every outbound replica msg
  std::vector<std::uint64_t> timer_gen;
  std::vector<std::pair<std::uint64_t, Message>> client_out;
  DropFn drop;

  Cluster(std::uint32_t n, std::uint32_t pi_safe, std::uint32_t c, ReplicaOptions opts)
      : profile(flat_profile(n, pi_safe, c)), timer_gen(n, 0) {
    for (std::uint32_t i = 0; i < n; ++i) {
      ks.push_back(keypair_for_replica(scheme(), 7, i));
      pks.push_back(ks.back().pk);
    }
    events.resize(n);
    sent.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      nodes.push_back(std::make_unique<Replica>(static_cast<ReplicaId>(i), profile, opts,
                                                scheme(), pks, ks[i].sk));
      absorb(static_cast<ReplicaId>(i), nodes.back()->start());
    }
  }

  Replica& at(ReplicaId id) { return *nodes[id]; }

  void absorb(ReplicaId from, Effects&& fx) {
    for (auto& e : fx) {
      if (auto* s = std::get_if<SendEffect>(&e)) {
        sent[from].push_back(s->msg);
        route({from, s->to, s->msg});
      } else if (auto* b = std::get_if<BroadcastEffect>(&e)) {
        sent[from].push_back(b->msg);
        for (std::uint32_t to = 0; to < profile.n; ++to) {
          if (to != from) route({from, static_cast<ReplicaId>(to), b->msg});
        }
      } else if (auto* c = std::get_if<ClientSendEffect>(&e)) {
        client_out.emplace_back(c->client_id, c->msg);
      } else {
        if (auto* t = std::get_if<ArmTimerEffect>(&e)) timer_gen[from] = t->gen;
        events[from].push_back(e);
      }
    }
  }

  void route(Envelope env) {
    if (drop && drop(env)) {
      dropped.push_back(std::move(env));
      return;
    }
    wire.push_back(std::move(env));
  }

  // Delivers everything in flight, including messages triggered en route.
  void pump() {
    while (!wire.empty()) {
      auto [from, to, msg] = std::move(wire.front());
      wire.pop_front();
      absorb(to, nodes[to]->on_message(from, msg));
    }
  }

  void deliver(const Envelope& env) {
    const auto& [from, to, msg] = env;
    absorb(to, nodes[to]->on_message(from, msg));
  }

  // Submit one transaction to a node and trigger its proposal heartbeat.
  void submit(const std::string& txn, ReplicaId target = 0,
              ReceiptMode mode = ReceiptMode::commit, std::uint64_t client_id = 500,
              std::uint64_t client_seq = 0) {
    ClientRequestMsg m;
    m.client_id = client_id;
    m.client_seq = client_seq;
    m.mode = mode;
    m.txn = ascii(txn);
    absorb(target, nodes[target]->on_client_request(client_id, m));
    heartbeat(target);
  }

  void heartbeat(ReplicaId id) { absorb(id, nodes[id]->on_heartbeat()); }
  void fire_timer(ReplicaId id) { absorb(id, nodes[id]->on_timer(timer_gen[id])); }

  template <typename E>
  std::vector<E> collect(ReplicaId id) const {
    std::vector<E> out;
    for (const auto& e : events[id]) {
      if (const auto* p = std::get_if<E>(&e)) out.push_back(*p);
    }
    return out;
  }

  std::vector<SeqNo> committed_seqs(ReplicaId id) const {
    std::vector<SeqNo> out;
    for (const auto& e : collect<CommittedEffect>(id)) out.push_back(e.upto);
    return out;
  }

  std::vector<VoteMsg> votes_from(ReplicaId id) const {
    std::vector<VoteMsg> out;
    for (const auto& m : sent[id]) {
      if (const auto* v = std::get_if<VoteMsg>(&m)) out.push_back(*v);
    }
    return out;
  }

  std::size_t proposal_count(ReplicaId id) const { return collect<ProposedEffect>(id).size(); }
};

inline bool is_vote(const Message& m) { return std::holds_alternative<VoteMsg>(m); }

}  // namespace harness
