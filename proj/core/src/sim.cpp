// SPDX-License-Identifier: Apache-2.0
#include "pftlog/sim.hpp"

#include <algorithm>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <variant>

#include <json.hpp>

#include "pftlog/bytes.hpp"

namespace pftlog {

using nlohmann::json;

const char* fault_kind_name(FaultKind k) {
  switch (k) {
    case FaultKind::crash: return "crash";
    case FaultKind::omission: return "omission";
    case FaultKind::equivocation: return "equivocation";
    case FaultKind::spoof_commit_qc: return "spoof_commit_qc";
    case FaultKind::spoof_branch: return "spoof_branch";
    case FaultKind::partition: return "partition";
    case FaultKind::delay: return "delay";
  }
  return "unknown";
}

std::optional<FaultKind> fault_kind_from_name(const std::string& s) {
  for (auto k : {FaultKind::crash, FaultKind::omission, FaultKind::equivocation,
                 FaultKind::spoof_commit_qc, FaultKind::spoof_branch, FaultKind::partition,
                 FaultKind::delay}) {
    if (s == fault_kind_name(k)) return k;
  }
  return std::nullopt;
}

const char* trace_event_kind_name(TraceEventKind k) {
  switch (k) {
    case TraceEventKind::proposed: return "proposed";
    case TraceEventKind::committed: return "committed";
    case TraceEventKind::audited: return "audited";
    case TraceEventKind::rolled_back: return "rolled_back";
    case TraceEventKind::view_advanced: return "view_advanced";
    case TraceEventKind::stabilized: return "stabilized";
    case TraceEventKind::commit_qc: return "commit_qc";
    case TraceEventKind::audit_qc: return "audit_qc";
    case TraceEventKind::throttled: return "throttled";
    case TraceEventKind::timer_fired: return "timer_fired";
    case TraceEventKind::sent: return "sent";
    case TraceEventKind::client_submitted: return "client_submitted";
    case TraceEventKind::client_replied: return "client_replied";
    case TraceEventKind::crashed: return "crashed";
    case TraceEventKind::revived: return "revived";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Scenario JSON.

std::string scenario_to_json(const ScenarioConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["seed"] = cfg.seed;
  j["gst"] = cfg.gst;
  j["delta"] = cfg.delta;
  j["delta_max"] = cfg.delta_max;
  j["random_jitter"] = cfg.random_jitter;
  j["heartbeat"] = cfg.heartbeat;
  j["horizon"] = cfg.horizon;
  j["crypto"] = cfg.crypto;
  j["record_sends"] = cfg.record_sends;
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
  j["load"] = {{"client_count", cfg.load.client_count},
               {"txns_per_client", cfg.load.txns_per_client},
               {"start_tick", cfg.load.start_tick},
               {"interval", cfg.load.interval},
               {"retry_interval", cfg.load.retry_interval},
               {"mode", cfg.load.mode == ReceiptMode::audit ? "audit" : "commit"},
               {"broadcast_submit", cfg.load.broadcast_submit}};
  j["faults"] = json::array();
  for (const auto& f : cfg.faults) {
    json jf;
    jf["kind"] = fault_kind_name(f.kind);
    jf["who"] = f.who;
    jf["from"] = f.from;
    jf["to"] = f.to;
    jf["group_a"] = f.group_a;
    jf["group_b"] = f.group_b;
    jf["probability"] = f.probability;
    jf["extra_delay"] = f.extra_delay;
    j["faults"].push_back(jf);
  }
  return j.dump(2);
}

ScenarioConfig scenario_from_json(const std::string& text) {
  const json j = json::parse(text);
  ScenarioConfig cfg;
  cfg.name = j.value("name", cfg.name);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.gst = j.value("gst", cfg.gst);
  cfg.delta = j.value("delta", cfg.delta);
  cfg.delta_max = j.value("delta_max", cfg.delta_max);
  cfg.random_jitter = j.value("random_jitter", cfg.random_jitter);
  cfg.heartbeat = j.value("heartbeat", cfg.heartbeat);
  cfg.horizon = j.value("horizon", cfg.horizon);
  cfg.crypto = j.value("crypto", cfg.crypto);
  cfg.record_sends = j.value("record_sends", cfg.record_sends);
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
  if (j.contains("load")) {
    const auto& l = j.at("load");
    cfg.load.client_count = l.value("client_count", cfg.load.client_count);
    cfg.load.txns_per_client = l.value("txns_per_client", cfg.load.txns_per_client);
    cfg.load.start_tick = l.value("start_tick", cfg.load.start_tick);
    cfg.load.interval = l.value("interval", cfg.load.interval);
    cfg.load.retry_interval = l.value("retry_interval", cfg.load.retry_interval);
    cfg.load.mode =
        l.value("mode", std::string("commit")) == "audit" ? ReceiptMode::audit : ReceiptMode::commit;
    cfg.load.broadcast_submit = l.value("broadcast_submit", cfg.load.broadcast_submit);
  }
  for (const auto& jf : j.value("faults", json::array())) {
    FaultSpec f;
    auto k = fault_kind_from_name(jf.value("kind", std::string("crash")));
    if (!k) throw std::runtime_error("unknown fault kind in scenario");
    f.kind = *k;
    f.who = jf.value("who", f.who);
    f.from = jf.value("from", f.from);
    f.to = jf.value("to", f.to);
    f.group_a = jf.value("group_a", std::vector<ReplicaId>{});
    f.group_b = jf.value("group_b", std::vector<ReplicaId>{});
    f.probability = jf.value("probability", f.probability);
    f.extra_delay = jf.value("extra_delay", f.extra_delay);
    cfg.faults.push_back(std::move(f));
  }
  return cfg;
}

std::string Trace::serialize_events() const {
  std::ostringstream os;
  for (const auto& e : events) {
    os << e.tick << ' ' << trace_event_kind_name(e.kind) << ' ' << e.node << ' ' << e.a << ' '
       << e.b << ' ' << e.c << ' ' << (e.flag ? 1 : 0) << ' ';
    for (std::size_t i = 0; i < 8; ++i) {
      static const char* hexd = "0123456789abcdef";
      os << hexd[e.digest[i] >> 4] << hexd[e.digest[i] & 0xf];
    }
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Checkers. Each reconstructs per-node chain state from the event stream and
// the batch registry, independent of the engine internals.

namespace {

constexpr std::uint64_t kSimKeySeed = 0x70667431u;

struct NodeChain {
  std::map<SeqNo, Digest> pos;  // committed chain positions
  SeqNo audited = 0;
};

std::string hex8(const Digest& d) {
  std::string s;
  static const char* hexd = "0123456789abcdef";
  for (std::size_t i = 0; i < 8; ++i) {
    s += hexd[d[i] >> 4];
    s += hexd[d[i] & 0xf];
  }
  return s;
}

}  // namespace

bool benign_faults_only(const ScenarioConfig& cfg) {
  for (const auto& f : cfg.faults) {
    switch (f.kind) {
      case FaultKind::crash:
      case FaultKind::partition:
      case FaultKind::delay:
      case FaultKind::omission:
        continue;
      default:
        return false;
    }
  }
  return true;
}

CheckResult check_audited_agreement(const Trace& t) {
  CheckResult r{"audited-agreement", true, ""};
  std::map<ReplicaId, NodeChain> nodes;
  std::map<SeqNo, Digest> frozen;  // first audited digest per position, global
  for (const auto& e : t.events) {
    auto& nc = nodes[e.node];
    switch (e.kind) {
      case TraceEventKind::committed:
        if (e.a <= nc.audited) {
          auto it = nc.pos.find(e.a);
          if (it != nc.pos.end() && it->second != e.digest) {
            r.ok = false;
            r.detail = "audited position rewritten by commit at seq " + std::to_string(e.a);
            return r;
          }
        }
        nc.pos[e.a] = e.digest;
        break;
      case TraceEventKind::rolled_back:
        if (e.a < nc.audited) {
          r.ok = false;
          r.detail = "rollback below audit index at node " + std::to_string(e.node);
          return r;
        }
        nc.pos.erase(nc.pos.upper_bound(e.a), nc.pos.end());
        break;
      case TraceEventKind::audited: {
        for (SeqNo s = nc.audited + 1; s <= e.a; ++s) {
          auto it = nc.pos.find(s);
          if (it == nc.pos.end()) {
            r.ok = false;
            r.detail = "audit covered uncommitted seq " + std::to_string(s);
            return r;
          }
          auto fit = frozen.find(s);
          if (fit == frozen.end()) {
            frozen.emplace(s, it->second);
          } else if (fit->second != it->second) {
            r.ok = false;
            r.detail = "two audited digests at seq " + std::to_string(s) + ": " +
                       hex8(fit->second) + " vs " + hex8(it->second);
            return r;
          }
        }
        if (e.a > 0) {
          auto it = nc.pos.find(e.a);
          if (it == nc.pos.end() || it->second != e.digest) {
            r.ok = false;
            r.detail = "audit event digest mismatch at seq " + std::to_string(e.a);
            return r;
          }
        }
        if (e.a > nc.audited) nc.audited = e.a;
        break;
      }
      default:
        break;
    }
  }
  return r;
}

namespace {

// Positions whose committed batch was later replaced by a different one.
// Returns pairs (seq, replaced digest).
std::vector<std::pair<SeqNo, Digest>> replaced_commits(const Trace& t) {
  std::vector<std::pair<SeqNo, Digest>> out;
  std::map<SeqNo, std::vector<Digest>> seen;  // distinct digests in commit order
  for (const auto& e : t.events) {
    if (e.kind != TraceEventKind::committed) continue;
    auto& v = seen[e.a];
    if (std::find(v.begin(), v.end(), e.digest) == v.end()) v.push_back(e.digest);
  }
  for (const auto& [seq, v] : seen) {
    for (std::size_t i = 0; i + 1 < v.size(); ++i) out.emplace_back(seq, v[i]);
  }
  return out;
}

}  // namespace

std::size_t committed_payload_losses(const Trace& t) {
  std::size_t n = 0;
  for (const auto& [seq, d] : replaced_commits(t)) {
    auto it = t.registry.find(d);
    if (it == t.registry.end()) continue;
    if (!it->second.new_view && !it->second.payload.empty()) ++n;
  }
  return n;
}

CheckResult check_commit_agreement(const Trace& t) {
  CheckResult r{"commit-agreement", true, ""};
  for (const auto& [seq, d] : replaced_commits(t)) {
    auto it = t.registry.find(d);
    if (it == t.registry.end()) {
      r.ok = false;
      r.detail = "committed batch missing from registry at seq " + std::to_string(seq);
      return r;
    }
    // A view-opening batch may commit and still lose to a certified branch;
    // it carries no transactions. Anything else must stay put.
    if (it->second.new_view) continue;
    r.ok = false;
    r.detail = "committed batch replaced at seq " + std::to_string(seq) + " (" + hex8(d) + ")";
    return r;
  }
  return r;
}

CheckResult check_stability_before_qc(const Trace& t, const ScenarioConfig& cfg) {
  CheckResult r{"stability-before-proposals", true, ""};
  if (!cfg.options.stabilization_enabled || !cfg.options.auditing_enabled) return r;
  std::map<ReplicaId, std::set<ViewId>> stable;
  for (const auto& e : t.events) {
    if (e.kind == TraceEventKind::stabilized) stable[e.node].insert(e.a);
    if (e.kind == TraceEventKind::proposed && !e.flag && e.b != 0) {
      if (!stable[e.node].count(e.b)) {
        r.ok = false;
        r.detail = "node " + std::to_string(e.node) + " proposed seq " + std::to_string(e.a) +
                   " in view " + std::to_string(e.b) + " before it stabilized";
        return r;
      }
    }
  }
  return r;
}

CheckResult check_fast_path_guard(const Trace& t, const ScenarioConfig& cfg) {
  CheckResult r{"fast-path-guard", true, ""};
  const QuorumProfile profile = validate_config(cfg.params);
  const bool enabled = cfg.options.auditing_enabled &&
                       cfg.options.fast_path_override.value_or(profile.fast_path_enabled);
  for (const auto& e : t.events) {
    const bool fast_marked = (e.kind == TraceEventKind::audited && e.flag) ||
                             (e.kind == TraceEventKind::audit_qc && e.flag);
    if (fast_marked && !enabled) {
      r.ok = false;
      r.detail = "single-certificate audit used while the fast path is off";
      return r;
    }
  }
  for (const auto& qc : t.qcs) {
    if (qc.fast && qc.votes.size() < profile.fast_quorum) {
      r.ok = false;
      r.detail = "fast certificate with " + std::to_string(qc.votes.size()) + " votes";
      return r;
    }
  }
  return r;
}

CheckResult check_audit_lag(const Trace& t, const ScenarioConfig& cfg) {
  CheckResult r{"audit-lag", true, ""};
  if (!cfg.options.auditing_enabled) return r;
  // The proposer throttle bounds how far a leader's chain may run ahead of
  // its own audit index. Followers can exceed the window transiently while
  // replaying a synced chain, so the bound is checked where it is enforced:
  // at proposal time.
  const std::uint64_t slack = cfg.options.lag_window + 4;
  std::map<ReplicaId, SeqNo> audited;
  for (const auto& e : t.events) {
    if (e.kind == TraceEventKind::audited && e.a > audited[e.node]) audited[e.node] = e.a;
    // View-opening proposals are mandatory regardless of lag; the throttle
    // re-engages for the payload batches that follow.
    if (e.kind == TraceEventKind::proposed && !e.flag && e.a > audited[e.node] + slack) {
      r.ok = false;
      r.detail = "node " + std::to_string(e.node) + " proposed seq " + std::to_string(e.a) +
                 " with audit index " + std::to_string(audited[e.node]);
      return r;
    }
  }
  return r;
}

CheckResult check_liveness_bound(const Trace& t, const ScenarioConfig& cfg) {
  CheckResult r{"liveness-bound", true, ""};
  const QuorumProfile profile = validate_config(cfg.params);
  std::set<ReplicaId> byz;
  for (const auto& f : cfg.faults)
    if (f.kind == FaultKind::equivocation) byz.insert(f.who);

  // First tick each transaction became audit-covered at a non-equivocating
  // node, recovered by replaying per-node commit positions.
  std::map<Digest, std::uint64_t> audited_at;
  std::map<ReplicaId, NodeChain> nodes;
  for (const auto& e : t.events) {
    auto& nc = nodes[e.node];
    switch (e.kind) {
      case TraceEventKind::committed:
        nc.pos[e.a] = e.digest;
        break;
      case TraceEventKind::rolled_back:
        nc.pos.erase(nc.pos.upper_bound(e.a), nc.pos.end());
        break;
      case TraceEventKind::audited: {
        if (byz.count(e.node)) break;
        for (SeqNo s = nc.audited + 1; s <= e.a; ++s) {
          auto it = nc.pos.find(s);
          if (it == nc.pos.end()) continue;
          auto bit = t.registry.find(it->second);
          if (bit == t.registry.end()) continue;
          for (const auto& txn : bit->second.payload) {
            audited_at.emplace(sha512(txn), e.tick);
          }
        }
        if (e.a > nc.audited) nc.audited = e.a;
        break;
      }
      default:
        break;
    }
  }

  const std::uint64_t pipeline =
      (4 * cfg.options.signing_interval + 5) * cfg.delta + profile.u * cfg.options.timeout_base;
  for (const auto& [txn, submit] : t.first_submit) {
    const std::uint64_t deadline = std::max(submit, cfg.gst) + pipeline;
    auto it = audited_at.find(txn);
    if (it == audited_at.end()) {
      r.ok = false;
      r.detail = "txn " + hex8(txn) + " submitted at " + std::to_string(submit) +
                 " never audited (deadline " + std::to_string(deadline) + ")";
      return r;
    }
    if (it->second > deadline) {
      r.ok = false;
      r.detail = "txn " + hex8(txn) + " audited at " + std::to_string(it->second) +
                 " past deadline " + std::to_string(deadline);
      return r;
    }
  }
  return r;
}

CheckResult check_qc_certificates(const Trace& t, const ScenarioConfig& cfg) {
  CheckResult r{"certificate-validity", true, ""};
  const QuorumProfile profile = validate_config(cfg.params);
  const SignatureScheme* scheme = scheme_by_name(cfg.crypto);
  if (scheme == nullptr) {
    r.ok = false;
    r.detail = "unknown signature scheme " + cfg.crypto;
    return r;
  }
  std::vector<PublicKey> keys;
  for (std::uint32_t i = 0; i < profile.n; ++i)
    keys.push_back(keypair_for_replica(*scheme, kSimKeySeed, i).pk);
  for (const auto& qc : t.qcs) {
    if (!verify_audit_qc(qc, profile, keys, *scheme, false)) {
      r.ok = false;
      r.detail = "invalid audit certificate at seq " + std::to_string(qc.seq);
      return r;
    }
    if (qc.fast && qc.votes.size() < profile.fast_quorum) {
      r.ok = false;
      r.detail = "fast-marked certificate below full quorum at seq " + std::to_string(qc.seq);
      return r;
    }
  }
  return r;
}

std::vector<CheckResult> run_standard_checks(const Trace& t, const ScenarioConfig& cfg) {
  std::vector<CheckResult> out;
  out.push_back(check_audited_agreement(t));
  out.push_back(check_qc_certificates(t, cfg));
  out.push_back(check_fast_path_guard(t, cfg));
  out.push_back(check_stability_before_qc(t, cfg));
  if (benign_faults_only(cfg)) {
    out.push_back(check_commit_agreement(t));
    out.push_back(check_audit_lag(t, cfg));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulator.

namespace {

struct EvCrash {
  ReplicaId node;
  bool go_down;
};
struct EvDeliver {
  ReplicaId to;
  ReplicaId from;
  Message msg;
};
struct EvClientDeliver {
  std::uint64_t client;
  ClientReplyMsg msg;
};
struct EvTimer {
  ReplicaId node;
  std::uint64_t gen;
};
struct EvHeartbeat {
  ReplicaId node;
};
struct EvSubmit {
  std::uint64_t client;
  std::uint64_t idx;
};
struct EvRetry {
  std::uint64_t client;
  std::uint64_t idx;
};
struct EvSpoof {
  std::size_t fault;
};

using SimEvent =
    std::variant<EvCrash, EvDeliver, EvClientDeliver, EvTimer, EvHeartbeat, EvSubmit, EvRetry,
                 EvSpoof>;

// Processing order at equal ticks: crash transitions, then arriving
// messages, then timers, then the proposal cadence, then load drivers. A
// certificate landing at the same tick a timer expires wins, which is the
// reading a real host gives "reset on progress".
int event_class(const SimEvent& e) {
  if (std::holds_alternative<EvCrash>(e)) return 0;
  if (std::holds_alternative<EvDeliver>(e) || std::holds_alternative<EvClientDeliver>(e)) return 1;
  if (std::holds_alternative<EvTimer>(e)) return 2;
  if (std::holds_alternative<EvHeartbeat>(e)) return 3;
  return 4;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

struct Simulator::Impl {
  const ScenarioConfig& cfg;
  const QuorumProfile& profile;
  const SignatureScheme& scheme;
  std::vector<PublicKey> keys;
  std::vector<SecretKey> sks;
  std::vector<std::unique_ptr<Replica>> nodes;
  std::vector<KvApp> kvs;
  std::vector<std::map<SeqNo, Digest>> chain_pos;
  std::vector<char> down;
  Trace trace;
  SplitMix64 rng;
  std::uint64_t now = 0;
  std::uint64_t ord = 0;
  std::map<std::tuple<std::uint64_t, int, std::uint64_t>, SimEvent> queue;

  struct Client {
    std::vector<Bytes> plan;
    std::vector<Digest> digests;
    std::vector<std::uint64_t> resolved;  // tick of the confirming reply, 0 while open
    ReplicaId hint = 0;
  };
  std::vector<Client> clients;
  std::map<std::pair<std::size_t, SeqNo>, Batch> twins;  // forged equivocation branches

  static const SignatureScheme& scheme_or_throw(const std::string& name) {
    const SignatureScheme* s = scheme_by_name(name);
    if (s == nullptr) throw std::runtime_error("unknown signature scheme: " + name);
    return *s;
  }

  Impl(const ScenarioConfig& c, const QuorumProfile& p)
      : cfg(c), profile(p), scheme(scheme_or_throw(c.crypto)), rng(c.seed) {}

  void schedule(std::uint64_t tick, SimEvent ev) {
    queue.emplace(std::make_tuple(tick, event_class(ev), ord++), std::move(ev));
  }

  bool fault_active(const FaultSpec& f) const { return f.from <= now && now < f.to; }

  static bool in_group(const std::vector<ReplicaId>& g, ReplicaId id) {
    return std::find(g.begin(), g.end(), id) != g.end();
  }

  bool link_cut(ReplicaId from, ReplicaId to) const {
    for (const auto& f : cfg.faults) {
      if (f.kind != FaultKind::partition || !fault_active(f)) continue;
      const bool fa = in_group(f.group_a, from), fb = in_group(f.group_b, from);
      const bool ta = in_group(f.group_a, to), tb = in_group(f.group_b, to);
      if ((fa && tb) || (fb && ta)) return true;
    }
    return false;
  }

  bool omitted(ReplicaId from) {
    bool drop = false;
    for (const auto& f : cfg.faults) {
      if (f.kind != FaultKind::omission || f.who != from || !fault_active(f)) continue;
      if (rng.unit() < f.probability) drop = true;
    }
    return drop;
  }

  std::uint64_t base_delay() {
    const std::uint64_t bound = std::max<std::uint64_t>(1, now < cfg.gst ? cfg.delta_max : cfg.delta);
    return cfg.random_jitter ? 1 + rng.below(bound) : bound;
  }

  std::uint64_t link_delay(ReplicaId from, ReplicaId to) {
    std::uint64_t d = base_delay();
    for (const auto& f : cfg.faults) {
      if (f.kind != FaultKind::delay || f.who != from || !fault_active(f)) continue;
      if (!f.group_b.empty() && !in_group(f.group_b, to)) continue;
      d += f.extra_delay;
    }
    return d;
  }

  void emit(TraceEventKind k, ReplicaId node, std::uint64_t a = 0, std::uint64_t b = 0,
            std::uint64_t c = 0, const Digest& d = kZeroDigest, bool flag = false) {
    trace.events.push_back(TraceEvent{now, k, node, a, b, c, d, flag});
  }

  void register_batch(const Batch& b) { trace.registry.emplace(batch_digest(b), b); }

  void register_message(const Message& m) {
    if (const auto* ae = std::get_if<AppendEntryMsg>(&m)) {
      register_batch(ae->batch);
    } else if (const auto* vc = std::get_if<ViewChangeMsg>(&m)) {
      for (const auto& b : vc->suffix) register_batch(b);
    } else if (const auto* nv = std::get_if<NewViewMsg>(&m)) {
      register_batch(nv->stabilizing);
      for (const auto& p : nv->proofs)
        for (const auto& b : p.suffix) register_batch(b);
    } else if (const auto* sr = std::get_if<SyncResponseMsg>(&m)) {
      for (const auto& b : sr->batches) register_batch(b);
    }
  }

  // The forged twin of a real batch: same heights and piggybacks, one junk
  // transaction spliced in, re-chained onto the twin branch and re-signed
  // with the faulty leader's own key.
  const Batch& forge_twin(std::size_t fidx, const FaultSpec& f, const Batch& real) {
    const auto key = std::make_pair(fidx, real.seq);
    auto it = twins.find(key);
    if (it != twins.end()) return it->second;
    Batch b = real;
    ByteWriter w;
    w.str("twin-filler");
    w.u64(real.seq);
    b.payload.push_back(w.take());
    auto pit = twins.find(std::make_pair(fidx, real.seq == 0 ? 0 : real.seq - 1));
    if (pit != twins.end()) b.parent = batch_digest(pit->second);
    if (b.is_signed()) b.leader_sig = scheme.sign(sks[f.who], batch_sig_message(batch_digest(b)));
    register_batch(b);
    return twins.emplace(key, std::move(b)).first->second;
  }

  void route(ReplicaId from, ReplicaId to, const Message& m) {
    if (to >= profile.n || link_cut(from, to) || omitted(from)) return;
    const Message* out = &m;
    Message forged;
    for (std::size_t i = 0; i < cfg.faults.size(); ++i) {
      const auto& f = cfg.faults[i];
      if (f.kind != FaultKind::equivocation || f.who != from || !fault_active(f)) continue;
      if (!in_group(f.group_b, to)) continue;
      if (const auto* ae = std::get_if<AppendEntryMsg>(out)) {
        forged = AppendEntryMsg{forge_twin(i, f, ae->batch)};
        out = &forged;
      }
    }
    schedule(now + link_delay(from, to), EvDeliver{to, from, *out});
  }

  KvApp::BatchFetch fetch_fn(ReplicaId i) {
    return [this, i](SeqNo s) -> const Batch* {
      auto it = chain_pos[i].find(s);
      if (it == chain_pos[i].end()) return nullptr;
      auto bit = trace.registry.find(it->second);
      return bit == trace.registry.end() ? nullptr : &bit->second;
    };
  }

  void process(ReplicaId i, const Effects& fx) {
    // Register message-borne batches first: a commit effect may refer to a
    // batch whose broadcast appears later in the same effect list.
    for (const auto& e : fx) {
      if (const auto* s = std::get_if<SendEffect>(&e)) register_message(s->msg);
      if (const auto* b = std::get_if<BroadcastEffect>(&e)) register_message(b->msg);
    }
    for (const auto& e : fx) {
      std::visit(
          overloaded{
              [&](const SendEffect& s) {
                ++trace.census[message_type(s.msg)];
                if (cfg.record_sends) emit(TraceEventKind::sent, i, message_type(s.msg), s.to);
                route(i, s.to, s.msg);
              },
              [&](const BroadcastEffect& b) {
                for (ReplicaId r = 0; r < profile.n; ++r) {
                  if (r == i) continue;
                  ++trace.census[message_type(b.msg)];
                  if (cfg.record_sends) emit(TraceEventKind::sent, i, message_type(b.msg), r);
                  route(i, r, b.msg);
                }
              },
              [&](const ClientSendEffect& cs) {
                ++trace.census[message_type(cs.msg)];
                schedule(now + base_delay(),
                         EvClientDeliver{cs.client_id, std::get<ClientReplyMsg>(cs.msg)});
              },
              [&](const ArmTimerEffect& t) {
                schedule(now + t.duration, EvTimer{i, t.gen});
              },
              [&](const CommittedEffect& ce) {
                emit(TraceEventKind::committed, i, ce.upto, 0, 0, ce.tip_digest);
                chain_pos[i][ce.upto] = ce.tip_digest;
                auto bit = trace.registry.find(ce.tip_digest);
                if (bit == trace.registry.end())
                  throw std::logic_error("committed batch absent from registry");
                kvs[i].apply_committed(bit->second);
              },
              [&](const AuditedEffect& ae) {
                emit(TraceEventKind::audited, i, ae.upto, 0, 0, ae.tip_digest, ae.fast);
                kvs[i].advance_audited(ae.upto, fetch_fn(i));
              },
              [&](const RolledBackEffect& rb) {
                emit(TraceEventKind::rolled_back, i, rb.to);
                chain_pos[i].erase(chain_pos[i].upper_bound(rb.to), chain_pos[i].end());
                kvs[i].rollback_committed(std::min(kvs[i].committed_seq(), rb.to), fetch_fn(i));
              },
              [&](const ViewAdvancedEffect& va) {
                emit(TraceEventKind::view_advanced, i, va.view, 0, 0, kZeroDigest, va.leader);
              },
              [&](const StabilizedEffect& st) { emit(TraceEventKind::stabilized, i, st.view); },
              [&](const ProposedEffect& pe) {
                emit(TraceEventKind::proposed, i, pe.seq, pe.view, pe.txns, kZeroDigest,
                     pe.new_view);
              },
              [&](const CommitQcEffect& cq) {
                emit(TraceEventKind::commit_qc, i, cq.seq, 0, cq.votes);
              },
              [&](const AuditQcEffect& aq) {
                emit(TraceEventKind::audit_qc, i, aq.qc.seq, aq.qc.view, aq.trigger_seq,
                     aq.qc.batch_digest, aq.qc.fast);
                trace.qcs.push_back(aq.qc);
              },
              [&](const ThrottledEffect& th) {
                emit(TraceEventKind::throttled, i, th.tip, th.audit_index);
              },
          },
          e);
    }
  }

  void submit(std::uint64_t c, std::uint64_t idx, bool retry) {
    auto& cl = clients[c];
    if (cl.resolved[idx] != 0) return;
    if (retry) cl.hint = static_cast<ReplicaId>((cl.hint + 1) % profile.n);
    ClientRequestMsg m;
    m.client_id = c;
    m.client_seq = idx + 1;
    m.mode = cfg.load.mode;
    m.txn = cl.plan[idx];
    trace.first_submit.emplace(cl.digests[idx], now);
    std::vector<ReplicaId> targets;
    if (cfg.load.broadcast_submit) {
      for (ReplicaId r = 0; r < profile.n; ++r) targets.push_back(r);
    } else {
      targets.push_back(cl.hint);
    }
    for (ReplicaId t : targets) {
      emit(TraceEventKind::client_submitted, t, c, idx + 1, 0, cl.digests[idx]);
      schedule(now + base_delay(), EvDeliver{t, t, Message{m}});
    }
    if (cfg.load.retry_interval > 0 && now + cfg.load.retry_interval <= cfg.horizon)
      schedule(now + cfg.load.retry_interval, EvRetry{c, idx});
  }

  void client_reply(std::uint64_t c, const ClientReplyMsg& m) {
    auto& cl = clients[c];
    if (m.client_seq == 0 || m.client_seq > cl.plan.size()) return;
    const std::uint64_t idx = m.client_seq - 1;
    emit(TraceEventKind::client_replied, static_cast<ReplicaId>(c), m.client_seq,
         static_cast<std::uint64_t>(m.status));
    switch (m.status) {
      case ClientReplyStatus::redirect:
        cl.hint = m.leader_hint;
        if (cl.resolved[idx] == 0 && !cfg.load.broadcast_submit && now + 1 <= cfg.horizon)
          schedule(now + 1, EvSubmit{c, idx});
        break;
      case ClientReplyStatus::committed:
        if (cfg.load.mode == ReceiptMode::commit && cl.resolved[idx] == 0) cl.resolved[idx] = now;
        break;
      case ClientReplyStatus::audited:
      case ClientReplyStatus::value:
        if (cl.resolved[idx] == 0) cl.resolved[idx] = now;
        break;
      default:
        break;
    }
  }

  void spoof_pulse(std::size_t fidx) {
    const auto& f = cfg.faults[fidx];
    const std::uint64_t period = std::max<std::uint64_t>(1, cfg.heartbeat);
    if (now + period < f.to && now + period <= cfg.horizon) schedule(now + period, EvSpoof{fidx});
    if (!fault_active(f)) return;
    const std::uint64_t interval =
        cfg.options.auditing_enabled ? cfg.options.signing_interval : 0;
    for (ReplicaId v : f.group_b) {
      if (v >= profile.n || down[v]) continue;
      if (rng.unit() >= f.probability) continue;
      const auto snap = nodes[v]->snapshot();
      const SeqNo seq = snap.tip_seq + 1;
      // Forgeries are unsigned, so slots that demand a signature are closed.
      if (requires_signature(seq, false, interval)) continue;
      Batch b;
      b.view = snap.view;
      b.seq = seq;
      b.parent = snap.tip;
      b.commit_index_anc =
          f.kind == FaultKind::spoof_commit_qc ? snap.tip_seq : snap.commit_index;
      ByteWriter w;
      w.str("spoof-filler");
      w.u64(now);
      w.u64(v);
      b.payload.push_back(w.take());
      register_batch(b);
      schedule(now + 1, EvDeliver{v, f.who, Message{AppendEntryMsg{b}}});
    }
  }

  void dispatch(SimEvent&& ev) {
    std::visit(overloaded{
                   [&](EvCrash& e) {
                     if (e.node >= profile.n) return;
                     if (e.go_down) {
                       down[e.node] = 1;
                       emit(TraceEventKind::crashed, e.node);
                     } else if (down[e.node]) {
                       down[e.node] = 0;
                       emit(TraceEventKind::revived, e.node);
                       process(e.node, nodes[e.node]->on_revive());
                     }
                   },
                   [&](EvDeliver& e) {
                     if (down[e.to]) return;
                     if (const auto* cr = std::get_if<ClientRequestMsg>(&e.msg)) {
                       process(e.to, nodes[e.to]->on_client_request(cr->client_id, *cr));
                     } else {
                       process(e.to, nodes[e.to]->on_message(e.from, e.msg));
                     }
                   },
                   [&](EvClientDeliver& e) { client_reply(e.client, e.msg); },
                   [&](EvTimer& e) {
                     if (down[e.node]) return;
                     Effects fx = nodes[e.node]->on_timer(e.gen);
                     if (!fx.empty())
                       emit(TraceEventKind::timer_fired, e.node, nodes[e.node]->view());
                     process(e.node, fx);
                   },
                   [&](EvHeartbeat& e) {
                     if (!down[e.node]) process(e.node, nodes[e.node]->on_heartbeat());
                     if (now + cfg.heartbeat <= cfg.horizon)
                       schedule(now + cfg.heartbeat, EvHeartbeat{e.node});
                   },
                   [&](EvSubmit& e) { submit(e.client, e.idx, false); },
                   [&](EvRetry& e) { submit(e.client, e.idx, true); },
                   [&](EvSpoof& e) { spoof_pulse(e.fault); },
               },
               ev);
  }

  Trace run() {
    const std::uint32_t n = profile.n;
    for (std::uint32_t i = 0; i < n; ++i) {
      KeyPair kp = keypair_for_replica(scheme, kSimKeySeed, i);
      keys.push_back(kp.pk);
      sks.push_back(kp.sk);
    }
    kvs.resize(n);
    chain_pos.resize(n);
    down.assign(n, 0);
    for (std::uint32_t i = 0; i < n; ++i)
      nodes.push_back(std::make_unique<Replica>(i, profile, cfg.options, scheme, keys, sks[i]));

    clients.resize(cfg.load.client_count);
    for (std::uint64_t c = 0; c < cfg.load.client_count; ++c) {
      auto& cl = clients[c];
      for (std::uint64_t i = 0; i < cfg.load.txns_per_client; ++i) {
        KvTxn t;
        t.op = KvOp::put;
        t.client_id = c;
        t.client_seq = i + 1;
        t.key = "c" + std::to_string(c) + "-k" + std::to_string(i % 8);
        const std::string v = "v" + std::to_string(c) + "-" + std::to_string(i);
        t.value.assign(v.begin(), v.end());
        cl.plan.push_back(encode_kv_txn(t));
        cl.digests.push_back(sha512(cl.plan.back()));
        cl.resolved.push_back(0);
      }
    }

    for (std::uint32_t i = 0; i < n; ++i) process(i, nodes[i]->start());
    for (std::uint32_t i = 0; i < n; ++i) schedule(cfg.heartbeat, EvHeartbeat{i});
    for (std::size_t fi = 0; fi < cfg.faults.size(); ++fi) {
      const auto& f = cfg.faults[fi];
      switch (f.kind) {
        case FaultKind::crash:
          schedule(f.from, EvCrash{f.who, true});
          if (f.to <= cfg.horizon) schedule(f.to, EvCrash{f.who, false});
          break;
        case FaultKind::spoof_commit_qc:
        case FaultKind::spoof_branch:
          schedule(std::max<std::uint64_t>(1, f.from), EvSpoof{fi});
          break;
        default:
          break;
      }
    }
    for (std::uint64_t c = 0; c < cfg.load.client_count; ++c)
      for (std::uint64_t i = 0; i < cfg.load.txns_per_client; ++i)
        schedule(cfg.load.start_tick + c + i * cfg.load.interval, EvSubmit{c, i});

    while (!queue.empty()) {
      auto it = queue.begin();
      const std::uint64_t tick = std::get<0>(it->first);
      if (tick > cfg.horizon) break;
      now = tick;
      SimEvent ev = std::move(it->second);
      queue.erase(it);
      dispatch(std::move(ev));
    }
    now = cfg.horizon;
    trace.ticks = cfg.horizon;
    for (std::uint32_t i = 0; i < n; ++i) trace.final_snapshots.emplace(i, nodes[i]->snapshot());
    return std::move(trace);
  }
};

Simulator::Simulator(ScenarioConfig cfg)
    : cfg_(std::move(cfg)), profile_(validate_config(cfg_.params)) {}

Trace Simulator::run() {
  Impl impl(cfg_, profile_);
  return impl.run();
}

// ---------------------------------------------------------------------------
// Presets.

namespace {

PftParameters flat_params(std::uint32_t n, std::uint32_t pi_safe, std::uint32_t c) {
  PftParameters p;
  p.platform_sizes.assign(n, 1);
  p.pi_safe = pi_safe;
  p.pi_live = 0;
  p.c = c;
  return p;
}

}  // namespace

ScenarioConfig chained_recovery_scenario() {
  ScenarioConfig cfg;
  cfg.name = "chained-recovery";
  cfg.params = flat_params(5, 2, 1);
  cfg.options.signing_interval = 1;
  cfg.options.timeout_base = 500;
  cfg.options.timeout_backoff = false;
  // At n=5, u=1, f_safe=2 the derivation disables the single-certificate
  // path (4 is not above 4); it is forced on here to exercise both audit
  // completions in one short run.
  cfg.options.fast_path_override = true;
  cfg.seed = 7;
  cfg.gst = 0;
  cfg.delta = 1;
  cfg.delta_max = 1;
  cfg.random_jitter = false;
  cfg.heartbeat = 6;
  cfg.horizon = 29;
  cfg.record_sends = true;
  cfg.load.client_count = 1;
  cfg.load.txns_per_client = 4;
  cfg.load.start_tick = 0;
  cfg.load.interval = 6;
  cfg.load.retry_interval = 0;
  cfg.load.mode = ReceiptMode::commit;
  {
    FaultSpec f;  // the third replica sees the first batch late
    f.kind = FaultKind::delay;
    f.who = 0;
    f.from = 6;
    f.to = 7;
    f.group_b = {3};
    f.extra_delay = 12;
    cfg.faults.push_back(f);
  }
  {
    FaultSpec f;  // the fourth replica sees nothing until the last batch
    f.kind = FaultKind::delay;
    f.who = 0;
    f.from = 0;
    f.to = 24;
    f.group_b = {4};
    f.extra_delay = 22;
    cfg.faults.push_back(f);
  }
  return cfg;
}

ScenarioConfig census_scenario(bool auditing) {
  ScenarioConfig cfg;
  cfg.name = auditing ? "census-audit" : "census-baseline";
  cfg.params = flat_params(4, 1, 1);
  cfg.options.signing_interval = 2;
  cfg.options.timeout_base = 300;
  cfg.options.timeout_backoff = false;
  cfg.options.auditing_enabled = auditing;
  cfg.seed = 17;
  cfg.delta = 1;
  cfg.delta_max = 1;
  cfg.random_jitter = false;
  cfg.heartbeat = 4;
  cfg.horizon = 120;
  cfg.load.client_count = 1;
  cfg.load.txns_per_client = 20;
  cfg.load.start_tick = 2;
  cfg.load.interval = 4;
  cfg.load.retry_interval = 0;
  cfg.load.mode = ReceiptMode::commit;
  return cfg;
}

std::pair<ScenarioConfig, ScenarioConfig> stabilization_pair() {
  ScenarioConfig cfg;
  cfg.name = "stabilization-guarded";
  cfg.params = flat_params(5, 2, 1);
  cfg.options.signing_interval = 1;
  cfg.options.timeout_base = 60;
  cfg.options.timeout_backoff = false;
  cfg.seed = 11;
  cfg.delta = 1;
  cfg.delta_max = 1;
  cfg.random_jitter = false;
  cfg.heartbeat = 4;
  cfg.horizon = 200;
  cfg.load.client_count = 1;
  cfg.load.txns_per_client = 12;
  cfg.load.start_tick = 2;
  cfg.load.interval = 4;
  cfg.load.retry_interval = 0;
  cfg.load.mode = ReceiptMode::commit;
  cfg.load.broadcast_submit = true;
  {
    FaultSpec f;  // slow voters: the first leader's certificate stays private
    f.kind = FaultKind::delay;
    f.who = 2;
    f.from = 0;
    f.to = 16;
    f.extra_delay = 9;
    cfg.faults.push_back(f);
  }
  {
    FaultSpec f;
    f.kind = FaultKind::delay;
    f.who = 3;
    f.from = 0;
    f.to = 16;
    f.extra_delay = 9;
    cfg.faults.push_back(f);
  }
  {
    FaultSpec f;  // the certificate holder drops off the network
    f.kind = FaultKind::partition;
    f.group_a = {0};
    f.group_b = {1, 2, 3, 4};
    f.from = 16;
    f.to = 142;
    cfg.faults.push_back(f);
  }
  {
    FaultSpec f;  // one voter mute in the successor view: audits stall there
    f.kind = FaultKind::omission;
    f.who = 3;
    f.from = 61;
    f.to = 150;
    f.probability = 1.0;
    cfg.faults.push_back(f);
  }
  ScenarioConfig exposed = cfg;
  exposed.name = "stabilization-exposed";
  exposed.options.stabilization_enabled = false;
  return {cfg, exposed};
}

ScenarioConfig equivocation_scenario() {
  ScenarioConfig cfg;
  cfg.name = "equivocation-recovery";
  cfg.params = flat_params(5, 1, 1);
  cfg.options.signing_interval = 1;
  cfg.options.timeout_base = 60;
  cfg.options.timeout_backoff = false;
  cfg.seed = 13;
  cfg.delta = 1;
  cfg.delta_max = 1;
  cfg.random_jitter = false;
  cfg.heartbeat = 4;
  cfg.horizon = 160;
  cfg.load.client_count = 1;
  cfg.load.txns_per_client = 10;
  cfg.load.start_tick = 2;
  cfg.load.interval = 4;
  cfg.load.retry_interval = 0;
  cfg.load.mode = ReceiptMode::commit;
  cfg.load.broadcast_submit = true;
  FaultSpec f;
  f.kind = FaultKind::equivocation;
  f.who = 0;
  f.group_b = {3, 4};
  f.from = 14;
  f.to = 1'000'000;
  cfg.faults.push_back(f);
  return cfg;
}

std::pair<ScenarioConfig, ScenarioConfig> latency_pair() {
  ScenarioConfig cfg;
  cfg.name = "latency-all-up";
  cfg.params = flat_params(5, 1, 1);
  cfg.options.signing_interval = 1;
  cfg.options.timeout_base = 1000;
  cfg.options.timeout_backoff = false;
  cfg.seed = 19;
  cfg.delta = 2;
  cfg.delta_max = 2;
  cfg.random_jitter = false;
  cfg.heartbeat = 4;
  cfg.horizon = 150;
  cfg.load.client_count = 1;
  cfg.load.txns_per_client = 30;
  cfg.load.start_tick = 0;
  cfg.load.interval = 4;
  cfg.load.retry_interval = 0;
  cfg.load.mode = ReceiptMode::commit;
  ScenarioConfig degraded = cfg;
  degraded.name = "latency-degraded";
  FaultSpec f;
  f.kind = FaultKind::crash;
  f.who = 4;
  f.from = 0;
  f.to = 1'000'000'000;
  degraded.faults.push_back(f);
  return {cfg, degraded};
}

ScenarioConfig liveness_scenario(std::uint64_t seed) {
  SplitMix64 r(seed * 0x9e3779b97f4a7c15ULL + 0x51);
  ScenarioConfig cfg;
  cfg.name = "liveness-" + std::to_string(seed);
  cfg.params = flat_params(4, 1, 1);
  cfg.options.signing_interval = 1;
  cfg.options.timeout_base = 100;
  cfg.options.timeout_backoff = false;
  cfg.seed = seed;
  cfg.gst = 150 + r.below(100);
  cfg.delta = 2;
  cfg.delta_max = 10;
  cfg.random_jitter = true;
  cfg.heartbeat = 2;
  cfg.horizon = cfg.gst + 240;
  cfg.crypto = "mock";
  cfg.load.client_count = 1;
  cfg.load.txns_per_client = 6;
  cfg.load.start_tick = 5;
  cfg.load.interval = 9;
  cfg.load.retry_interval = 50;
  cfg.load.mode = ReceiptMode::audit;
  cfg.load.broadcast_submit = true;
  {
    FaultSpec f;
    f.kind = FaultKind::partition;
    const ReplicaId alone = static_cast<ReplicaId>(r.below(4));
    f.group_a = {alone};
    for (ReplicaId i = 0; i < 4; ++i)
      if (i != alone) f.group_b.push_back(i);
    f.from = r.below(40);
    f.to = 60 + r.below(cfg.gst - 70);
    cfg.faults.push_back(f);
  }
  if (r.below(2) == 0) {
    FaultSpec f;
    f.kind = FaultKind::crash;
    f.who = static_cast<ReplicaId>(r.below(4));
    f.from = r.below(50);
    f.to = cfg.gst;  // revived once delays tighten
    cfg.faults.push_back(f);
  }
  {
    FaultSpec f;
    f.kind = FaultKind::delay;
    f.who = static_cast<ReplicaId>(r.below(4));
    f.extra_delay = 1 + r.below(6);
    f.from = 0;
    f.to = cfg.gst;
    cfg.faults.push_back(f);
  }
  return cfg;
}

ScenarioConfig soak_scenario(std::uint64_t seed) {
  SplitMix64 r(seed ^ 0xabcdef1234567890ULL);
  ScenarioConfig cfg;
  cfg.name = "soak-" + std::to_string(seed);
  switch (r.below(4)) {
    case 0: cfg.params = flat_params(4, 1, 1); break;
    case 1: cfg.params = flat_params(5, 2, 1); break;
    case 2:
      cfg.params.platform_sizes = {2, 2, 2, 1};
      cfg.params.pi_safe = 1;
      cfg.params.c = 2;
      break;
    default:
      cfg.params.platform_sizes = {2, 2, 2, 2, 1};
      cfg.params.pi_safe = 1;
      cfg.params.c = 3;
      break;
  }
  const QuorumProfile profile = validate_config(cfg.params);
  const std::uint32_t n = profile.n;
  const std::uint64_t signing[] = {1, 2, 5, 10};
  cfg.options.signing_interval = signing[r.below(4)];
  cfg.options.timeout_base = 60 + r.below(120);
  cfg.options.timeout_backoff = r.below(2) == 0;
  cfg.seed = seed;
  cfg.delta = 1 + r.below(3);
  cfg.delta_max = cfg.delta + 3 + r.below(10);
  cfg.gst = r.below(300);
  cfg.random_jitter = true;
  cfg.heartbeat = 3 + r.below(4);
  cfg.horizon = 800 + r.below(400);
  cfg.crypto = "mock";
  cfg.load.client_count = 1 + r.below(2);
  cfg.load.txns_per_client = 8 + r.below(12);
  cfg.load.start_tick = r.below(30);
  cfg.load.interval = 2 + r.below(5);
  cfg.load.retry_interval = 80 + r.below(100);
  cfg.load.mode = r.below(2) == 0 ? ReceiptMode::commit : ReceiptMode::audit;
  cfg.load.broadcast_submit = r.below(2) == 0;

  std::uint32_t crash_budget = cfg.params.c;
  std::uint32_t byz_budget = profile.f_safe >= 1 ? 1 : 0;
  const std::size_t fault_count = 1 + r.below(3);
  for (std::size_t k = 0; k < fault_count; ++k) {
    const std::uint64_t roll = r.below(100);
    FaultSpec f;
    if (roll < 30 && crash_budget > 0) {
      f.kind = FaultKind::crash;
      f.who = static_cast<ReplicaId>(r.below(n));
      f.from = r.below(cfg.horizon / 2);
      f.to = f.from + 60 + r.below(300);
      --crash_budget;
    } else if (roll < 55) {
      f.kind = FaultKind::partition;
      const std::uint32_t cut = 1 + static_cast<std::uint32_t>(r.below(n - 1));
      const std::uint32_t offset = static_cast<std::uint32_t>(r.below(n));
      for (ReplicaId i = 0; i < n; ++i) {
        if ((i + offset) % n < cut)
          f.group_a.push_back(i);
        else
          f.group_b.push_back(i);
      }
      f.from = r.below(cfg.horizon / 2);
      f.to = f.from + 60 + r.below(250);
    } else if (roll < 70) {
      f.kind = FaultKind::delay;
      f.who = static_cast<ReplicaId>(r.below(n));
      f.extra_delay = 1 + r.below(12);
      f.from = r.below(cfg.horizon / 2);
      f.to = f.from + 100 + r.below(300);
    } else if (roll < 85) {
      f.kind = FaultKind::omission;
      f.who = static_cast<ReplicaId>(r.below(n));
      f.probability = static_cast<double>(30 + r.below(70)) / 100.0;
      f.from = r.below(cfg.horizon / 2);
      f.to = f.from + 60 + r.below(250);
    } else if (byz_budget > 0) {
      f.kind = FaultKind::equivocation;
      f.who = 0;
      const std::uint32_t size = 1 + static_cast<std::uint32_t>(r.below(n - 2));
      const std::uint32_t start = 1 + static_cast<std::uint32_t>(r.below(n - 1));
      for (std::uint32_t j = 0; j < size; ++j)
        f.group_b.push_back(1 + static_cast<ReplicaId>((start - 1 + j) % (n - 1)));
      f.from = r.below(cfg.horizon / 3);
      f.to = f.from + 150 + r.below(cfg.horizon / 3);
      --byz_budget;
    } else {
      f.kind = r.below(2) == 0 ? FaultKind::spoof_branch : FaultKind::spoof_commit_qc;
      f.who = static_cast<ReplicaId>(r.below(n));
      f.group_b = {static_cast<ReplicaId>(r.below(n))};
      f.probability = 0.2 + 0.1 * static_cast<double>(r.below(6));
      f.from = r.below(cfg.horizon / 2);
      f.to = f.from + 80 + r.below(250);
    }
    cfg.faults.push_back(std::move(f));
  }
  return cfg;
}

std::vector<std::pair<std::string, ScenarioConfig>> preset_scenarios() {
  std::vector<std::pair<std::string, ScenarioConfig>> out;
  out.emplace_back("chained-recovery", chained_recovery_scenario());
  out.emplace_back("census-audit", census_scenario(true));
  out.emplace_back("census-baseline", census_scenario(false));
  auto stab = stabilization_pair();
  out.emplace_back("stabilization-guarded", stab.first);
  out.emplace_back("stabilization-exposed", stab.second);
  out.emplace_back("equivocation-recovery", equivocation_scenario());
  auto lat = latency_pair();
  out.emplace_back("latency-all-up", lat.first);
  out.emplace_back("latency-degraded", lat.second);
  out.emplace_back("liveness-1", liveness_scenario(1));
  out.emplace_back("soak-1", soak_scenario(1));
  return out;
}

}  // namespace pftlog
