// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pftlog/config.hpp"
#include "pftlog/kv.hpp"
#include "pftlog/replica.hpp"

namespace pftlog {

// Deterministic PRNG (splitmix64). The simulator draws every random choice
// from one stream in event order, so a seed fully determines a run.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : x_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (x_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  std::uint64_t below(std::uint64_t bound) { return bound == 0 ? 0 : next() % bound; }
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t x_;
};

enum class FaultKind : std::uint8_t {
  crash = 0,           // node down during [from, to); paused, then revived
  omission = 1,        // node's outbound messages dropped with `probability`
  equivocation = 2,    // leader `who` feeds group_b a forged twin branch
  spoof_commit_qc = 3, // forged unsigned batches claiming inflated commits
  spoof_branch = 4,    // forged unsigned branch extensions to group_b
  partition = 5,       // group_a <-> group_b links cut during the window
  delay = 6,           // extra latency on links from `who` (to group_b if set)
};

const char* fault_kind_name(FaultKind k);
std::optional<FaultKind> fault_kind_from_name(const std::string& s);

struct FaultSpec {
  FaultKind kind = FaultKind::crash;
  ReplicaId who = 0;
  std::uint64_t from = 0;
  std::uint64_t to = UINT64_MAX;
  std::vector<ReplicaId> group_a;
  std::vector<ReplicaId> group_b;
  double probability = 1.0;
  std::uint64_t extra_delay = 0;
};

struct LoadSpec {
  std::uint64_t client_count = 1;
  std::uint64_t txns_per_client = 10;
  std::uint64_t start_tick = 0;
  std::uint64_t interval = 5;        // ticks between submissions per client
  std::uint64_t retry_interval = 600;
  ReceiptMode mode = ReceiptMode::commit;
  bool broadcast_submit = false;  // submit to every replica, not just the leader hint
};

struct ScenarioConfig {
  std::string name = "scenario";
  PftParameters params;
  ReplicaOptions options;
  std::uint64_t seed = 1;
  std::uint64_t gst = 0;         // before this tick delays are drawn up to delta_max
  std::uint64_t delta = 1;       // post-GST delivery delay bound
  std::uint64_t delta_max = 20;  // pre-GST delivery delay bound
  bool random_jitter = true;     // false: every delivery takes exactly the bound
  std::uint64_t heartbeat = 4;   // leader proposal cadence
  std::uint64_t horizon = 5000;  // ticks simulated
  std::string crypto = "ed25519";
  LoadSpec load;
  std::vector<FaultSpec> faults;
  bool record_sends = false;  // per-send trace events (census totals always kept)
};

std::string scenario_to_json(const ScenarioConfig& cfg);
ScenarioConfig scenario_from_json(const std::string& text);

// Trace events. Field meaning depends on `kind`:
//   proposed:        node, a=seq, b=view, c=txns, flag=new_view
//   committed:       node, a=seq, digest=batch digest at that position
//   audited:         node, a=upto, digest=chain digest at upto, flag=fast
//   rolled_back:     node, a=new tip
//   view_advanced:   node, a=view, flag=leader
//   stabilized:      node, a=view
//   commit_qc:       node, a=seq, c=votes
//   audit_qc:        node, a=seq, b=certified view, c=trigger seq, digest, flag=fast
//   throttled:       node, a=tip, b=audit index
//   timer_fired:     node, a=view at expiry
//   sent:            node=sender, a=message type, b=recipient
//   client_submitted: node=target replica, a=client, b=client seq, digest=txn
//   client_replied:  node=client, a=client seq, b=status
//   crashed/revived: node
enum class TraceEventKind : std::uint8_t {
  proposed = 0,
  committed = 1,
  audited = 2,
  rolled_back = 3,
  view_advanced = 4,
  stabilized = 5,
  commit_qc = 6,
  audit_qc = 7,
  throttled = 8,
  timer_fired = 9,
  sent = 10,
  client_submitted = 11,
  client_replied = 12,
  crashed = 13,
  revived = 14,
};

const char* trace_event_kind_name(TraceEventKind k);

struct TraceEvent {
  std::uint64_t tick = 0;
  TraceEventKind kind = TraceEventKind::proposed;
  ReplicaId node = 0;
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  std::uint64_t c = 0;
  Digest digest{};
  bool flag = false;
};

struct Trace {
  std::vector<TraceEvent> events;
  std::map<Digest, Batch> registry;  // every batch seen anywhere, forgeries included
  std::map<std::uint8_t, std::uint64_t> census;  // message type -> messages sent
  std::map<ReplicaId, ReplicaSnapshot> final_snapshots;
  std::map<Digest, std::uint64_t> first_submit;  // txn digest -> first submit tick
  std::vector<AuditQc> qcs;  // every certificate formed, in emission order
  std::uint64_t ticks = 0;

  // Canonical line rendering; two traces are equal iff these match.
  std::string serialize_events() const;
};

struct CheckResult {
  std::string name;
  bool ok = true;
  std::string detail;
};

// Safety and liveness oracles over a finished trace. Each reconstructs the
// relevant state from events and the batch registry alone, independent of
// the engine internals that produced them.
CheckResult check_audited_agreement(const Trace& t);
CheckResult check_commit_agreement(const Trace& t);  // benign runs only
CheckResult check_stability_before_qc(const Trace& t, const ScenarioConfig& cfg);
CheckResult check_fast_path_guard(const Trace& t, const ScenarioConfig& cfg);
CheckResult check_audit_lag(const Trace& t, const ScenarioConfig& cfg);  // benign runs only
CheckResult check_liveness_bound(const Trace& t, const ScenarioConfig& cfg);
CheckResult check_qc_certificates(const Trace& t, const ScenarioConfig& cfg);

// True when every fault leaves message content and node behavior honest
// (crash, partition, delay), so commit-level checks apply.
bool benign_faults_only(const ScenarioConfig& cfg);

// Applicable checks for this scenario, in a fixed order.
std::vector<CheckResult> run_standard_checks(const Trace& t, const ScenarioConfig& cfg);

// Count of committed payload-carrying positions that were later replaced by
// a different batch. Zero under stabilization; the ablation flips it.
std::size_t committed_payload_losses(const Trace& t);

class Simulator {
 public:
  explicit Simulator(ScenarioConfig cfg);
  Trace run();

  const QuorumProfile& profile() const { return profile_; }

 private:
  struct Impl;
  ScenarioConfig cfg_;
  QuorumProfile profile_;
};

// Scenario presets used by the verification suite and the CLI.
ScenarioConfig chained_recovery_scenario();  // delayed replicas catch up through sync + chained votes
ScenarioConfig census_scenario(bool auditing);
std::pair<ScenarioConfig, ScenarioConfig> stabilization_pair();  // (guarded, exposed)
ScenarioConfig equivocation_scenario();
std::pair<ScenarioConfig, ScenarioConfig> latency_pair();  // (all up, one crashed)
ScenarioConfig liveness_scenario(std::uint64_t seed);
ScenarioConfig soak_scenario(std::uint64_t seed);
std::vector<std::pair<std::string, ScenarioConfig>> preset_scenarios();

}  // namespace pftlog
