// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <variant>
#include <vector>

#include "pftlog/config.hpp"
#include "pftlog/crypto.hpp"
#include "pftlog/ledger.hpp"
#include "pftlog/messages.hpp"
#include "pftlog/receipts.hpp"

namespace pftlog {

// Engine tunables. Defaults suit the deterministic harness; the wire
// runner overrides the timer values with wall-clock milliseconds.
struct ReplicaOptions {
  std::uint64_t signing_interval = 10;  // every s-th batch carries a leader signature
  std::uint64_t lag_window = 64;        // proposals stop when tip - audit_index would exceed this
  std::uint64_t timeout_base = 200;     // view timer duration before backoff
  bool timeout_backoff = true;          // double the timer per consecutive silent view
  std::uint32_t max_backoff_doublings = 6;
  bool auditing_enabled = true;   // false: plain majority replication, the baseline mode
  bool stabilization_enabled = true;  // false: new leaders propose before their view start is audited
  bool relaxed_rule1 = false;     // branch selection keeps QC-containing branches instead of QC holders
  std::optional<bool> fast_path_override;  // forces the single-certificate audit path on or off
  std::size_t max_batch_txns = 256;
  std::size_t max_sync_batches = 512;
};

// Effects are the engine's only output channel: every API call returns the
// list of sends, timer updates, and state transitions it caused. The host
// (simulator or wire runner) interprets them.
struct SendEffect {
  ReplicaId to = 0;
  Message msg;
};
struct BroadcastEffect {
  Message msg;  // to every other replica
};
struct ClientSendEffect {
  std::uint64_t client_id = 0;
  Message msg;
};
struct ArmTimerEffect {
  std::uint64_t gen = 0;
  std::uint64_t duration = 0;
};
struct CommittedEffect {
  SeqNo upto = 0;
  Digest tip_digest{};  // digest of the chain batch at upto
};
struct AuditedEffect {
  SeqNo upto = 0;
  Digest tip_digest{};
  bool fast = false;
};
struct RolledBackEffect {
  SeqNo to = 0;
};
struct ViewAdvancedEffect {
  ViewId view = 0;
  bool leader = false;
};
struct StabilizedEffect {
  ViewId view = 0;
};
struct ProposedEffect {
  SeqNo seq = 0;
  ViewId view = 0;
  bool new_view = false;
  std::size_t txns = 0;
};
struct CommitQcEffect {
  SeqNo seq = 0;
  std::uint32_t votes = 0;
};
struct AuditQcEffect {
  AuditQc qc;
  SeqNo trigger_seq = 0;  // the vote seq whose arrival completed the certificate
};
struct ThrottledEffect {
  SeqNo tip = 0;
  SeqNo audit_index = 0;
};

using Effect = std::variant<SendEffect, BroadcastEffect, ClientSendEffect, ArmTimerEffect,
                            CommittedEffect, AuditedEffect, RolledBackEffect, ViewAdvancedEffect,
                            StabilizedEffect, ProposedEffect, CommitQcEffect, AuditQcEffect,
                            ThrottledEffect>;
using Effects = std::vector<Effect>;

struct ReplicaSnapshot {
  ReplicaId id = 0;
  ViewId view = 0;
  bool view_stable = false;
  bool leader = false;
  SeqNo commit_index = 0;
  SeqNo audit_index = 0;
  SeqNo tip_seq = 0;
  Digest tip{};
};

// Branch selection over view-change proofs; pure so it can be fuzzed and
// replayed independently of any replica. Returns the digest of the winning
// tip. Rules, in order, each narrowing the candidate set:
//   1. highest audit certificate held by a proof (relaxed variant: branches
//      containing the highest certified batch),
//   2. when the fast path is on, branches containing the highest batch that
//      appears in at least n-u-f_safe proofs,
//   3. highest tip view,
//   4. highest tip seq, ties broken by smallest tip digest.
// `store` must already contain every batch carried by the proofs; ancestry
// that cannot be resolved locally counts as not-contained.
Digest select_branch(const std::vector<ViewChangeMsg>& proofs, const BatchStore& store,
                     const QuorumProfile& profile, bool relaxed_rule1, bool fast_path_enabled);

// One replica of the replicated log. Deterministic: equal inputs in equal
// order produce equal effects, byte for byte. All I/O and time live in the
// host; the engine only consumes events and emits effects.
class Replica {
 public:
  Replica(ReplicaId id, const QuorumProfile& profile, const ReplicaOptions& opts,
          const SignatureScheme& scheme, std::vector<PublicKey> keys, SecretKey sk);

  Effects start();
  Effects on_message(ReplicaId from, const Message& msg);
  Effects on_client_request(std::uint64_t client_id, const ClientRequestMsg& msg);
  Effects on_timer(std::uint64_t gen);
  Effects on_heartbeat();  // leader cadence: propose queued or empty batches
  Effects on_revive();     // after a crash window: re-arm the view timer

  // Durable-state restore used by the wire runner's log replay. These apply
  // recorded transitions without emitting protocol sends.
  void restore_batch(const Batch& b);
  void restore_vote(ViewId view, SeqNo seq, const Digest& digest);
  void restore_view(ViewId view, bool stable);
  void restore_rollback(SeqNo to);
  Effects finish_restore();  // arms the timer

  ReplicaSnapshot snapshot() const;
  ReplicaId id() const { return id_; }
  ViewId view() const { return view_; }
  bool view_stable() const { return view_stable_; }
  bool is_leader() const { return leader_of(view_) == id_ && view_stable_; }
  ReplicaId leader_of(ViewId v) const { return static_cast<ReplicaId>(v % profile_.n); }
  SeqNo commit_index() const { return commit_index_; }
  SeqNo audit_index() const { return audit_index_; }
  SeqNo tip_seq() const { return chain_.tip_seq(); }
  bool fast_path_enabled() const { return fast_enabled_; }
  const QuorumProfile& profile() const { return profile_; }
  const Branch& chain() const { return chain_; }
  const BatchStore& store() const { return store_; }
  const Batch* batch_at(SeqNo seq) const;
  std::optional<AuditQc> high_audit_qc() const { return high_audit_qc_; }
  const std::optional<NewViewMsg>& last_new_view() const { return last_new_view_; }

  // Receipt construction from local state. Commit receipts exist only at
  // the leader that proposed the batch (it signs the promise); audit
  // receipts can be built by any replica that has audited the batch.
  std::optional<CommitReceipt> build_commit_receipt(const Digest& txn_digest) const;
  std::optional<AuditReceipt> build_audit_receipt(const Digest& txn_digest) const;

  // Locates a transaction on the current chain: (seq, index in payload).
  std::optional<std::pair<SeqNo, std::uint32_t>> locate_txn(const Digest& txn_digest) const;

 private:
  struct PendingSlot {
    std::set<ReplicaId> voters;
    std::map<ReplicaId, Signature> signed_votes;
    bool commit_done = false;
    bool audit_done = false;
    bool fast_done = false;
  };

  struct PendingReply {
    std::uint64_t client_id = 0;
    std::uint64_t client_seq = 0;
    ReceiptMode mode = ReceiptMode::commit;
  };

  // Proposal path (leader only).
  void propose(std::vector<Bytes> txns, bool new_view_batch, Effects& fx);
  void maybe_propose(Effects& fx, bool force_empty);
  bool throttled() const;

  // Append path (all replicas).
  void handle_append(ReplicaId from, const Batch& b, Effects& fx);
  bool accept_batch(const Batch& b, Effects& fx);  // extend chain + process piggybacks
  void vote_on(const Batch& b, Effects& fx);
  void record_own_vote(const Batch& b, Effects& fx);

  // Vote aggregation.
  void handle_vote(ReplicaId from, const VoteMsg& v, Effects& fx);
  void apply_vote(ReplicaId voter, SeqNo seq, const std::map<SeqNo, Signature>& sigs, Effects& fx);
  void check_quorums(SeqNo seq, SeqNo trigger_seq, Effects& fx);

  // Confirmation state.
  void commit_to(SeqNo seq, Effects& fx);
  void audit_to(SeqNo seq, bool fast, Effects& fx);
  void learn_qc(const AuditQc& qc, Effects& fx);
  void flush_replies(Effects& fx);

  // View change.
  void handle_view_change(ReplicaId from, const ViewChangeMsg& m, Effects& fx);
  void handle_new_view(ReplicaId from, const NewViewMsg& m, Effects& fx);
  void send_view_change(ViewId target, Effects& fx);
  bool validate_vc_proof(const ViewChangeMsg& m) const;
  void try_assemble_new_view(ViewId target, Effects& fx);
  // `assembling` marks the leader's own construction path, whose proofs
  // were validated on pool entry; never set for received messages.
  // Returns false when adoption blocked on missing batches (sync pending).
  bool adopt_new_view(const NewViewMsg& m, bool assembling, Effects& fx);
  void stabilize(Effects& fx);

  // Sync.
  void handle_sync_request(ReplicaId from, const SyncRequestMsg& m, Effects& fx);
  void handle_sync_response(ReplicaId from, const SyncResponseMsg& m, Effects& fx);
  void request_sync(ReplicaId from, const Digest& want, Effects& fx);
  void drain_stashed(ReplicaId from, Effects& fx);

  // Chain maintenance.
  void rollback_chain(SeqNo new_tip, Effects& fx);
  void index_batch_txns(const Batch& b);
  void arm_timer(Effects& fx);
  std::uint64_t timer_duration() const;
  bool signing_due(SeqNo seq, bool new_view_batch) const;
  Signature sign_vote(const Batch& b) const;
  const Batch* chain_batch(SeqNo seq) const;
  std::optional<AuditQc> qc_for(const Digest& digest) const;

  ReplicaId id_;
  QuorumProfile profile_;
  ReplicaOptions opts_;
  const SignatureScheme& scheme_;
  std::vector<PublicKey> keys_;
  SecretKey sk_;
  bool fast_enabled_;

  BatchStore store_;
  Branch chain_;
  ViewId view_ = 0;
  bool view_stable_ = true;  // view 0 starts stable by convention
  Digest stabilizing_digest_{};
  SeqNo commit_index_ = 0;
  SeqNo audit_index_ = 0;
  std::optional<AuditQc> high_audit_qc_;
  std::optional<Bytes> last_embedded_qc_;  // canonical bytes of the last certificate embedded

  std::map<SeqNo, PendingSlot> pending_;
  std::map<SeqNo, Digest> voted_;          // this view: seq -> digest voted for
  std::map<SeqNo, VoteMsg> vote_cache_;    // this view: resend on duplicate append
  std::map<Digest, AuditQc> qc_by_digest_; // best known certificate per batch
  std::map<SeqNo, Batch> stashed_;         // future batches awaiting a sync fill
  std::optional<NewViewMsg> pending_new_view_;  // adoption blocked on missing batches
  std::optional<ViewId> pending_assembly_;      // assembly blocked on a missing winning tip
  std::optional<NewViewMsg> last_new_view_;     // resent to heal stragglers

  std::map<ViewId, std::map<ReplicaId, ViewChangeMsg>> vc_pool_;
  ViewId vc_target_ = 0;  // highest view this replica has asked for
  std::uint32_t silent_views_ = 0;
  std::uint64_t timer_gen_ = 0;

  std::deque<Bytes> txn_queue_;
  std::map<Digest, std::pair<SeqNo, std::uint32_t>> txn_index_;  // digest -> chain position
  std::map<SeqNo, std::vector<Digest>> seq_txns_;  // inverse index, pruned on rollback
  std::map<Digest, std::vector<PendingReply>> pending_replies_;
  std::set<Digest> seen_txns_;  // drops duplicate in-flight submissions
};

}  // namespace pftlog
