// SPDX-License-Identifier: Apache-2.0
#include "pftlog/replica.hpp"

#include <algorithm>
#include <cassert>

namespace pftlog {

namespace {

// Tip identity of a view-change proof. When the suffix is empty the
// sender's tip is the certified batch itself.
Digest proof_tip(const ViewChangeMsg& p) {
  if (!p.suffix.empty()) return batch_digest(p.suffix.back());
  if (p.high_audit_qc) return p.high_audit_qc->batch_digest;
  return genesis_digest();
}

SeqNo proof_tip_seq(const ViewChangeMsg& p) {
  if (!p.suffix.empty()) return p.suffix.back().seq;
  if (p.high_audit_qc) return p.high_audit_qc->seq;
  return 0;
}

ViewId proof_tip_view(const ViewChangeMsg& p) {
  if (!p.suffix.empty()) return p.suffix.back().view;
  if (p.high_audit_qc) return p.high_audit_qc->view;
  return 0;
}

bool digest_less(const Digest& a, const Digest& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

Digest select_branch(const std::vector<ViewChangeMsg>& proofs, const BatchStore& store,
                     const QuorumProfile& profile, bool relaxed_rule1, bool fast_path_enabled) {
  std::vector<const ViewChangeMsg*> survivors;
  survivors.reserve(proofs.size());
  for (const auto& p : proofs) survivors.push_back(&p);

  // Rule 1: the branch must descend from the strongest audited history.
  if (!relaxed_rule1) {
    // Keep the proofs holding the highest audit certificate.
    std::int64_t best = -1;
    for (const auto* p : survivors) {
      if (p->high_audit_qc) best = std::max(best, static_cast<std::int64_t>(p->high_audit_qc->view));
    }
    std::vector<const ViewChangeMsg*> kept;
    for (const auto* p : survivors) {
      std::int64_t v = p->high_audit_qc ? static_cast<std::int64_t>(p->high_audit_qc->view) : -1;
      if (v == best) kept.push_back(p);
    }
    survivors = std::move(kept);
  } else {
    // Relaxed variant: keep the branches containing the highest certified
    // batch, wherever the certificate itself is held.
    const AuditQc* best = nullptr;
    for (const auto* p : survivors) {
      if (!p->high_audit_qc) continue;
      const AuditQc& q = *p->high_audit_qc;
      if (best == nullptr || qc_less(*best, q) ||
          (!qc_less(q, *best) && digest_less(q.batch_digest, best->batch_digest))) {
        best = &q;
      }
    }
    if (best != nullptr) {
      std::vector<const ViewChangeMsg*> kept;
      for (const auto* p : survivors) {
        auto anc = store.is_ancestor(best->batch_digest, proof_tip(*p));
        if (anc.value_or(false)) kept.push_back(p);
      }
      if (!kept.empty()) survivors = std::move(kept);
    }
  }

  // Rule 2: with the fast path on, a batch seen by n-u-f_safe proofs may
  // already hold a hidden fast certificate; keep branches containing the
  // highest such batch.
  if (fast_path_enabled && profile.n > profile.u + profile.f_safe) {
    const std::size_t k = profile.n - profile.u - profile.f_safe;
    std::vector<Digest> candidates;
    for (const auto& p : proofs) {
      for (const auto& b : p.suffix) candidates.push_back(batch_digest(b));
      if (p.high_audit_qc) candidates.push_back(p.high_audit_qc->batch_digest);
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    const Batch* best = nullptr;
    Digest best_digest{};
    for (const auto& d : candidates) {
      const Batch* b = store.get(d);
      if (b == nullptr) continue;
      std::size_t count = 0;
      for (const auto& p : proofs) {
        if (store.is_ancestor(d, proof_tip(p)).value_or(false)) ++count;
      }
      if (count < k) continue;
      if (best == nullptr || b->view > best->view ||
          (b->view == best->view && b->seq > best->seq) ||
          (b->view == best->view && b->seq == best->seq && digest_less(d, best_digest))) {
        best = b;
        best_digest = d;
      }
    }
    if (best != nullptr) {
      std::vector<const ViewChangeMsg*> kept;
      for (const auto* p : survivors) {
        if (store.is_ancestor(best_digest, proof_tip(*p)).value_or(false)) kept.push_back(p);
      }
      if (!kept.empty()) survivors = std::move(kept);
    }
  }

  // Rule 3: highest tip view.
  ViewId best_view = 0;
  for (const auto* p : survivors) best_view = std::max(best_view, proof_tip_view(*p));
  {
    std::vector<const ViewChangeMsg*> kept;
    for (const auto* p : survivors) {
      if (proof_tip_view(*p) == best_view) kept.push_back(p);
    }
    survivors = std::move(kept);
  }

  // Rule 4: highest tip seq, smallest digest on ties.
  const ViewChangeMsg* winner = nullptr;
  for (const auto* p : survivors) {
    if (winner == nullptr) {
      winner = p;
      continue;
    }
    SeqNo ps = proof_tip_seq(*p);
    SeqNo ws = proof_tip_seq(*winner);
    if (ps > ws || (ps == ws && digest_less(proof_tip(*p), proof_tip(*winner)))) winner = p;
  }
  return winner != nullptr ? proof_tip(*winner) : genesis_digest();
}

Replica::Replica(ReplicaId id, const QuorumProfile& profile, const ReplicaOptions& opts,
                 const SignatureScheme& scheme, std::vector<PublicKey> keys, SecretKey sk)
    : id_(id),
      profile_(profile),
      opts_(opts),
      scheme_(scheme),
      keys_(std::move(keys)),
      sk_(sk) {
  fast_enabled_ =
      opts_.auditing_enabled && opts_.fast_path_override.value_or(profile_.fast_path_enabled);
  store_.put(genesis_batch());
}

Effects Replica::start() {
  Effects fx;
  arm_timer(fx);
  return fx;
}

Effects Replica::on_revive() {
  Effects fx;
  arm_timer(fx);
  return fx;
}

Effects Replica::on_message(ReplicaId from, const Message& msg) {
  Effects fx;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, AppendEntryMsg>) {
          handle_append(from, m.batch, fx);
        } else if constexpr (std::is_same_v<T, VoteMsg>) {
          handle_vote(from, m, fx);
        } else if constexpr (std::is_same_v<T, ViewChangeMsg>) {
          handle_view_change(from, m, fx);
        } else if constexpr (std::is_same_v<T, NewViewMsg>) {
          handle_new_view(from, m, fx);
        } else if constexpr (std::is_same_v<T, SyncRequestMsg>) {
          handle_sync_request(from, m, fx);
        } else if constexpr (std::is_same_v<T, SyncResponseMsg>) {
          handle_sync_response(from, m, fx);
        } else if constexpr (std::is_same_v<T, StatusRequestMsg>) {
          ReplicaSnapshot s = snapshot();
          StatusReplyMsg reply{s.id,          s.view,        s.view_stable, s.leader,
                               s.commit_index, s.audit_index, s.tip_seq,     s.tip};
          fx.push_back(SendEffect{from, reply});
        }
        // Hello, client traffic and replies are host-level concerns.
      },
      msg);
  return fx;
}

Effects Replica::on_timer(std::uint64_t gen) {
  Effects fx;
  if (gen != timer_gen_) return fx;
  silent_views_ += 1;
  ViewId target = std::max(view_, vc_target_) + 1;
  send_view_change(target, fx);
  arm_timer(fx);
  return fx;
}

Effects Replica::on_heartbeat() {
  Effects fx;
  if (leader_of(view_) != id_) return fx;
  if (!view_stable_) {
    // Keep re-offering the view start until the cluster stabilizes; heals
    // followers that missed the original announcement.
    if (last_new_view_) fx.push_back(BroadcastEffect{*last_new_view_});
    return fx;
  }
  maybe_propose(fx, /*force_empty=*/true);
  return fx;
}

Effects Replica::on_client_request(std::uint64_t client_id, const ClientRequestMsg& m) {
  Effects fx;
  if (!is_leader()) {
    // Buffer the transaction anyway: if leadership moves here later the
    // request is proposable without another client round trip.
    const Digest d = sha512(m.txn);
    if (seen_txns_.insert(d).second && !txn_index_.count(d)) txn_queue_.push_back(m.txn);
    ClientReplyMsg reply;
    reply.client_id = m.client_id;
    reply.client_seq = m.client_seq;
    reply.status = ClientReplyStatus::redirect;
    reply.leader_hint = leader_of(view_);
    reply.view = view_;
    fx.push_back(ClientSendEffect{client_id, reply});
    return fx;
  }
  const Digest d = sha512(m.txn);
  // Serve straight away when the confirmation already happened.
  auto loc = locate_txn(d);
  if (loc.has_value()) {
    const SeqNo seq = loc->first;
    const bool ready = m.mode == ReceiptMode::commit ? seq <= commit_index_ : seq <= audit_index_;
    if (ready) {
      ClientReplyMsg reply;
      reply.client_id = m.client_id;
      reply.client_seq = m.client_seq;
      reply.view = view_;
      if (m.mode == ReceiptMode::commit) {
        reply.status = ClientReplyStatus::committed;
        auto r = build_commit_receipt(d);
        if (r) reply.receipt = encode_commit_receipt(*r);
      } else {
        reply.status = ClientReplyStatus::audited;
        auto r = build_audit_receipt(d);
        if (r) reply.receipt = encode_audit_receipt(*r);
      }
      fx.push_back(ClientSendEffect{client_id, reply});
      return fx;
    }
  }
  pending_replies_[d].push_back(PendingReply{client_id, m.client_seq, m.mode});
  if (seen_txns_.insert(d).second && !loc.has_value()) txn_queue_.push_back(m.txn);
  if (txn_queue_.size() >= opts_.max_batch_txns) maybe_propose(fx, false);
  return fx;
}

// ---------------------------------------------------------------------------
// Proposal path.

bool Replica::throttled() const {
  if (!opts_.auditing_enabled) return false;
  return chain_.tip_seq() + 1 > audit_index_ + opts_.lag_window;
}

void Replica::maybe_propose(Effects& fx, bool force_empty) {
  if (!is_leader()) return;
  if (vc_target_ > view_) return;  // this view is suspect; stop extending it
  if (throttled()) {
    fx.push_back(ThrottledEffect{chain_.tip_seq(), audit_index_});
    return;
  }
  std::vector<Bytes> txns;
  while (!txn_queue_.empty() && txns.size() < opts_.max_batch_txns) {
    // Entries already placed on the chain (seen in another leader's batch
    // while this node was buffering) are dropped, not re-proposed.
    if (txn_index_.count(sha512(txn_queue_.front()))) {
      txn_queue_.pop_front();
      continue;
    }
    txns.push_back(std::move(txn_queue_.front()));
    txn_queue_.pop_front();
  }
  if (txns.empty() && !force_empty) return;
  propose(std::move(txns), false, fx);
}

bool Replica::signing_due(SeqNo seq, bool new_view_batch) const {
  const std::uint64_t interval = opts_.auditing_enabled ? opts_.signing_interval : 0;
  return requires_signature(seq, new_view_batch, interval);
}

void Replica::propose(std::vector<Bytes> txns, bool new_view_batch, Effects& fx) {
  Batch b;
  b.view = view_;
  b.seq = chain_.tip_seq() + 1;
  b.parent = chain_.tip();
  b.commit_index_anc = commit_index_;
  b.new_view = new_view_batch;
  b.payload = std::move(txns);
  if (opts_.auditing_enabled && high_audit_qc_ && chain_.covers(high_audit_qc_->seq) &&
      chain_.at(high_audit_qc_->seq) == high_audit_qc_->batch_digest) {
    Bytes canon = encode_audit_qc(*high_audit_qc_);
    if (!last_embedded_qc_ || *last_embedded_qc_ != canon) {
      b.audit_qc_anc = *high_audit_qc_;
      last_embedded_qc_ = std::move(canon);
    }
  }
  if (signing_due(b.seq, b.new_view)) {
    b.leader_sig = scheme_.sign(sk_, batch_sig_message(batch_digest(b)));
  }
  chain_.extend(b);
  store_.put(b);
  index_batch_txns(b);
  fx.push_back(ProposedEffect{b.seq, b.view, b.new_view, b.payload.size()});
  record_own_vote(b, fx);
  if (!new_view_batch) fx.push_back(BroadcastEffect{AppendEntryMsg{b}});
}

Signature Replica::sign_vote(const Batch& b) const {
  return scheme_.sign(sk_, vote_sig_message(b.view, b.seq, batch_digest(b)));
}

void Replica::record_own_vote(const Batch& b, Effects& fx) {
  const Digest d = batch_digest(b);
  voted_[b.seq] = d;
  std::map<SeqNo, Signature> sigs;
  if (opts_.auditing_enabled && b.is_signed()) {
    for (SeqNo k = audit_index_ + 1; k <= b.seq; ++k) {
      const Batch* kb = chain_batch(k);
      if (kb != nullptr && kb->is_signed()) sigs[k] = sign_vote(*kb);
    }
  }
  apply_vote(id_, b.seq, sigs, fx);
}

void Replica::vote_on(const Batch& b, Effects& fx) {
  // Once a higher view is requested this replica's branch snapshot sits in
  // view-change pools; voting past it would let commits outrun every proof
  // available to the next assembly. Freeze until a view advance clears it.
  if (vc_target_ > view_) return;
  if (leader_of(view_) == id_) {
    record_own_vote(b, fx);
    return;
  }
  const Digest d = batch_digest(b);
  VoteMsg v;
  v.voter = id_;
  v.seq = b.seq;
  v.batch_digest = d;
  if (opts_.auditing_enabled && b.is_signed()) {
    std::vector<std::pair<SeqNo, Signature>> sigs;
    for (SeqNo k = audit_index_ + 1; k <= b.seq; ++k) {
      const Batch* kb = chain_batch(k);
      if (kb != nullptr && kb->is_signed()) sigs.emplace_back(k, sign_vote(*kb));
    }
    v.sigs = std::move(sigs);
  }
  voted_[b.seq] = d;
  vote_cache_[b.seq] = v;
  fx.push_back(SendEffect{leader_of(view_), v});
}

// ---------------------------------------------------------------------------
// Append path.

const Batch* Replica::chain_batch(SeqNo seq) const {
  if (!chain_.covers(seq)) return nullptr;
  return store_.get(chain_.at(seq));
}

const Batch* Replica::batch_at(SeqNo seq) const { return chain_batch(seq); }

void Replica::index_batch_txns(const Batch& b) {
  if (b.payload.empty()) return;
  auto& digests = seq_txns_[b.seq];
  digests.clear();
  digests.reserve(b.payload.size());
  for (std::uint32_t i = 0; i < b.payload.size(); ++i) {
    Digest d = sha512(b.payload[i]);
    txn_index_[d] = {b.seq, i};
    seen_txns_.insert(d);
    digests.push_back(d);
  }
}

void Replica::handle_append(ReplicaId from, const Batch& b, Effects& fx) {
  if (b.seq == 0) return;
  if (b.view > view_) return;  // stale replica; healed by the view-change reply path
  if (b.view < view_) {
    if (last_new_view_) fx.push_back(SendEffect{from, *last_new_view_});
    return;
  }
  if (signing_due(b.seq, b.new_view) != b.is_signed()) return;
  const Digest d = batch_digest(b);
  if (b.is_signed() &&
      !scheme_.verify(keys_[leader_of(b.view)], batch_sig_message(d), *b.leader_sig)) {
    return;
  }
  if (b.new_view && d != stabilizing_digest_) return;
  if (!view_stable_) {
    // The first regular batch of a view carries the certificate that
    // stabilizes it; anything else is premature.
    if (b.audit_qc_anc && b.audit_qc_anc->batch_digest == stabilizing_digest_ &&
        verify_audit_qc(*b.audit_qc_anc, profile_, keys_, scheme_)) {
      learn_qc(*b.audit_qc_anc, fx);
    }
    if (!view_stable_) {
      // A later batch means the carrier already exists; fetch the gap so a
      // rejoining replica can still stabilize.
      if (b.seq > chain_.tip_seq()) {
        if (stashed_.size() < 1024) stashed_.emplace(b.seq, b);
        request_sync(from, b.parent, fx);
      }
      return;
    }
  }
  const SeqNo tip = chain_.tip_seq();
  if (b.seq == tip + 1) {
    if (b.parent != chain_.tip()) {
      stashed_.emplace(b.seq, b);
      request_sync(from, b.parent, fx);
      return;
    }
    if (accept_batch(b, fx)) vote_on(b, fx);
    return;
  }
  if (b.seq <= tip) {
    if (chain_.at(b.seq) == d) {
      auto it = vote_cache_.find(b.seq);
      if (it != vote_cache_.end()) fx.push_back(SendEffect{leader_of(view_), it->second});
      return;
    }
    const Batch* occ = chain_batch(b.seq);
    if (occ == nullptr) return;
    // A signed batch displaces a spoofed unsigned suffix: unsigned batches
    // are unauthenticated, so the signed one is the leader's real chain.
    if (b.is_signed() && b.seq >= 1 && chain_.covers(b.seq - 1) &&
        b.parent == chain_.at(b.seq - 1) && b.seq - 1 >= audit_index_) {
      bool suffix_unsigned = true;
      for (SeqNo s = b.seq; s <= tip; ++s) {
        const Batch* sb = chain_batch(s);
        if (sb == nullptr || sb->is_signed()) {
          suffix_unsigned = false;
          break;
        }
      }
      if (suffix_unsigned) {
        rollback_chain(b.seq - 1, fx);
        if (accept_batch(b, fx)) vote_on(b, fx);
        return;
      }
    }
    if (occ->view == b.view && occ->is_signed() && b.is_signed()) {
      // Two leader-signed batches for one slot: equivocation evidence.
      // Ask once for the next view; repeats are no-ops while it is pending.
      send_view_change(view_ + 1, fx);
    }
    return;
  }
  // Gap: stash and fetch the missing range.
  if (stashed_.size() < 1024) stashed_.emplace(b.seq, b);
  request_sync(from, b.parent, fx);
}

bool Replica::accept_batch(const Batch& b, Effects& fx) {
  if (b.audit_qc_anc && !verify_audit_qc(*b.audit_qc_anc, profile_, keys_, scheme_)) return false;
  if (b.commit_index_anc > b.seq) return false;
  if (!chain_.extend(b)) return false;
  store_.put(b);
  index_batch_txns(b);
  if (b.audit_qc_anc) learn_qc(*b.audit_qc_anc, fx);
  commit_to(b.commit_index_anc, fx);
  return true;
}

// ---------------------------------------------------------------------------
// Vote aggregation.

void Replica::handle_vote(ReplicaId from, const VoteMsg& v, Effects& fx) {
  (void)from;
  if (v.voter >= profile_.n) return;
  if (v.seq <= audit_index_) return;
  if (!chain_.covers(v.seq)) return;
  if (chain_.at(v.seq) != v.batch_digest) return;
  const Batch* vb = chain_batch(v.seq);
  if (vb == nullptr) return;
  std::map<SeqNo, Signature> sigs;
  if (opts_.auditing_enabled) {
    if (vb->is_signed() != v.sigs.has_value()) return;
    if (v.sigs) {
      for (const auto& [k, sig] : *v.sigs) {
        if (k > v.seq) return;
        if (k <= audit_index_) continue;
        const Batch* kb = chain_batch(k);
        if (kb == nullptr || !kb->is_signed()) return;
        if (!scheme_.verify(keys_[v.voter], vote_sig_message(kb->view, k, chain_.at(k)), sig))
          return;
        sigs[k] = sig;
      }
      if (sigs.find(v.seq) == sigs.end()) return;  // own signature is mandatory
    }
  }
  apply_vote(v.voter, v.seq, sigs, fx);
}

void Replica::apply_vote(ReplicaId voter, SeqNo seq, const std::map<SeqNo, Signature>& sigs,
                         Effects& fx) {
  // A vote endorses the batch and its whole ancestry.
  for (SeqNo k = seq; k > audit_index_; --k) {
    PendingSlot& slot = pending_[k];
    slot.voters.insert(voter);
    auto it = sigs.find(k);
    if (it != sigs.end()) slot.signed_votes[voter] = it->second;
  }
  const SeqNo low = audit_index_ + 1;
  for (SeqNo k = low; k <= seq; ++k) check_quorums(k, seq, fx);
}

void Replica::check_quorums(SeqNo seq, SeqNo trigger_seq, Effects& fx) {
  auto it = pending_.find(seq);
  if (it == pending_.end()) return;
  PendingSlot& slot = it->second;
  if (!slot.commit_done && slot.voters.size() >= profile_.commit_quorum) {
    slot.commit_done = true;
    fx.push_back(CommitQcEffect{seq, static_cast<std::uint32_t>(slot.voters.size())});
    commit_to(seq, fx);
  }
  if (!opts_.auditing_enabled) return;
  const Batch* b = chain_batch(seq);
  if (b == nullptr || !b->is_signed()) return;
  const std::size_t sv = slot.signed_votes.size();
  // All-n certificates are only distinguished (and later audited from
  // directly) when the fast path is admissible for this profile.
  const bool full = fast_enabled_ && sv >= profile_.fast_quorum;
  if ((!slot.audit_done && sv >= profile_.audit_quorum) || (slot.audit_done && !slot.fast_done && full)) {
    AuditQc qc;
    qc.batch_digest = chain_.at(seq);
    qc.view = b->view;
    qc.seq = seq;
    qc.fast = full;
    qc.votes.assign(slot.signed_votes.begin(), slot.signed_votes.end());
    slot.audit_done = true;
    if (full) slot.fast_done = true;
    fx.push_back(AuditQcEffect{qc, trigger_seq});
    learn_qc(qc, fx);
  }
}

// ---------------------------------------------------------------------------
// Confirmation state.

void Replica::commit_to(SeqNo seq, Effects& fx) {
  seq = std::min(seq, chain_.tip_seq());
  if (seq <= commit_index_) return;
  for (SeqNo s = commit_index_ + 1; s <= seq; ++s) {
    fx.push_back(CommittedEffect{s, chain_.at(s)});
  }
  commit_index_ = seq;
  if (!opts_.auditing_enabled) arm_timer(fx);  // baseline liveness rides on commit progress
  flush_replies(fx);
}

void Replica::audit_to(SeqNo seq, bool fast, Effects& fx) {
  seq = std::min(seq, chain_.tip_seq());
  if (seq <= audit_index_) return;
  commit_to(seq, fx);
  audit_index_ = seq;
  fx.push_back(AuditedEffect{seq, chain_.at(seq), fast});
  pending_.erase(pending_.begin(), pending_.upper_bound(seq));
  if (!view_stable_ && chain_.covers(seq)) {
    // An audited prefix that includes the stabilizing batch settles the view.
    const Batch* sb = store_.get(stabilizing_digest_);
    if (sb != nullptr && sb->seq <= seq && chain_.covers(sb->seq) &&
        chain_.at(sb->seq) == stabilizing_digest_) {
      stabilize(fx);
    }
  }
  flush_replies(fx);
}

void Replica::learn_qc(const AuditQc& qc, Effects& fx) {
  auto existing = qc_by_digest_.find(qc.batch_digest);
  if (existing == qc_by_digest_.end() || qc.votes.size() > existing->second.votes.size()) {
    qc_by_digest_[qc.batch_digest] = qc;
  }
  const bool advanced = !high_audit_qc_ || qc_less(*high_audit_qc_, qc) ||
                        (!qc_less(qc, *high_audit_qc_) && qc.fast && !high_audit_qc_->fast);
  if (advanced) {
    high_audit_qc_ = qc;
    arm_timer(fx);  // certificate progress is the only unforgeable liveness signal
  }
  if (!view_stable_ && qc.batch_digest == stabilizing_digest_) stabilize(fx);
  if (!chain_.covers(qc.seq) || chain_.at(qc.seq) != qc.batch_digest) return;
  if (qc.fast && fast_enabled_) {
    audit_to(qc.seq, true, fx);
    return;
  }
  // Two-hop rule: this certificate confirms an earlier same-view
  // certificate embedded at or below it.
  for (SeqNo y = qc.seq; y > audit_index_; --y) {
    const Batch* yb = chain_batch(y);
    if (yb == nullptr || yb->view != qc.view) break;
    if (yb->audit_qc_anc && yb->audit_qc_anc->view == qc.view &&
        chain_.covers(yb->audit_qc_anc->seq) &&
        chain_.at(yb->audit_qc_anc->seq) == yb->audit_qc_anc->batch_digest) {
      audit_to(yb->audit_qc_anc->seq, false, fx);
      return;
    }
  }
}

void Replica::stabilize(Effects& fx) {
  if (view_stable_) return;
  view_stable_ = true;
  silent_views_ = 0;
  fx.push_back(StabilizedEffect{view_});
  arm_timer(fx);
  if (leader_of(view_) == id_) maybe_propose(fx, false);
}

void Replica::flush_replies(Effects& fx) {
  if (pending_replies_.empty()) return;
  std::vector<Digest> served;
  for (auto& [d, entries] : pending_replies_) {
    auto loc = locate_txn(d);
    if (!loc.has_value()) continue;
    const SeqNo seq = loc->first;
    std::vector<PendingReply> keep;
    for (const auto& e : entries) {
      const bool ready = e.mode == ReceiptMode::commit ? seq <= commit_index_ : seq <= audit_index_;
      if (!ready) {
        keep.push_back(e);
        continue;
      }
      ClientReplyMsg reply;
      reply.client_id = e.client_id;
      reply.client_seq = e.client_seq;
      reply.view = view_;
      if (e.mode == ReceiptMode::commit) {
        reply.status = ClientReplyStatus::committed;
        auto r = build_commit_receipt(d);
        if (r) reply.receipt = encode_commit_receipt(*r);
      } else {
        reply.status = ClientReplyStatus::audited;
        auto r = build_audit_receipt(d);
        if (r) reply.receipt = encode_audit_receipt(*r);
      }
      fx.push_back(ClientSendEffect{e.client_id, reply});
    }
    entries = std::move(keep);
    if (entries.empty()) served.push_back(d);
  }
  for (const auto& d : served) pending_replies_.erase(d);
}

// ---------------------------------------------------------------------------
// View change.

std::uint64_t Replica::timer_duration() const {
  if (!opts_.timeout_backoff) return opts_.timeout_base;
  const std::uint32_t shift = std::min(silent_views_, opts_.max_backoff_doublings);
  return opts_.timeout_base << shift;
}

void Replica::arm_timer(Effects& fx) {
  ++timer_gen_;
  fx.push_back(ArmTimerEffect{timer_gen_, timer_duration()});
}

void Replica::send_view_change(ViewId target, Effects& fx) {
  if (target <= std::max(view_, vc_target_) && vc_target_ != 0) return;
  vc_target_ = target;
  ViewChangeMsg m;
  m.sender = id_;
  m.view = target - 1;
  // Highest certificate on the current branch; the suffix sits above it.
  SeqNo base = 0;
  for (SeqNo s = chain_.tip_seq(); s >= 1; --s) {
    auto qc = qc_for(chain_.at(s));
    if (qc.has_value()) {
      m.high_audit_qc = qc;
      base = s;
      break;
    }
  }
  for (SeqNo s = base + 1; s <= chain_.tip_seq(); ++s) {
    const Batch* b = chain_batch(s);
    m.suffix.push_back(*b);
  }
  m.sig = scheme_.sign(sk_, view_change_sig_message(m));
  fx.push_back(BroadcastEffect{m});
  handle_view_change(id_, m, fx);
}

bool Replica::validate_vc_proof(const ViewChangeMsg& m) const {
  if (m.sender >= profile_.n) return false;
  if (!scheme_.verify(keys_[m.sender], view_change_sig_message(m), m.sig)) return false;
  if (m.high_audit_qc && !verify_audit_qc(*m.high_audit_qc, profile_, keys_, scheme_)) return false;
  SeqNo expect_seq = m.high_audit_qc ? m.high_audit_qc->seq + 1 : 1;
  Digest expect_parent = m.high_audit_qc ? m.high_audit_qc->batch_digest : genesis_digest();
  for (const auto& b : m.suffix) {
    if (b.seq != expect_seq) return false;
    if (b.parent != expect_parent) return false;
    if (signing_due(b.seq, b.new_view) != b.is_signed()) return false;
    const Digest d = batch_digest(b);
    if (b.is_signed() &&
        !scheme_.verify(keys_[leader_of(b.view)], batch_sig_message(d), *b.leader_sig)) {
      return false;
    }
    expect_parent = d;
    expect_seq = b.seq + 1;
  }
  return true;
}

void Replica::handle_view_change(ReplicaId from, const ViewChangeMsg& m, Effects& fx) {
  const ViewId target = m.view + 1;
  if (target <= view_) {
    if (last_new_view_ && from != id_) fx.push_back(SendEffect{from, *last_new_view_});
    return;
  }
  if (!validate_vc_proof(m)) return;
  for (const auto& b : m.suffix) store_.put(b);
  vc_pool_[target][m.sender] = m;

  // Amplification: once f_safe+1 replicas demand views beyond ours, at
  // least one is honest; join at the highest target that many support.
  std::map<ReplicaId, ViewId> best;
  for (const auto& [t, senders] : vc_pool_) {
    if (t <= view_) continue;
    for (const auto& [sid, msg] : senders) {
      auto [pos, inserted] = best.emplace(sid, t);
      if (!inserted && t > pos->second) pos->second = t;
    }
  }
  if (best.size() >= profile_.f_safe + 1) {
    std::vector<ViewId> targets;
    targets.reserve(best.size());
    for (const auto& [sid, t] : best) targets.push_back(t);
    std::sort(targets.begin(), targets.end(), std::greater<>());
    const ViewId supported = targets[profile_.f_safe];
    if (supported > std::max(view_, vc_target_)) send_view_change(supported, fx);
  }
  try_assemble_new_view(target, fx);
  if (vc_target_ > view_) try_assemble_new_view(vc_target_, fx);
}

void Replica::try_assemble_new_view(ViewId target, Effects& fx) {
  if (leader_of(target) != id_ || target <= view_) return;
  auto pool_it = vc_pool_.find(target);
  if (pool_it == vc_pool_.end() || pool_it->second.size() < profile_.audit_quorum) return;
  std::vector<ViewChangeMsg> proofs;
  proofs.reserve(profile_.audit_quorum);
  for (const auto& [sid, m] : pool_it->second) {
    if (proofs.size() == profile_.audit_quorum) break;
    proofs.push_back(m);
  }
  const Digest winner = select_branch(proofs, store_, profile_, opts_.relaxed_rule1, fast_enabled_);
  const Batch* wb = store_.get(winner);
  if (wb == nullptr) {
    // The winning tip is a certified batch we never stored; fetch it from
    // the replica that vouched for it.
    for (const auto& p : proofs) {
      if (proof_tip(p) == winner) {
        pending_assembly_ = target;
        request_sync(p.sender, winner, fx);
        return;
      }
    }
    return;
  }
  Batch s;
  s.view = target;
  s.seq = wb->seq + 1;
  s.parent = winner;
  s.new_view = true;
  NewViewMsg nv;
  nv.stabilizing = s;  // commit index and signature are filled after adoption
  nv.proofs = std::move(proofs);
  if (!adopt_new_view(nv, true, fx)) pending_assembly_ = target;
}

bool Replica::adopt_new_view(const NewViewMsg& m, bool assembling, Effects& fx) {
  const ViewId target = m.stabilizing.view;
  const ReplicaId leader = leader_of(target);
  if (target < view_) return true;
  if (target == view_) {
    if (!view_stable_ && batch_digest(m.stabilizing) == stabilizing_digest_) {
      auto it = vote_cache_.find(m.stabilizing.seq);
      if (it != vote_cache_.end()) fx.push_back(SendEffect{leader, it->second});
    }
    return true;
  }
  if (!m.stabilizing.new_view || !m.stabilizing.payload.empty()) return true;
  if (!assembling) {
    if (!m.stabilizing.is_signed() ||
        !scheme_.verify(keys_[leader], batch_sig_message(batch_digest(m.stabilizing)),
                        *m.stabilizing.leader_sig)) {
      return true;
    }
    if (m.proofs.size() != profile_.audit_quorum) return true;
    std::set<ReplicaId> senders;
    for (const auto& p : m.proofs) {
      if (p.view + 1 != target) return true;
      if (!senders.insert(p.sender).second) return true;
      if (!validate_vc_proof(p)) return true;
    }
    if (m.stabilizing.audit_qc_anc &&
        !verify_audit_qc(*m.stabilizing.audit_qc_anc, profile_, keys_, scheme_)) {
      return true;
    }
    for (const auto& p : m.proofs) {
      for (const auto& b : p.suffix) store_.put(b);
    }
    const Digest winner =
        select_branch(m.proofs, store_, profile_, opts_.relaxed_rule1, fast_enabled_);
    if (m.stabilizing.parent != winner) return true;
  }

  // Reconcile the local branch with the winning one.
  std::vector<const Batch*> path;
  Digest cur = m.stabilizing.parent;
  SeqNo fork = 0;
  while (true) {
    const Batch* b = store_.get(cur);
    if (b == nullptr) {
      // A proof sender vouching for this branch holds the missing range.
      ReplicaId source = leader;
      if (assembling || source == id_) {
        source = id_;
        for (const auto& p : m.proofs) {
          if (p.sender != id_) {
            source = p.sender;
            if (proof_tip(p) == m.stabilizing.parent) break;
          }
        }
      }
      if (assembling) {
        pending_assembly_ = target;
      } else {
        pending_new_view_ = m;
      }
      request_sync(source, m.stabilizing.parent, fx);
      return false;
    }
    if (chain_.covers(b->seq) && chain_.at(b->seq) == cur) {
      fork = b->seq;
      break;
    }
    path.push_back(b);
    cur = b->parent;
  }
  if (fork < audit_index_) return true;  // audited history never rolls back
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    const Batch& b = **it;
    if (signing_due(b.seq, b.new_view) != b.is_signed()) return true;
    if (b.is_signed() &&
        !scheme_.verify(keys_[leader_of(b.view)], batch_sig_message(batch_digest(b)),
                        *b.leader_sig)) {
      return true;
    }
    if (b.audit_qc_anc && !verify_audit_qc(*b.audit_qc_anc, profile_, keys_, scheme_)) return true;
  }
  if (fork < chain_.tip_seq()) rollback_chain(fork, fx);
  std::vector<AuditQc> carried_qcs;  // learned after the view flips
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    const Batch& b = **it;
    if (!chain_.extend(b)) return true;
    index_batch_txns(b);
    if (b.audit_qc_anc) carried_qcs.push_back(*b.audit_qc_anc);
  }

  view_ = target;
  view_stable_ = false;
  voted_.clear();
  vote_cache_.clear();
  vc_pool_.erase(vc_pool_.begin(), vc_pool_.upper_bound(target));
  vc_target_ = 0;
  stashed_.clear();
  pending_new_view_.reset();
  pending_assembly_.reset();

  Batch s = m.stabilizing;
  if (assembling) {
    s.commit_index_anc = commit_index_;
    if (opts_.auditing_enabled && high_audit_qc_ && chain_.covers(high_audit_qc_->seq) &&
        chain_.at(high_audit_qc_->seq) == high_audit_qc_->batch_digest) {
      s.audit_qc_anc = *high_audit_qc_;
      last_embedded_qc_ = encode_audit_qc(*high_audit_qc_);
    }
    s.leader_sig = scheme_.sign(sk_, batch_sig_message(batch_digest(s)));
  }
  const Digest sd = batch_digest(s);
  if (s.seq != chain_.tip_seq() + 1 || s.parent != chain_.tip()) return true;
  stabilizing_digest_ = sd;
  chain_.extend(s);
  store_.put(s);
  for (const auto& qc : carried_qcs) learn_qc(qc, fx);
  if (s.audit_qc_anc) learn_qc(*s.audit_qc_anc, fx);
  commit_to(s.commit_index_anc, fx);
  fx.push_back(ViewAdvancedEffect{target, leader == id_});
  if (assembling) {
    NewViewMsg out;
    out.stabilizing = s;
    out.proofs = m.proofs;
    last_new_view_ = out;
    fx.push_back(BroadcastEffect{out});
    fx.push_back(ProposedEffect{s.seq, s.view, true, 0});
  } else {
    last_new_view_ = m;
  }
  vote_on(s, fx);
  if (!opts_.stabilization_enabled || !opts_.auditing_enabled) stabilize(fx);
  arm_timer(fx);
  return true;
}

void Replica::handle_new_view(ReplicaId from, const NewViewMsg& m, Effects& fx) {
  (void)from;
  adopt_new_view(m, false, fx);
}

// ---------------------------------------------------------------------------
// Sync.

void Replica::request_sync(ReplicaId from, const Digest& want, Effects& fx) {
  if (from == id_ || from >= profile_.n) return;
  SyncRequestMsg req;
  req.want = want;
  // During reconciliation the local suffix may sit on a losing branch, so
  // only the audited prefix counts as common ground.
  req.have_seq = (pending_new_view_ || pending_assembly_) ? audit_index_ : chain_.tip_seq();
  fx.push_back(SendEffect{from, req});
}

void Replica::handle_sync_request(ReplicaId from, const SyncRequestMsg& m, Effects& fx) {
  const Batch* want = store_.get(m.want);
  if (want == nullptr || want->seq <= m.have_seq) return;
  std::vector<Batch> descending;
  const Batch* cur = want;
  while (cur != nullptr && cur->seq > m.have_seq) {
    descending.push_back(*cur);
    if (cur->seq == 0) break;
    cur = store_.get(cur->parent);
  }
  if (descending.empty()) return;
  SyncResponseMsg out;
  out.batches.reserve(std::min(descending.size(), opts_.max_sync_batches));
  for (auto it = descending.rbegin();
       it != descending.rend() && out.batches.size() < opts_.max_sync_batches; ++it) {
    out.batches.push_back(*it);
  }
  fx.push_back(SendEffect{from, out});
}

void Replica::handle_sync_response(ReplicaId from, const SyncResponseMsg& m, Effects& fx) {
  bool stored_new = false;
  for (const auto& b : m.batches) {
    if (b.seq == 0) continue;
    if (store_.put(b)) stored_new = true;
  }
  // Extend the chain with whatever now lines up.
  for (const auto& b : m.batches) {
    if (b.seq != chain_.tip_seq() + 1) continue;
    if (b.parent != chain_.tip()) break;
    if (b.view > view_) break;  // views advance only through their announcements
    if (signing_due(b.seq, b.new_view) != b.is_signed()) break;
    if (b.is_signed() &&
        !scheme_.verify(keys_[leader_of(b.view)], batch_sig_message(batch_digest(b)),
                        *b.leader_sig)) {
      break;
    }
    if (!accept_batch(b, fx)) break;
  }
  // Retry a blocked adoption only when this response brought something
  // new, so identical request/response pairs cannot loop.
  if (stored_new && pending_new_view_) {
    NewViewMsg nv = *pending_new_view_;
    pending_new_view_.reset();
    adopt_new_view(nv, false, fx);
  }
  if (stored_new && pending_assembly_) {
    ViewId target = *pending_assembly_;
    pending_assembly_.reset();
    try_assemble_new_view(target, fx);
  }
  drain_stashed(from, fx);
}

void Replica::drain_stashed(ReplicaId from, Effects& fx) {
  while (!stashed_.empty()) {
    while (!stashed_.empty() && stashed_.begin()->first <= chain_.tip_seq()) {
      Batch b = stashed_.begin()->second;
      stashed_.erase(stashed_.begin());
      handle_append(from, b, fx);
    }
    auto it = stashed_.find(chain_.tip_seq() + 1);
    if (it == stashed_.end()) break;
    Batch b = it->second;
    stashed_.erase(it);
    const SeqNo before = chain_.tip_seq();
    handle_append(from, b, fx);
    if (chain_.tip_seq() == before) break;  // re-stashed or rejected; stop spinning
  }
}

// ---------------------------------------------------------------------------
// Chain maintenance.

void Replica::rollback_chain(SeqNo new_tip, Effects& fx) {
  const SeqNo old_tip = chain_.tip_seq();
  if (new_tip >= old_tip) return;
  for (SeqNo s = new_tip + 1; s <= old_tip; ++s) {
    auto it = seq_txns_.find(s);
    if (it != seq_txns_.end()) {
      for (const auto& d : it->second) {
        txn_index_.erase(d);
        seen_txns_.erase(d);
      }
      seq_txns_.erase(it);
    }
    voted_.erase(s);
    vote_cache_.erase(s);
  }
  chain_.rollback_to(new_tip);
  pending_.erase(pending_.upper_bound(new_tip), pending_.end());
  commit_index_ = std::min(commit_index_, new_tip);
  fx.push_back(RolledBackEffect{new_tip});
}

std::optional<AuditQc> Replica::qc_for(const Digest& digest) const {
  auto it = qc_by_digest_.find(digest);
  if (it == qc_by_digest_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::pair<SeqNo, std::uint32_t>> Replica::locate_txn(const Digest& txn_digest) const {
  auto it = txn_index_.find(txn_digest);
  if (it == txn_index_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// Receipts.

std::optional<CommitReceipt> Replica::build_commit_receipt(const Digest& txn_digest) const {
  auto loc = locate_txn(txn_digest);
  if (!loc.has_value() || loc->first > commit_index_) return std::nullopt;
  const Batch* b = chain_batch(loc->first);
  if (b == nullptr) return std::nullopt;
  if (leader_of(b->view) != id_) return std::nullopt;  // only the proposer can promise
  return make_commit_receipt(*b, loc->second, id_, scheme_, sk_);
}

std::optional<AuditReceipt> Replica::build_audit_receipt(const Digest& txn_digest) const {
  auto loc = locate_txn(txn_digest);
  if (!loc.has_value() || loc->first > audit_index_) return std::nullopt;
  const SeqNo base = loc->first;

  auto segment_to = [&](SeqNo end) -> std::optional<std::vector<Batch>> {
    std::vector<Batch> seg;
    seg.reserve(end - base + 1);
    for (SeqNo s = base; s <= end; ++s) {
      const Batch* b = chain_batch(s);
      if (b == nullptr) return std::nullopt;
      seg.push_back(*b);
    }
    return seg;
  };

  // Fast form: one full certificate at or above the transaction.
  if (fast_enabled_) {
    for (SeqNo s = base; s <= chain_.tip_seq(); ++s) {
      auto qc = qc_for(chain_.at(s));
      if (!qc.has_value() || !qc->fast) continue;
      auto seg = segment_to(s);
      if (!seg.has_value()) return std::nullopt;
      return make_audit_receipt(*seg, loc->second, {*qc});
    }
  }
  // Slow form: certificate, embedding batch, follow-up certificate.
  for (SeqNo s = base; s <= chain_.tip_seq(); ++s) {
    auto q1 = qc_for(chain_.at(s));
    if (!q1.has_value()) continue;
    const Bytes q1_bytes = encode_audit_qc(*q1);
    for (SeqNo y = s + 1; y <= chain_.tip_seq(); ++y) {
      const Batch* yb = chain_batch(y);
      if (yb == nullptr || yb->view != q1->view) break;
      if (!yb->audit_qc_anc || encode_audit_qc(*yb->audit_qc_anc) != q1_bytes) continue;
      for (SeqNo z = y; z <= chain_.tip_seq(); ++z) {
        const Batch* zb = chain_batch(z);
        if (zb == nullptr || zb->view != q1->view) break;
        auto q2 = qc_for(chain_.at(z));
        if (!q2.has_value()) continue;
        auto seg = segment_to(z);
        if (!seg.has_value()) return std::nullopt;
        return make_audit_receipt(*seg, loc->second, {*q1, *q2});
      }
      break;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Restore (log replay).

void Replica::restore_batch(const Batch& b) {
  Effects sink;
  store_.put(b);
  if (!chain_.extend(b)) return;
  index_batch_txns(b);
  if (b.audit_qc_anc && verify_audit_qc(*b.audit_qc_anc, profile_, keys_, scheme_)) {
    learn_qc(*b.audit_qc_anc, sink);
  }
  if (b.commit_index_anc > commit_index_) commit_to(b.commit_index_anc, sink);
}

void Replica::restore_vote(ViewId view, SeqNo seq, const Digest& digest) {
  if (view != view_) return;
  voted_[seq] = digest;
}

void Replica::restore_view(ViewId view, bool stable) {
  if (view != view_) {
    voted_.clear();
    vote_cache_.clear();
  }
  view_ = view;
  view_stable_ = stable;
}

void Replica::restore_rollback(SeqNo to) {
  Effects sink;
  rollback_chain(to, sink);
}

Effects Replica::finish_restore() {
  Effects fx;
  if (!view_stable_) {
    stabilizing_digest_ = kZeroDigest;
    for (SeqNo s = chain_.tip_seq(); s >= 1; --s) {
      const Batch* b = chain_batch(s);
      if (b != nullptr && b->new_view && b->view == view_) {
        stabilizing_digest_ = chain_.at(s);
        break;
      }
    }
    if (stabilizing_digest_ == kZeroDigest) view_stable_ = true;
  }
  arm_timer(fx);
  return fx;
}

ReplicaSnapshot Replica::snapshot() const {
  ReplicaSnapshot s;
  s.id = id_;
  s.view = view_;
  s.view_stable = view_stable_;
  s.leader = leader_of(view_) == id_;
  s.commit_index = commit_index_;
  s.audit_index = audit_index_;
  s.tip_seq = chain_.tip_seq();
  s.tip = chain_.tip();
  return s;
}

}  // namespace pftlog
