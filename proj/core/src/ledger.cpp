// SPDX-License-Identifier: Apache-2.0
#include "pftlog/ledger.hpp"

#include <algorithm>
#include <set>

namespace pftlog {

Bytes encode_audit_qc(const AuditQc& qc) {
  ByteWriter w;
  w.raw(qc.batch_digest);
  w.u64(qc.view);
  w.u64(qc.seq);
  w.u8(qc.fast ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(qc.votes.size()));
  for (const auto& [id, sig] : qc.votes) {
    w.u32(id);
    w.raw(sig);
  }
  return w.take();
}

AuditQc decode_audit_qc(ByteReader& r) {
  AuditQc qc;
  qc.batch_digest = r.fixed<64>();
  qc.view = r.u64();
  qc.seq = r.u64();
  qc.fast = r.u8() != 0;
  std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    ReplicaId id = r.u32();
    Signature sig = r.fixed<64>();
    qc.votes.emplace_back(id, sig);
  }
  return qc;
}

bool qc_equal(const AuditQc& a, const AuditQc& b) {
  return encode_audit_qc(a) == encode_audit_qc(b);
}

bool qc_less(const AuditQc& a, const AuditQc& b) {
  if (a.view != b.view) return a.view < b.view;
  return a.seq < b.seq;
}

bool verify_audit_qc(const AuditQc& qc, const QuorumProfile& profile,
                     const std::vector<PublicKey>& keys, const SignatureScheme& scheme,
                     bool require_fast) {
  const std::size_t threshold = require_fast ? profile.fast_quorum : profile.audit_quorum;
  std::set<ReplicaId> seen;
  const Bytes msg = vote_sig_message(qc.view, qc.seq, qc.batch_digest);
  for (const auto& [id, sig] : qc.votes) {
    if (id >= keys.size()) return false;
    if (!seen.insert(id).second) return false;
    if (!scheme.verify(keys[id], msg, sig)) return false;
  }
  if (seen.size() < threshold) return false;
  if (qc.fast && seen.size() < profile.fast_quorum) return false;
  return true;
}

bool requires_signature(SeqNo seq, bool new_view, std::uint64_t signing_interval) {
  if (seq == 0) return false;
  if (new_view) return true;
  if (signing_interval == 0) return false;
  return seq % signing_interval == 0;
}

Digest payload_merkle_root(const std::vector<Bytes>& payload) {
  if (payload.empty()) return kZeroDigest;
  std::vector<Bytes> leaves;
  leaves.reserve(payload.size());
  for (const auto& txn : payload) {
    Digest d = sha512(txn);
    leaves.emplace_back(d.begin(), d.end());
  }
  return merkle_root(leaves);
}

Bytes encode_batch_header(const Batch& b) {
  ByteWriter w;
  w.u8(0x01);  // header format version
  w.u64(b.view);
  w.u64(b.seq);
  w.raw(b.parent);
  w.u64(b.commit_index_anc);
  w.u8(b.new_view ? 1 : 0);
  w.u8(b.audit_qc_anc ? 1 : 0);
  if (b.audit_qc_anc) w.raw(encode_audit_qc(*b.audit_qc_anc));
  w.u64(b.payload.size());
  w.raw(payload_merkle_root(b.payload));
  return w.take();
}

Digest batch_digest(const Batch& b) { return sha512(encode_batch_header(b)); }

Bytes encode_batch(const Batch& b) {
  ByteWriter w;
  w.u8(0x01);
  w.u64(b.view);
  w.u64(b.seq);
  w.raw(b.parent);
  w.u64(b.commit_index_anc);
  w.u8(b.new_view ? 1 : 0);
  w.u8(b.audit_qc_anc ? 1 : 0);
  if (b.audit_qc_anc) w.raw(encode_audit_qc(*b.audit_qc_anc));
  w.u32(static_cast<std::uint32_t>(b.payload.size()));
  for (const auto& txn : b.payload) w.blob(txn);
  w.u8(b.leader_sig ? 1 : 0);
  if (b.leader_sig) w.raw(*b.leader_sig);
  return w.take();
}

Batch decode_batch(ByteReader& r) {
  std::uint8_t version = r.u8();
  if (version != 0x01) throw DecodeError("unsupported batch format version");
  Batch b;
  b.view = r.u64();
  b.seq = r.u64();
  b.parent = r.fixed<64>();
  b.commit_index_anc = r.u64();
  b.new_view = r.u8() != 0;
  if (r.u8() != 0) b.audit_qc_anc = decode_audit_qc(r);
  std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) b.payload.push_back(r.blob());
  if (r.u8() != 0) b.leader_sig = r.fixed<64>();
  return b;
}

Bytes batch_sig_message(const Digest& digest) {
  ByteWriter w;
  w.str("pftlog/batch-sig/v1");
  w.raw(digest);
  return w.take();
}

Bytes vote_sig_message(ViewId view, SeqNo seq, const Digest& digest) {
  ByteWriter w;
  w.str("pftlog/vote/v1");
  w.u64(view);
  w.u64(seq);
  w.raw(digest);
  return w.take();
}

const Batch& genesis_batch() {
  static const Batch g = [] {
    Batch b;
    b.view = 0;
    b.seq = 0;
    b.parent = kZeroDigest;
    b.commit_index_anc = 0;
    b.new_view = false;
    return b;
  }();
  return g;
}

const Digest& genesis_digest() {
  static const Digest d = batch_digest(genesis_batch());
  return d;
}

bool BatchStore::put(const Batch& b) {
  return by_digest_.emplace(batch_digest(b), b).second;
}

const Batch* BatchStore::get(const Digest& d) const {
  auto it = by_digest_.find(d);
  return it == by_digest_.end() ? nullptr : &it->second;
}

std::optional<bool> BatchStore::is_ancestor(const Digest& ancestor,
                                            const Digest& descendant) const {
  const Batch* anc = get(ancestor);
  if (anc == nullptr) return std::nullopt;
  if (ancestor == descendant) return true;
  const Batch* cur = get(descendant);
  if (cur == nullptr) return std::nullopt;
  while (cur->seq > anc->seq) {
    if (cur->seq == 0) return false;
    if (cur->parent == ancestor) return true;
    const Batch* next = get(cur->parent);
    if (next == nullptr) return std::nullopt;
    cur = next;
  }
  return false;
}

std::optional<bool> BatchStore::conflicts(const Digest& a, const Digest& b) const {
  auto ab = is_ancestor(a, b);
  if (!ab.has_value()) return std::nullopt;
  if (*ab) return false;
  auto ba = is_ancestor(b, a);
  if (!ba.has_value()) return std::nullopt;
  return !*ba;
}

void BatchStore::prune_below(SeqNo floor) {
  for (auto it = by_digest_.begin(); it != by_digest_.end();) {
    if (it->second.seq < floor) {
      it = by_digest_.erase(it);
    } else {
      ++it;
    }
  }
}

Branch::Branch() { chain_.push_back(genesis_digest()); }

bool Branch::extend(const Batch& b) {
  if (b.seq != chain_.size()) return false;
  if (b.parent != chain_.back()) return false;
  chain_.push_back(batch_digest(b));
  return true;
}

void Branch::rollback_to(SeqNo new_tip) {
  if (new_tip + 1 < chain_.size()) chain_.resize(new_tip + 1);
}

}  // namespace pftlog
