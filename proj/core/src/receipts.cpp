// SPDX-License-Identifier: Apache-2.0
#include "pftlog/receipts.hpp"

#include <algorithm>
#include <set>

namespace pftlog {

BatchHeader header_of(const Batch& b) {
  BatchHeader h;
  h.view = b.view;
  h.seq = b.seq;
  h.parent = b.parent;
  h.commit_index_anc = b.commit_index_anc;
  h.audit_qc_anc = b.audit_qc_anc;
  h.new_view = b.new_view;
  h.payload_count = b.payload.size();
  h.payload_root = payload_merkle_root(b.payload);
  return h;
}

Bytes encode_header(const BatchHeader& h) {
  ByteWriter w;
  w.u8(0x01);  // must stay byte-identical to encode_batch_header
  w.u64(h.view);
  w.u64(h.seq);
  w.raw(h.parent);
  w.u64(h.commit_index_anc);
  w.u8(h.new_view ? 1 : 0);
  w.u8(h.audit_qc_anc ? 1 : 0);
  if (h.audit_qc_anc) w.raw(encode_audit_qc(*h.audit_qc_anc));
  w.u64(h.payload_count);
  w.raw(h.payload_root);
  return w.take();
}

BatchHeader decode_header(ByteReader& r) {
  if (r.u8() != 0x01) throw DecodeError("unsupported header format version");
  BatchHeader h;
  h.view = r.u64();
  h.seq = r.u64();
  h.parent = r.fixed<64>();
  h.commit_index_anc = r.u64();
  h.new_view = r.u8() != 0;
  if (r.u8() != 0) h.audit_qc_anc = decode_audit_qc(r);
  h.payload_count = r.u64();
  h.payload_root = r.fixed<64>();
  return h;
}

Digest header_digest(const BatchHeader& h) { return sha512(encode_header(h)); }

std::string_view receipt_status_name(ReceiptStatus s) {
  switch (s) {
    case ReceiptStatus::ok: return "ok";
    case ReceiptStatus::bad_signature: return "bad-signature";
    case ReceiptStatus::bad_proof: return "bad-proof";
    case ReceiptStatus::broken_chain: return "broken-chain";
    case ReceiptStatus::insufficient_quorum: return "insufficient-quorum";
    case ReceiptStatus::profile_mismatch: return "profile-mismatch";
  }
  return "unknown";
}

Bytes commit_receipt_sig_message(const Digest& txn_digest, const Digest& batch_digest) {
  ByteWriter w;
  w.str("pftlog/commit-receipt/v1");
  w.raw(txn_digest);
  w.raw(batch_digest);
  return w.take();
}

CommitReceipt make_commit_receipt(const Batch& b, std::size_t txn_index, ReplicaId leader,
                                  const SignatureScheme& scheme, const SecretKey& sk) {
  CommitReceipt r;
  r.txn_digest = sha512(b.payload.at(txn_index));
  r.header = header_of(b);
  std::vector<Bytes> leaves;
  leaves.reserve(b.payload.size());
  for (const auto& txn : b.payload) {
    Digest d = sha512(txn);
    leaves.emplace_back(d.begin(), d.end());
  }
  r.proof = merkle_prove(leaves, txn_index);
  r.leader = leader;
  r.leader_sig = scheme.sign(sk, commit_receipt_sig_message(r.txn_digest, batch_digest(b)));
  return r;
}

AuditReceipt make_audit_receipt(const std::vector<Batch>& segment, std::size_t txn_index,
                                std::vector<AuditQc> qcs) {
  AuditReceipt r;
  const Batch& carrier = segment.front();
  r.txn_digest = sha512(carrier.payload.at(txn_index));
  std::vector<Bytes> leaves;
  leaves.reserve(carrier.payload.size());
  for (const auto& txn : carrier.payload) {
    Digest d = sha512(txn);
    leaves.emplace_back(d.begin(), d.end());
  }
  r.proof = merkle_prove(leaves, txn_index);
  r.headers.reserve(segment.size());
  for (const auto& b : segment) r.headers.push_back(header_of(b));
  r.qcs = std::move(qcs);
  return r;
}

namespace {

// Distinguishes why a certificate fails: invalid or duplicate signers are
// signature failures, a short but clean vote list is a quorum failure.
ReceiptStatus check_qc_signatures(const AuditQc& qc, const QuorumProfile& profile,
                                  const std::vector<PublicKey>& keys,
                                  const SignatureScheme& scheme) {
  const Bytes msg = vote_sig_message(qc.view, qc.seq, qc.batch_digest);
  std::set<ReplicaId> seen;
  for (const auto& [id, sig] : qc.votes) {
    if (id >= profile.n) return ReceiptStatus::profile_mismatch;
    if (!seen.insert(id).second) return ReceiptStatus::bad_signature;
    if (!scheme.verify(keys[id], msg, sig)) return ReceiptStatus::bad_signature;
  }
  return ReceiptStatus::ok;
}

bool check_txn_proof(const Digest& txn_digest, const BatchHeader& carrier,
                     const MerkleProof& proof) {
  if (carrier.payload_count == 0) return false;
  if (proof.leaf_count != carrier.payload_count) return false;
  Bytes leaf(txn_digest.begin(), txn_digest.end());
  return merkle_verify(carrier.payload_root, leaf, proof);
}

}  // namespace

ReceiptStatus verify_commit_receipt(const CommitReceipt& r, const QuorumProfile& profile,
                                    const std::vector<PublicKey>& keys,
                                    const SignatureScheme& scheme) {
  if (keys.size() != profile.n) return ReceiptStatus::profile_mismatch;
  if (r.leader >= profile.n) return ReceiptStatus::profile_mismatch;
  // Only the view's leader can issue the promise.
  if (r.leader != static_cast<ReplicaId>(r.header.view % profile.n))
    return ReceiptStatus::bad_signature;
  const Bytes msg = commit_receipt_sig_message(r.txn_digest, header_digest(r.header));
  if (!scheme.verify(keys[r.leader], msg, r.leader_sig)) return ReceiptStatus::bad_signature;
  if (!check_txn_proof(r.txn_digest, r.header, r.proof)) return ReceiptStatus::bad_proof;
  return ReceiptStatus::ok;
}

ReceiptStatus verify_audit_receipt(const AuditReceipt& r, const QuorumProfile& profile,
                                   const std::vector<PublicKey>& keys,
                                   const SignatureScheme& scheme) {
  if (keys.size() != profile.n) return ReceiptStatus::profile_mismatch;
  if (r.headers.empty()) return ReceiptStatus::broken_chain;
  if (r.qcs.size() != 1 && r.qcs.size() != 2) return ReceiptStatus::insufficient_quorum;

  // Signatures.
  for (const auto& qc : r.qcs) {
    ReceiptStatus st = check_qc_signatures(qc, profile, keys, scheme);
    if (st != ReceiptStatus::ok) return st;
  }

  // Transaction membership in the first segment batch.
  if (!check_txn_proof(r.txn_digest, r.headers.front(), r.proof)) return ReceiptStatus::bad_proof;

  // Segment integrity and certificate binding.
  std::vector<Digest> digests;
  digests.reserve(r.headers.size());
  for (const auto& h : r.headers) digests.push_back(header_digest(h));
  for (std::size_t i = 1; i < r.headers.size(); ++i) {
    if (r.headers[i].seq != r.headers[i - 1].seq + 1) return ReceiptStatus::broken_chain;
    if (r.headers[i].parent != digests[i - 1]) return ReceiptStatus::broken_chain;
  }
  const AuditQc& last = r.qcs.back();
  const BatchHeader& tip = r.headers.back();
  if (last.batch_digest != digests.back() || last.seq != tip.seq || last.view != tip.view)
    return ReceiptStatus::broken_chain;

  SeqNo audited_up_to = 0;
  if (r.qcs.size() == 2) {
    // Two chained same-view certificates: the first on a segment batch,
    // embedded by a later segment batch under the second.
    const AuditQc& first = r.qcs.front();
    if (first.view != tip.view) return ReceiptStatus::broken_chain;
    const SeqNo base = r.headers.front().seq;
    if (first.seq < base || first.seq > tip.seq) return ReceiptStatus::broken_chain;
    const std::size_t pos = static_cast<std::size_t>(first.seq - base);
    if (first.batch_digest != digests[pos] || r.headers[pos].view != first.view)
      return ReceiptStatus::broken_chain;
    const Bytes first_bytes = encode_audit_qc(first);
    bool embedded = false;
    for (std::size_t i = pos + 1; i < r.headers.size(); ++i) {
      if (r.headers[i].view != first.view) break;
      if (r.headers[i].audit_qc_anc && encode_audit_qc(*r.headers[i].audit_qc_anc) == first_bytes) {
        embedded = true;
        break;
      }
    }
    if (!embedded) return ReceiptStatus::broken_chain;
    audited_up_to = first.seq;
  } else {
    audited_up_to = last.seq;
  }
  // The transaction's batch must lie inside the audited prefix.
  if (r.headers.front().seq > audited_up_to) return ReceiptStatus::broken_chain;

  // Quorum thresholds.
  for (const auto& qc : r.qcs) {
    if (qc.votes.size() < profile.audit_quorum) return ReceiptStatus::insufficient_quorum;
  }
  if (r.qcs.size() == 1) {
    if (!r.qcs.front().fast || r.qcs.front().votes.size() < profile.fast_quorum)
      return ReceiptStatus::insufficient_quorum;
    // Profile compatibility: a fast receipt is only meaningful where the
    // fast path exists.
    if (!profile.fast_path_enabled) return ReceiptStatus::profile_mismatch;
  }
  return ReceiptStatus::ok;
}

Bytes encode_commit_receipt(const CommitReceipt& r) {
  ByteWriter w;
  w.u8(kCommitReceiptTag);
  w.raw(r.txn_digest);
  w.blob(encode_header(r.header));
  w.u64(r.proof.leaf_index);
  w.u64(r.proof.leaf_count);
  w.u32(static_cast<std::uint32_t>(r.proof.siblings.size()));
  for (const auto& s : r.proof.siblings) w.raw(s);
  w.u32(r.leader);
  w.raw(r.leader_sig);
  return w.take();
}

namespace {

MerkleProof decode_proof_fields(ByteReader& r) {
  MerkleProof p;
  p.leaf_index = r.u64();
  p.leaf_count = r.u64();
  std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) p.siblings.push_back(r.fixed<64>());
  return p;
}

}  // namespace

CommitReceipt decode_commit_receipt(ByteReader& r) {
  if (r.u8() != kCommitReceiptTag) throw DecodeError("not a commit receipt");
  CommitReceipt out;
  out.txn_digest = r.fixed<64>();
  {
    Bytes raw = r.blob();
    ByteReader hr(raw);
    out.header = decode_header(hr);
    hr.expect_done();
  }
  out.proof = decode_proof_fields(r);
  out.leader = r.u32();
  out.leader_sig = r.fixed<64>();
  return out;
}

Bytes encode_audit_receipt(const AuditReceipt& r) {
  ByteWriter w;
  w.u8(kAuditReceiptTag);
  w.raw(r.txn_digest);
  w.u64(r.proof.leaf_index);
  w.u64(r.proof.leaf_count);
  w.u32(static_cast<std::uint32_t>(r.proof.siblings.size()));
  for (const auto& s : r.proof.siblings) w.raw(s);
  w.u32(static_cast<std::uint32_t>(r.headers.size()));
  for (const auto& h : r.headers) w.blob(encode_header(h));
  w.u32(static_cast<std::uint32_t>(r.qcs.size()));
  for (const auto& qc : r.qcs) w.blob(encode_audit_qc(qc));
  return w.take();
}

AuditReceipt decode_audit_receipt(ByteReader& r) {
  if (r.u8() != kAuditReceiptTag) throw DecodeError("not an audit receipt");
  AuditReceipt out;
  out.txn_digest = r.fixed<64>();
  out.proof = decode_proof_fields(r);
  std::uint32_t nh = r.u32();
  for (std::uint32_t i = 0; i < nh; ++i) {
    Bytes raw = r.blob();
    ByteReader hr(raw);
    out.headers.push_back(decode_header(hr));
    hr.expect_done();
  }
  std::uint32_t nq = r.u32();
  for (std::uint32_t i = 0; i < nq; ++i) {
    Bytes raw = r.blob();
    ByteReader qr(raw);
    out.qcs.push_back(decode_audit_qc(qr));
    qr.expect_done();
  }
  return out;
}

}  // namespace pftlog
