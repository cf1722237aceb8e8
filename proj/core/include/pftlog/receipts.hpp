// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "pftlog/config.hpp"
#include "pftlog/crypto.hpp"
#include "pftlog/ledger.hpp"

namespace pftlog {

// Digest-checkable batch summary: the payload is represented by its count
// and merkle root, so a header plus a membership proof vouches for one
// transaction without shipping the rest of the batch.
struct BatchHeader {
  ViewId view = 0;
  SeqNo seq = 0;
  Digest parent{};
  SeqNo commit_index_anc = 0;
  std::optional<AuditQc> audit_qc_anc;
  bool new_view = false;
  std::uint64_t payload_count = 0;
  Digest payload_root{};
};

BatchHeader header_of(const Batch& b);

// Byte-identical to encode_batch_header on the originating batch, so
// header_digest(header_of(b)) == batch_digest(b).
Bytes encode_header(const BatchHeader& h);
BatchHeader decode_header(ByteReader& r);
Digest header_digest(const BatchHeader& h);

enum class ReceiptStatus : std::uint8_t {
  ok = 0,
  bad_signature = 1,
  bad_proof = 2,
  broken_chain = 3,
  insufficient_quorum = 4,
  profile_mismatch = 5,
};

std::string_view receipt_status_name(ReceiptStatus s);

// Leader's promise that the transaction sits in a batch it proposed and
// that a commit quorum acknowledged. Forgeable only by the leader itself;
// the audit receipt is the unforgeable upgrade.
struct CommitReceipt {
  Digest txn_digest{};
  BatchHeader header;   // batch carrying the transaction
  MerkleProof proof;    // txn_digest under header.payload_root
  ReplicaId leader = 0;
  Signature leader_sig{};  // over commit_receipt_sig_message
};

Bytes commit_receipt_sig_message(const Digest& txn_digest, const Digest& batch_digest);

// Proof that the transaction's batch lies under an audited prefix. The
// header segment runs from the transaction's batch to the certified batch
// of the last certificate. One fast certificate suffices when the fast
// path is on; otherwise two chained same-view certificates: the first on a
// segment batch at or above the transaction, the second on the segment tip,
// with some segment batch in between embedding the first.
struct AuditReceipt {
  Digest txn_digest{};
  MerkleProof proof;                 // against headers.front()
  std::vector<BatchHeader> headers;  // contiguous parent-linked segment, ascending seq
  std::vector<AuditQc> qcs;          // [fast] or [first, second]
};

CommitReceipt make_commit_receipt(const Batch& b, std::size_t txn_index, ReplicaId leader,
                                  const SignatureScheme& scheme, const SecretKey& sk);

// segment.front() must contain the transaction; segment.back() must be the
// batch certified by qcs.back().
AuditReceipt make_audit_receipt(const std::vector<Batch>& segment, std::size_t txn_index,
                                std::vector<AuditQc> qcs);

// Pure functions of (receipt, profile, keys): no replica state involved.
// Checks run signature, proof, chain, quorum, profile in that order and
// report the first failure.
ReceiptStatus verify_commit_receipt(const CommitReceipt& r, const QuorumProfile& profile,
                                    const std::vector<PublicKey>& keys,
                                    const SignatureScheme& scheme);
ReceiptStatus verify_audit_receipt(const AuditReceipt& r, const QuorumProfile& profile,
                                   const std::vector<PublicKey>& keys,
                                   const SignatureScheme& scheme);

// Self-describing encodings: a one-byte kind tag distinguishes the two
// receipt forms in files and client replies.
inline constexpr std::uint8_t kCommitReceiptTag = 1;
inline constexpr std::uint8_t kAuditReceiptTag = 2;

Bytes encode_commit_receipt(const CommitReceipt& r);
CommitReceipt decode_commit_receipt(ByteReader& r);
Bytes encode_audit_receipt(const AuditReceipt& r);
AuditReceipt decode_audit_receipt(ByteReader& r);

}  // namespace pftlog
