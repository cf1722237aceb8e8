// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "pftlog/bytes.hpp"
#include "pftlog/config.hpp"
#include "pftlog/crypto.hpp"

namespace pftlog {

using ReplicaId = std::uint32_t;
using ViewId = std::uint64_t;
using SeqNo = std::uint64_t;

// Quorum certificate over one signed batch: audit_quorum (or all n, when
// fast) distinct replicas signed the vote message binding (view, seq,
// digest). Vote lists are kept sorted by replica id.
struct AuditQc {
  Digest batch_digest{};
  ViewId view = 0;  // view of the certified batch
  SeqNo seq = 0;
  bool fast = false;
  std::vector<std::pair<ReplicaId, Signature>> votes;
};

Bytes encode_audit_qc(const AuditQc& qc);
AuditQc decode_audit_qc(ByteReader& r);
bool qc_equal(const AuditQc& a, const AuditQc& b);

// Orders certificates by (view, seq); the leader's high QC is the maximum.
bool qc_less(const AuditQc& a, const AuditQc& b);

// Verifies vote signatures and thresholds. `require_fast` additionally
// demands all n distinct signers.
bool verify_audit_qc(const AuditQc& qc, const QuorumProfile& profile,
                     const std::vector<PublicKey>& keys, const SignatureScheme& scheme,
                     bool require_fast = false);

// One log entry. The digest covers every field below except leader_sig,
// with the payload represented by (count, merkle root over transaction
// digests), so headers alone are digest-checkable.
struct Batch {
  ViewId view = 0;
  SeqNo seq = 0;
  Digest parent{};
  SeqNo commit_index_anc = 0;               // leader's commit index at proposal
  std::optional<AuditQc> audit_qc_anc;      // embedded only when it advances
  bool new_view = false;                    // stabilizing batch at a view start
  std::vector<Bytes> payload;               // transactions
  std::optional<Signature> leader_sig;      // over batch_sig_message(digest)

  bool is_signed() const { return leader_sig.has_value(); }
};

// Batches are signed on a fixed cadence plus at every view start. Genesis
// (seq 0) is the only new_view-agnostic exception: it is never signed.
bool requires_signature(SeqNo seq, bool new_view, std::uint64_t signing_interval);

// Merkle leaves are the SHA-512 digests of the transactions, so payload
// membership proofs verify against a bare transaction digest.
Digest payload_merkle_root(const std::vector<Bytes>& payload);  // zero digest when empty

Bytes encode_batch_header(const Batch& b);  // digest coverage, excludes payload bodies
Digest batch_digest(const Batch& b);

Bytes encode_batch(const Batch& b);  // full wire/storage form
Batch decode_batch(ByteReader& r);

// Canonical signing messages. Each carries a distinct tag, so signatures
// can never be confused across purposes.
Bytes batch_sig_message(const Digest& digest);
Bytes vote_sig_message(ViewId view, SeqNo seq, const Digest& digest);

// The well-known first batch: view 0, seq 0, zero parent, empty payload,
// unsigned. Identical for every cluster.
const Batch& genesis_batch();
const Digest& genesis_digest();

// Append-only content-addressed batch storage shared by all branches.
class BatchStore {
 public:
  // Returns false if an entry with the same digest already exists.
  bool put(const Batch& b);
  bool contains(const Digest& d) const { return by_digest_.count(d) != 0; }
  const Batch* get(const Digest& d) const;

  // Ancestor-or-equal along parent links; nullopt when an intermediate
  // batch is missing (the caller should sync).
  std::optional<bool> is_ancestor(const Digest& ancestor, const Digest& descendant) const;

  // True when the batches lie on different branches, i.e. neither is an
  // ancestor-or-equal of the other.
  std::optional<bool> conflicts(const Digest& a, const Digest& b) const;

  // Drops batches with seq strictly below the floor; audited history that
  // has left the retention window.
  void prune_below(SeqNo floor);

  std::size_t size() const { return by_digest_.size(); }

 private:
  std::map<Digest, Batch> by_digest_;
};

// One replica's current chain: digest per sequence number, genesis at 0.
class Branch {
 public:
  Branch();

  SeqNo tip_seq() const { return static_cast<SeqNo>(chain_.size() - 1); }
  const Digest& tip() const { return chain_.back(); }
  const Digest& at(SeqNo seq) const { return chain_.at(seq); }
  bool covers(SeqNo seq) const { return seq < chain_.size(); }

  // Appends b; requires b.seq == tip_seq+1 and b.parent == tip.
  bool extend(const Batch& b);

  // Truncates the chain so new_tip becomes the tip.
  void rollback_to(SeqNo new_tip);

 private:
  std::vector<Digest> chain_;
};

}  // namespace pftlog
