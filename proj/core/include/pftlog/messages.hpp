// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "pftlog/ledger.hpp"

namespace pftlog {

// Leader -> all: one new batch. A batch body travels in full exactly once
// here; every other message names batches by digest (sync fills gaps).
struct AppendEntryMsg {
  Batch batch;
};

// Replica -> leader: acceptance of the batch at `seq` and, implicitly, its
// whole ancestry. When the batch is signed, `sigs` carries one signature
// per signed batch still pending audit, up to and including this one.
struct VoteMsg {
  ReplicaId voter = 0;
  SeqNo seq = 0;
  Digest batch_digest{};
  std::optional<std::vector<std::pair<SeqNo, Signature>>> sigs;
};

// Broadcast on view timeout: abandons `view` and asks for view+1. Carries
// the sender's highest audit QC and every batch above it on its branch.
struct ViewChangeMsg {
  ReplicaId sender = 0;
  ViewId view = 0;  // the view being abandoned; requests view+1
  std::optional<AuditQc> high_audit_qc;
  std::vector<Batch> suffix;  // ascending seq, ends at the sender's tip
  Signature sig{};            // over view_change_sig_message(body)
};

// New leader -> all: stabilizing batch plus exactly audit_quorum proofs
// justifying the branch choice. Followers re-run the selection rules.
struct NewViewMsg {
  Batch stabilizing;
  std::vector<ViewChangeMsg> proofs;
};

// Fetch the chain segment (have_seq, want.seq] ending at `want`.
struct SyncRequestMsg {
  Digest want{};
  SeqNo have_seq = 0;
};

struct SyncResponseMsg {
  std::vector<Batch> batches;  // ascending seq
};

// Connection handshake on the wire runner.
struct HelloMsg {
  ReplicaId sender = 0;
  bool is_client = false;
};

enum class ReceiptMode : std::uint8_t { commit = 0, audit = 1 };

struct ClientRequestMsg {
  std::uint64_t client_id = 0;
  std::uint64_t client_seq = 0;
  ReceiptMode mode = ReceiptMode::commit;
  Bytes txn;
};

enum class ClientReplyStatus : std::uint8_t {
  committed = 0,
  audited = 1,
  redirect = 2,
  rejected = 3,
  value = 4,
};

struct ClientReplyMsg {
  std::uint64_t client_id = 0;
  std::uint64_t client_seq = 0;
  ClientReplyStatus status = ClientReplyStatus::rejected;
  ReplicaId leader_hint = 0;
  ViewId view = 0;
  Bytes receipt;  // encoded receipt when status is committed/audited
  bool has_value = false;
  Bytes value;  // read result when status is value
};

struct StatusRequestMsg {};

struct StatusReplyMsg {
  ReplicaId id = 0;
  ViewId view = 0;
  bool view_stable = false;
  bool leader = false;
  SeqNo commit_index = 0;
  SeqNo audit_index = 0;
  SeqNo tip_seq = 0;
  Digest tip{};
};

using Message =
    std::variant<AppendEntryMsg, VoteMsg, ViewChangeMsg, NewViewMsg, SyncRequestMsg,
                 SyncResponseMsg, HelloMsg, ClientRequestMsg, ClientReplyMsg, StatusRequestMsg,
                 StatusReplyMsg>;

// Stable one-byte message type tags; also the census keys.
std::uint8_t message_type(const Message& m);
std::string_view message_type_name(const Message& m);

Bytes encode_message(const Message& m);
Message decode_message(ByteReader& r);  // throws DecodeError

// Canonical signing payload for a view-change message (excludes sig).
Bytes view_change_sig_message(const ViewChangeMsg& m);

}  // namespace pftlog
