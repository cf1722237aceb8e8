// SPDX-License-Identifier: Apache-2.0
#include "pftlog/messages.hpp"

namespace pftlog {

namespace {

enum MsgTag : std::uint8_t {
  kAppendEntry = 1,
  kVote = 2,
  kViewChange = 3,
  kNewView = 4,
  kSyncRequest = 5,
  kSyncResponse = 6,
  kHello = 7,
  kClientRequest = 8,
  kClientReply = 9,
  kStatusRequest = 10,
  kStatusReply = 11,
};

void write_view_change_body(ByteWriter& w, const ViewChangeMsg& m) {
  w.u32(m.sender);
  w.u64(m.view);
  w.u8(m.high_audit_qc ? 1 : 0);
  if (m.high_audit_qc) w.raw(encode_audit_qc(*m.high_audit_qc));
  w.u32(static_cast<std::uint32_t>(m.suffix.size()));
  for (const auto& b : m.suffix) w.blob(encode_batch(b));
}

ViewChangeMsg read_view_change_body(ByteReader& r) {
  ViewChangeMsg m;
  m.sender = r.u32();
  m.view = r.u64();
  if (r.u8() != 0) m.high_audit_qc = decode_audit_qc(r);
  std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    Bytes raw = r.blob();
    ByteReader br(raw);
    m.suffix.push_back(decode_batch(br));
    br.expect_done();
  }
  return m;
}

}  // namespace

std::uint8_t message_type(const Message& m) {
  return std::visit(
      [](const auto& v) -> std::uint8_t {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, AppendEntryMsg>) return kAppendEntry;
        if constexpr (std::is_same_v<T, VoteMsg>) return kVote;
        if constexpr (std::is_same_v<T, ViewChangeMsg>) return kViewChange;
        if constexpr (std::is_same_v<T, NewViewMsg>) return kNewView;
        if constexpr (std::is_same_v<T, SyncRequestMsg>) return kSyncRequest;
        if constexpr (std::is_same_v<T, SyncResponseMsg>) return kSyncResponse;
        if constexpr (std::is_same_v<T, HelloMsg>) return kHello;
        if constexpr (std::is_same_v<T, ClientRequestMsg>) return kClientRequest;
        if constexpr (std::is_same_v<T, ClientReplyMsg>) return kClientReply;
        if constexpr (std::is_same_v<T, StatusRequestMsg>) return kStatusRequest;
        if constexpr (std::is_same_v<T, StatusReplyMsg>) return kStatusReply;
      },
      m);
}

std::string_view message_type_name(const Message& m) {
  switch (message_type(m)) {
    case kAppendEntry: return "append_entry";
    case kVote: return "vote";
    case kViewChange: return "view_change";
    case kNewView: return "new_view";
    case kSyncRequest: return "sync_request";
    case kSyncResponse: return "sync_response";
    case kHello: return "hello";
    case kClientRequest: return "client_request";
    case kClientReply: return "client_reply";
    case kStatusRequest: return "status_request";
    case kStatusReply: return "status_reply";
  }
  return "unknown";
}

Bytes encode_message(const Message& m) {
  ByteWriter w;
  w.u8(message_type(m));
  std::visit(
      [&w](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, AppendEntryMsg>) {
          w.raw(encode_batch(v.batch));
        } else if constexpr (std::is_same_v<T, VoteMsg>) {
          w.u32(v.voter);
          w.u64(v.seq);
          w.raw(v.batch_digest);
          w.u8(v.sigs ? 1 : 0);
          if (v.sigs) {
            w.u32(static_cast<std::uint32_t>(v.sigs->size()));
            for (const auto& [seq, sig] : *v.sigs) {
              w.u64(seq);
              w.raw(sig);
            }
          }
        } else if constexpr (std::is_same_v<T, ViewChangeMsg>) {
          write_view_change_body(w, v);
          w.raw(v.sig);
        } else if constexpr (std::is_same_v<T, NewViewMsg>) {
          w.blob(encode_batch(v.stabilizing));
          w.u32(static_cast<std::uint32_t>(v.proofs.size()));
          for (const auto& p : v.proofs) {
            ByteWriter pw;
            write_view_change_body(pw, p);
            pw.raw(p.sig);
            w.blob(pw.bytes());
          }
        } else if constexpr (std::is_same_v<T, SyncRequestMsg>) {
          w.raw(v.want);
          w.u64(v.have_seq);
        } else if constexpr (std::is_same_v<T, SyncResponseMsg>) {
          w.u32(static_cast<std::uint32_t>(v.batches.size()));
          for (const auto& b : v.batches) w.blob(encode_batch(b));
        } else if constexpr (std::is_same_v<T, HelloMsg>) {
          w.u32(v.sender);
          w.u8(v.is_client ? 1 : 0);
        } else if constexpr (std::is_same_v<T, ClientRequestMsg>) {
          w.u64(v.client_id);
          w.u64(v.client_seq);
          w.u8(static_cast<std::uint8_t>(v.mode));
          w.blob(v.txn);
        } else if constexpr (std::is_same_v<T, ClientReplyMsg>) {
          w.u64(v.client_id);
          w.u64(v.client_seq);
          w.u8(static_cast<std::uint8_t>(v.status));
          w.u32(v.leader_hint);
          w.u64(v.view);
          w.blob(v.receipt);
          w.u8(v.has_value ? 1 : 0);
          w.blob(v.value);
        } else if constexpr (std::is_same_v<T, StatusRequestMsg>) {
          // empty body
        } else if constexpr (std::is_same_v<T, StatusReplyMsg>) {
          w.u32(v.id);
          w.u64(v.view);
          w.u8(v.view_stable ? 1 : 0);
          w.u8(v.leader ? 1 : 0);
          w.u64(v.commit_index);
          w.u64(v.audit_index);
          w.u64(v.tip_seq);
          w.raw(v.tip);
        }
      },
      m);
  return w.take();
}

Message decode_message(ByteReader& r) {
  std::uint8_t tag = r.u8();
  switch (tag) {
    case kAppendEntry: {
      AppendEntryMsg m;
      m.batch = decode_batch(r);
      return m;
    }
    case kVote: {
      VoteMsg m;
      m.voter = r.u32();
      m.seq = r.u64();
      m.batch_digest = r.fixed<64>();
      if (r.u8() != 0) {
        std::uint32_t n = r.u32();
        std::vector<std::pair<SeqNo, Signature>> sigs;
        for (std::uint32_t i = 0; i < n; ++i) {
          SeqNo seq = r.u64();
          Signature sig = r.fixed<64>();
          sigs.emplace_back(seq, sig);
        }
        m.sigs = std::move(sigs);
      }
      return m;
    }
    case kViewChange: {
      ViewChangeMsg m = read_view_change_body(r);
      m.sig = r.fixed<64>();
      return m;
    }
    case kNewView: {
      NewViewMsg m;
      {
        Bytes raw = r.blob();
        ByteReader br(raw);
        m.stabilizing = decode_batch(br);
        br.expect_done();
      }
      std::uint32_t n = r.u32();
      for (std::uint32_t i = 0; i < n; ++i) {
        Bytes raw = r.blob();
        ByteReader br(raw);
        ViewChangeMsg p = read_view_change_body(br);
        p.sig = br.fixed<64>();
        br.expect_done();
        m.proofs.push_back(std::move(p));
      }
      return m;
    }
    case kSyncRequest: {
      SyncRequestMsg m;
      m.want = r.fixed<64>();
      m.have_seq = r.u64();
      return m;
    }
    case kSyncResponse: {
      SyncResponseMsg m;
      std::uint32_t n = r.u32();
      for (std::uint32_t i = 0; i < n; ++i) {
        Bytes raw = r.blob();
        ByteReader br(raw);
        m.batches.push_back(decode_batch(br));
        br.expect_done();
      }
      return m;
    }
    case kHello: {
      HelloMsg m;
      m.sender = r.u32();
      m.is_client = r.u8() != 0;
      return m;
    }
    case kClientRequest: {
      ClientRequestMsg m;
      m.client_id = r.u64();
      m.client_seq = r.u64();
      std::uint8_t mode = r.u8();
      if (mode > 1) throw DecodeError("bad receipt mode");
      m.mode = static_cast<ReceiptMode>(mode);
      m.txn = r.blob();
      return m;
    }
    case kClientReply: {
      ClientReplyMsg m;
      m.client_id = r.u64();
      m.client_seq = r.u64();
      std::uint8_t st = r.u8();
      if (st > 4) throw DecodeError("bad reply status");
      m.status = static_cast<ClientReplyStatus>(st);
      m.leader_hint = r.u32();
      m.view = r.u64();
      m.receipt = r.blob();
      m.has_value = r.u8() != 0;
      m.value = r.blob();
      return m;
    }
    case kStatusRequest:
      return StatusRequestMsg{};
    case kStatusReply: {
      StatusReplyMsg m;
      m.id = r.u32();
      m.view = r.u64();
      m.view_stable = r.u8() != 0;
      m.leader = r.u8() != 0;
      m.commit_index = r.u64();
      m.audit_index = r.u64();
      m.tip_seq = r.u64();
      m.tip = r.fixed<64>();
      return m;
    }
    default:
      throw DecodeError("unknown message tag");
  }
}

Bytes view_change_sig_message(const ViewChangeMsg& m) {
  ByteWriter w;
  w.str("pftlog/view-change/v1");
  write_view_change_body(w, m);
  return w.take();
}

}  // namespace pftlog
