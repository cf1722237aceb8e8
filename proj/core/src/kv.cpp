// SPDX-License-Identifier: Apache-2.0
#include "pftlog/kv.hpp"

namespace pftlog {

Bytes encode_kv_txn(const KvTxn& t) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(t.op));
  w.u64(t.client_id);
  w.u64(t.client_seq);
  w.str(t.key);
  w.blob(t.value);
  return w.take();
}

KvTxn decode_kv_txn(ByteReader& r) {
  KvTxn t;
  const std::uint8_t op = r.u8();
  if (op < 1 || op > 3) throw DecodeError("kv txn: bad op");
  t.op = static_cast<KvOp>(op);
  t.client_id = r.u64();
  t.client_seq = r.u64();
  t.key = r.str();
  t.value = r.blob();
  return t;
}

KvTxn decode_kv_txn(const Bytes& raw) {
  ByteReader r(raw);
  KvTxn t = decode_kv_txn(r);
  r.expect_done();
  return t;
}

void KvState::apply(const Batch& b) {
  for (const auto& raw : b.payload) {
    KvTxn t;
    try {
      t = decode_kv_txn(raw);
    } catch (const DecodeError&) {
      continue;  // opaque payloads from other applications are skipped
    }
    auto [it, fresh] = applied_.emplace(t.client_id, t.client_seq);
    if (!fresh) {
      if (t.client_seq <= it->second) continue;  // replayed submission
      it->second = t.client_seq;
    }
    switch (t.op) {
      case KvOp::put:
        data_[t.key] = t.value;
        break;
      case KvOp::del:
        data_.erase(t.key);
        break;
      case KvOp::get: {
        auto pos = data_.find(t.key);
        reads_[{t.client_id, t.client_seq}] =
            pos == data_.end() ? std::nullopt : std::optional<Bytes>(pos->second);
        break;
      }
    }
  }
}

std::optional<Bytes> KvState::get(const std::string& key) const {
  auto it = data_.find(key);
  if (it == data_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::optional<Bytes>> KvState::read_result(std::uint64_t client_id,
                                                         std::uint64_t client_seq) const {
  auto it = reads_.find({client_id, client_seq});
  if (it == reads_.end()) return std::nullopt;
  return it->second;
}

void KvApp::apply_committed(const Batch& b) {
  if (b.seq != committed_seq_ + 1) return;
  committed_.apply(b);
  committed_seq_ = b.seq;
}

void KvApp::advance_audited(SeqNo upto, const BatchFetch& fetch) {
  while (audited_seq_ < upto) {
    const Batch* b = fetch(audited_seq_ + 1);
    if (b == nullptr) return;
    audited_.apply(*b);
    ++audited_seq_;
  }
}

void KvApp::rollback_committed(SeqNo commit_upto, const BatchFetch& fetch) {
  committed_ = audited_;
  committed_seq_ = audited_seq_;
  while (committed_seq_ < commit_upto) {
    const Batch* b = fetch(committed_seq_ + 1);
    if (b == nullptr) return;
    committed_.apply(*b);
    ++committed_seq_;
  }
}

std::optional<std::optional<Bytes>> KvApp::read_result(std::uint64_t client_id,
                                                       std::uint64_t client_seq,
                                                       bool audited) const {
  return audited ? audited_.read_result(client_id, client_seq)
                 : committed_.read_result(client_id, client_seq);
}

}  // namespace pftlog
