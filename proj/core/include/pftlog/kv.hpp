// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "pftlog/bytes.hpp"
#include "pftlog/ledger.hpp"

namespace pftlog {

// Transactions of the versioned key-value application that rides on the
// log. Encoded as the opaque payload bytes of a batch entry.
enum class KvOp : std::uint8_t { put = 1, get = 2, del = 3 };

struct KvTxn {
  KvOp op = KvOp::put;
  std::uint64_t client_id = 0;
  std::uint64_t client_seq = 0;
  std::string key;
  Bytes value;
};

Bytes encode_kv_txn(const KvTxn& t);
KvTxn decode_kv_txn(ByteReader& r);  // throws DecodeError
KvTxn decode_kv_txn(const Bytes& raw);

// One materialized state: data plus per-client replay protection and the
// values read operations observed when they were applied.
class KvState {
 public:
  void apply(const Batch& b);
  std::optional<Bytes> get(const std::string& key) const;
  std::optional<std::optional<Bytes>> read_result(std::uint64_t client_id,
                                                  std::uint64_t client_seq) const;
  std::size_t size() const { return data_.size(); }

 private:
  std::map<std::string, Bytes> data_;
  std::map<std::uint64_t, std::uint64_t> applied_;  // client -> highest applied seq
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::optional<Bytes>> reads_;
};

// Two-layer store: the committed layer runs ahead under the crash-fault
// quorum and may be rolled back; the audited layer only moves forward.
// Readers choose their level; the audited level never regresses.
class KvApp {
 public:
  using BatchFetch = std::function<const Batch*(SeqNo)>;

  // Applies the next committed batch. Batches must arrive in seq order.
  void apply_committed(const Batch& b);
  // Advances the audited layer through `upto` using `fetch` for bodies.
  void advance_audited(SeqNo upto, const BatchFetch& fetch);
  // Discards the committed overlay and replays the retained prefix
  // (audited, commit_upto] from `fetch`.
  void rollback_committed(SeqNo commit_upto, const BatchFetch& fetch);

  SeqNo committed_seq() const { return committed_seq_; }
  SeqNo audited_seq() const { return audited_seq_; }

  std::optional<Bytes> get_committed(const std::string& key) const { return committed_.get(key); }
  std::optional<Bytes> get_audited(const std::string& key) const { return audited_.get(key); }

  // Value a read operation observed at apply time, per confirmation level.
  // Outer nullopt: not applied there yet. Inner nullopt: key was absent.
  std::optional<std::optional<Bytes>> read_result(std::uint64_t client_id,
                                                  std::uint64_t client_seq, bool audited) const;

 private:
  KvState committed_;
  KvState audited_;
  SeqNo committed_seq_ = 0;
  SeqNo audited_seq_ = 0;
};

}  // namespace pftlog
