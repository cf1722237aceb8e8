// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>

#include "pftlog/ledger.hpp"

namespace pftlog {

// Outermost container for both the TCP stream and the on-disk log:
//   magic[4] | type u8 | length u32 BE | body | crc32 u32 BE
// The checksum (zlib crc32) covers type, length, and body. Big-endian for
// the container fields only; everything inside `body` is the canonical
// little-endian encoding.
inline constexpr std::uint8_t kFrameMagic[4] = {0x70, 0x66, 0x6c, 0x31};
inline constexpr std::size_t kFrameHeader = 4 + 1 + 4;
inline constexpr std::size_t kFrameTrailer = 4;
inline constexpr std::uint32_t kMaxFrameBody = 64u << 20;

struct Frame {
  std::uint8_t type = 0;
  Bytes body;
};

Bytes encode_frame(std::uint8_t type, const Bytes& body);

// Incremental decoder over a byte stream. feed() appends raw bytes; next()
// yields one complete frame, nullopt when more input is needed, and throws
// DecodeError on bad magic, oversized length, or checksum mismatch.
class FrameReader {
 public:
  void feed(const std::uint8_t* data, std::size_t len);
  void feed(const Bytes& b) { feed(b.data(), b.size()); }
  std::optional<Frame> next();
  std::size_t buffered() const { return buf_.size() - pos_; }

 private:
  void compact();

  Bytes buf_;
  std::size_t pos_ = 0;
};

// Frame type used for protocol messages on a connection. The body is
// encode_message(); the inner encoding already tags the message kind.
inline constexpr std::uint8_t kFrameTypeMessage = 0x10;

// ---------------------------------------------------------------------------
// Durable log of one replica's protocol-critical transitions, stored as a
// sequence of frames. Record bodies:
//   batch    : encode_batch
//   vote     : view u64 | seq u64 | digest[64]   (this replica's own vote)
//   view     : view u64 | stable u8
//   rollback : to u64
// Recovery replays intact records in order and truncates a torn or corrupt
// tail in place: an interrupted append never poisons the prefix.
enum class WalRecordType : std::uint8_t {
  batch = 1,
  vote = 2,
  view = 3,
  rollback = 4,
};

struct WalVoteRecord {
  ViewId view = 0;
  SeqNo seq = 0;
  Digest digest{};
};

struct WalViewRecord {
  ViewId view = 0;
  bool stable = false;
};

struct WalReplayHooks {
  std::function<void(const Batch&)> on_batch;
  std::function<void(const WalVoteRecord&)> on_vote;
  std::function<void(const WalViewRecord&)> on_view;
  std::function<void(SeqNo)> on_rollback;
};

class WriteAheadLog {
 public:
  explicit WriteAheadLog(std::string path);
  ~WriteAheadLog();
  WriteAheadLog(const WriteAheadLog&) = delete;
  WriteAheadLog& operator=(const WriteAheadLog&) = delete;

  // Opens (creating if absent), replays every intact record through the
  // hooks, truncates any torn tail, and leaves the file positioned for
  // appends. Returns the number of records replayed.
  std::size_t open_and_replay(const WalReplayHooks& hooks);

  void append_batch(const Batch& b);
  void append_vote(ViewId view, SeqNo seq, const Digest& digest);
  void append_view(ViewId view, bool stable);
  void append_rollback(SeqNo to);

  // Durability barrier: everything appended so far reaches the disk before
  // this returns. Called before any network send that reveals the state.
  void flush();

  const std::string& path() const { return path_; }

 private:
  void append_frame(WalRecordType type, const Bytes& body);

  std::string path_;
  std::FILE* file_ = nullptr;
  bool dirty_ = false;
};

}  // namespace pftlog
