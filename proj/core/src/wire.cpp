// SPDX-License-Identifier: Apache-2.0
#include "pftlog/wire.hpp"

#include <zlib.h>

#include <cerrno>
#include <cstring>
#include <stdexcept>
#include <system_error>

#include <unistd.h>

namespace pftlog {

namespace {

void put_be32(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

std::uint32_t frame_crc(std::uint8_t type, std::uint32_t len, const std::uint8_t* body) {
  std::uint8_t head[5] = {type,
                          static_cast<std::uint8_t>(len >> 24),
                          static_cast<std::uint8_t>(len >> 16),
                          static_cast<std::uint8_t>(len >> 8),
                          static_cast<std::uint8_t>(len)};
  uLong c = crc32(0L, Z_NULL, 0);
  c = crc32(c, head, 5);
  if (len > 0) c = crc32(c, body, len);
  return static_cast<std::uint32_t>(c);
}

[[noreturn]] void io_fail(const std::string& what) {
  throw std::system_error(errno, std::generic_category(), what);
}

}  // namespace

Bytes encode_frame(std::uint8_t type, const Bytes& body) {
  if (body.size() > kMaxFrameBody) throw std::length_error("frame body too large");
  Bytes out;
  out.reserve(kFrameHeader + body.size() + kFrameTrailer);
  out.insert(out.end(), kFrameMagic, kFrameMagic + 4);
  out.push_back(type);
  put_be32(out, static_cast<std::uint32_t>(body.size()));
  out.insert(out.end(), body.begin(), body.end());
  put_be32(out, frame_crc(type, static_cast<std::uint32_t>(body.size()), body.data()));
  return out;
}

void FrameReader::feed(const std::uint8_t* data, std::size_t len) {
  buf_.insert(buf_.end(), data, data + len);
}

void FrameReader::compact() {
  if (pos_ == 0) return;
  buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
  pos_ = 0;
}

std::optional<Frame> FrameReader::next() {
  if (buffered() < kFrameHeader) return std::nullopt;
  const std::uint8_t* p = buf_.data() + pos_;
  if (std::memcmp(p, kFrameMagic, 4) != 0) throw DecodeError("bad frame magic");
  const std::uint8_t type = p[4];
  const std::uint32_t len = get_be32(p + 5);
  if (len > kMaxFrameBody) throw DecodeError("frame body too large");
  if (buffered() < kFrameHeader + len + kFrameTrailer) return std::nullopt;
  const std::uint8_t* body = p + kFrameHeader;
  const std::uint32_t want = get_be32(body + len);
  if (frame_crc(type, len, body) != want) throw DecodeError("frame checksum mismatch");
  Frame f;
  f.type = type;
  f.body.assign(body, body + len);
  pos_ += kFrameHeader + len + kFrameTrailer;
  if (pos_ > (64u << 10) && pos_ * 2 >= buf_.size()) compact();
  return f;
}

// ---------------------------------------------------------------------------

WriteAheadLog::WriteAheadLog(std::string path) : path_(std::move(path)) {}

WriteAheadLog::~WriteAheadLog() {
  if (file_ != nullptr) {
    if (dirty_) flush();
    std::fclose(file_);
  }
}

std::size_t WriteAheadLog::open_and_replay(const WalReplayHooks& hooks) {
  if (file_ != nullptr) throw std::logic_error("log already open");
  file_ = std::fopen(path_.c_str(), "rb+");
  if (file_ == nullptr && errno == ENOENT) file_ = std::fopen(path_.c_str(), "wb+");
  if (file_ == nullptr) io_fail("open " + path_);

  std::size_t records = 0;
  std::uint64_t good_end = 0;  // byte offset just past the last intact record
  FrameReader reader;
  std::uint64_t consumed_base = 0;  // file offset of the reader's buffer start
  Bytes chunk(1u << 16);
  bool corrupt = false;
  for (;;) {
    const std::size_t got = std::fread(chunk.data(), 1, chunk.size(), file_);
    if (got > 0) reader.feed(chunk.data(), got);
    for (;;) {
      std::optional<Frame> f;
      try {
        f = reader.next();
      } catch (const DecodeError&) {
        corrupt = true;
        break;
      }
      if (!f) break;
      try {
        ByteReader r(f->body);
        switch (static_cast<WalRecordType>(f->type)) {
          case WalRecordType::batch: {
            Batch b = decode_batch(r);
            r.expect_done();
            if (hooks.on_batch) hooks.on_batch(b);
            break;
          }
          case WalRecordType::vote: {
            WalVoteRecord v;
            v.view = r.u64();
            v.seq = r.u64();
            v.digest = r.fixed<64>();
            r.expect_done();
            if (hooks.on_vote) hooks.on_vote(v);
            break;
          }
          case WalRecordType::view: {
            WalViewRecord v;
            v.view = r.u64();
            v.stable = r.u8() != 0;
            r.expect_done();
            if (hooks.on_view) hooks.on_view(v);
            break;
          }
          case WalRecordType::rollback: {
            const SeqNo to = r.u64();
            r.expect_done();
            if (hooks.on_rollback) hooks.on_rollback(to);
            break;
          }
          default:
            throw DecodeError("unknown record type");
        }
      } catch (const DecodeError&) {
        corrupt = true;
        break;
      }
      ++records;
      good_end = consumed_base + (kFrameHeader + f->body.size() + kFrameTrailer);
      consumed_base = good_end;
    }
    if (corrupt || got < chunk.size()) break;
  }

  // Anything past the last intact record is a torn append: cut it off so the
  // next write starts from a clean boundary.
  if (std::fflush(file_) != 0) io_fail("flush " + path_);
  if (ftruncate(fileno(file_), static_cast<off_t>(good_end)) != 0) io_fail("truncate " + path_);
  if (std::fseek(file_, 0, SEEK_END) != 0) io_fail("seek " + path_);
  return records;
}

void WriteAheadLog::append_frame(WalRecordType type, const Bytes& body) {
  if (file_ == nullptr) throw std::logic_error("log not open");
  const Bytes frame = encode_frame(static_cast<std::uint8_t>(type), body);
  if (std::fwrite(frame.data(), 1, frame.size(), file_) != frame.size())
    io_fail("append " + path_);
  dirty_ = true;
}

void WriteAheadLog::append_batch(const Batch& b) {
  append_frame(WalRecordType::batch, encode_batch(b));
}

void WriteAheadLog::append_vote(ViewId view, SeqNo seq, const Digest& digest) {
  ByteWriter w;
  w.u64(view);
  w.u64(seq);
  w.raw(digest);
  append_frame(WalRecordType::vote, w.take());
}

void WriteAheadLog::append_view(ViewId view, bool stable) {
  ByteWriter w;
  w.u64(view);
  w.u8(stable ? 1 : 0);
  append_frame(WalRecordType::view, w.take());
}

void WriteAheadLog::append_rollback(SeqNo to) {
  ByteWriter w;
  w.u64(to);
  append_frame(WalRecordType::rollback, w.take());
}

void WriteAheadLog::flush() {
  if (file_ == nullptr || !dirty_) return;
  if (std::fflush(file_) != 0) io_fail("flush " + path_);
  if (fsync(fileno(file_)) != 0) io_fail("fsync " + path_);
  dirty_ = false;
}

}  // namespace pftlog
