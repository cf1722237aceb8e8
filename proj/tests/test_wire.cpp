// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <unistd.h>
#include <random>
#include <string>
#include <vector>

#include <pftlog/bytes.hpp>
#include <pftlog/ledger.hpp>
#include <pftlog/messages.hpp>
#include <pftlog/wire.hpp>

using namespace pftlog;

namespace {

Bytes ascii(const std::string& s) { return Bytes(s.begin(), s.end()); }

std::string temp_path(const std::string& stem) {
  return (std::filesystem::temp_directory_path() / (stem + "-" + std::to_string(::getpid())))
      .string();
}

Batch sample_batch(SeqNo seq, const Digest& parent) {
  Batch b;
  b.view = 1;
  b.seq = seq;
  b.parent = parent;
  b.payload = {ascii("w" + std::to_string(seq))};
  return b;
}

}  // namespace

TEST_CASE("frames round trip through the incremental reader") {
  FrameReader rd;
  std::vector<Bytes> frames;
  for (int i = 0; i < 5; ++i)
    frames.push_back(encode_frame(kFrameTypeMessage, ascii(std::string(i * 7, 'x'))));

  // Feed byte-by-byte: partial input yields nothing, never throws.
  Bytes all;
  for (const auto& f : frames) all.insert(all.end(), f.begin(), f.end());
  std::size_t seen = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    rd.feed(&all[i], 1);
    while (auto f = rd.next()) {
      CHECK(f->type == kFrameTypeMessage);
      CHECK(f->body.size() == seen * 7);
      ++seen;
    }
  }
  CHECK(seen == frames.size());
  CHECK(rd.buffered() == 0);
}

TEST_CASE("reader rejects corrupt framing") {
  const Bytes good = encode_frame(0x10, ascii("hello"));

  SUBCASE("bad magic") {
    Bytes bad = good;
    bad[0] ^= 0xff;
    FrameReader rd;
    rd.feed(bad);
    CHECK_THROWS_AS(rd.next(), DecodeError);
  }
  SUBCASE("oversized length") {
    Bytes bad = good;
    bad[5] = 0xff;  // length prefix far beyond the body cap
    bad[6] = 0xff;
    bad[7] = 0xff;
    bad[8] = 0xff;
    FrameReader rd;
    rd.feed(bad);
    CHECK_THROWS_AS(rd.next(), DecodeError);
  }
  SUBCASE("checksum mismatch") {
    Bytes bad = good;
    bad[kFrameHeader] ^= 0x01;  // first body byte
    FrameReader rd;
    rd.feed(bad);
    CHECK_THROWS_AS(rd.next(), DecodeError);
  }
  SUBCASE("random corruption is either detected or a clean short read") {
    std::mt19937_64 rng(0x5eed);
    for (int t = 0; t < 300; ++t) {
      Bytes bad = good;
      bad[rng() % bad.size()] ^= static_cast<std::uint8_t>(1 + rng() % 255);
      FrameReader rd;
      rd.feed(bad);
      try {
        auto f = rd.next();
        if (f.has_value()) {
          // Only a same-length body with matching checksum may surface; the
          // checksum covers type and body, so the frame must differ from the
          // original in neither.
          CHECK(f->type == 0x10);
          CHECK(f->body == ascii("hello"));
        }
      } catch (const DecodeError&) {
      }
    }
  }
}

TEST_CASE("protocol messages survive framed transport") {
  VoteMsg v;
  v.voter = 3;
  v.seq = 12;
  v.batch_digest = sha512(ascii("b"));
  v.sigs = std::vector<std::pair<SeqNo, Signature>>{{12, Signature{}}};

  const Bytes framed = encode_frame(kFrameTypeMessage, encode_message(Message{v}));
  FrameReader rd;
  rd.feed(framed);
  auto f = rd.next();
  REQUIRE(f.has_value());
  ByteReader mrd(f->body);
  const Message m = decode_message(mrd);
  const auto* dv = std::get_if<VoteMsg>(&m);
  REQUIRE(dv != nullptr);
  CHECK(dv->voter == 3);
  CHECK(dv->seq == 12);
  CHECK(dv->batch_digest == v.batch_digest);
}

TEST_CASE("write-ahead log replays appends in order") {
  const std::string path = temp_path("wal-replay");
  std::filesystem::remove(path);

  Batch b1 = sample_batch(1, genesis_digest());
  Batch b2 = sample_batch(2, batch_digest(b1));
  {
    WriteAheadLog wal(path);
    WalReplayHooks hooks;
    CHECK(wal.open_and_replay(hooks) == 0);
    wal.append_view(1, false);
    wal.append_batch(b1);
    wal.append_vote(1, 1, batch_digest(b1));
    wal.append_batch(b2);
    wal.append_rollback(1);
    wal.append_view(1, true);
    wal.flush();
  }

  std::vector<std::string> log;
  WalReplayHooks hooks;
  hooks.on_batch = [&](const Batch& b) { log.push_back("batch" + std::to_string(b.seq)); };
  hooks.on_vote = [&](const WalVoteRecord& v) {
    CHECK(v.view == 1);
    CHECK(v.digest == batch_digest(b1));
    log.push_back("vote" + std::to_string(v.seq));
  };
  hooks.on_view = [&](const WalViewRecord& v) {
    log.push_back("view" + std::to_string(v.view) + (v.stable ? "+" : "-"));
  };
  hooks.on_rollback = [&](SeqNo to) { log.push_back("rollback" + std::to_string(to)); };

  WriteAheadLog wal(path);
  CHECK(wal.open_and_replay(hooks) == 6);
  CHECK(log == std::vector<std::string>{"view1-", "batch1", "vote1", "batch2", "rollback1",
                                        "view1+"});
  std::filesystem::remove(path);
}

TEST_CASE("torn tails are truncated, the prefix survives") {
  const std::string path = temp_path("wal-torn");
  std::filesystem::remove(path);
  {
    WriteAheadLog wal(path);
    WalReplayHooks hooks;
    wal.open_and_replay(hooks);
    wal.append_view(2, true);
    wal.append_rollback(7);
    wal.flush();
  }
  const auto full_size = std::filesystem::file_size(path);

  for (std::uintmax_t cut = 1; cut < 12 && cut < full_size; ++cut) {
    std::filesystem::resize_file(path, full_size - cut);

    std::size_t views = 0, rollbacks = 0;
    WalReplayHooks hooks;
    hooks.on_view = [&](const WalViewRecord&) { ++views; };
    hooks.on_rollback = [&](SeqNo) { ++rollbacks; };
    {
      WriteAheadLog wal(path);
      CHECK(wal.open_and_replay(hooks) == 1);  // the torn second record is gone
    }
    CHECK(views == 1);
    CHECK(rollbacks == 0);
    // The truncation is durable: the file now ends at the intact prefix.
    CHECK(std::filesystem::file_size(path) < full_size);

    // Restore the second record for the next iteration.
    std::filesystem::remove(path);
    WriteAheadLog wal(path);
    WalReplayHooks fresh;
    wal.open_and_replay(fresh);
    wal.append_view(2, true);
    wal.append_rollback(7);
    wal.flush();
  }
  std::filesystem::remove(path);
}

TEST_CASE("a corrupt byte mid-log cuts replay at the damage") {
  const std::string path = temp_path("wal-corrupt");
  std::filesystem::remove(path);
  Batch b1 = sample_batch(1, genesis_digest());
  {
    WriteAheadLog wal(path);
    WalReplayHooks hooks;
    wal.open_and_replay(hooks);
    wal.append_batch(b1);
    wal.append_rollback(3);
    wal.append_view(5, false);
    wal.flush();
  }
  // Flip one byte inside the second record's body.
  const Bytes rec1 = encode_frame(static_cast<std::uint8_t>(WalRecordType::batch), [&] {
    return encode_batch(b1);
  }());
  {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f != nullptr);
    std::fseek(f, static_cast<long>(rec1.size() + kFrameHeader), SEEK_SET);
    std::uint8_t byte = 0;
    REQUIRE(std::fread(&byte, 1, 1, f) == 1);
    byte ^= 0x20;
    std::fseek(f, -1, SEEK_CUR);
    std::fwrite(&byte, 1, 1, f);
    std::fclose(f);
  }

  std::size_t batches = 0, rollbacks = 0, views = 0;
  WalReplayHooks hooks;
  hooks.on_batch = [&](const Batch&) { ++batches; };
  hooks.on_rollback = [&](SeqNo) { ++rollbacks; };
  hooks.on_view = [&](const WalViewRecord&) { ++views; };
  WriteAheadLog wal(path);
  CHECK(wal.open_and_replay(hooks) == 1);
  CHECK(batches == 1);
  CHECK(rollbacks == 0);
  CHECK(views == 0);

  // Appends continue cleanly after the truncation.
  wal.append_view(6, true);
  wal.flush();
  std::filesystem::remove(path);
}
