// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pftlog {

using Bytes = std::vector<std::uint8_t>;

inline Bytes to_bytes(std::string_view s) {
  return Bytes(s.begin(), s.end());
}

inline std::string to_string(const Bytes& b) {
  return std::string(b.begin(), b.end());
}

std::string hex_encode(const std::uint8_t* data, std::size_t len);

inline std::string hex_encode(const Bytes& b) {
  return hex_encode(b.data(), b.size());
}

template <std::size_t N>
std::string hex_encode(const std::array<std::uint8_t, N>& a) {
  return hex_encode(a.data(), N);
}

// Returns nullopt on odd length or non-hex characters.
std::optional<Bytes> hex_decode(std::string_view hex);

// Deterministic binary encoding helpers. All integers are fixed-width
// little-endian; variable-length fields carry a u32 length prefix. Every
// canonical message built from these is injective in its fields.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void raw(const std::uint8_t* data, std::size_t len) {
    out_.insert(out_.end(), data, data + len);
  }

  void raw(const Bytes& b) { raw(b.data(), b.size()); }

  template <std::size_t N>
  void raw(const std::array<std::uint8_t, N>& a) {
    raw(a.data(), N);
  }

  void blob(const Bytes& b) {
    u32(static_cast<std::uint32_t>(b.size()));
    raw(b);
  }

  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
  }

  const Bytes& bytes() const { return out_; }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

struct DecodeError : std::runtime_error {
  explicit DecodeError(const std::string& what) : std::runtime_error(what) {}
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t len) : data_(data), len_(len) {}
  explicit ByteReader(const Bytes& b) : ByteReader(b.data(), b.size()) {}

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  Bytes raw(std::size_t len) {
    need(len);
    Bytes b(data_ + pos_, data_ + pos_ + len);
    pos_ += len;
    return b;
  }

  template <std::size_t N>
  std::array<std::uint8_t, N> fixed() {
    need(N);
    std::array<std::uint8_t, N> a;
    std::memcpy(a.data(), data_ + pos_, N);
    pos_ += N;
    return a;
  }

  Bytes blob() {
    std::uint32_t n = u32();
    if (n > remaining()) throw DecodeError("blob length exceeds buffer");
    return raw(n);
  }

  std::string str() {
    Bytes b = blob();
    return std::string(b.begin(), b.end());
  }

  std::size_t remaining() const { return len_ - pos_; }
  bool done() const { return pos_ == len_; }

  void expect_done() const {
    if (!done()) throw DecodeError("trailing bytes after message");
  }

 private:
  void need(std::size_t n) const {
    if (len_ - pos_ < n) throw DecodeError("buffer underrun");
  }

  const std::uint8_t* data_;
  std::size_t len_;
  std::size_t pos_ = 0;
};

}  // namespace pftlog
