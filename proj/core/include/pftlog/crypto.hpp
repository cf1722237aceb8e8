// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "pftlog/bytes.hpp"

namespace pftlog {

using Digest = std::array<std::uint8_t, 64>;     // SHA-512
using Signature = std::array<std::uint8_t, 64>;
using PublicKey = std::array<std::uint8_t, 32>;
using SecretKey = std::array<std::uint8_t, 64>;
using Seed = std::array<std::uint8_t, 32>;

struct KeyPair {
  PublicKey pk{};
  SecretKey sk{};
};

inline constexpr Digest kZeroDigest{};

Digest sha512(const std::uint8_t* data, std::size_t len);
inline Digest sha512(const Bytes& b) { return sha512(b.data(), b.size()); }
inline Digest sha512(std::string_view s) {
  return sha512(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

// Detached signatures over arbitrary messages. Implementations must be
// deterministic: signing the same message twice yields identical bytes.
class SignatureScheme {
 public:
  virtual ~SignatureScheme() = default;
  virtual KeyPair keypair_from_seed(const Seed& seed) const = 0;
  virtual Signature sign(const SecretKey& sk, const std::uint8_t* msg, std::size_t len) const = 0;
  virtual bool verify(const PublicKey& pk, const std::uint8_t* msg, std::size_t len,
                      const Signature& sig) const = 0;
  virtual std::string_view name() const = 0;

  Signature sign(const SecretKey& sk, const Bytes& msg) const {
    return sign(sk, msg.data(), msg.size());
  }
  bool verify(const PublicKey& pk, const Bytes& msg, const Signature& sig) const {
    return verify(pk, msg.data(), msg.size(), sig);
  }
};

// Ed25519 via libsodium. Default scheme for every deployment surface.
const SignatureScheme& ed25519_scheme();

// Keyed-hash tags sized like real signatures. Forgeable by anyone holding
// the public key, so strictly for closed deterministic simulations where
// speed matters; never a deployment scheme.
const SignatureScheme& mock_scheme();

// nullptr when the name is unknown. Known names: "ed25519", "mock".
const SignatureScheme* scheme_by_name(std::string_view name);

// Deterministic per-replica keys for test clusters and simulations.
KeyPair keypair_for_replica(const SignatureScheme& scheme, std::uint64_t cluster_seed,
                            std::uint32_t replica_id);

// Merkle tree over byte-string leaves. Leaves are hashed once with a 0x00
// domain prefix, internal nodes with 0x01; odd node counts duplicate the
// last node at that level. A single leaf is its own root with no siblings.
struct MerkleProof {
  std::uint64_t leaf_index = 0;
  std::uint64_t leaf_count = 0;
  std::vector<Digest> siblings;  // bottom-up, one per tree level
};

Digest merkle_leaf_hash(const Bytes& leaf);
Digest merkle_root(const std::vector<Bytes>& leaves);  // throws on empty input
MerkleProof merkle_prove(const std::vector<Bytes>& leaves, std::uint64_t index);
bool merkle_verify(const Digest& root, const Bytes& leaf, const MerkleProof& proof);

}  // namespace pftlog
