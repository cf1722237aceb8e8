// SPDX-License-Identifier: Apache-2.0
#include "pftlog/crypto.hpp"

#include <sodium.h>

#include <cstring>
#include <mutex>
#include <stdexcept>

namespace pftlog {

namespace {

void ensure_sodium() {
  static std::once_flag flag;
  std::call_once(flag, [] {
    if (sodium_init() < 0) throw std::runtime_error("sodium_init failed");
  });
}

}  // namespace

Digest sha512(const std::uint8_t* data, std::size_t len) {
  ensure_sodium();
  Digest d;
  crypto_hash_sha512(d.data(), data, len);
  return d;
}

namespace {

class Ed25519Scheme final : public SignatureScheme {
 public:
  KeyPair keypair_from_seed(const Seed& seed) const override {
    ensure_sodium();
    KeyPair kp;
    static_assert(crypto_sign_PUBLICKEYBYTES == 32 && crypto_sign_SECRETKEYBYTES == 64);
    crypto_sign_seed_keypair(kp.pk.data(), kp.sk.data(), seed.data());
    return kp;
  }

  Signature sign(const SecretKey& sk, const std::uint8_t* msg, std::size_t len) const override {
    ensure_sodium();
    Signature sig;
    static_assert(crypto_sign_BYTES == 64);
    crypto_sign_detached(sig.data(), nullptr, msg, len, sk.data());
    return sig;
  }

  bool verify(const PublicKey& pk, const std::uint8_t* msg, std::size_t len,
              const Signature& sig) const override {
    ensure_sodium();
    return crypto_sign_verify_detached(sig.data(), msg, len, pk.data()) == 0;
  }

  std::string_view name() const override { return "ed25519"; }
};

// sk = pk(32) || secret(32); sig = SHA-512(pk || msg). Verification needs
// only the public key, which also means anyone can forge: simulation only.
class MockScheme final : public SignatureScheme {
 public:
  KeyPair keypair_from_seed(const Seed& seed) const override {
    KeyPair kp;
    Bytes m(seed.begin(), seed.end());
    m.push_back(0x6d);  // distinct from any protocol tag
    Digest d = sha512(m);
    std::memcpy(kp.pk.data(), d.data(), 32);
    std::memcpy(kp.sk.data(), kp.pk.data(), 32);
    std::memcpy(kp.sk.data() + 32, d.data() + 32, 32);
    return kp;
  }

  Signature sign(const SecretKey& sk, const std::uint8_t* msg, std::size_t len) const override {
    PublicKey pk;
    std::memcpy(pk.data(), sk.data(), 32);
    return tag(pk, msg, len);
  }

  bool verify(const PublicKey& pk, const std::uint8_t* msg, std::size_t len,
              const Signature& sig) const override {
    return tag(pk, msg, len) == sig;
  }

  std::string_view name() const override { return "mock"; }

 private:
  static Signature tag(const PublicKey& pk, const std::uint8_t* msg, std::size_t len) {
    ensure_sodium();
    crypto_hash_sha512_state st;
    crypto_hash_sha512_init(&st);
    crypto_hash_sha512_update(&st, pk.data(), pk.size());
    crypto_hash_sha512_update(&st, msg, len);
    Digest d;
    crypto_hash_sha512_final(&st, d.data());
    Signature sig;
    std::memcpy(sig.data(), d.data(), sig.size());
    return sig;
  }
};

}  // namespace

const SignatureScheme& ed25519_scheme() {
  static Ed25519Scheme scheme;
  return scheme;
}

const SignatureScheme& mock_scheme() {
  static MockScheme scheme;
  return scheme;
}

const SignatureScheme* scheme_by_name(std::string_view name) {
  if (name == "ed25519") return &ed25519_scheme();
  if (name == "mock") return &mock_scheme();
  return nullptr;
}

KeyPair keypair_for_replica(const SignatureScheme& scheme, std::uint64_t cluster_seed,
                            std::uint32_t replica_id) {
  ByteWriter w;
  w.str("pftlog-replica-key");
  w.u64(cluster_seed);
  w.u32(replica_id);
  Digest d = sha512(w.bytes());
  Seed seed;
  std::memcpy(seed.data(), d.data(), seed.size());
  return scheme.keypair_from_seed(seed);
}

Digest merkle_leaf_hash(const Bytes& leaf) {
  ensure_sodium();
  crypto_hash_sha512_state st;
  crypto_hash_sha512_init(&st);
  const std::uint8_t prefix = 0x00;
  crypto_hash_sha512_update(&st, &prefix, 1);
  crypto_hash_sha512_update(&st, leaf.data(), leaf.size());
  Digest d;
  crypto_hash_sha512_final(&st, d.data());
  return d;
}

namespace {

Digest merkle_internal(const Digest& left, const Digest& right) {
  ensure_sodium();
  crypto_hash_sha512_state st;
  crypto_hash_sha512_init(&st);
  const std::uint8_t prefix = 0x01;
  crypto_hash_sha512_update(&st, &prefix, 1);
  crypto_hash_sha512_update(&st, left.data(), left.size());
  crypto_hash_sha512_update(&st, right.data(), right.size());
  Digest d;
  crypto_hash_sha512_final(&st, d.data());
  return d;
}

std::vector<Digest> hash_leaves(const std::vector<Bytes>& leaves) {
  std::vector<Digest> level;
  level.reserve(leaves.size());
  for (const auto& l : leaves) level.push_back(merkle_leaf_hash(l));
  return level;
}

}  // namespace

Digest merkle_root(const std::vector<Bytes>& leaves) {
  if (leaves.empty()) throw std::invalid_argument("merkle_root: empty leaf set");
  std::vector<Digest> level = hash_leaves(leaves);
  while (level.size() > 1) {
    if (level.size() % 2 != 0) level.push_back(level.back());
    std::vector<Digest> next;
    next.reserve(level.size() / 2);
    for (std::size_t i = 0; i < level.size(); i += 2) {
      next.push_back(merkle_internal(level[i], level[i + 1]));
    }
    level = std::move(next);
  }
  return level[0];
}

MerkleProof merkle_prove(const std::vector<Bytes>& leaves, std::uint64_t index) {
  if (leaves.empty()) throw std::invalid_argument("merkle_prove: empty leaf set");
  if (index >= leaves.size()) throw std::invalid_argument("merkle_prove: index out of range");
  MerkleProof proof;
  proof.leaf_index = index;
  proof.leaf_count = leaves.size();
  std::vector<Digest> level = hash_leaves(leaves);
  std::uint64_t pos = index;
  while (level.size() > 1) {
    if (level.size() % 2 != 0) level.push_back(level.back());
    proof.siblings.push_back(level[pos ^ 1]);
    std::vector<Digest> next;
    next.reserve(level.size() / 2);
    for (std::size_t i = 0; i < level.size(); i += 2) {
      next.push_back(merkle_internal(level[i], level[i + 1]));
    }
    level = std::move(next);
    pos >>= 1;
  }
  return proof;
}

bool merkle_verify(const Digest& root, const Bytes& leaf, const MerkleProof& proof) {
  if (proof.leaf_count == 0 || proof.leaf_index >= proof.leaf_count) return false;
  // Expected depth is fixed by the leaf count.
  std::uint64_t width = proof.leaf_count;
  std::size_t depth = 0;
  while (width > 1) {
    width = (width + 1) / 2;
    ++depth;
  }
  if (proof.siblings.size() != depth) return false;
  Digest node = merkle_leaf_hash(leaf);
  std::uint64_t pos = proof.leaf_index;
  for (const auto& sib : proof.siblings) {
    node = (pos & 1) ? merkle_internal(sib, node) : merkle_internal(node, sib);
    pos >>= 1;
  }
  return node == root;
}

}  // namespace pftlog
