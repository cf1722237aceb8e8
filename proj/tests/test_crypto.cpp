// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdint>
#include <string>
#include <vector>

#include <pftlog/bytes.hpp>
#include <pftlog/crypto.hpp>

using namespace pftlog;

namespace {

Bytes ascii(const std::string& s) { return Bytes(s.begin(), s.end()); }

}  // namespace

TEST_CASE("sha512 matches published vectors") {
  // FIPS 180-4 example vectors.
  CHECK(hex_encode(sha512(ascii("abc"))) ==
        "ddaf35a193617abacc417349ae20413112e6fa4e89a97ea20a9eeee64b55d39a"
        "2192992a274fc1a836ba3c23a3feebbd454d4423643ce80e2a9ac94fa54ca49f");
  CHECK(hex_encode(sha512(ascii(""))) ==
        "cf83e1357eefb8bdf1542850d66d8007d620e4050b5715dc83f4a921d36ce9ce"
        "47d0d13c5d85f2b0ff8318d2877eec2f63b931bd47417a81a538327af927da3e");
  CHECK(hex_encode(sha512(ascii("abcdefghbcdefghicdefghijdefghijkefghijklfghijklmghijklmn"
                                "hijklmnoijklmnopjklmnopqklmnopqrlmnopqrsmnopqrstnopqrstu"))) ==
        "8e959b75dae313da8cf4f72814fc143f8f7779c6eb9f7fa17299aeadb6889018"
        "501d289e4900f7e4331b99dec4b5433ac7d329eeb6dd26545e96e55b874be909");
}

TEST_CASE("ed25519 matches the reference test vector") {
  // RFC 8032 section 7.1, TEST 1: empty message.
  const SignatureScheme& s = ed25519_scheme();
  Seed seed{};
  const Bytes sk_bytes =
      *hex_decode("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60");
  std::copy(sk_bytes.begin(), sk_bytes.end(), seed.begin());
  const KeyPair kp = s.keypair_from_seed(seed);
  CHECK(hex_encode(kp.pk) ==
        "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a");
  const Signature sig = s.sign(kp.sk, Bytes{});
  CHECK(hex_encode(sig) ==
        "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e06522490155"
        "5fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b");
  CHECK(s.verify(kp.pk, Bytes{}, sig));
}

TEST_CASE("signatures bind key and message") {
  const SignatureScheme& s = ed25519_scheme();
  Seed a{}, b{};
  a[0] = 1;
  b[0] = 2;
  const KeyPair ka = s.keypair_from_seed(a);
  const KeyPair kb = s.keypair_from_seed(b);
  const Bytes msg = ascii("append entry 42");
  const Signature sig = s.sign(ka.sk, msg);
  CHECK(s.verify(ka.pk, msg, sig));
  CHECK_FALSE(s.verify(kb.pk, msg, sig));
  Bytes tampered = msg;
  tampered[0] ^= 0x01;
  CHECK_FALSE(s.verify(ka.pk, tampered, sig));
  Signature broken = sig;
  broken[5] ^= 0x80;
  CHECK_FALSE(s.verify(ka.pk, msg, broken));
}

TEST_CASE("replica keypairs are deterministic per cluster seed and id") {
  const SignatureScheme& s = ed25519_scheme();
  const KeyPair a1 = keypair_for_replica(s, 7, 0);
  const KeyPair a2 = keypair_for_replica(s, 7, 0);
  const KeyPair b = keypair_for_replica(s, 7, 1);
  const KeyPair c = keypair_for_replica(s, 8, 0);
  CHECK(a1.pk == a2.pk);
  CHECK(a1.pk != b.pk);
  CHECK(a1.pk != c.pk);
}

TEST_CASE("mock scheme is deterministic and key-separating") {
  const SignatureScheme* m = scheme_by_name("mock");
  REQUIRE(m != nullptr);
  CHECK(scheme_by_name("ed25519") != nullptr);
  CHECK(scheme_by_name("nope") == nullptr);
  Seed a{};
  a[3] = 9;
  const KeyPair ka = m->keypair_from_seed(a);
  const Bytes msg = ascii("vote");
  const Signature sig = m->sign(ka.sk, msg);
  CHECK(m->verify(ka.pk, msg, sig));
  Bytes other = ascii("vote!");
  CHECK_FALSE(m->verify(ka.pk, other, sig));
}

TEST_CASE("merkle roots match an independent construction") {
  // Frozen from a reference implementation of the same tree: sha512 with a
  // 0x00 leaf prefix, 0x01 node prefix, odd levels duplicating the tail.
  CHECK(hex_encode(merkle_root({ascii("a")})) ==
        "031ab9ff5962e81139a6900216945fc584ab186aeb1bf3498c661b976a7393af"
        "94b6bcc9784f7e8cb75b071de60f9fda06d44ddd561e53e3343857eea2089217");
  CHECK(hex_encode(merkle_root({ascii("a"), ascii("b")})) ==
        "4b46df98b7104978e58a14ed3d5febb89bb2327ffce4307b55254ae8b26e76bf"
        "251dec7ea1111502a142e2eadf5a8ebbdece4b3a519c7cf3c781144f2a38f2cf");
  CHECK(hex_encode(merkle_root({ascii("a"), ascii("b"), ascii("c")})) ==
        "33b65bb971306050195eda29fe0d1b9df23b9249f6d683608abbda5f92e5a75c"
        "c88c323c10874d568ca338e8f5368534655d74c34b7841fa6db0bdb111a99e38");
  std::vector<Bytes> ramp;
  for (std::uint8_t i = 0; i < 7; ++i) ramp.push_back(Bytes(i + 1, i));
  CHECK(hex_encode(merkle_root(ramp)) ==
        "df455d668afb4908ccadd5c15d92e4a98d0f40c5ca764f4f6aed6d5d8c66480e"
        "a247f66c76086f9e1ad2731162e23f7a0123cfbcdd5376b6482d0613df71a1c1");
  std::vector<Bytes> txns;
  for (int i = 0; i < 12; ++i) txns.push_back(ascii("txn-" + std::to_string(i)));
  CHECK(hex_encode(merkle_root(txns)) ==
        "4aa570fe680760b95b6dd7c2722fc42c2dc9e78bd3a1c8996d7202fc52ddbdfd"
        "088c4d377e4b286fa0958bc0a64d8843255e04d8186c6ec262d0ed7dd79d0064");
}

TEST_CASE("merkle proofs verify and reject corruption") {
  for (std::size_t count : {1u, 2u, 3u, 5u, 8u, 13u}) {
    std::vector<Bytes> leaves;
    for (std::size_t i = 0; i < count; ++i)
      leaves.push_back(ascii("leaf-" + std::to_string(i)));
    const Digest root = merkle_root(leaves);
    for (std::size_t i = 0; i < count; ++i) {
      const MerkleProof proof = merkle_prove(leaves, i);
      CHECK(proof.leaf_count == count);
      CHECK(merkle_verify(root, leaves[i], proof));

      // Wrong leaf content.
      Bytes wrong = leaves[i];
      wrong.push_back(0x42);
      CHECK_FALSE(merkle_verify(root, wrong, proof));

      // Wrong position.
      if (count > 1) {
        MerkleProof moved = proof;
        moved.leaf_index = (proof.leaf_index + 1) % count;
        CHECK_FALSE(merkle_verify(root, leaves[i], moved));
      }

      // Flipped sibling.
      if (!proof.siblings.empty()) {
        MerkleProof flipped = proof;
        flipped.siblings[0][0] ^= 0x01;
        CHECK_FALSE(merkle_verify(root, leaves[i], flipped));
      }

      // Wrong root.
      Digest other = root;
      other[63] ^= 0xff;
      CHECK_FALSE(merkle_verify(other, leaves[i], proof));
    }
  }
}

TEST_CASE("hex codec round trips") {
  const Bytes b = {0x00, 0x01, 0xab, 0xff, 0x10};
  CHECK(hex_encode(b) == "0001abff10");
  CHECK(hex_decode("0001abff10") == b);
  CHECK(!hex_decode("0g").has_value());
  CHECK(!hex_decode("abc").has_value());
}
