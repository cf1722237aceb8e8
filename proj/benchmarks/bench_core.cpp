// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <cstdint>
#include <string>
#include <vector>

#include "pftlog/crypto.hpp"
#include "pftlog/ledger.hpp"
#include "pftlog/messages.hpp"
#include "pftlog/replica.hpp"
#include "pftlog/sim.hpp"

namespace {

using namespace pftlog;

Bytes pattern_bytes(std::size_t len) {
  Bytes b(len);
  for (std::size_t i = 0; i < len; ++i) b[i] = static_cast<std::uint8_t>(i * 131 + 7);
  return b;
}

void BM_Sha512(benchmark::State& state) {
  const Bytes data = pattern_bytes(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(sha512(data));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_Sha512)->Arg(64)->Arg(1024)->Arg(65536);

void BM_Ed25519Sign(benchmark::State& state) {
  const auto& scheme = ed25519_scheme();
  const KeyPair kp = keypair_for_replica(scheme, 1, 0);
  const Bytes msg = pattern_bytes(136);  // vote message size class
  for (auto _ : state) benchmark::DoNotOptimize(scheme.sign(kp.sk, msg));
}
BENCHMARK(BM_Ed25519Sign);

void BM_Ed25519Verify(benchmark::State& state) {
  const auto& scheme = ed25519_scheme();
  const KeyPair kp = keypair_for_replica(scheme, 1, 0);
  const Bytes msg = pattern_bytes(136);
  const Signature sig = scheme.sign(kp.sk, msg);
  for (auto _ : state) benchmark::DoNotOptimize(scheme.verify(kp.pk, msg, sig));
}
BENCHMARK(BM_Ed25519Verify);

void BM_MerkleRoot(benchmark::State& state) {
  std::vector<Bytes> leaves;
  for (std::int64_t i = 0; i < state.range(0); ++i)
    leaves.push_back(pattern_bytes(64 + static_cast<std::size_t>(i % 32)));
  for (auto _ : state) benchmark::DoNotOptimize(merkle_root(leaves));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_MerkleRoot)->Arg(16)->Arg(256)->Arg(4096);

Batch sample_batch(std::int64_t txns) {
  Batch b;
  b.view = 3;
  b.seq = 41;
  b.parent = sha512("parent");
  b.commit_index_anc = 39;
  for (std::int64_t i = 0; i < txns; ++i)
    b.payload.push_back(pattern_bytes(96 + static_cast<std::size_t>(i % 64)));
  return b;
}

void BM_BatchEncode(benchmark::State& state) {
  const Batch b = sample_batch(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(encode_batch(b));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_BatchEncode)->Arg(16)->Arg(256);

void BM_BatchDecode(benchmark::State& state) {
  const Bytes wire = encode_batch(sample_batch(state.range(0)));
  for (auto _ : state) {
    ByteReader r(wire);
    benchmark::DoNotOptimize(decode_batch(r));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_BatchDecode)->Arg(16)->Arg(256);

void BM_BatchDigest(benchmark::State& state) {
  const Batch b = sample_batch(256);
  for (auto _ : state) benchmark::DoNotOptimize(batch_digest(b));
}
BENCHMARK(BM_BatchDigest);

// Whole-cluster throughput in the deterministic harness: one quiet run,
// mock signatures, measured in applied transactions per second.
void BM_SimulatedCluster(benchmark::State& state) {
  ScenarioConfig cfg;
  cfg.name = "bench";
  cfg.params.platform_sizes.assign(static_cast<std::size_t>(state.range(0)), 1);
  cfg.params.pi_safe = 1;
  cfg.params.c = 1;
  cfg.options.signing_interval = 2;
  cfg.options.timeout_base = 400;
  cfg.seed = 5;
  cfg.delta = 1;
  cfg.delta_max = 1;
  cfg.random_jitter = false;
  cfg.heartbeat = 2;
  cfg.horizon = 400;
  cfg.crypto = "mock";
  cfg.load.client_count = 2;
  cfg.load.txns_per_client = 60;
  cfg.load.start_tick = 1;
  cfg.load.interval = 3;
  cfg.load.retry_interval = 0;
  std::uint64_t committed = 0;
  for (auto _ : state) {
    Simulator sim(cfg);
    Trace t = sim.run();
    committed += t.final_snapshots.at(0).commit_index;
    benchmark::DoNotOptimize(t.events.size());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(committed));
}
BENCHMARK(BM_SimulatedCluster)->Arg(4)->Arg(7)->Unit(benchmark::kMillisecond);

// Branch selection over a full proof set with divergent suffixes.
void BM_SelectBranch(benchmark::State& state) {
  PftParameters params;
  params.platform_sizes = {2, 2, 2, 1};
  params.pi_safe = 1;
  params.c = 2;
  const QuorumProfile profile = validate_config(params);
  const auto& scheme = mock_scheme();

  BatchStore store;
  store.put(genesis_batch());
  std::vector<ViewChangeMsg> proofs;
  for (std::uint32_t r = 0; r < profile.audit_quorum; ++r) {
    ViewChangeMsg vc;
    vc.sender = r;
    vc.view = 4;
    Digest parent = genesis_digest();
    for (SeqNo s = 1; s <= 24; ++s) {
      Batch b;
      b.view = 4;
      b.seq = s;
      b.parent = parent;
      // Divergence in the tail: the last 6 batches differ per sender group.
      b.payload.push_back(pattern_bytes(48 + (s > 18 ? r % 3 : 0)));
      parent = batch_digest(b);
      store.put(b);
      vc.suffix.push_back(std::move(b));
    }
    proofs.push_back(std::move(vc));
  }
  (void)scheme;
  for (auto _ : state)
    benchmark::DoNotOptimize(select_branch(proofs, store, profile, false, true));
}
BENCHMARK(BM_SelectBranch);

}  // namespace

BENCHMARK_MAIN();
