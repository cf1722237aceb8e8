// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "cluster_harness.hpp"

using namespace pftlog;
using harness::ascii;
using harness::Cluster;
using harness::flat_profile;
using harness::is_vote;
using harness::scheme;

namespace {

bool touches(const Cluster::Envelope& env, ReplicaId id) {
  return std::get<0>(env) == id || std::get<1>(env) == id;
}

// Drives a 4-node cluster to three committed batches, crashes the leader,
// and completes the rotation into view 1. Only two timers fire; the third
// request comes from amplification.
struct RotationRun {
  Cluster cl;
  std::vector<Digest> pre;  // chain digests 1..3 before the crash
  NewViewMsg nv;

  RotationRun() : cl(4, 1, 1, make_opts()) {
    for (int i = 1; i <= 3; ++i) {
      cl.submit("pre-" + std::to_string(i));
      cl.pump();
    }
    for (SeqNo s = 1; s <= 3; ++s) pre.push_back(cl.at(0).chain().at(s));
    cl.drop = [](const Cluster::Envelope& env) { return touches(env, 0); };
    cl.fire_timer(1);
    cl.fire_timer(2);
    cl.pump();
    for (const auto& m : cl.sent[1]) {
      if (const auto* p = std::get_if<NewViewMsg>(&m)) nv = *p;
    }
  }

  static ReplicaOptions make_opts() {
    ReplicaOptions o;
    o.signing_interval = 1;
    return o;
  }
};

// A standalone follower preloaded with the pre-crash view-0 chain.
Replica standalone_follower(RotationRun& run, ReplicaId id) {
  Replica r(id, run.cl.profile, RotationRun::make_opts(), scheme(), run.cl.pks,
            run.cl.ks[id].sk);
  r.start();
  for (SeqNo s = 1; s <= 3; ++s) r.on_message(0, AppendEntryMsg{*run.cl.at(1).batch_at(s)});
  return r;
}

Batch mk(ViewId view, SeqNo seq, const Digest& parent, const std::string& salt) {
  Batch b;
  b.view = view;
  b.seq = seq;
  b.parent = parent;
  b.payload = {ascii(salt)};
  return b;
}

AuditQc mk_qc(const Batch& b) {
  AuditQc qc;
  qc.batch_digest = batch_digest(b);
  qc.view = b.view;
  qc.seq = b.seq;
  return qc;
}

ViewChangeMsg mk_proof(ReplicaId sender, std::optional<AuditQc> qc, std::vector<Batch> suffix) {
  ViewChangeMsg m;
  m.sender = sender;
  m.view = 0;
  m.high_audit_qc = std::move(qc);
  m.suffix = std::move(suffix);
  return m;
}

Digest winner_of(const std::vector<ViewChangeMsg>& proofs, const BatchStore& store,
                 const QuorumProfile& profile, bool relaxed, bool fast) {
  // The caller's proof order must never matter.
  std::vector<std::size_t> idx(proofs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::optional<Digest> first;
  do {
    std::vector<ViewChangeMsg> perm;
    for (auto i : idx) perm.push_back(proofs[i]);
    const Digest d = select_branch(perm, store, profile, relaxed, fast);
    if (!first) {
      first = d;
    } else {
      REQUIRE(*first == d);
    }
  } while (std::next_permutation(idx.begin(), idx.end()));
  return *first;
}

}  // namespace

TEST_CASE("leader failure: amplified timeout rotates the view, log survives") {
  RotationRun run;
  Cluster& cl = run.cl;

  // Node 3's timer never fired; two view requests were enough to pull it in.
  bool amplified = false;
  for (const auto& m : cl.sent[3]) {
    if (const auto* vc = std::get_if<ViewChangeMsg>(&m)) {
      amplified = true;
      CHECK(vc->view == 0);
    }
  }
  CHECK(amplified);

  // The successor view opened at the next leader in rotation.
  auto adv1 = cl.collect<ViewAdvancedEffect>(1);
  REQUIRE(adv1.size() == 1);
  CHECK(adv1[0].view == 1);
  CHECK(adv1[0].leader);
  for (ReplicaId id : {ReplicaId(2), ReplicaId(3)}) {
    auto adv = cl.collect<ViewAdvancedEffect>(id);
    REQUIRE(adv.size() == 1);
    CHECK(adv[0].view == 1);
    CHECK(!adv[0].leader);
  }

  // The view-opening batch: flagged, empty, signed, extending the winner.
  const Batch& s = run.nv.stabilizing;
  CHECK(s.view == 1);
  CHECK(s.seq == 4);
  CHECK(s.new_view);
  CHECK(s.payload.empty());
  CHECK(s.is_signed());
  CHECK(s.parent == run.pre[2]);
  REQUIRE(run.nv.proofs.size() == cl.profile.audit_quorum);

  // Committed history is intact on every live node. The vote quorum on the
  // view-opening batch lands at the new leader; followers still sit on the
  // commit index the offer piggybacked and catch up on the next batch.
  for (ReplicaId id : {ReplicaId(1), ReplicaId(2), ReplicaId(3)}) {
    for (SeqNo q = 1; q <= 3; ++q) CHECK(cl.at(id).chain().at(q) == run.pre[q - 1]);
    CHECK(cl.at(id).view() == 1);
  }
  CHECK(cl.at(1).commit_index() == 4);
  CHECK(cl.at(2).commit_index() == 2);
  CHECK(cl.at(3).commit_index() == 2);

  // The new leader stabilized on the quorum for its view start; followers
  // wait for the certificate to reach them on the next embed.
  auto st1 = cl.collect<StabilizedEffect>(1);
  REQUIRE(st1.size() == 1);
  CHECK(st1[0].view == 1);
  CHECK(cl.at(1).view_stable());
  CHECK(!cl.at(2).view_stable());
  CHECK(!cl.at(3).view_stable());

  // Payload service resumes in the new view and spreads stabilization.
  cl.submit("after", 1);
  cl.pump();
  CHECK(cl.at(1).tip_seq() == 5);
  const Batch* b5 = cl.at(1).batch_at(5);
  REQUIRE(b5 != nullptr);
  REQUIRE(b5->payload.size() == 1);
  CHECK(b5->payload[0] == ascii("after"));
  CHECK(cl.at(1).commit_index() == 5);
  CHECK(cl.at(1).audit_index() == 4);
  for (ReplicaId id : {ReplicaId(2), ReplicaId(3)}) {
    CHECK(cl.at(id).view_stable());
    CHECK(cl.at(id).chain().tip() == cl.at(1).chain().tip());
    CHECK(cl.at(id).commit_index() == 4);
  }

  // The crashed node saw none of it.
  CHECK(cl.at(0).view() == 0);
  CHECK(cl.at(0).tip_seq() == 3);
}

TEST_CASE("rejoining replica is healed by the stored view offer and sync") {
  RotationRun run;
  Cluster& cl = run.cl;
  cl.submit("after", 1);
  cl.pump();

  // Node 0 comes back: its own timeout asks for a view that already exists,
  // the leader answers with the stored view offer, sync fills the suffix.
  cl.drop = nullptr;
  cl.absorb(0, cl.at(0).on_revive());
  cl.fire_timer(0);
  cl.pump();
  cl.submit("heal", 1);
  cl.pump();

  CHECK(cl.at(0).view() == 1);
  CHECK(cl.at(0).view_stable());
  CHECK(cl.at(0).tip_seq() == cl.at(1).tip_seq());
  CHECK(cl.at(0).chain().tip() == cl.at(1).chain().tip());
  CHECK(cl.at(0).commit_index() >= 5);

  // And it participates again: the next batch draws its vote.
  const auto votes_before = cl.votes_from(0).size();
  cl.submit("more", 1);
  cl.pump();
  CHECK(cl.votes_from(0).size() > votes_before);
}

TEST_CASE("view requests with bad signatures, chains, or senders never pool") {
  ReplicaOptions opts;
  opts.signing_interval = 1;
  Cluster cl(4, 1, 1, opts);
  cl.submit("x");
  cl.pump();

  // Capture genuine view requests without letting them spread.
  cl.drop = [](const Cluster::Envelope& env) { return true; };
  cl.fire_timer(1);
  cl.fire_timer(2);
  cl.fire_timer(3);
  ViewChangeMsg legit2, legit3;
  for (ReplicaId id : {ReplicaId(2), ReplicaId(3)}) {
    for (const auto& m : cl.sent[id]) {
      if (const auto* vc = std::get_if<ViewChangeMsg>(&m)) {
        (id == 2 ? legit2 : legit3) = *vc;
      }
    }
  }
  REQUIRE(legit2.sender == 2);
  REQUIRE(legit3.sender == 3);
  cl.drop = nullptr;

  // Node 1 already holds its own request; one more honest one would leave
  // the pool at two of three. Every mutant below must be discarded, so no
  // assembly may happen until the genuine third request lands.
  ViewChangeMsg forged = legit2;
  forged.sig[0] ^= 0x01;
  cl.deliver({2, 1, forged});

  ViewChangeMsg tampered = legit2;
  REQUIRE(!tampered.suffix.empty());
  tampered.suffix.back().payload.push_back(ascii("inserted"));
  cl.deliver({2, 1, tampered});

  ViewChangeMsg alien = legit2;
  alien.sender = 9;
  cl.deliver({2, 1, alien});

  cl.deliver({3, 1, legit3});
  CHECK(cl.at(1).view() == 0);
  for (const auto& m : cl.sent[1]) CHECK(!std::holds_alternative<NewViewMsg>(m));

  // The genuine message completes the pool and the view turns over.
  cl.deliver({2, 1, legit2});
  cl.pump();
  CHECK(cl.at(1).view() == 1);
  bool offered = false;
  for (const auto& m : cl.sent[1]) offered = offered || std::holds_alternative<NewViewMsg>(m);
  CHECK(offered);
}

TEST_CASE("view offers are validated before adoption") {
  RotationRun run;
  REQUIRE(run.nv.stabilizing.seq == 4);

  auto untouched = [&](Replica& r) {
    CHECK(r.view() == 0);
    CHECK(r.tip_seq() == 3);
  };

  {
    Replica r = standalone_follower(run, 2);
    NewViewMsg m = run.nv;
    m.proofs.pop_back();
    r.on_message(1, m);
    untouched(r);
  }
  {
    Replica r = standalone_follower(run, 2);
    NewViewMsg m = run.nv;
    m.stabilizing.payload = {ascii("smuggled")};
    m.stabilizing.leader_sig =
        scheme().sign(run.cl.ks[1].sk, batch_sig_message(batch_digest(m.stabilizing)));
    r.on_message(1, m);
    untouched(r);
  }
  {
    Replica r = standalone_follower(run, 2);
    NewViewMsg m = run.nv;
    m.stabilizing.new_view = false;
    m.stabilizing.leader_sig =
        scheme().sign(run.cl.ks[1].sk, batch_sig_message(batch_digest(m.stabilizing)));
    r.on_message(1, m);
    untouched(r);
  }
  {
    Replica r = standalone_follower(run, 2);
    NewViewMsg m = run.nv;
    (*m.stabilizing.leader_sig)[0] ^= 0x01;
    r.on_message(1, m);
    untouched(r);
  }
  {
    Replica r = standalone_follower(run, 2);
    NewViewMsg m = run.nv;
    m.proofs[1] = m.proofs[0];  // duplicate sender
    r.on_message(1, m);
    untouched(r);
  }
  {
    // A leader-signed offer whose branch is not the one the proofs select.
    Replica r = standalone_follower(run, 2);
    NewViewMsg m = run.nv;
    m.stabilizing.parent = genesis_digest();
    m.stabilizing.seq = 1;
    m.stabilizing.leader_sig =
        scheme().sign(run.cl.ks[1].sk, batch_sig_message(batch_digest(m.stabilizing)));
    r.on_message(1, m);
    untouched(r);
  }
  {
    // A proof re-targeted at a different view, correctly re-signed.
    Replica r = standalone_follower(run, 2);
    NewViewMsg m = run.nv;
    m.proofs[1].view = 5;
    m.proofs[1].sig =
        scheme().sign(run.cl.ks[m.proofs[1].sender].sk, view_change_sig_message(m.proofs[1]));
    r.on_message(1, m);
    untouched(r);
  }

  // The unmodified offer adopts cleanly.
  Replica r = standalone_follower(run, 2);
  r.on_message(1, run.nv);
  CHECK(r.view() == 1);
  CHECK(r.tip_seq() == 4);
  CHECK(r.chain().tip() == batch_digest(run.nv.stabilizing));
}

TEST_CASE("adoption rolls back an uncommitted divergent suffix") {
  RotationRun run;
  Replica r = standalone_follower(run, 2);

  // A private extension the failed leader never got quorum for.
  Batch orphan = mk(0, 4, r.chain().tip(), "orphan");
  orphan.leader_sig = scheme().sign(run.cl.ks[0].sk, batch_sig_message(batch_digest(orphan)));
  r.on_message(0, AppendEntryMsg{orphan});
  REQUIRE(r.tip_seq() == 4);
  REQUIRE(r.chain().tip() == batch_digest(orphan));

  Effects fx = r.on_message(1, run.nv);
  bool rolled = false;
  for (const auto& e : fx) {
    if (const auto* rb = std::get_if<RolledBackEffect>(&e)) {
      rolled = true;
      CHECK(rb->to == 3);
    }
  }
  CHECK(rolled);
  CHECK(r.view() == 1);
  CHECK(r.tip_seq() == 4);
  CHECK(r.chain().tip() == batch_digest(run.nv.stabilizing));
}

TEST_CASE("branch selection: certificate holders outrank longer chains") {
  const QuorumProfile profile = flat_profile(4, 1, 1);
  BatchStore store;
  const Digest g = genesis_digest();

  Batch a1 = mk(0, 1, g, "a1");
  Batch a2 = mk(0, 2, batch_digest(a1), "a2");
  Batch x = mk(1, 3, batch_digest(a2), "x");
  Batch y = mk(1, 4, batch_digest(x), "y");
  for (const auto* b : {&a1, &a2, &x, &y}) store.put(*b);

  std::vector<ViewChangeMsg> proofs = {
      mk_proof(0, mk_qc(x), {}),          // holds the strongest certificate
      mk_proof(1, mk_qc(a2), {x, y}),     // taller, but only an old certificate
      mk_proof(2, mk_qc(a2), {x}),
  };

  // Strict rule: only the certificate holder's own branch survives, even
  // though another proof extends past it.
  CHECK(winner_of(proofs, store, profile, false, false) == batch_digest(x));

  // Relaxed rule: any branch containing the certified batch survives, so
  // the taller descendant wins the tiebreak.
  CHECK(winner_of(proofs, store, profile, true, false) == batch_digest(y));
}

TEST_CASE("branch selection: fast path guards widely replicated batches") {
  const QuorumProfile profile = flat_profile(4, 1, 1);
  REQUIRE(profile.n - profile.u - profile.f_safe == 2);
  BatchStore store;
  const Digest g = genesis_digest();

  Batch m1 = mk(0, 1, g, "m1");
  Batch m2 = mk(0, 2, batch_digest(m1), "m2");
  Batch f1 = mk(0, 1, g, "f1");
  Batch f2 = mk(0, 2, batch_digest(f1), "f2");
  Batch f3 = mk(0, 3, batch_digest(f2), "f3");
  for (const auto* b : {&m1, &m2, &f1, &f2, &f3}) store.put(*b);

  std::vector<ViewChangeMsg> proofs = {
      mk_proof(0, std::nullopt, {m1}),
      mk_proof(1, std::nullopt, {m1, m2}),
      mk_proof(2, std::nullopt, {f1, f2, f3}),
  };

  // With the fast path live, a batch present in n-u-f_safe proofs may hold
  // a certificate nobody in the pool saw; its branch must win.
  CHECK(winner_of(proofs, store, profile, false, true) == batch_digest(m2));

  // Without it, plain height decides and the fork outgrows the pair.
  CHECK(winner_of(proofs, store, profile, false, false) == batch_digest(f3));
}

TEST_CASE("branch selection: view, then height, then digest") {
  const QuorumProfile profile = flat_profile(4, 1, 1);
  BatchStore store;
  const Digest g = genesis_digest();

  Batch t1 = mk(2, 3, g, "t1");
  Batch t2 = mk(1, 9, g, "t2");
  Batch t3 = mk(2, 4, g, "t3");
  for (const auto* b : {&t1, &t2, &t3}) store.put(*b);

  std::vector<ViewChangeMsg> hi_view = {
      mk_proof(0, std::nullopt, {t1}),
      mk_proof(1, std::nullopt, {t2}),
      mk_proof(2, std::nullopt, {t2}),
  };
  CHECK(winner_of(hi_view, store, profile, false, false) == batch_digest(t1));

  std::vector<ViewChangeMsg> hi_seq = {
      mk_proof(0, std::nullopt, {t1}),
      mk_proof(1, std::nullopt, {t3}),
      mk_proof(2, std::nullopt, {t2}),
  };
  CHECK(winner_of(hi_seq, store, profile, false, false) == batch_digest(t3));

  Batch u1 = mk(2, 4, g, "u1");
  Batch u2 = mk(2, 4, g, "u2");
  store.put(u1);
  store.put(u2);
  const Digest d1 = batch_digest(u1);
  const Digest d2 = batch_digest(u2);
  std::vector<ViewChangeMsg> tie = {
      mk_proof(0, std::nullopt, {u1}),
      mk_proof(1, std::nullopt, {u2}),
      mk_proof(2, std::nullopt, {u1}),
  };
  CHECK(winner_of(tie, store, profile, false, false) == std::min(d1, d2));
}

TEST_CASE("stabilization gate holds payloads until the view start is audited") {
  ReplicaOptions opts;
  opts.signing_interval = 1;
  Cluster cl(4, 1, 1, opts);
  cl.submit("pre");
  cl.pump();

  // Crash the leader and rotate, but strand the votes for the view-opening
  // batch so the new view cannot stabilize yet.
  cl.drop = [](const Cluster::Envelope& env) {
    if (touches(env, 0)) return true;
    return is_vote(std::get<2>(env)) && std::get<1>(env) == 1;
  };
  cl.fire_timer(1);
  cl.fire_timer(2);
  cl.pump();
  REQUIRE(cl.at(1).view() == 1);
  REQUIRE(!cl.at(1).view_stable());
  const SeqNo opening = cl.at(1).tip_seq();

  // Payload requests queue; heartbeats re-offer the view instead of
  // proposing on top of an unaudited view start.
  cl.submit("gated", 1);
  cl.pump();
  cl.heartbeat(1);
  cl.pump();
  CHECK(cl.at(1).tip_seq() == opening);
  CHECK(cl.collect<StabilizedEffect>(1).empty());

  // Releasing the stranded votes certifies the view start; the queued
  // payload ships immediately after stabilization.
  auto stranded = cl.dropped;
  cl.drop = [](const Cluster::Envelope& env) { return touches(env, 0); };
  for (const auto& env : stranded) {
    if (is_vote(std::get<2>(env)) && std::get<1>(env) == 1) cl.deliver(env);
  }
  cl.pump();
  REQUIRE(cl.collect<StabilizedEffect>(1).size() == 1);
  CHECK(cl.at(1).view_stable());
  CHECK(cl.at(1).tip_seq() == opening + 1);
  const Batch* pb = cl.at(1).batch_at(opening + 1);
  REQUIRE(pb != nullptr);
  REQUIRE(!pb->payload.empty());
  CHECK(pb->payload[0] == ascii("gated"));
}

TEST_CASE("disabling stabilization exposes payloads on an unaudited view start") {
  ReplicaOptions opts;
  opts.signing_interval = 1;
  opts.stabilization_enabled = false;
  Cluster cl(4, 1, 1, opts);
  cl.submit("pre");
  cl.pump();

  cl.drop = [](const Cluster::Envelope& env) {
    if (touches(env, 0)) return true;
    return is_vote(std::get<2>(env)) && std::get<1>(env) == 1;
  };
  cl.fire_timer(1);
  cl.fire_timer(2);
  cl.pump();
  REQUIRE(cl.at(1).view() == 1);
  CHECK(cl.at(1).view_stable());  // stable by fiat, not by certificate
  const SeqNo opening = cl.at(1).tip_seq();

  cl.submit("rushed", 1);
  cl.pump();
  CHECK(cl.at(1).tip_seq() == opening + 1);
  CHECK(cl.at(1).commit_index() < opening);
}

TEST_CASE("emitted view requests carry a verifiable branch snapshot") {
  RotationRun run;
  ViewChangeMsg m;
  bool found = false;
  for (const auto& msg : run.cl.sent[2]) {
    if (const auto* vc = std::get_if<ViewChangeMsg>(&msg)) {
      m = *vc;
      found = true;
    }
  }
  REQUIRE(found);
  CHECK(m.sender == 2);
  CHECK(m.view == 0);
  CHECK(scheme().verify(run.cl.pks[2], view_change_sig_message(m), m.sig));

  // Suffix sits directly above the carried certificate and chains to the
  // sender's tip at the time of the request.
  SeqNo expect = m.high_audit_qc ? m.high_audit_qc->seq + 1 : 1;
  Digest parent = m.high_audit_qc ? m.high_audit_qc->batch_digest : genesis_digest();
  for (const auto& b : m.suffix) {
    CHECK(b.seq == expect);
    CHECK(b.parent == parent);
    parent = batch_digest(b);
    expect = b.seq + 1;
  }
  REQUIRE(!m.suffix.empty());
  CHECK(batch_digest(m.suffix.back()) == run.pre[2]);
}
