// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdint>
#include <string>
#include <vector>

#include <pftlog/receipts.hpp>

#include "cluster_harness.hpp"

using namespace pftlog;
using harness::ascii;
using harness::Cluster;
using harness::flat_profile;
using harness::is_vote;
using harness::scheme;

TEST_CASE("steady state: commits at majority, audits ride the signing cadence") {
  ReplicaOptions opts;
  opts.signing_interval = 2;
  Cluster cl(4, 1, 1, opts);
  REQUIRE(cl.profile.commit_quorum == 3);
  REQUIRE(cl.profile.audit_quorum == 3);
  REQUIRE(cl.at(0).fast_path_enabled());

  for (int i = 1; i <= 6; ++i) {
    cl.submit("txn-" + std::to_string(i));
    cl.pump();
  }
  cl.heartbeat(0);
  cl.pump();
  cl.heartbeat(0);
  cl.pump();

  // Batches at multiples of the interval carry a leader signature.
  for (SeqNo s = 1; s <= 8; ++s) {
    const Batch* b = cl.at(0).batch_at(s);
    REQUIRE(b != nullptr);
    CHECK(b->is_signed() == (s % 2 == 0));
  }

  // Everyone converges on one chain; the leader leads confirmation by at
  // most the piggyback round that has not been proposed yet.
  CHECK(cl.at(0).tip_seq() == 8);
  CHECK(cl.at(0).commit_index() == 8);
  CHECK(cl.at(0).audit_index() == 8);
  for (ReplicaId id = 1; id < 4; ++id) {
    CHECK(cl.at(id).tip_seq() == 8);
    CHECK(cl.at(id).chain().tip() == cl.at(0).chain().tip());
    CHECK(cl.at(id).commit_index() == 7);
    CHECK(cl.at(id).audit_index() == 6);
    CHECK(cl.at(id).view() == 0);
  }

  // Full vote turnout upgrades every signed batch to the all-signer
  // certificate, so audits land fast-path at leader and followers alike.
  // The leader audits straight off its vote tally; followers only learn a
  // certificate once a later batch carries it, so batch 8's never reaches
  // them.
  for (ReplicaId id = 0; id < 4; ++id) {
    auto audits = cl.collect<AuditedEffect>(id);
    const std::size_t want = (id == 0) ? 4 : 3;
    REQUIRE(audits.size() == want);
    for (std::size_t i = 0; i < want; ++i) {
      CHECK(audits[i].upto == 2 * (i + 1));
      CHECK(audits[i].fast);
    }
  }
  auto qcs = cl.collect<AuditQcEffect>(0);
  REQUIRE(qcs.size() == 8);  // threshold certificate, then the all-signer upgrade
  for (const auto& q : qcs) CHECK(q.trigger_seq == q.qc.seq);
  REQUIRE(cl.at(0).high_audit_qc().has_value());
  CHECK(cl.at(0).high_audit_qc()->seq == 8);
  CHECK(cl.at(0).high_audit_qc()->fast);

  // Every commit certificate closed at exactly the majority threshold.
  auto cqcs = cl.collect<CommitQcEffect>(0);
  REQUIRE(cqcs.size() == 8);
  for (const auto& q : cqcs) CHECK(q.votes == 3);

  // Votes carry signatures exactly when the batch is signed.
  for (const auto& v : cl.votes_from(1)) {
    const bool batch_signed = (v.seq % 2 == 0);
    CHECK(v.sigs.has_value() == batch_signed);
    if (v.sigs) {
      REQUIRE(!v.sigs->empty());
      CHECK(v.sigs->back().first == v.seq);
    }
  }

  // The submitting client got a commit-mode reply carrying a receipt that
  // verifies against the cluster keys.
  bool found_reply = false;
  for (const auto& [cid, msg] : cl.client_out) {
    const auto* r = std::get_if<ClientReplyMsg>(&msg);
    if (r == nullptr || r->status != ClientReplyStatus::committed) continue;
    found_reply = true;
    REQUIRE(!r->receipt.empty());
    ByteReader rd(r->receipt);
    const CommitReceipt dec = decode_commit_receipt(rd);
    CHECK(verify_commit_receipt(dec, cl.profile, cl.pks, scheme()) == ReceiptStatus::ok);
  }
  CHECK(found_reply);
}

TEST_CASE("commit needs the full majority; late votes complete it") {
  ReplicaOptions opts;
  Cluster cl(4, 1, 1, opts);
  cl.drop = [](const Cluster::Envelope& env) {
    const auto& [from, to, msg] = env;
    return is_vote(msg) && (from == 2 || from == 3);
  };

  cl.submit("solo");
  cl.pump();
  CHECK(cl.at(0).tip_seq() == 1);
  CHECK(cl.at(0).commit_index() == 0);
  CHECK(cl.collect<CommitQcEffect>(0).empty());
  CHECK(cl.committed_seqs(0).empty());

  // One withheld vote is enough: quorum completes, nothing over-counts.
  REQUIRE(!cl.dropped.empty());
  cl.drop = nullptr;
  cl.deliver(cl.dropped.front());
  CHECK(cl.at(0).commit_index() == 1);
  auto cqcs = cl.collect<CommitQcEffect>(0);
  REQUIRE(cqcs.size() == 1);
  CHECK(cqcs[0].votes == 3);
}

TEST_CASE("audit needs the embedded quorum and a certified carrier batch") {
  ReplicaOptions opts;
  opts.signing_interval = 1;
  Cluster cl(5, 2, 1, opts);
  REQUIRE(cl.profile.commit_quorum == 3);
  REQUIRE(cl.profile.audit_quorum == 4);
  REQUIRE(!cl.at(0).fast_path_enabled());

  cl.drop = [](const Cluster::Envelope& env) {
    const auto& [from, to, msg] = env;
    return is_vote(msg) && (from == 3 || from == 4);
  };
  cl.submit("a");
  cl.pump();
  cl.submit("b");
  cl.pump();

  // Three signers fall one short of the audit quorum: commits only.
  CHECK(cl.at(0).commit_index() == 2);
  CHECK(cl.at(0).audit_index() == 0);
  CHECK(!cl.at(0).high_audit_qc().has_value());
  CHECK(cl.collect<AuditQcEffect>(0).empty());
  CHECK(cl.collect<AuditedEffect>(0).empty());

  // The fourth signer's chained vote closes certificates for its whole
  // uncovered range at once, but the audit index holds: no batch below the
  // certificates embeds a same-view certificate yet.
  cl.drop = nullptr;
  for (const auto& env : cl.dropped) {
    if (std::get<0>(env) == 3 && std::get_if<VoteMsg>(&std::get<2>(env))->seq == 2) {
      cl.deliver(env);
      break;
    }
  }
  auto qcs = cl.collect<AuditQcEffect>(0);
  REQUIRE(qcs.size() == 2);
  CHECK(qcs[0].qc.seq == 1);
  CHECK(qcs[1].qc.seq == 2);
  CHECK(qcs[0].trigger_seq == 2);
  CHECK(qcs[1].trigger_seq == 2);
  CHECK(!qcs[1].qc.fast);
  CHECK(cl.at(0).audit_index() == 0);
  REQUIRE(cl.at(0).high_audit_qc().has_value());
  CHECK(cl.at(0).high_audit_qc()->seq == 2);

  // The next batch embeds that certificate; certifying the carrier is what
  // finally moves the audit index, to the embedded certificate's height.
  cl.submit("c");
  cl.pump();
  const Batch* b3 = cl.at(0).batch_at(3);
  REQUIRE(b3 != nullptr);
  REQUIRE(b3->audit_qc_anc.has_value());
  CHECK(b3->audit_qc_anc->seq == 2);
  CHECK(cl.at(0).audit_index() == 2);
  auto audits = cl.collect<AuditedEffect>(0);
  REQUIRE(audits.size() == 1);
  CHECK(audits[0].upto == 2);
  CHECK(!audits[0].fast);
}

TEST_CASE("proposer throttle: audits stall, proposals stop, late audits release") {
  ReplicaOptions opts;
  opts.signing_interval = 1;
  opts.lag_window = 3;
  Cluster cl(5, 2, 1, opts);

  // Healthy phase: audits trail the tip by the embed round trip.
  for (int i = 1; i <= 3; ++i) {
    cl.submit("w" + std::to_string(i));
    cl.pump();
  }
  CHECK(cl.at(0).tip_seq() == 3);
  CHECK(cl.at(0).commit_index() == 3);
  CHECK(cl.at(0).audit_index() == 2);

  // Two silent signers: commits keep flowing, audits freeze, and the
  // proposer refuses to open the gap past the window.
  cl.drop = [](const Cluster::Envelope& env) {
    const auto& [from, to, msg] = env;
    return is_vote(msg) && (from == 3 || from == 4);
  };
  cl.submit("w4");
  cl.pump();
  cl.submit("w5");
  cl.pump();
  CHECK(cl.at(0).tip_seq() == 5);
  CHECK(cl.at(0).commit_index() == 5);
  CHECK(cl.at(0).audit_index() == 2);

  cl.submit("w6");
  cl.pump();
  CHECK(cl.at(0).tip_seq() == 5);  // not proposed
  auto throttles = cl.collect<ThrottledEffect>(0);
  REQUIRE(!throttles.empty());
  CHECK(throttles.back().tip == 5);
  CHECK(throttles.back().audit_index == 2);

  // The silent signer catches up with one chained vote; certificates close
  // for the stalled range, the audit index moves, proposals resume and the
  // queued transaction ships.
  cl.drop = nullptr;
  std::vector<Cluster::Envelope> replay = cl.dropped;
  for (const auto& env : replay) {
    if (std::get<0>(env) == 3) cl.deliver(env);
  }
  CHECK(cl.at(0).audit_index() >= 3);
  cl.heartbeat(0);
  cl.pump();
  CHECK(cl.at(0).tip_seq() == 6);
  CHECK(cl.at(0).commit_index() == 6);
  CHECK(cl.at(0).audit_index() == 5);
  const Batch* b6 = cl.at(0).batch_at(6);
  REQUIRE(b6 != nullptr);
  REQUIRE(!b6->payload.empty());
  CHECK(b6->payload[0] == ascii("w6"));
}

TEST_CASE("invalid votes leave the quorum untouched") {
  ReplicaOptions opts;
  opts.signing_interval = 1;
  Cluster cl(4, 1, 1, opts);
  cl.drop = [](const Cluster::Envelope& env) {
    const auto& [from, to, msg] = env;
    return is_vote(msg) && (from == 2 || from == 3);
  };
  cl.submit("target");
  cl.pump();
  CHECK(cl.at(0).commit_index() == 0);  // leader + one voter

  REQUIRE(cl.dropped.size() == 2);
  VoteMsg real2 = *std::get_if<VoteMsg>(&std::get<2>(cl.dropped[0]));
  VoteMsg real3 = *std::get_if<VoteMsg>(&std::get<2>(cl.dropped[1]));
  REQUIRE(real2.voter == 2);
  cl.drop = nullptr;

  // Replayed duplicate of an already-counted voter.
  VoteMsg dup = cl.votes_from(1)[0];
  cl.deliver({1, 0, dup});
  cl.deliver({1, 0, dup});
  CHECK(cl.at(0).commit_index() == 0);

  // Forged chain signature: the whole vote is rejected.
  VoteMsg forged = real2;
  REQUIRE(forged.sigs.has_value());
  (*forged.sigs)[0].second[0] ^= 0x01;
  cl.deliver({2, 0, forged});
  CHECK(cl.at(0).commit_index() == 0);

  // Voter id outside the cluster.
  VoteMsg alien = real2;
  alien.voter = 7;
  cl.deliver({2, 0, alien});
  CHECK(cl.at(0).commit_index() == 0);

  // Digest pointing at a batch the leader does not have.
  VoteMsg wrong = real2;
  wrong.batch_digest[0] ^= 0xff;
  cl.deliver({2, 0, wrong});
  CHECK(cl.at(0).commit_index() == 0);

  // Signed batch voted without signatures: parity mismatch.
  VoteMsg bare = real2;
  bare.sigs.reset();
  cl.deliver({2, 0, bare});
  CHECK(cl.at(0).commit_index() == 0);
  CHECK(cl.collect<CommitQcEffect>(0).empty());

  // The genuine votes work where all the mutants failed.
  cl.deliver({2, 0, real2});
  CHECK(cl.at(0).commit_index() == 1);
  CHECK(cl.at(0).audit_index() == 0);  // carrier not certified yet
  auto qcs = cl.collect<AuditQcEffect>(0);
  REQUIRE(qcs.size() == 1);
  CHECK(!qcs[0].qc.fast);
  cl.deliver({3, 0, real3});
  qcs = cl.collect<AuditQcEffect>(0);
  REQUIRE(qcs.size() == 2);
  CHECK(qcs[1].qc.fast);  // all four signers upgrade the certificate
}

TEST_CASE("malformed batches are rejected before voting") {
  ReplicaOptions opts;
  opts.signing_interval = 1;
  Cluster cl(4, 1, 1, opts);

  // Commit piggyback claiming more than the batch itself covers.
  Batch bogus;
  bogus.view = 0;
  bogus.seq = 1;
  bogus.parent = cl.at(1).chain().tip();
  bogus.commit_index_anc = 6;
  bogus.payload = {ascii("x")};
  bogus.leader_sig = scheme().sign(cl.ks[0].sk, batch_sig_message(batch_digest(bogus)));
  cl.absorb(1, cl.at(1).on_message(0, AppendEntryMsg{bogus}));
  CHECK(cl.at(1).tip_seq() == 0);
  CHECK(cl.at(1).commit_index() == 0);
  CHECK(cl.votes_from(1).empty());

  // A proper proposal lands and draws a vote.
  cl.submit("real");
  cl.pump();
  CHECK(cl.at(1).tip_seq() == 1);
  REQUIRE(cl.votes_from(1).size() == 1);
  const Digest first = cl.at(1).chain().tip();

  // An equivocating twin at the same height is ignored: one vote per slot.
  Batch twin = *cl.at(0).batch_at(1);
  twin.payload = {ascii("evil")};
  twin.leader_sig = scheme().sign(cl.ks[0].sk, batch_sig_message(batch_digest(twin)));
  cl.absorb(1, cl.at(1).on_message(0, AppendEntryMsg{twin}));
  CHECK(cl.at(1).tip_seq() == 1);
  CHECK(cl.at(1).chain().tip() == first);
  CHECK(cl.votes_from(1).size() == 1);
}

TEST_CASE("a pending view request freezes voting and proposing") {
  ReplicaOptions opts;
  Cluster cl(4, 1, 1, opts);
  cl.submit("one");
  cl.pump();
  REQUIRE(cl.at(1).tip_seq() == 1);
  REQUIRE(cl.votes_from(1).size() == 1);

  // Stale timer generations do nothing.
  cl.absorb(1, cl.at(1).on_timer(cl.timer_gen[1] + 17));
  CHECK(cl.votes_from(1).size() == 1);

  // Node 1 times out and asks for the next view; do not let the request
  // spread, then show the node no longer votes on current-view batches even
  // though it still appends them.
  cl.drop = [](const Cluster::Envelope& env) {
    return std::holds_alternative<ViewChangeMsg>(std::get<2>(env));
  };
  cl.fire_timer(1);
  cl.pump();
  bool asked = false;
  for (const auto& m : cl.sent[1]) {
    if (const auto* vc = std::get_if<ViewChangeMsg>(&m)) {
      asked = true;
      CHECK(vc->view == 0);  // abandoning view 0, requesting view 1
    }
  }
  REQUIRE(asked);

  cl.submit("two");
  cl.pump();
  CHECK(cl.at(1).tip_seq() == 2);              // chain still follows the leader
  CHECK(cl.votes_from(1).size() == 1);         // but no new vote
  CHECK(cl.at(0).commit_index() == 2);         // others still carry the quorum

  // Same freeze on the proposer side: once the leader itself asks for a new
  // view it stops extending the one under suspicion.
  cl.fire_timer(0);
  cl.pump();
  const auto before = cl.proposal_count(0);
  cl.submit("three");
  cl.pump();
  cl.heartbeat(0);
  cl.pump();
  CHECK(cl.proposal_count(0) == before);
  CHECK(cl.at(0).tip_seq() == 2);
}

TEST_CASE("restore rebuilds a follower exactly from its durable records") {
  ReplicaOptions opts;
  opts.signing_interval = 2;
  Cluster cl(4, 1, 1, opts);
  for (int i = 1; i <= 6; ++i) {
    cl.submit("r" + std::to_string(i));
    cl.pump();
  }
  cl.heartbeat(0);
  cl.pump();
  cl.heartbeat(0);
  cl.pump();

  Replica& orig = cl.at(1);
  Replica fresh(1, cl.profile, opts, scheme(), cl.pks, cl.ks[1].sk);
  fresh.restore_view(0, true);
  for (SeqNo s = 1; s <= orig.tip_seq(); ++s) {
    const Batch* b = orig.batch_at(s);
    REQUIRE(b != nullptr);
    fresh.restore_batch(*b);
    fresh.restore_vote(b->view, s, batch_digest(*b));
  }
  Effects fin = fresh.finish_restore();
  bool armed = false;
  for (const auto& e : fin) armed = armed || std::holds_alternative<ArmTimerEffect>(e);
  CHECK(armed);

  CHECK(fresh.view() == orig.view());
  CHECK(fresh.view_stable() == orig.view_stable());
  CHECK(fresh.tip_seq() == orig.tip_seq());
  CHECK(fresh.chain().tip() == orig.chain().tip());
  CHECK(fresh.commit_index() == orig.commit_index());
  CHECK(fresh.audit_index() == orig.audit_index());

  // Restored vote records stop double voting on old heights but leave the
  // node live for new ones.
  Effects fx = fresh.on_message(0, AppendEntryMsg{*orig.batch_at(orig.tip_seq())});
  for (const auto& e : fx) CHECK(!std::holds_alternative<SendEffect>(e));

  cl.submit("r7");
  cl.pump();
  const Batch* b9 = cl.at(0).batch_at(9);
  REQUIRE(b9 != nullptr);
  Effects fx9 = fresh.on_message(0, AppendEntryMsg{*b9});
  bool voted9 = false;
  for (const auto& e : fx9) {
    if (const auto* s = std::get_if<SendEffect>(&e)) {
      const auto* v = std::get_if<VoteMsg>(&s->msg);
      if (v != nullptr && v->seq == 9) voted9 = true;
    }
  }
  CHECK(voted9);
}
