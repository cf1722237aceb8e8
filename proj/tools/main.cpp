// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: capacity planning, deterministic simulation,
// a live replica process, a submitting client, cluster status, and
// offline receipt verification.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure,
// 3 verification or safety-check failure.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pftlog/config.hpp"
#include "pftlog/crypto.hpp"
#include "pftlog/kv.hpp"
#include "pftlog/net.hpp"
#include "pftlog/receipts.hpp"
#include "pftlog/sim.hpp"

namespace {

using json = nlohmann::json;
using namespace pftlog;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << data;
}

std::vector<std::uint32_t> parse_u32_list(const std::string& s) {
  std::vector<std::uint32_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(static_cast<std::uint32_t>(std::stoul(item)));
  }
  return out;
}

std::vector<std::string> parse_str_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

const char* message_tag_name(std::uint8_t tag) {
  switch (tag) {
    case 1: return "append_entry";
    case 2: return "vote";
    case 3: return "view_change";
    case 4: return "new_view";
    case 5: return "sync_request";
    case 6: return "sync_response";
    case 7: return "hello";
    case 8: return "client_request";
    case 9: return "client_reply";
    case 10: return "status_request";
    case 11: return "status_reply";
    default: return "unknown";
  }
}

json profile_json(const QuorumProfile& p) {
  return json{{"n", p.n},
              {"f_safe", p.f_safe},
              {"f_live", p.f_live},
              {"u", p.u},
              {"commit_quorum", p.commit_quorum},
              {"audit_quorum", p.audit_quorum},
              {"fast_quorum", p.fast_quorum},
              {"fast_path_enabled", p.fast_path_enabled}};
}

void print_profile(const PftParameters& params, const QuorumProfile& p) {
  std::printf("platforms        :");
  for (auto s : params.platform_sizes) std::printf(" %u", s);
  std::printf("\n");
  std::printf("pi_safe / pi_live: %u / %u\n", params.pi_safe, params.pi_live);
  std::printf("crash budget     : %u\n", params.c);
  std::printf("nodes            : %u\n", p.n);
  std::printf("f_safe / f_live  : %u / %u\n", p.f_safe, p.f_live);
  std::printf("unresponsive u   : %u\n", p.u);
  std::printf("commit quorum    : %u (unsigned)\n", p.commit_quorum);
  std::printf("audit quorum     : %u (signed)\n", p.audit_quorum);
  std::printf("fast quorum      : %u (signed, %s)\n", p.fast_quorum,
              p.fast_path_enabled ? "enabled" : "disabled");
}

// ---------------------------------------------------------------------------

int cmd_plan(const std::string& platforms, std::uint32_t pi_safe, std::uint32_t pi_live,
             std::uint32_t crash, bool as_json) {
  PftParameters params;
  params.pi_safe = pi_safe;
  params.pi_live = pi_live;
  params.c = crash;
  if (!platforms.empty()) {
    params.platform_sizes = parse_u32_list(platforms);
  } else {
    params.platform_sizes = plan_deployment(crash, pi_safe, pi_live);
  }
  const QuorumProfile p = validate_config(params);
  if (as_json) {
    json j = profile_json(p);
    j["platforms"] = params.platform_sizes;
    j["pi_safe"] = params.pi_safe;
    j["pi_live"] = params.pi_live;
    j["c"] = params.c;
    j["planned"] = platforms.empty();
    std::printf("%s\n", j.dump().c_str());
  } else {
    print_profile(params, p);
  }
  return 0;
}

int cmd_sim(const std::string& preset, const std::string& scenario_file, bool list,
            std::int64_t seed_override, const std::string& trace_out, const std::string& dump_out,
            bool no_run, bool as_json, bool quiet) {
  if (list) {
    for (const auto& [name, cfg] : preset_scenarios()) {
      (void)cfg;
      std::printf("%s\n", name.c_str());
    }
    return 0;
  }
  ScenarioConfig cfg;
  if (!scenario_file.empty()) {
    cfg = scenario_from_json(read_file(scenario_file));
  } else if (!preset.empty()) {
    bool found = false;
    if (preset.rfind("soak-", 0) == 0) {
      cfg = soak_scenario(std::stoull(preset.substr(5)));
      found = true;
    } else if (preset.rfind("liveness-", 0) == 0) {
      cfg = liveness_scenario(std::stoull(preset.substr(9)));
      found = true;
    } else {
      for (const auto& [name, preset_cfg] : preset_scenarios()) {
        if (name == preset) {
          cfg = preset_cfg;
          found = true;
          break;
        }
      }
    }
    if (!found) {
      std::fprintf(stderr, "unknown preset '%s'; --list shows the catalog\n", preset.c_str());
      return 1;
    }
  } else {
    std::fprintf(stderr, "one of --preset or --scenario is required\n");
    return 1;
  }
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  if (!dump_out.empty()) write_file(dump_out, scenario_to_json(cfg));
  if (no_run) return 0;

  Simulator sim(cfg);
  Trace t = sim.run();
  const auto checks = run_standard_checks(t, cfg);
  bool all_ok = true;
  for (const auto& c : checks) all_ok = all_ok && c.ok;

  if (!trace_out.empty()) write_file(trace_out, t.serialize_events());

  if (as_json) {
    for (const auto& c : checks) {
      json j{{"check", c.name}, {"ok", c.ok}};
      if (!c.detail.empty()) j["detail"] = c.detail;
      std::printf("%s\n", j.dump().c_str());
    }
    json sum;
    sum["scenario"] = cfg.name;
    sum["seed"] = cfg.seed;
    sum["ticks"] = t.ticks;
    sum["events"] = t.events.size();
    sum["payload_losses"] = committed_payload_losses(t);
    json nodes = json::array();
    for (const auto& [id, s] : t.final_snapshots)
      nodes.push_back(json{{"id", id},
                           {"view", s.view},
                           {"commit_index", s.commit_index},
                           {"audit_index", s.audit_index},
                           {"tip_seq", s.tip_seq}});
    sum["nodes"] = nodes;
    json census;
    for (const auto& [tag, count] : t.census) census[message_tag_name(tag)] = count;
    sum["census"] = census;
    std::printf("%s\n", sum.dump().c_str());
  } else {
    if (!quiet) {
      std::printf("scenario %s, seed %llu, %llu ticks, %zu events\n", cfg.name.c_str(),
                  static_cast<unsigned long long>(cfg.seed),
                  static_cast<unsigned long long>(t.ticks), t.events.size());
      for (const auto& [id, s] : t.final_snapshots)
        std::printf("node %u: view %llu, commit %llu, audit %llu, tip %llu\n", id,
                    static_cast<unsigned long long>(s.view),
                    static_cast<unsigned long long>(s.commit_index),
                    static_cast<unsigned long long>(s.audit_index),
                    static_cast<unsigned long long>(s.tip_seq));
      for (const auto& [tag, count] : t.census)
        std::printf("sent %-14s %llu\n", message_tag_name(tag),
                    static_cast<unsigned long long>(count));
    }
    for (const auto& c : checks)
      std::printf("check %-24s %s%s%s\n", c.name.c_str(), c.ok ? "ok" : "FAIL",
                  c.detail.empty() ? "" : "  ", c.detail.c_str());
  }
  return all_ok ? 0 : 3;
}

std::atomic<int> g_signal{0};

void on_signal(int sig) { g_signal.store(sig); }

int cmd_run(const std::string& config_file) {
  RunnerConfig cfg = runner_config_from_json(read_file(config_file));
  NetReplica replica(std::move(cfg));
  replica.start();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (g_signal.load() == 0 && replica.running())
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  replica.stop();
  return 0;
}

int cmd_client(const std::string& op, const std::string& key, const std::string& value,
               const std::string& peers, std::uint64_t client_id, std::uint64_t client_seq,
               const std::string& mode, std::uint64_t timeout_ms, const std::string& receipt_out,
               bool as_json) {
  KvTxn txn;
  txn.client_id = client_id;
  txn.client_seq = client_seq;
  txn.key = key;
  if (op == "put") {
    txn.op = KvOp::put;
    txn.value = to_bytes(value);
  } else if (op == "get") {
    txn.op = KvOp::get;
  } else if (op == "del") {
    txn.op = KvOp::del;
  } else {
    std::fprintf(stderr, "operation must be put, get, or del\n");
    return 1;
  }

  ClientRequestMsg req;
  req.client_id = client_id;
  req.client_seq = client_seq;
  req.mode = mode == "audit" ? ReceiptMode::audit : ReceiptMode::commit;
  req.txn = encode_kv_txn(txn);

  NetClient client(parse_str_list(peers), client_id);
  auto reply = client.submit(req, timeout_ms);
  if (!reply) {
    if (as_json)
      std::printf("%s\n", json{{"ok", false}, {"error", "timeout"}}.dump().c_str());
    else
      std::fprintf(stderr, "no confirmation within %llu ms\n",
                   static_cast<unsigned long long>(timeout_ms));
    return 2;
  }
  const char* status = reply->status == ClientReplyStatus::committed   ? "committed"
                       : reply->status == ClientReplyStatus::audited   ? "audited"
                       : reply->status == ClientReplyStatus::rejected  ? "rejected"
                       : reply->status == ClientReplyStatus::value     ? "value"
                                                                       : "redirect";
  if (!receipt_out.empty() && !reply->receipt.empty())
    write_file(receipt_out, std::string(reply->receipt.begin(), reply->receipt.end()));
  if (as_json) {
    json j{{"ok", reply->status != ClientReplyStatus::rejected},
           {"status", status},
           {"view", reply->view},
           {"receipt_bytes", reply->receipt.size()}};
    if (reply->has_value) j["value"] = to_string(reply->value);
    if (!receipt_out.empty() && !reply->receipt.empty()) j["receipt_file"] = receipt_out;
    std::printf("%s\n", j.dump().c_str());
  } else {
    std::printf("%s (view %llu)\n", status, static_cast<unsigned long long>(reply->view));
    if (reply->has_value) std::printf("value: %s\n", to_string(reply->value).c_str());
    if (!receipt_out.empty() && !reply->receipt.empty())
      std::printf("receipt (%zu bytes) -> %s\n", reply->receipt.size(), receipt_out.c_str());
  }
  return reply->status == ClientReplyStatus::rejected ? 3 : 0;
}

int cmd_status(const std::string& peers, std::uint64_t timeout_ms, bool as_json) {
  const auto list = parse_str_list(peers);
  int reachable = 0;
  for (std::size_t i = 0; i < list.size(); ++i) {
    NetClient client({list[i]}, 0xffff0000u + i);
    auto s = client.status(0, timeout_ms);
    if (as_json) {
      json j{{"replica", i}, {"address", list[i]}, {"reachable", s.has_value()}};
      if (s) {
        j["view"] = s->view;
        j["stable"] = s->view_stable;
        j["leader"] = s->leader;
        j["commit_index"] = s->commit_index;
        j["audit_index"] = s->audit_index;
        j["tip_seq"] = s->tip_seq;
      }
      std::printf("%s\n", j.dump().c_str());
    } else if (s) {
      std::printf("replica %zu %-22s view %llu%s commit %llu audit %llu tip %llu\n", i,
                  list[i].c_str(), static_cast<unsigned long long>(s->view),
                  s->leader ? "*" : " ", static_cast<unsigned long long>(s->commit_index),
                  static_cast<unsigned long long>(s->audit_index),
                  static_cast<unsigned long long>(s->tip_seq));
    } else {
      std::printf("replica %zu %-22s unreachable\n", i, list[i].c_str());
    }
    if (s) ++reachable;
  }
  return reachable > 0 ? 0 : 2;
}

int cmd_verify_receipt(const std::string& receipt_file, const std::string& platforms,
                       std::uint32_t pi_safe, std::uint32_t pi_live, std::uint32_t crash,
                       const std::string& crypto, std::uint64_t cluster_seed,
                       const std::string& txn, const std::string& txn_hex, bool as_json) {
  PftParameters params;
  params.platform_sizes = parse_u32_list(platforms);
  params.pi_safe = pi_safe;
  params.pi_live = pi_live;
  params.c = crash;
  const QuorumProfile profile = validate_config(params);
  const SignatureScheme* scheme = scheme_by_name(crypto);
  if (scheme == nullptr) throw std::runtime_error("unknown signature scheme: " + crypto);
  std::vector<PublicKey> keys;
  for (std::uint32_t i = 0; i < profile.n; ++i)
    keys.push_back(keypair_for_replica(*scheme, cluster_seed, i).pk);

  const std::string raw = read_file(receipt_file);
  const Bytes data(raw.begin(), raw.end());
  if (data.empty()) throw std::runtime_error("empty receipt file");

  std::optional<Digest> expect;
  if (!txn.empty()) expect = sha512(txn);
  if (!txn_hex.empty()) {
    auto bytes = hex_decode(txn_hex);
    if (!bytes) throw std::runtime_error("bad --txn-hex");
    expect = sha512(*bytes);
  }

  ReceiptStatus status;
  std::string kind;
  Digest txn_digest{};
  ByteReader r(data);
  if (data[0] == kCommitReceiptTag) {
    const CommitReceipt cr = decode_commit_receipt(r);
    r.expect_done();
    status = verify_commit_receipt(cr, profile, keys, *scheme);
    kind = "commit";
    txn_digest = cr.txn_digest;
  } else if (data[0] == kAuditReceiptTag) {
    const AuditReceipt ar = decode_audit_receipt(r);
    r.expect_done();
    status = verify_audit_receipt(ar, profile, keys, *scheme);
    kind = "audit";
    txn_digest = ar.txn_digest;
  } else {
    throw std::runtime_error("unrecognized receipt tag");
  }
  bool txn_match = true;
  if (expect && *expect != txn_digest) txn_match = false;

  const bool ok = status == ReceiptStatus::ok && txn_match;
  if (as_json) {
    json j{{"ok", ok},
           {"kind", kind},
           {"status", std::string(receipt_status_name(status))},
           {"txn_digest", hex_encode(txn_digest.data(), 16)}};
    if (expect) j["txn_match"] = txn_match;
    std::printf("%s\n", j.dump().c_str());
  } else {
    std::printf("%s receipt: %s%s\n", kind.c_str(), std::string(receipt_status_name(status)).c_str(),
                !txn_match ? " (transaction digest mismatch)" : "");
  }
  return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"replicated append-only log with crash-quorum commits and an embedded audit path"};
  app.require_subcommand(1);

  // plan
  std::string plan_platforms;
  std::uint32_t plan_pi_safe = 0, plan_pi_live = 0, plan_crash = 0;
  bool plan_json = false;
  auto* plan = app.add_subcommand("plan", "derive quorum sizes or a minimal deployment");
  plan->add_option("--platforms", plan_platforms, "comma list of nodes per platform");
  plan->add_option("--pi-safe", plan_pi_safe, "platform compromises tolerated for safety");
  plan->add_option("--pi-live", plan_pi_live, "platform compromises tolerated for liveness");
  plan->add_option("--crash", plan_crash, "independent crash budget");
  plan->add_flag("--json", plan_json, "machine-readable output");

  // sim
  std::string sim_preset, sim_scenario, sim_trace, sim_dump;
  std::int64_t sim_seed = -1;
  bool sim_list = false, sim_json = false, sim_quiet = false, sim_norun = false;
  auto* sim = app.add_subcommand("sim", "run a deterministic fault-injection scenario");
  sim->add_option("--preset", sim_preset, "built-in scenario name (see --list)");
  sim->add_option("--scenario", sim_scenario, "scenario JSON file");
  sim->add_option("--seed", sim_seed, "override the scenario seed");
  sim->add_option("--trace", sim_trace, "write the canonical event trace to a file");
  sim->add_option("--dump", sim_dump, "write the resolved scenario JSON to a file");
  sim->add_flag("--no-run", sim_norun, "with --dump: write the file and exit");
  sim->add_flag("--list", sim_list, "list built-in scenarios");
  sim->add_flag("--json", sim_json, "JSON-lines output");
  sim->add_flag("--quiet", sim_quiet, "checks only");

  // run
  std::string run_config;
  auto* run = app.add_subcommand("run", "serve one replica until interrupted");
  run->add_option("--config", run_config, "runner config JSON file")->required();

  // client
  std::string cl_op, cl_key, cl_value, cl_peers, cl_mode = "commit", cl_receipt;
  std::uint64_t cl_id = 1, cl_seq = 1, cl_timeout = 30000;
  bool cl_json = false;
  auto* client = app.add_subcommand("client", "submit one transaction and wait for its receipt");
  client->add_option("op", cl_op, "put | get | del")->required();
  client->add_option("key", cl_key, "key")->required();
  client->add_option("value", cl_value, "value (put only)");
  client->add_option("--peers", cl_peers, "comma list of replica host:port")->required();
  client->add_option("--client-id", cl_id, "client identity");
  client->add_option("--client-seq", cl_seq, "client sequence number");
  client->add_option("--mode", cl_mode, "confirmation level: commit | audit");
  client->add_option("--timeout-ms", cl_timeout, "overall deadline");
  client->add_option("--receipt-out", cl_receipt, "write the returned receipt to a file");
  client->add_flag("--json", cl_json, "machine-readable output");

  // status
  std::string st_peers;
  std::uint64_t st_timeout = 2000;
  bool st_json = false;
  auto* status = app.add_subcommand("status", "query every replica's indices");
  status->add_option("--peers", st_peers, "comma list of replica host:port")->required();
  status->add_option("--timeout-ms", st_timeout, "per-replica deadline");
  status->add_flag("--json", st_json, "machine-readable output");

  // verify-receipt
  std::string vr_file, vr_platforms, vr_crypto = "ed25519", vr_txn, vr_txn_hex;
  std::uint32_t vr_pi_safe = 0, vr_pi_live = 0, vr_crash = 0;
  std::uint64_t vr_seed = 1;
  bool vr_json = false;
  auto* verify = app.add_subcommand("verify-receipt", "check a receipt against a cluster profile");
  verify->add_option("--receipt", vr_file, "receipt file from the client")->required();
  verify->add_option("--platforms", vr_platforms, "comma list of nodes per platform")->required();
  verify->add_option("--pi-safe", vr_pi_safe, "platform compromises tolerated for safety");
  verify->add_option("--pi-live", vr_pi_live, "platform compromises tolerated for liveness");
  verify->add_option("--crash", vr_crash, "independent crash budget");
  verify->add_option("--crypto", vr_crypto, "signature scheme name");
  verify->add_option("--cluster-seed", vr_seed, "key derivation seed of the cluster");
  verify->add_option("--txn", vr_txn, "expect this transaction body (utf-8)");
  verify->add_option("--txn-hex", vr_txn_hex, "expect this transaction body (hex)");
  verify->add_flag("--json", vr_json, "machine-readable output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (plan->parsed())
      return cmd_plan(plan_platforms, plan_pi_safe, plan_pi_live, plan_crash, plan_json);
    if (sim->parsed())
      return cmd_sim(sim_preset, sim_scenario, sim_list, sim_seed, sim_trace, sim_dump, sim_norun,
                     sim_json, sim_quiet);
    if (run->parsed()) return cmd_run(run_config);
    if (client->parsed())
      return cmd_client(cl_op, cl_key, cl_value, cl_peers, cl_id, cl_seq, cl_mode, cl_timeout,
                        cl_receipt, cl_json);
    if (status->parsed()) return cmd_status(st_peers, st_timeout, st_json);
    if (verify->parsed())
      return cmd_verify_receipt(vr_file, vr_platforms, vr_pi_safe, vr_pi_live, vr_crash, vr_crypto,
                                vr_seed, vr_txn, vr_txn_hex, vr_json);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
