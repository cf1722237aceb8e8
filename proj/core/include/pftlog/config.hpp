// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pftlog {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Failure-model parameters. Platforms are correlated failure domains: a
// compromised platform taints every node hosted on it. Crashes are counted
// per node, independently of platforms.
struct PftParameters {
  std::vector<std::uint32_t> platform_sizes;  // nodes per platform, all > 0
  std::uint32_t pi_safe = 0;  // platforms assumed compromisable without losing safety
  std::uint32_t pi_live = 0;  // platforms assumed compromisable without losing liveness
  std::uint32_t c = 0;        // independent node crashes tolerated
};

// Derived quorum sizes for a validated parameter set.
struct QuorumProfile {
  std::uint32_t n = 0;             // total nodes
  std::uint32_t f_safe = 0;        // max nodes on pi_safe largest platforms
  std::uint32_t f_live = 0;        // max nodes on pi_live largest platforms
  std::uint32_t u = 0;             // f_live + c: nodes that may not respond
  std::uint32_t commit_quorum = 0; // floor(n/2)+1, signatures optional
  std::uint32_t audit_quorum = 0;  // n - u, signed
  std::uint32_t fast_quorum = 0;   // n, signed
  bool fast_path_enabled = false;  // n - u > 2*f_safe
};

// Minimum cluster size: n >= 2*(c + f_live) + f_safe + 1.
std::uint64_t min_nodes(std::uint64_t c, std::uint64_t f_live, std::uint64_t f_safe);

// Sum of the `pi` largest platform sizes. Throws ConfigError if pi exceeds
// the platform count or any platform is empty.
std::uint64_t derive_f(const std::vector<std::uint32_t>& platform_sizes, std::uint32_t pi);

// Validates the parameter set and derives all quorum sizes. Throws
// ConfigError (naming the node deficit) when the cluster is too small.
QuorumProfile validate_config(const PftParameters& params);

// Minimum number of platforms able to satisfy (pi_safe, pi_live):
// pi_safe + 1 when pi_live == 0, else 2*pi_live + pi_safe + 1.
std::uint64_t min_platforms(std::uint32_t pi_safe, std::uint32_t pi_live);

// Smallest deployment for the given fault targets: min_platforms platforms
// carrying 2c+1 nodes each. The result always passes validate_config with
// the same pi_safe/pi_live/c.
std::vector<std::uint32_t> plan_deployment(std::uint32_t c, std::uint32_t pi_safe,
                                           std::uint32_t pi_live);

// Smallest view timeout that keeps the liveness analysis valid: the timer
// must exceed (4s + 5) * delta, where s is the signing interval and delta
// the post-GST delay bound. Returns that exclusive lower bound.
std::uint64_t min_view_timeout(std::uint64_t signing_interval, std::uint64_t delta);

}  // namespace pftlog
