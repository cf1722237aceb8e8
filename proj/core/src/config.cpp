// SPDX-License-Identifier: Apache-2.0
#include "pftlog/config.hpp"

#include <algorithm>
#include <numeric>

namespace pftlog {

std::uint64_t min_nodes(std::uint64_t c, std::uint64_t f_live, std::uint64_t f_safe) {
  return 2 * (c + f_live) + f_safe + 1;
}

std::uint64_t derive_f(const std::vector<std::uint32_t>& platform_sizes, std::uint32_t pi) {
  if (pi > platform_sizes.size()) {
    throw ConfigError("derive_f: pi=" + std::to_string(pi) + " exceeds platform count " +
                      std::to_string(platform_sizes.size()));
  }
  for (auto s : platform_sizes) {
    if (s == 0) throw ConfigError("derive_f: empty platform");
  }
  std::vector<std::uint32_t> sorted(platform_sizes);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  std::uint64_t sum = 0;
  for (std::uint32_t i = 0; i < pi; ++i) sum += sorted[i];
  return sum;
}

QuorumProfile validate_config(const PftParameters& params) {
  if (params.platform_sizes.empty()) {
    throw ConfigError("validate_config: no platforms");
  }
  std::uint64_t n = 0;
  for (auto s : params.platform_sizes) {
    if (s == 0) throw ConfigError("validate_config: empty platform");
    n += s;
  }
  const std::uint64_t f_safe = derive_f(params.platform_sizes, params.pi_safe);
  const std::uint64_t f_live = derive_f(params.platform_sizes, params.pi_live);
  const std::uint64_t u = f_live + params.c;
  const std::uint64_t need = min_nodes(params.c, f_live, f_safe);
  if (n < need) {
    throw ConfigError("validate_config: rejected, " + std::to_string(n) + " nodes but " +
                      std::to_string(need) + " required (deficit " + std::to_string(need - n) +
                      ")");
  }

  QuorumProfile p;
  p.n = static_cast<std::uint32_t>(n);
  p.f_safe = static_cast<std::uint32_t>(f_safe);
  p.f_live = static_cast<std::uint32_t>(f_live);
  p.u = static_cast<std::uint32_t>(u);
  p.commit_quorum = static_cast<std::uint32_t>(n / 2 + 1);
  p.audit_quorum = static_cast<std::uint32_t>(n - u);
  p.fast_quorum = static_cast<std::uint32_t>(n);
  p.fast_path_enabled = (n - u) > 2 * f_safe;
  return p;
}

std::uint64_t min_platforms(std::uint32_t pi_safe, std::uint32_t pi_live) {
  if (pi_live == 0) return static_cast<std::uint64_t>(pi_safe) + 1;
  return 2ull * pi_live + pi_safe + 1;
}

std::vector<std::uint32_t> plan_deployment(std::uint32_t c, std::uint32_t pi_safe,
                                           std::uint32_t pi_live) {
  const std::uint64_t platforms = min_platforms(pi_safe, pi_live);
  const std::uint32_t per_platform = 2 * c + 1;
  return std::vector<std::uint32_t>(platforms, per_platform);
}

std::uint64_t min_view_timeout(std::uint64_t signing_interval, std::uint64_t delta) {
  return (4 * signing_interval + 5) * delta;
}

}  // namespace pftlog
