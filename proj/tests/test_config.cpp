// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include <pftlog/config.hpp>

using namespace pftlog;

namespace {

PftParameters params(std::vector<std::uint32_t> sizes, std::uint32_t pi_safe,
                     std::uint32_t pi_live, std::uint32_t c) {
  PftParameters p;
  p.platform_sizes = std::move(sizes);
  p.pi_safe = pi_safe;
  p.pi_live = pi_live;
  p.c = c;
  return p;
}

// Enumerates all k-subsets of {0..n-1} and calls fn on each.
template <typename Fn>
void for_each_subset(std::uint32_t n, std::uint32_t k, Fn fn) {
  std::vector<std::uint32_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    fn(idx);
    std::int64_t i = static_cast<std::int64_t>(k) - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (std::size_t j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

}  // namespace

TEST_CASE("quorum profiles for reference clusters") {
  SUBCASE("four singleton platforms, one crash, one platform loss") {
    const QuorumProfile q = validate_config(params({1, 1, 1, 1}, 1, 0, 1));
    CHECK(q.n == 4);
    CHECK(q.f_safe == 1);
    CHECK(q.f_live == 0);
    CHECK(q.u == 1);
    CHECK(q.commit_quorum == 3);
    CHECK(q.audit_quorum == 3);
    CHECK(q.fast_quorum == 4);
    CHECK(q.fast_path_enabled);  // 3 > 2
  }
  SUBCASE("seven nodes over four platforms, two crashes") {
    const QuorumProfile q = validate_config(params({2, 2, 2, 1}, 1, 0, 2));
    CHECK(q.n == 7);
    CHECK(q.f_safe == 2);
    CHECK(q.u == 2);
    CHECK(q.commit_quorum == 4);
    CHECK(q.audit_quorum == 5);
    CHECK(q.fast_path_enabled);  // 5 > 4
  }
  SUBCASE("nine nodes over five platforms, three crashes") {
    const QuorumProfile q = validate_config(params({2, 2, 2, 2, 1}, 1, 0, 3));
    CHECK(q.n == 9);
    CHECK(q.f_safe == 2);
    CHECK(q.u == 3);
    CHECK(q.commit_quorum == 5);
    CHECK(q.audit_quorum == 6);
    CHECK(q.fast_path_enabled);  // 6 > 4
  }
  SUBCASE("five singletons with two platform losses disable the fast path") {
    const QuorumProfile q = validate_config(params({1, 1, 1, 1, 1}, 2, 0, 1));
    CHECK(q.n == 5);
    CHECK(q.f_safe == 2);
    CHECK(q.u == 1);
    CHECK(q.commit_quorum == 3);
    CHECK(q.audit_quorum == 4);
    CHECK_FALSE(q.fast_path_enabled);  // 4 is not above 4
  }
}

TEST_CASE("minimum cluster size bound") {
  CHECK(min_nodes(0, 0, 0) == 1);
  CHECK(min_nodes(1, 0, 0) == 3);
  CHECK(min_nodes(0, 1, 1) == 4);
  CHECK(min_nodes(1, 0, 1) == 4);
  CHECK(min_nodes(1, 3, 3) == 12);
  CHECK(min_nodes(2, 1, 2) == 9);
}

TEST_CASE("derive_f sums the largest platforms") {
  CHECK(derive_f({3, 1, 2}, 0) == 0);
  CHECK(derive_f({3, 1, 2}, 1) == 3);
  CHECK(derive_f({3, 1, 2}, 2) == 5);
  CHECK(derive_f({3, 1, 2}, 3) == 6);
  CHECK(derive_f({2, 2, 2}, 2) == 4);
  CHECK_THROWS_AS(derive_f({2, 2}, 3), ConfigError);
  CHECK_THROWS_AS(derive_f({2, 0, 1}, 1), ConfigError);
}

TEST_CASE("validate_config rejects undersized clusters") {
  // 2*(1+0)+1+1 = 4 nodes required; three given.
  CHECK_THROWS_AS(validate_config(params({1, 1, 1}, 1, 0, 1)), ConfigError);
  // pi exceeding the platform count is a parameter error.
  CHECK_THROWS_AS(validate_config(params({3, 3}, 3, 0, 0)), ConfigError);
  // Same tolerance goals, one platform short of the bound, then exactly at it.
  CHECK_THROWS_AS(validate_config(params({5, 5, 5}, 1, 1, 2)), ConfigError);
  CHECK_NOTHROW(validate_config(params({5, 5, 5, 5}, 1, 1, 2)));
}

TEST_CASE("minimum platform counts") {
  CHECK(min_platforms(0, 0) == 1);
  CHECK(min_platforms(1, 0) == 2);
  CHECK(min_platforms(2, 0) == 3);
  CHECK(min_platforms(1, 1) == 4);
  CHECK(min_platforms(2, 1) == 5);
  CHECK(min_platforms(1, 2) == 6);
}

TEST_CASE("planned deployments validate with their own targets") {
  CHECK(plan_deployment(0, 0, 0) == std::vector<std::uint32_t>{1});
  CHECK(plan_deployment(1, 1, 0) == std::vector<std::uint32_t>{3, 3});
  CHECK(plan_deployment(0, 1, 1) == std::vector<std::uint32_t>({1, 1, 1, 1}));
  CHECK(plan_deployment(1, 1, 1) == std::vector<std::uint32_t>({3, 3, 3, 3}));

  const QuorumProfile q = validate_config(params(plan_deployment(1, 1, 1), 1, 1, 1));
  CHECK(q.n == 12);
  CHECK(q.u == 4);
  CHECK(q.commit_quorum == 7);
  CHECK(q.audit_quorum == 8);

  for (std::uint32_t c = 0; c <= 3; ++c)
    for (std::uint32_t ps = 0; ps <= 3; ++ps)
      for (std::uint32_t pl = 0; pl <= ps; ++pl) {
        const auto sizes = plan_deployment(c, ps, pl);
        CHECK(sizes.size() == min_platforms(ps, pl));
        const QuorumProfile prof = validate_config(params(sizes, ps, pl, c));
        CHECK(prof.n == sizes.size() * (2 * c + 1));
      }
}

TEST_CASE("audit quorums of distinct certificates intersect beyond f_safe") {
  // Brute force over every flat cluster up to nine nodes: any two
  // audit-quorum subsets share strictly more than f_safe members, so a
  // certified prefix survives the compromise of any pi_safe platforms.
  for (std::uint32_t n = 1; n <= 9; ++n) {
    for (std::uint32_t ps = 0; ps < n; ++ps) {
      for (std::uint32_t c = 0; 2 * (c + 0) + ps + 1 <= n; ++c) {
        PftParameters p = params(std::vector<std::uint32_t>(n, 1), ps, 0, c);
        QuorumProfile q;
        try {
          q = validate_config(p);
        } catch (const ConfigError&) {
          continue;
        }
        const std::uint32_t k = q.audit_quorum;
        if (k > n) continue;
        // Overlap of two k-subsets of n is minimized at 2k - n.
        const std::int64_t min_overlap = 2 * static_cast<std::int64_t>(k) - n;
        CHECK(min_overlap > static_cast<std::int64_t>(q.f_safe));
        // Spot-verify the arithmetic with explicit subsets.
        if (n <= 6 && k <= n) {
          std::int64_t seen_min = n;
          for_each_subset(n, k, [&](const std::vector<std::uint32_t>& a) {
            std::vector<bool> in(n, false);
            for (auto i : a) in[i] = true;
            for_each_subset(n, k, [&](const std::vector<std::uint32_t>& b) {
              std::int64_t ov = 0;
              for (auto i : b) ov += in[i] ? 1 : 0;
              seen_min = std::min(seen_min, ov);
            });
          });
          CHECK(seen_min == min_overlap);
        }
      }
    }
  }
}

TEST_CASE("view timeout floor tracks the audit pipeline") {
  CHECK(min_view_timeout(1, 1) == 9);
  CHECK(min_view_timeout(1, 2) == 18);
  CHECK(min_view_timeout(10, 1) == 45);
  CHECK(min_view_timeout(2, 5) == 65);
}
