/*
 * Copyright 2026 The runwatch Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Generators of canonical-chain miner sequences: honest multinomial mining,
// a lead-state selfish miner, and a two-member cartel sharing one private
// branch.

#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "runwatch/error.hpp"
#include "runwatch/runstat.hpp"

namespace runwatch {

inline std::vector<std::size_t> simulate_honest(std::span<const double> powers, std::size_t T, std::uint64_t seed) {
  if (powers.empty()) throw domain_error("simulate_honest: empty power vector");
  CompensatedSum total;
  for (double p : powers) {
    detail::check_probability(p, "power");
    total.add(p);
  }
  if (std::abs(total.value() - 1.0) > 1e-12)
    throw domain_error("simulate_honest: powers sum to " + std::to_string(total.value()) + ", not 1");
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(powers.begin(), powers.end());
  std::vector<std::size_t> out(T);
  for (auto& x : out) x = pick(rng);
  return out;
}

inline std::vector<std::string> default_honest_labels(std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  char buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "honest%02zu", i);
    out.emplace_back(buf);
  }
  return out;
}

struct StrategyParams {
  double alpha_pow = 0.0;  // attacker share of hash power
  double gamma = 0.0;      // honest share mining on the attacker branch during a tie
  std::size_t horizon = 0; // canonical blocks to emit
  std::uint64_t seed = 0;
};

struct SimResult {
  std::vector<std::string> sequence;
  double realized_share = 0.0;        // attacker-group blocks / horizon
  std::size_t stale_count = 0;        // orphaned honest blocks
  std::size_t attacker_orphans = 0;   // attacker blocks lost in ties
  std::size_t ties = 0;               // one-block races resolved
  std::size_t tie_wins = 0;           // races whose attacker block became canonical
};

// How blocks of a shared private branch are credited among its members.
// Turns: members take turns at the shared tip, weighted by share (strict
// alternation for equal shares). Finder: each block independently goes to
// member k with probability shares[k] / sum(shares).
enum class Attribution { Turns, Finder };

inline Attribution parse_attribution(std::string_view s) {
  if (s == "turns") return Attribution::Turns;
  if (s == "finder") return Attribution::Finder;
  throw validation_error("unknown attribution '" + std::string(s) + "' (expected turns or finder)");
}

namespace detail {

// Attacker group mining one private branch.
inline SimResult simulate_withholding(std::span<const std::string> members, std::span<const double> shares,
                                      double gamma, std::size_t horizon, std::uint64_t seed,
                                      std::span<const std::string> honest,
                                      Attribution attribution = Attribution::Finder) {
  CompensatedSum a;
  for (double s : shares) {
    check_probability(s, "attacker share");
    a.add(s);
  }
  const double alpha = a.value();
  check_probability(alpha, "alpha_pow");
  check_probability(gamma, "gamma");
  if (honest.empty() && alpha < 1.0) throw domain_error("simulation needs at least one honest miner label");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> honest_pick(0, honest.empty() ? 0 : honest.size() - 1);
  const bool any_member_power = alpha > 0.0;
  std::discrete_distribution<std::size_t> member_pick;
  if (any_member_power) member_pick = std::discrete_distribution<std::size_t>(shares.begin(), shares.end());
  std::vector<std::size_t> found(members.size(), 0);
  std::size_t found_total = 0;
  auto next_member = [&]() -> std::size_t {
    if (attribution == Attribution::Finder) return member_pick(rng);
    // Weighted round robin: the member furthest behind its share goes next.
    std::size_t best = 0;
    double best_gap = -1e300;
    for (std::size_t k = 0; k < members.size(); ++k) {
      const double gap = shares[k] / alpha * static_cast<double>(found_total + 1) - static_cast<double>(found[k]);
      if (shares[k] > 0.0 && gap > best_gap) {
        best = k;
        best_gap = gap;
      }
    }
    ++found[best];
    ++found_total;
    return best;
  };

  SimResult res;
  auto& chain = res.sequence;
  chain.reserve(horizon + 2);

  std::vector<std::string> priv;  // unpublished attacker blocks since the fork
  std::size_t pub = 0;            // honest blocks on the public branch since the fork
  bool tie = false;
  std::string honest_tie;

  auto lead = [&] { return static_cast<std::ptrdiff_t>(priv.size()) - static_cast<std::ptrdiff_t>(pub); };
  auto commit_private = [&] {
    chain.insert(chain.end(), priv.begin(), priv.end());
    priv.clear();
    pub = 0;
  };

  // Private blocks are certain to become canonical once the lead is at least two.
  while (chain.size() + (lead() >= 2 ? priv.size() : 0) < horizon) {
    const bool attacker = any_member_power && unit(rng) < alpha;
    if (attacker) {
      const std::string& who = members[next_member()];
      if (tie) {
        // Attacker extends its own branch and wins the fork.
        priv.push_back(who);
        commit_private();
        ++res.stale_count;
        ++res.ties;
        ++res.tie_wins;
        tie = false;
      } else {
        priv.push_back(who);
      }
      continue;
    }

    const std::string& who = honest[honest_pick(rng)];
    if (tie) {
      ++res.ties;
      if (unit(rng) < gamma) {
        // Honest miner builds on the attacker's block.
        commit_private();
        chain.push_back(who);
        ++res.stale_count;
        ++res.tie_wins;
      } else {
        chain.push_back(honest_tie);
        chain.push_back(who);
        res.attacker_orphans += priv.size();
        priv.clear();
        pub = 0;
      }
      tie = false;
    } else if (priv.empty()) {
      chain.push_back(who);
    } else if (lead() == 1) {
      // Attacker publishes its single block; the network is split.
      tie = true;
      honest_tie = who;
      pub = 1;
    } else if (lead() == 2) {
      // Attacker publishes everything and overrides the public branch.
      res.stale_count += pub + 1;
      commit_private();
    } else {
      // Lead above two: reveal one block, the honest block is doomed.
      ++pub;
    }
  }
  if (lead() >= 2) {
    res.stale_count += pub;
    commit_private();
  }
  chain.resize(horizon);

  std::size_t attacker_blocks = 0;
  for (const auto& s : chain)
    for (const auto& m : members)
      if (s == m) {
        ++attacker_blocks;
        break;
      }
  res.realized_share = horizon == 0 ? 0.0 : static_cast<double>(attacker_blocks) / static_cast<double>(horizon);
  return res;
}

}  // namespace detail

// Lead-state selfish miner against honest miners drawn uniformly from
// `honest`.
inline SimResult simulate_selfish(const StrategyParams& params, const std::string& attacker = "attacker",
                                  std::span<const std::string> honest = {}) {
  const auto fallback = default_honest_labels(19);
  if (honest.empty()) honest = fallback;
  const std::string members[] = {attacker};
  const double shares[] = {params.alpha_pow};
  return detail::simulate_withholding(members, shares, params.gamma, params.horizon, params.seed, honest);
}

// Two members operating one shared private branch with power equal to the
// sum of their shares. Blocks keep the label of the member who found them.
inline SimResult simulate_cartel(const std::array<std::string, 2>& members, const std::array<double, 2>& shares,
                                 double gamma, std::size_t horizon, std::uint64_t seed,
                                 std::span<const std::string> honest = {},
                                 Attribution attribution = Attribution::Turns) {
  if (members[0] == members[1]) throw domain_error("simulate_cartel: members must differ");
  const auto fallback = default_honest_labels(18);
  if (honest.empty()) honest = fallback;
  return detail::simulate_withholding(members, shares, gamma, horizon, seed, honest, attribution);
}

}  // namespace runwatch
