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

// Pairwise run tests for coordinated miners and the resulting cartel graph.

#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "runwatch/detect.hpp"
#include "runwatch/error.hpp"
#include "runwatch/runstat.hpp"

namespace runwatch {

// Run count of the merged indicator "block mined by i or j". Same-miner
// adjacencies (i,i) and (j,j) count as well as mixed ones.
inline std::size_t count_pair_runs(const Window& window, std::string_view i, std::string_view j) {
  if (i == j) throw domain_error("count_pair_runs: pair members must differ ('" + std::string(i) + "')");
  auto hit = [&](const std::string& s) { return s == i || s == j; };
  std::size_t c = 0;
  const auto& s = window.sequence;
  for (std::size_t t = 1; t < s.size(); ++t)
    if (hit(s[t]) && hit(s[t - 1])) ++c;
  return c;
}

// Mixed adjacencies only: (i,j) or (j,i). Reported for comparison; no test
// is attached to it.
inline std::size_t count_cross_pair_runs(const Window& window, std::string_view i, std::string_view j) {
  if (i == j) throw domain_error("count_cross_pair_runs: pair members must differ");
  std::size_t c = 0;
  const auto& s = window.sequence;
  for (std::size_t t = 1; t < s.size(); ++t)
    if ((s[t - 1] == i && s[t] == j) || (s[t - 1] == j && s[t] == i)) ++c;
  return c;
}

struct PairWindowResult {
  std::string miner_i;  // miner_i < miner_j
  std::string miner_j;
  std::size_t window = 0;
  std::size_t blocks_i = 0;
  std::size_t blocks_j = 0;
  std::size_t c_pair = 0;
  std::size_t c_cross = 0;
  double h_pair = 0.0;
  double p = 1.0;
  double p_adj = 1.0;
  bool is_cartel = false;

  friend bool operator==(const PairWindowResult&, const PairWindowResult&) = default;
};

inline constexpr std::size_t kDefaultMinBlocks = 5;

// Tests every candidate pair of one window. `individual` must hold this
// window's single-miner results; their adjusted p-values veto pairs whose
// members are already individually significant.
inline std::vector<PairWindowResult> test_pairs(const Window& window,
                                                std::span<const MinerWindowResult> individual, double fdr,
                                                std::size_t min_blocks = kDefaultMinBlocks) {
  detail::check_fdr(fdr);
  const std::size_t T = window.length();
  if (T < 2) return {};

  std::map<std::string, const MinerWindowResult*> ind;
  for (const auto& r : individual)
    if (r.window == window.id) ind[r.miner] = &r;

  // One pass over the adjacencies: same-label runs per miner and mixed
  // adjacencies per unordered pair.
  std::map<std::string, std::size_t> blocks, self_runs;
  std::map<std::pair<std::string, std::string>, std::size_t> cross;
  const auto& s = window.sequence;
  for (std::size_t t = 0; t < T; ++t) {
    ++blocks[s[t]];
    if (t == 0) continue;
    if (s[t] == s[t - 1])
      ++self_runs[s[t]];
    else
      ++cross[std::minmax(s[t - 1], s[t])];
  }

  std::vector<std::string> candidates;
  for (const auto& [m, b] : blocks)
    if (b >= min_blocks) candidates.push_back(m);

  std::vector<PairWindowResult> out;
  for (std::size_t a = 0; a < candidates.size(); ++a) {
    for (std::size_t b = a + 1; b < candidates.size(); ++b) {
      PairWindowResult r;
      r.miner_i = candidates[a];
      r.miner_j = candidates[b];
      r.window = window.id;
      r.blocks_i = blocks[r.miner_i];
      r.blocks_j = blocks[r.miner_j];
      auto xc = cross.find({r.miner_i, r.miner_j});
      r.c_cross = xc == cross.end() ? 0 : xc->second;
      r.c_pair = self_runs[r.miner_i] + self_runs[r.miner_j] + r.c_cross;
      r.h_pair = static_cast<double>(r.blocks_i + r.blocks_j) / static_cast<double>(T);
      r.p = p_value(r.h_pair, T, r.c_pair);
      out.push_back(std::move(r));
    }
  }

  std::vector<double> raw;
  raw.reserve(out.size());
  for (const auto& r : out) raw.push_back(r.p);
  const auto adj = bh_adjust(raw);
  for (std::size_t k = 0; k < out.size(); ++k) {
    auto& r = out[k];
    r.p_adj = adj[k];
    auto pi = ind.find(r.miner_i);
    auto pj = ind.find(r.miner_j);
    const bool quiet_i = pi != ind.end() && pi->second->p_adj >= fdr;
    const bool quiet_j = pj != ind.end() && pj->second->p_adj >= fdr;
    r.is_cartel = r.p_adj < fdr && quiet_i && quiet_j;
  }
  return out;
}

struct CartelNode {
  std::string miner;
  double mean_power = 0.0;
  std::size_t degree = 0;

  friend bool operator==(const CartelNode&, const CartelNode&) = default;
};

struct CartelEdge {
  std::string i;
  std::string j;
  std::size_t weight = 0;

  friend bool operator==(const CartelEdge&, const CartelEdge&) = default;
};

struct CartelNetwork {
  std::vector<CartelNode> nodes;  // sorted by miner
  std::vector<CartelEdge> edges;  // sorted by (i, j)

  [[nodiscard]] bool empty() const noexcept { return edges.empty(); }

  // Edges ordered by descending weight, ties by (i, j).
  [[nodiscard]] std::vector<CartelEdge> ranked_edges() const {
    auto e = edges;
    std::stable_sort(e.begin(), e.end(), [](const CartelEdge& a, const CartelEdge& b) { return a.weight > b.weight; });
    return e;
  }

  friend bool operator==(const CartelNetwork&, const CartelNetwork&) = default;
};

inline CartelNetwork build_network(std::span<const PairWindowResult> pair_results,
                                   std::span<const MinerWindowResult> individual) {
  std::map<std::pair<std::string, std::string>, std::size_t> weight;
  for (const auto& r : pair_results)
    if (r.is_cartel) ++weight[std::minmax(r.miner_i, r.miner_j)];

  CartelNetwork net;
  std::map<std::string, std::size_t> degree;
  for (const auto& [pair, w] : weight) {
    net.edges.push_back({pair.first, pair.second, w});
    ++degree[pair.first];
    ++degree[pair.second];
  }

  std::map<std::string, std::pair<CompensatedSum, std::size_t>> power;
  for (const auto& r : individual) {
    if (!degree.count(r.miner)) continue;
    auto& acc = power[r.miner];
    acc.first.add(r.h_hat);
    ++acc.second;
  }
  for (const auto& [miner, d] : degree) {
    CartelNode n{miner, 0.0, d};
    if (auto it = power.find(miner); it != power.end() && it->second.second > 0)
      n.mean_power = it->second.first.value() / static_cast<double>(it->second.second);
    net.nodes.push_back(std::move(n));
  }
  return net;
}

namespace detail {

inline std::string dot_quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

}  // namespace detail

// Undirected DOT graph; node width follows mean power, edge penwidth and
// label the detection count.
inline std::string to_dot(const CartelNetwork& net) {
  std::string out = "graph cartels {\n  node [shape=circle];\n";
  char buf[64];
  for (const auto& n : net.nodes) {
    std::snprintf(buf, sizeof buf, "%.6f", 0.3 + 3.0 * n.mean_power);
    out += "  " + detail::dot_quote(n.miner) + " [width=" + buf + ", fixedsize=true];\n";
  }
  for (const auto& e : net.edges) {
    out += "  " + detail::dot_quote(e.i) + " -- " + detail::dot_quote(e.j) + " [penwidth=" +
           std::to_string(e.weight) + ", label=\"" + std::to_string(e.weight) + "\"];\n";
  }
  return out + "}\n";
}

}  // namespace runwatch
