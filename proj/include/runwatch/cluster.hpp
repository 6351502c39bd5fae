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

// Address clustering for UTXO chains: multi-input (H1), unique optimal
// change (H2) and peeling chains (Hp), plus pool tagging of unknown miners.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "runwatch/detect.hpp"
#include "runwatch/error.hpp"

namespace runwatch {

struct TxInput {
  std::string address;
  std::uint64_t amount = 0;

  friend bool operator==(const TxInput&, const TxInput&) = default;
};

struct TxOutput {
  std::string address;
  std::uint64_t amount = 0;
  std::optional<std::string> spent_by;  // id of the spending transaction

  friend bool operator==(const TxOutput&, const TxOutput&) = default;
};

struct Transaction {
  std::string id;
  std::vector<TxInput> inputs;
  std::vector<TxOutput> outputs;
  bool is_coinbase = false;

  friend bool operator==(const Transaction&, const Transaction&) = default;
};

// Ordered by priority: lower value wins when several heuristics apply.
enum class Heuristic : std::uint8_t { H1 = 1, H2 = 2, Hp = 3 };

inline const char* to_string(Heuristic h) {
  switch (h) {
    case Heuristic::H1: return "H1";
    case Heuristic::H2: return "H2";
    case Heuristic::Hp: return "Hp";
  }
  return "?";
}

// Union-find over address labels. Every effective merge is logged with the
// heuristic that caused it, so coarser partitions can be replayed from it.
class AddressPartition {
 public:
  struct Merge {
    std::string a;
    std::string b;
    Heuristic source;
  };

  std::size_t add(const std::string& address) {
    auto [it, inserted] = index_.try_emplace(address, names_.size());
    if (inserted) {
      names_.push_back(address);
      parent_.push_back(it->second);
      rank_.push_back(0);
    }
    return it->second;
  }

  [[nodiscard]] bool contains(const std::string& address) const { return index_.count(address) != 0; }
  [[nodiscard]] std::size_t size() const noexcept { return names_.size(); }
  [[nodiscard]] const std::vector<Merge>& merges() const noexcept { return merges_; }
  [[nodiscard]] const std::vector<std::string>& addresses() const noexcept { return names_; }

  // Returns true when two distinct clusters were joined.
  bool unite(const std::string& a, const std::string& b, Heuristic source) {
    std::size_t ra = root(add(a));
    std::size_t rb = root(add(b));
    if (ra == rb) return false;
    if (rank_[ra] < rank_[rb]) std::swap(ra, rb);
    parent_[rb] = ra;
    if (rank_[ra] == rank_[rb]) ++rank_[ra];
    merges_.push_back({a, b, source});
    return true;
  }

  [[nodiscard]] bool same(const std::string& a, const std::string& b) const {
    auto ia = index_.find(a), ib = index_.find(b);
    if (ia == index_.end() || ib == index_.end()) return a == b;
    return root(ia->second) == root(ib->second);
  }

  // Cluster id: the lexicographically smallest address of the cluster.
  [[nodiscard]] std::map<std::string, std::string> cluster_ids() const {
    std::vector<std::size_t> best(names_.size());
    std::iota(best.begin(), best.end(), std::size_t{0});
    for (std::size_t i = 0; i < names_.size(); ++i) {
      const std::size_t r = root(i);
      if (names_[i] < names_[best[r]]) best[r] = i;
    }
    std::map<std::string, std::string> out;
    for (std::size_t i = 0; i < names_.size(); ++i) out.emplace(names_[i], names_[best[root(i)]]);
    return out;
  }

  // Partition induced by the merges of `max_source` and all higher-priority
  // heuristics.
  [[nodiscard]] AddressPartition restricted(Heuristic max_source) const {
    AddressPartition p;
    for (const auto& n : names_) p.add(n);
    for (const auto& m : merges_)
      if (m.source <= max_source) p.unite(m.a, m.b, m.source);
    return p;
  }

 private:
  std::size_t root(std::size_t i) const {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> names_;
  mutable std::vector<std::size_t> parent_;
  std::vector<std::uint8_t> rank_;
  std::vector<Merge> merges_;
};

inline void register_addresses(std::span<const Transaction> txs, AddressPartition& partition) {
  for (const auto& tx : txs) {
    for (const auto& in : tx.inputs) partition.add(in.address);
    for (const auto& out : tx.outputs) partition.add(out.address);
  }
}

// H1: all input addresses of a non-coinbase transaction share an owner.
inline std::size_t h1_multi_input(std::span<const Transaction> txs, AddressPartition& partition) {
  register_addresses(txs, partition);
  std::size_t merged = 0;
  for (const auto& tx : txs) {
    if (tx.is_coinbase || tx.inputs.size() < 2) continue;
    for (std::size_t k = 1; k < tx.inputs.size(); ++k)
      merged += partition.unite(tx.inputs[0].address, tx.inputs[k].address, Heuristic::H1);
  }
  return merged;
}

// H2: the output strictly smaller than every input amount is change, but
// only when exactly one output qualifies.
inline std::optional<std::string> h2_optimal_change(const Transaction& tx) {
  if (tx.is_coinbase || tx.inputs.empty()) return std::nullopt;
  std::uint64_t min_in = tx.inputs.front().amount;
  for (const auto& in : tx.inputs) min_in = std::min(min_in, in.amount);
  const TxOutput* change = nullptr;
  for (const auto& out : tx.outputs) {
    if (out.amount < min_in) {
      if (change) return std::nullopt;
      change = &out;
    }
  }
  if (!change) return std::nullopt;
  return change->address;
}

inline std::size_t h2_apply(std::span<const Transaction> txs, AddressPartition& partition) {
  register_addresses(txs, partition);
  std::size_t merged = 0;
  for (const auto& tx : txs)
    if (auto change = h2_optimal_change(tx)) merged += partition.unite(tx.inputs[0].address, *change, Heuristic::H2);
  return merged;
}

struct PeelingReport {
  bool available = false;  // false when no spend links exist in the data
  std::size_t interior = 0;
  std::size_t merged = 0;
};

namespace detail {

inline bool peeling_shape(const Transaction& tx) {
  return !tx.is_coinbase && tx.inputs.size() == 1 && tx.outputs.size() == 2;
}

}  // namespace detail

// Hp: in a chain of 1-input/2-output transactions linked by spends, every
// member whose predecessor and successor both have that shape treats the
// output spent by the successor as change of its input.
inline PeelingReport hp_peeling_chain(std::span<const Transaction> txs, AddressPartition& partition) {
  register_addresses(txs, partition);
  PeelingReport report;
  std::unordered_map<std::string, const Transaction*> by_id;
  std::unordered_map<std::string, std::vector<const Transaction*>> spenders_of;  // spender id -> funding txs
  for (const auto& tx : txs) by_id.emplace(tx.id, &tx);
  for (const auto& tx : txs) {
    for (const auto& out : tx.outputs) {
      if (!out.spent_by) continue;
      report.available = true;
      spenders_of[*out.spent_by].push_back(&tx);
    }
  }
  if (!report.available) return report;

  for (const auto& tx : txs) {
    if (!detail::peeling_shape(tx)) continue;
    auto pred = spenders_of.find(tx.id);
    if (pred == spenders_of.end() || pred->second.size() != 1 || !detail::peeling_shape(*pred->second.front()))
      continue;
    const TxOutput* link = nullptr;
    std::size_t links = 0;
    for (const auto& out : tx.outputs) {
      if (!out.spent_by) continue;
      auto next = by_id.find(*out.spent_by);
      if (next != by_id.end() && detail::peeling_shape(*next->second)) {
        link = &out;
        ++links;
      }
    }
    if (links != 1) continue;
    ++report.interior;
    report.merged += partition.unite(tx.inputs[0].address, link->address, Heuristic::Hp);
  }
  return report;
}

struct ClusterRun {
  AddressPartition partition;
  std::size_t h1_merges = 0;
  std::size_t h2_merges = 0;
  PeelingReport hp;
};

// H1, then H2, then Hp over one transaction set.
inline ClusterRun cluster_addresses(std::span<const Transaction> txs) {
  ClusterRun run;
  run.h1_merges = h1_multi_input(txs, run.partition);
  run.h2_merges = h2_apply(txs, run.partition);
  run.hp = hp_peeling_chain(txs, run.partition);
  return run;
}

struct PoolTag {
  std::string pool;
  std::string provenance;  // "known", "H1", "H2" or "Hp"

  friend bool operator==(const PoolTag&, const PoolTag&) = default;
};

struct PoolTagMap {
  std::map<std::string, PoolTag> tags;
  std::set<std::string> unknown;
  std::vector<std::string> conflicts;  // human-readable, one per unresolved address

  [[nodiscard]] std::optional<std::string> pool_of(const std::string& address) const {
    auto it = tags.find(address);
    if (it == tags.end()) return std::nullopt;
    return it->second.pool;
  }
};

using KnownPools = std::map<std::string, std::set<std::string>>;  // pool -> addresses

// Tags each candidate miner address not already known. Passes run in
// priority order H1, H2, Hp; in each pass an address is tagged when its
// cluster under that pass touches exactly one named pool. Clusters touching
// two or more pools are reported and left untagged.
inline PoolTagMap tag_unknown_miners(const AddressPartition& partition, const KnownPools& known,
                                     std::span<const std::string> candidates) {
  std::map<std::string, std::string> owner;
  for (const auto& [pool, addrs] : known) {
    for (const auto& a : addrs) {
      auto [it, inserted] = owner.emplace(a, pool);
      if (!inserted && it->second != pool)
        throw validation_error("address '" + a + "' listed for pools '" + it->second + "' and '" + pool + "'");
    }
  }

  PoolTagMap result;
  for (const auto& [a, pool] : owner) result.tags.emplace(a, PoolTag{pool, "known"});

  std::set<std::string> pending;
  for (const auto& c : candidates)
    if (!owner.count(c)) pending.insert(c);

  std::set<std::string> conflicted;
  for (Heuristic level : {Heuristic::H1, Heuristic::H2, Heuristic::Hp}) {
    const auto ids = partition.restricted(level).cluster_ids();
    std::map<std::string, std::set<std::string>> pools_in_cluster;
    for (const auto& [a, pool] : owner)
      if (auto it = ids.find(a); it != ids.end()) pools_in_cluster[it->second].insert(pool);

    for (auto it = pending.begin(); it != pending.end();) {
      auto id = ids.find(*it);
      const auto pools = id == ids.end() ? nullptr : &pools_in_cluster[id->second];
      if (pools && pools->size() == 1) {
        result.tags.emplace(*it, PoolTag{*pools->begin(), to_string(level)});
        conflicted.erase(*it);
        it = pending.erase(it);
        continue;
      }
      if (pools && pools->size() > 1) conflicted.insert(*it);
      ++it;
    }
  }
  for (const auto& a : pending) {
    result.unknown.insert(a);
    if (conflicted.count(a)) result.conflicts.push_back(a + ": cluster touches several named pools");
  }
  return result;
}

// Addresses paid by coinbase transactions, in first-appearance order.
inline std::vector<std::string> coinbase_addresses(std::span<const Transaction> txs) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& tx : txs)
    if (tx.is_coinbase)
      for (const auto& o : tx.outputs)
        if (seen.insert(o.address).second) out.push_back(o.address);
  return out;
}

// Pool -> addresses map from blocks that carry a named-pool tag.
inline KnownPools known_pools_from_blocks(std::span<const BlockRecord> blocks) {
  KnownPools known;
  std::map<std::string, std::string> seen;
  for (const auto& b : blocks) {
    if (!b.has_named_pool()) continue;
    auto [it, inserted] = seen.emplace(b.miner, b.pool);
    if (!inserted && it->second != b.pool)
      throw validation_error("miner address '" + b.miner + "' appears under pools '" + it->second + "' and '" +
                             b.pool + "'");
    known[b.pool].insert(b.miner);
  }
  return known;
}

// Replaces the unknown pool of each block whose address received a tag.
inline std::vector<BlockRecord> apply_tags(std::span<const BlockRecord> blocks, const PoolTagMap& tags) {
  std::vector<BlockRecord> out(blocks.begin(), blocks.end());
  for (auto& b : out)
    if (!b.has_named_pool())
      if (auto pool = tags.pool_of(b.miner)) b.pool = *pool;
  return out;
}

inline double unknown_block_share(std::span<const BlockRecord> blocks) {
  if (blocks.empty()) return 0.0;
  const auto n = std::count_if(blocks.begin(), blocks.end(), [](const BlockRecord& b) { return !b.has_named_pool(); });
  return static_cast<double>(n) / static_cast<double>(blocks.size());
}

}  // namespace runwatch
