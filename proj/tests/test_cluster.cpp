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

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "runwatch/cluster.hpp"
#include "runwatch/io.hpp"

using namespace runwatch;

namespace {

Transaction tx(std::string id, std::vector<TxInput> in, std::vector<TxOutput> out) {
  return Transaction{std::move(id), std::move(in), std::move(out), false};
}

// 1-in/2-out transaction whose second output funds `next`.
Transaction peel(const std::string& id, const std::string& from, const std::string& change,
                 const std::string& next) {
  std::optional<std::string> link;
  if (!next.empty()) link = next;
  return tx(id, {{from, 1000}}, {{"pay_" + id, 100, std::nullopt}, {change, 800, link}});
}

std::vector<Transaction> fixture_txs() {
  return parse_transactions(std::filesystem::path(RUNWATCH_FIXTURES) / "cluster_txs.csv", FileFormat::Csv);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Cluster membership as a set of sorted groups.
std::set<std::set<std::string>> groups(const AddressPartition& p) {
  std::map<std::string, std::set<std::string>> by_id;
  for (const auto& [a, id] : p.cluster_ids()) by_id[id].insert(a);
  std::set<std::set<std::string>> out;
  for (auto& [id, g] : by_id) out.insert(std::move(g));
  return out;
}

bool refines(const AddressPartition& fine, const AddressPartition& coarse) {
  const auto ids = coarse.cluster_ids();
  for (const auto& g : groups(fine)) {
    std::set<std::string> seen;
    for (const auto& a : g) seen.insert(ids.at(a));
    if (seen.size() != 1) return false;
  }
  return true;
}

}  // namespace

TEST(AddressPartition, EquivalenceAndProvenance) {
  AddressPartition p;
  EXPECT_TRUE(p.unite("b", "a", Heuristic::H1));
  EXPECT_FALSE(p.unite("a", "b", Heuristic::H2));
  EXPECT_TRUE(p.unite("c", "d", Heuristic::Hp));
  EXPECT_TRUE(p.same("a", "a"));
  EXPECT_TRUE(p.same("b", "a"));
  EXPECT_FALSE(p.same("a", "c"));
  EXPECT_FALSE(p.same("a", "zz"));
  EXPECT_EQ(p.cluster_ids().at("b"), "a");
  ASSERT_EQ(p.merges().size(), 2u);
  EXPECT_EQ(p.merges()[1].source, Heuristic::Hp);
  EXPECT_EQ(groups(p.restricted(Heuristic::H2)).size(), 3u);
  EXPECT_EQ(groups(p).size(), 2u);
}

TEST(H1MultiInput, Examples) {
  AddressPartition p;
  const std::vector<Transaction> one{tx("x", {{"A", 1}, {"B", 1}}, {{"C", 1, {}}})};
  EXPECT_EQ(h1_multi_input(one, p), 1u);
  EXPECT_TRUE(p.same("A", "B"));
  EXPECT_FALSE(p.same("A", "C"));

  AddressPartition q;
  const std::vector<Transaction> single{tx("y", {{"A", 1}}, {{"C", 1, {}}})};
  EXPECT_EQ(h1_multi_input(single, q), 0u);
  EXPECT_FALSE(q.same("A", "C"));

  AddressPartition r;
  const std::vector<Transaction> chain{tx("1", {{"A", 1}, {"B", 1}}, {}), tx("2", {{"B", 1}, {"C", 1}}, {})};
  h1_multi_input(chain, r);
  EXPECT_TRUE(r.same("A", "C"));
  EXPECT_EQ(groups(r).size(), 1u);
}

TEST(H1MultiInput, CoinbaseIgnoredAndOrderFree) {
  std::vector<Transaction> txs;
  std::mt19937_64 rng(4);
  for (int k = 0; k < 60; ++k) {
    std::vector<TxInput> in;
    const int n = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < n; ++i) in.push_back({"a" + std::to_string(rng() % 40), 10});
    txs.push_back(tx("t" + std::to_string(k), in, {{"o" + std::to_string(k), 5, {}}}));
  }
  Transaction cb{"cb", {}, {{"a1", 50, {}}, {"a2", 50, {}}}, true};
  txs.push_back(cb);
  AddressPartition base;
  h1_multi_input(txs, base);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(txs.begin(), txs.end(), rng);
    AddressPartition p;
    h1_multi_input(txs, p);
    EXPECT_EQ(groups(p), groups(base));
  }
}

TEST(H2OptimalChange, Examples) {
  EXPECT_FALSE(h2_optimal_change(tx("a", {{"A", 500}}, {{"C", 420, {}}, {"D", 30, {}}})));
  EXPECT_EQ(h2_optimal_change(tx("b", {{"A", 500}}, {{"C", 600, {}}, {"D", 30, {}}})), "D");
  EXPECT_EQ(h2_optimal_change(tx("c", {{"A", 100}, {"B", 200}}, {{"C", 250, {}}, {"D", 50, {}}})), "D");
  EXPECT_FALSE(h2_optimal_change(tx("d", {{"A", 100}}, {{"C", 100, {}}})));  // strict
  EXPECT_FALSE(h2_optimal_change(Transaction{"e", {}, {{"C", 1, {}}}, true}));

  AddressPartition p;
  const std::vector<Transaction> txs{tx("c", {{"A", 100}, {"B", 200}}, {{"C", 250, {}}, {"D", 50, {}}})};
  EXPECT_EQ(h2_apply(txs, p), 1u);
  EXPECT_TRUE(p.same("A", "D"));
  EXPECT_FALSE(p.same("A", "B"));  // H2 alone does not apply H1
}

TEST(HpPeelingChain, ChainsOfThreeAndFive) {
  const std::vector<Transaction> three{peel("p1", "x0", "x1", "p2"), peel("p2", "x1", "x2", "p3"),
                                       peel("p3", "x2", "x3", "")};
  AddressPartition a;
  const auto r3 = hp_peeling_chain(three, a);
  EXPECT_TRUE(r3.available);
  EXPECT_EQ(r3.interior, 1u);
  EXPECT_EQ(r3.merged, 1u);
  EXPECT_TRUE(a.same("x1", "x2"));
  EXPECT_FALSE(a.same("x0", "x1"));
  EXPECT_FALSE(a.same("x2", "x3"));

  std::vector<Transaction> five;
  for (int k = 1; k <= 5; ++k)
    five.push_back(peel("p" + std::to_string(k), "x" + std::to_string(k - 1), "x" + std::to_string(k),
                        k < 5 ? "p" + std::to_string(k + 1) : ""));
  AddressPartition b;
  const auto r5 = hp_peeling_chain(five, b);
  EXPECT_EQ(r5.interior, 3u);
  EXPECT_EQ(r5.merged, 3u);
  EXPECT_TRUE(b.same("x1", "x4"));
  EXPECT_FALSE(b.same("x0", "x1"));
}

TEST(HpPeelingChain, IsolatedAndUnlinked) {
  std::vector<Transaction> isolated{peel("p1", "x0", "x1", "q"), tx("q", {{"x1", 800}}, {{"y", 700, {}}})};
  AddressPartition a;
  const auto r = hp_peeling_chain(isolated, a);
  EXPECT_TRUE(r.available);
  EXPECT_EQ(r.merged, 0u);

  std::vector<Transaction> unlinked{peel("p1", "x0", "x1", ""), peel("p2", "x1", "x2", "")};
  AddressPartition b;
  EXPECT_FALSE(hp_peeling_chain(unlinked, b).available);
  EXPECT_TRUE(b.merges().empty());
}

TEST(HpPeelingChain, AmbiguousSuccessorIsSkipped) {
  // Both outputs of p2 feed peeling transactions: the change is unclear.
  std::vector<Transaction> txs{peel("p1", "x0", "x1", "p2"),
                               tx("p2", {{"x1", 800}}, {{"a", 300, std::string("p3")}, {"b", 400, std::string("p4")}}),
                               peel("p3", "a", "a2", ""), peel("p4", "b", "b2", "")};
  AddressPartition p;
  EXPECT_EQ(hp_peeling_chain(txs, p).merged, 0u);
}

TEST(Clustering, FixturePartition) {
  const auto txs = fixture_txs();
  ASSERT_EQ(txs.size(), 6u);
  const auto run = cluster_addresses(txs);
  EXPECT_EQ(run.h1_merges, 3u);  // u1-pa1, u4-pa2, u4-pb2
  EXPECT_EQ(run.h2_merges, 1u);  // pb1 -> u2
  EXPECT_TRUE(run.hp.available);
  EXPECT_EQ(run.hp.merged, 1u);  // u3 -> pc1 inside p1 -> p2 -> p3

  std::ostringstream got;
  got << "address,cluster_id\n";
  for (const auto& r : cluster_rows(run.partition)) got << r.address << "," << r.cluster_id << "\n";
  EXPECT_EQ(got.str(), slurp(std::filesystem::path(RUNWATCH_FIXTURES) / "cluster_expected_clusters.csv"));

  const auto h1 = run.partition.restricted(Heuristic::H1);
  const auto h12 = run.partition.restricted(Heuristic::H2);
  EXPECT_TRUE(refines(h1, h12));
  EXPECT_TRUE(refines(h12, run.partition));
  EXPECT_FALSE(refines(run.partition, h1));
}

TEST(Clustering, RerunIsIdempotent) {
  const auto txs = fixture_txs();
  auto run = cluster_addresses(txs);
  const auto before = groups(run.partition);
  EXPECT_EQ(h1_multi_input(txs, run.partition), 0u);
  EXPECT_EQ(h2_apply(txs, run.partition), 0u);
  EXPECT_EQ(hp_peeling_chain(txs, run.partition).merged, 0u);
  EXPECT_EQ(groups(run.partition), before);
}

TEST(TagUnknownMiners, Examples) {
  AddressPartition p;
  p.unite("X", "btccom1", Heuristic::H1);
  p.unite("Y", "ant1", Heuristic::H1);
  p.unite("Y", "f2pool1", Heuristic::H2);
  p.add("Z");
  const KnownPools known{{"BTC.com", {"btccom1"}}, {"AntPool", {"ant1"}}, {"F2Pool", {"f2pool1"}}};
  const std::vector<std::string> cand{"X", "Y", "Z", "btccom1"};
  const auto t = tag_unknown_miners(p, known, cand);
  EXPECT_EQ(t.tags.at("X"), (PoolTag{"BTC.com", "H1"}));
  EXPECT_EQ(t.tags.at("btccom1"), (PoolTag{"BTC.com", "known"}));
  // Y is resolved at the H1 pass, before H2 joins a second pool.
  EXPECT_EQ(t.tags.at("Y"), (PoolTag{"AntPool", "H1"}));
  EXPECT_TRUE(t.unknown.count("Z"));
  EXPECT_TRUE(t.conflicts.empty());

  AddressPartition q;
  q.unite("W", "ant1", Heuristic::H1);
  q.unite("W", "btccom1", Heuristic::H1);
  const std::vector<std::string> w{"W"};
  const auto c = tag_unknown_miners(q, known, w);
  EXPECT_FALSE(c.pool_of("W"));
  ASSERT_EQ(c.conflicts.size(), 1u);
  EXPECT_NE(c.conflicts[0].find("W"), std::string::npos);

  const KnownPools overlap{{"A", {"x"}}, {"B", {"x"}}};
  EXPECT_THROW((void)tag_unknown_miners(q, overlap, w), validation_error);
}

TEST(TagUnknownMiners, FixtureTagsAndUnknownShare) {
  const auto txs = fixture_txs();
  const auto blocks =
      parse_blocks(std::filesystem::path(RUNWATCH_FIXTURES) / "cluster_blocks.csv", FileFormat::Csv);
  const auto run = cluster_addresses(txs);
  std::vector<std::string> cand;
  for (const auto& b : blocks)
    if (!b.has_named_pool()) cand.push_back(b.miner);
  const auto tags = tag_unknown_miners(run.partition, known_pools_from_blocks(blocks), cand);

  std::ostringstream got;
  got << "address,pool,provenance\n";
  for (const auto& r : tag_rows(tags)) got << r.address << "," << r.pool << "," << r.provenance << "\n";
  EXPECT_EQ(got.str(), slurp(std::filesystem::path(RUNWATCH_FIXTURES) / "cluster_expected_tags.csv"));
  ASSERT_EQ(tags.conflicts.size(), 1u);  // u4

  const double before = unknown_block_share(blocks);
  const double after = unknown_block_share(apply_tags(blocks, tags));
  EXPECT_DOUBLE_EQ(before, 0.5);
  EXPECT_DOUBLE_EQ(after, 2.0 / 12.0);
  EXPECT_LE(after, before);
}

TEST(KnownPools, FromBlocks) {
  const std::vector<BlockRecord> blocks{{1, 0, "a", "P"}, {2, 0, "b", "Unknown"}, {3, 0, "c", ""}, {4, 0, "a", "P"}};
  const auto k = known_pools_from_blocks(blocks);
  ASSERT_EQ(k.size(), 1u);
  EXPECT_EQ(k.at("P"), (std::set<std::string>{"a"}));
  const std::vector<BlockRecord> clash{{1, 0, "a", "P"}, {2, 0, "a", "Q"}};
  EXPECT_THROW((void)known_pools_from_blocks(clash), validation_error);
  const std::vector<Transaction> txs{Transaction{"cb", {}, {{"m", 1, {}}, {"n", 1, {}}}, true},
                                     Transaction{"cb2", {}, {{"m", 1, {}}}, true}};
  EXPECT_EQ(coinbase_addresses(txs), (std::vector<std::string>{"m", "n"}));
}
