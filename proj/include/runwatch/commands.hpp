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

// Subcommand implementations behind the runwatch executable. Each command
// takes a RunConfig and writes human-readable output to `out`, notices to
// `err`, and returns a process exit code: 0 success, 1 runtime or I/O
// failure, 2 validation failure.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <sstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "runwatch/cartel.hpp"
#include "runwatch/cluster.hpp"
#include "runwatch/csv.hpp"
#include "runwatch/detect.hpp"
#include "runwatch/error.hpp"
#include "runwatch/io.hpp"
#include "runwatch/runstat.hpp"
#include "runwatch/simkit.hpp"

namespace runwatch {

enum class ExitCode : int { Ok = 0, Runtime = 1, Validation = 2 };

struct RunConfig {
  std::string subcommand;
  std::string coin;
  std::string policy;  // empty: coin default, else monthly
  double fdr = 0.05;
  std::size_t min_blocks = kDefaultMinBlocks;
  std::string input;
  std::string out;
  std::string format;  // empty: guess from extension
  std::uint64_t seed = 1;
  std::string family = "window";
  bool quiet = false;
  unsigned threads = 1;
  bool debug_raw_bh = false;

  // dist
  std::string h = "0.3";  // decimal or "blocks/T"
  std::size_t length = 5000;
  double alpha_sig = 0.05;
  std::string cache_dir;

  // cluster
  std::string blocks;
  std::string pools;

  // simulate
  std::string mode = "selfish";
  double alpha_pow = 0.35;
  double gamma = 0.5;
  std::size_t horizon = 5000;
  std::size_t windows = 1;
  std::size_t honest = 19;
  std::vector<double> shares{0.15, 0.15};
  std::string attribution = "turns";
  std::int64_t start_time = 1577836800;  // 2020-01-01T00:00:00Z
  std::int64_t block_time = 600;

  // report
  std::vector<double> power_edges = default_power_edges();
};

namespace detail {

inline void check_config(const RunConfig& c) {
  if (!(c.fdr > 0.0 && c.fdr < 1.0)) throw validation_error("--fdr must lie in (0, 1)");
  if (c.min_blocks == 0) throw validation_error("--min-blocks must be at least 1");
  if (c.threads == 0) throw validation_error("--threads must be at least 1");
}

inline WindowPolicy resolve_policy(const RunConfig& c, std::ostream& err) {
  if (!c.policy.empty()) return WindowPolicy::parse(c.policy);
  if (auto p = WindowPolicy::for_coin(c.coin)) return *p;
  if (!c.quiet) err << "note: no --policy and no known --coin; using monthly windows\n";
  return WindowPolicy::monthly();
}

inline FileFormat resolve_format(const RunConfig& c, const std::string& path) {
  return c.format.empty() ? format_for_path(path) : parse_format(c.format);
}

inline void require_path(const std::string& p, const char* flag) {
  if (p.empty()) throw validation_error(std::string("missing required ") + flag);
}

struct Detection {
  std::vector<Window> windows;
  DetectionReport report;
  WindowPolicy policy = WindowPolicy::monthly();
  ResultStore store;
};

inline Detection run_detection(const RunConfig& c, std::ostream& err) {
  check_config(c);
  require_path(c.input, "--input");
  Detection d;
  d.policy = resolve_policy(c, err);
  const auto blocks = parse_blocks(std::filesystem::path(c.input), resolve_format(c, c.input));
  d.windows = split_windows(blocks, d.policy, c.coin);
  DetectOptions opt;
  opt.fdr = c.fdr;
  opt.family = parse_family(c.family);
  opt.threads = c.threads;
  d.report = detect_windows(d.windows, opt);
  if (!c.quiet)
    for (const auto& n : d.report.notices) err << "note: " << n << "\n";

  auto& s = d.store;
  s.meta.coin = c.coin;
  s.meta.policy = d.policy.to_string();
  s.meta.family = c.family;
  s.meta.fdr = c.fdr;
  s.meta.min_blocks = c.min_blocks;
  s.meta.seed = c.seed;
  s.miner_results = d.report.results;
  s.windows = describe_windows(d.windows, s.miner_results);
  s.summaries = summarize_miners(s.miner_results, c.fdr);
  s.power = power_profile(s.miner_results, c.power_edges, c.fdr);
  return d;
}

inline void write_raw_bh(const Detection& d, const std::filesystem::path& dir) {
  std::string out = "window,miner,p,p_raw_scaled\n";
  std::size_t k = 0;
  const auto& rs = d.report.results;
  while (k < rs.size()) {
    std::size_t e = k;
    while (e < rs.size() && rs[e].window == rs[k].window) ++e;
    std::vector<double> ps;
    for (std::size_t i = k; i < e; ++i) ps.push_back(rs[i].p);
    const auto raw = bh_raw(ps);
    for (std::size_t i = k; i < e; ++i)
      out += csv::join({std::to_string(rs[i].window), rs[i].miner, csv::format_double(rs[i].p),
                        csv::format_double(raw[i - k])});
    k = e;
  }
  write_file(dir / "debug_raw_bh.csv", out);
}

inline void print_window_flags(const ResultStore& s, std::ostream& out) {
  out << "window,label,T,miners,flagged\n";
  for (const auto& w : s.windows)
    out << csv::join({std::to_string(w.id), w.label, std::to_string(w.length), std::to_string(w.miners),
                      std::to_string(w.flagged)});
}

inline void print_bars(const CriterionBars& bars, std::ostream& out) {
  out << "reading,criterion,fraction_of_miners\n";
  for (std::size_t k = 0; k < 5; ++k)
    out << "quantile," << CriterionBars::kQuantileNames[k] << "," << csv::format_double(bars.by_quantile[k]) << "\n";
  for (std::size_t k = 0; k < 5; ++k)
    out << "fraction," << CriterionBars::kFractionNames[k] << "," << csv::format_double(bars.by_fraction[k]) << "\n";
}

// Parses "0.3" or "1500/5000".
inline std::pair<double, std::optional<std::pair<std::size_t, std::size_t>>> parse_power(const std::string& s) {
  const auto slash = s.find('/');
  if (slash == std::string::npos) return {csv::parse_double(s, 0, "h"), std::nullopt};
  const auto num = csv::parse_int<std::size_t>(std::string_view(s).substr(0, slash), 0, "h");
  const auto den = csv::parse_int<std::size_t>(std::string_view(s).substr(slash + 1), 0, "h");
  if (den == 0 || num > den) throw domain_error("h = " + s + " is not a probability");
  return {static_cast<double>(num) / static_cast<double>(den), std::make_pair(num, den)};
}

}  // namespace detail

// Prints x, pmf, tail = P(X >= x) for every admissible x, then "c*=N".
inline int cmd_dist(const RunConfig& c, std::ostream& out, std::ostream& err) {
  (void)err;
  const auto [h, rational] = detail::parse_power(c.h);
  detail::check_probability(h, "h");
  if (!(c.alpha_sig > 0.0 && c.alpha_sig < 1.0)) throw domain_error("alpha must lie in (0, 1)");
  std::optional<RunCountDistribution> local;
  std::optional<DistributionCache> cache;
  const RunCountDistribution* dist = nullptr;
  if (!c.cache_dir.empty() && rational && rational->second == c.length) {
    cache.emplace(c.cache_dir);
    dist = &cache->get(rational->first, c.length);
  } else {
    local = LingTable(h).distribution(c.length);
    dist = &*local;
  }
  out << "x,pmf,tail\n";
  CompensatedSum lower;
  for (std::size_t x = 0; x < dist->size(); ++x) {
    const double tail = x == 0 ? 1.0 : std::clamp(1.0 - lower.value(), 0.0, 1.0);
    out << x << "," << csv::format_double((*dist)[x]) << "," << csv::format_double(tail) << "\n";
    lower.add((*dist)[x]);
  }
  out << "c*=" << critical_count(h, c.length, c.alpha_sig) << "\n";
  return 0;
}

inline int cmd_detect(const RunConfig& c, std::ostream& out, std::ostream& err) {
  detail::require_path(c.out, "--out");
  auto d = detail::run_detection(c, err);
  write_results(d.store, c.out);
  if (c.debug_raw_bh) detail::write_raw_bh(d, c.out);
  if (!c.quiet) {
    detail::print_window_flags(d.store, out);
    detail::print_bars(criterion_bars(d.store.summaries, c.fdr), out);
  }
  return 0;
}

inline int cmd_cartel(const RunConfig& c, std::ostream& out, std::ostream& err) {
  detail::require_path(c.out, "--out");
  auto d = detail::run_detection(c, err);
  for (const auto& w : d.windows) {
    auto pairs = test_pairs(w, d.store.miner_results, c.fdr, c.min_blocks);
    for (auto& p : pairs) d.store.pairs.push_back(std::move(p));
  }
  d.store.network = build_network(d.store.pairs, d.store.miner_results);
  write_results(d.store, c.out);
  detail::write_file(std::filesystem::path(c.out) / "cartel.dot", to_dot(d.store.network));
  if (!c.quiet) {
    out << "i,j,weight\n";
    for (const auto& e : d.store.network.ranked_edges()) out << csv::join({e.i, e.j, std::to_string(e.weight)});
  }
  return 0;
}

inline KnownPools read_pools_file(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  csv::Table t(in);
  t.require({"pool", "address"});
  KnownPools known;
  while (t.next()) known[t["pool"]].insert(t["address"]);
  return known;
}

inline int cmd_cluster(const RunConfig& c, std::ostream& out, std::ostream& err) {
  detail::require_path(c.input, "--input");
  detail::require_path(c.out, "--out");
  std::string coin = c.coin;
  std::transform(coin.begin(), coin.end(), coin.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (coin == "eth") throw validation_error("address clustering does not apply to account-based chains (eth)");

  const auto txs = parse_transactions(std::filesystem::path(c.input), detail::resolve_format(c, c.input));
  std::vector<BlockRecord> blocks;
  if (!c.blocks.empty()) blocks = parse_blocks(std::filesystem::path(c.blocks), detail::resolve_format(c, c.blocks));

  KnownPools known = known_pools_from_blocks(blocks);
  if (!c.pools.empty())
    for (auto& [pool, addrs] : read_pools_file(c.pools)) known[pool].insert(addrs.begin(), addrs.end());

  std::vector<std::string> candidates = coinbase_addresses(txs);
  for (const auto& b : blocks)
    if (!b.has_named_pool()) candidates.push_back(b.miner);

  auto run = cluster_addresses(txs);
  const auto tags = tag_unknown_miners(run.partition, known, candidates);
  if (!run.hp.available && !c.quiet) err << "note: no spend links in input; peeling-chain heuristic unavailable\n";
  if (!c.quiet)
    for (const auto& k : tags.conflicts) err << "conflict: " << k << "\n";

  ResultStore s;
  s.meta.coin = c.coin;
  s.meta.seed = c.seed;
  s.clusters = cluster_rows(run.partition);
  s.tags = tag_rows(tags);
  write_results(s, c.out);
  if (!c.quiet) {
    out << "heuristic,merges\nH1," << run.h1_merges << "\nH2," << run.h2_merges << "\nHp,"
        << (run.hp.available ? std::to_string(run.hp.merged) : std::string("unavailable")) << "\n";
    if (!blocks.empty()) {
      out << "stage,unknown_share\nbefore," << csv::format_double(unknown_block_share(blocks)) << "\nafter,"
          << csv::format_double(unknown_block_share(apply_tags(blocks, tags))) << "\n";
    }
  }
  return 0;
}

// Writes a block file. With --windows W > 1, W independently seeded
// segments of --horizon blocks are concatenated.
inline int cmd_simulate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  (void)err;
  detail::require_path(c.out, "--out");
  if (c.windows == 0) throw validation_error("--windows must be at least 1");
  if (c.honest == 0) throw validation_error("--honest must be at least 1");
  const auto honest = default_honest_labels(c.honest);
  std::vector<std::string> labels;
  labels.reserve(c.horizon * c.windows);
  double share = 0.0;
  std::size_t stale = 0;
  for (std::size_t w = 0; w < c.windows; ++w) {
    const std::uint64_t seed = c.seed + w;
    if (c.mode == "honest") {
      const std::vector<double> powers(c.honest, 1.0 / static_cast<double>(c.honest));
      for (auto k : simulate_honest(powers, c.horizon, seed)) labels.push_back(honest[k]);
    } else if (c.mode == "selfish") {
      auto r = simulate_selfish({c.alpha_pow, c.gamma, c.horizon, seed}, "attacker", honest);
      labels.insert(labels.end(), r.sequence.begin(), r.sequence.end());
      share += r.realized_share;
      stale += r.stale_count;
    } else if (c.mode == "cartel") {
      if (c.shares.size() != 2) throw validation_error("--shares needs exactly two values");
      auto r = simulate_cartel({"cartel_a", "cartel_b"}, {c.shares[0], c.shares[1]}, c.gamma, c.horizon, seed, honest,
                               parse_attribution(c.attribution));
      labels.insert(labels.end(), r.sequence.begin(), r.sequence.end());
      share += r.realized_share;
      stale += r.stale_count;
    } else {
      throw validation_error("unknown --mode '" + c.mode + "' (expected honest, selfish or cartel)");
    }
  }
  std::vector<BlockRecord> blocks(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    blocks[i] = {i, c.start_time + static_cast<std::int64_t>(i) * c.block_time, std::move(labels[i]), {}};
  const std::filesystem::path path(c.out);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  detail::write_file(path, format_blocks(blocks, detail::resolve_format(c, c.out)));
  if (!c.quiet) {
    out << "blocks," << blocks.size() << "\n";
    if (c.mode != "honest")
      out << "mean_realized_share," << csv::format_double(share / static_cast<double>(c.windows)) << "\nstale,"
          << stale << "\n";
  }
  return 0;
}

// Joins a stored run into plot-ready tables under <out>/report.
inline int cmd_report(const RunConfig& c, std::ostream& out, std::ostream& err) {
  (void)err;
  detail::require_path(c.out, "--out");
  const std::filesystem::path dir(c.out);
  if (!std::filesystem::is_directory(dir)) throw io_error("no result directory at '" + dir.string() + "'");
  const auto s = read_results(dir);

  std::string shares = "window,miner,h_hat,flagged\n";
  for (const auto& r : s.miner_results)
    shares += csv::join({std::to_string(r.window), r.miner, csv::format_double(r.h_hat), detail::flag(r.flagged)});

  std::string per_window = "window,label,T,miners,flagged\n";
  for (const auto& w : s.windows)
    per_window += csv::join({std::to_string(w.id), w.label, std::to_string(w.length), std::to_string(w.miners),
                             std::to_string(w.flagged)});

  std::ostringstream bars;
  detail::print_bars(criterion_bars(s.summaries, s.meta.fdr), bars);
  std::string criteria = s.summaries.empty() ? "reading,criterion,fraction_of_miners\n" : bars.str();

  std::string incidence = "lo,hi,observations,abnormal,abnormal_fraction\n";
  for (const auto& b : power_profile(s.miner_results, c.power_edges, s.meta.fdr))
    incidence += csv::join({csv::format_double(b.lo), csv::format_double(b.hi), std::to_string(b.observations),
                            std::to_string(b.abnormal),
                            b.abnormal_fraction ? csv::format_double(*b.abnormal_fraction) : ""});

  std::string unknown = "stage,unknown_share\n";
  if (!c.input.empty() && !s.tags.empty()) {
    const auto blocks = parse_blocks(std::filesystem::path(c.input), detail::resolve_format(c, c.input));
    PoolTagMap tags;
    for (const auto& t : s.tags)
      if (t.pool != "Unknown") tags.tags[t.address] = {t.pool, t.provenance};
    unknown += "before," + csv::format_double(unknown_block_share(blocks)) + "\n";
    unknown += "after," + csv::format_double(unknown_block_share(apply_tags(blocks, tags))) + "\n";
  }

  std::string ranked = "rank,i,j,weight\n";
  std::size_t rank = 1;
  for (const auto& e : s.network.ranked_edges())
    ranked += csv::join({std::to_string(rank++), e.i, e.j, std::to_string(e.weight)});

  const auto manifest = write_named_files(dir / "report",
                                          {{"power_shares.csv", shares},
                                           {"flagged_per_window.csv", per_window},
                                           {"criterion_bars.csv", criteria},
                                           {"power_incidence.csv", incidence},
                                           {"unknown_share.csv", unknown},
                                           {"cartel_edges_ranked.csv", ranked}},
                                          metadata_json(s.meta));
  if (!c.quiet)
    for (const auto& f : manifest.files) out << f.name << "," << f.sha256 << "\n";
  return 0;
}

// Dispatches a subcommand and maps exceptions onto exit codes.
inline int run_command(const RunConfig& c, std::ostream& out, std::ostream& err) {
  try {
    if (c.subcommand == "dist") return cmd_dist(c, out, err);
    if (c.subcommand == "detect") return cmd_detect(c, out, err);
    if (c.subcommand == "cartel") return cmd_cartel(c, out, err);
    if (c.subcommand == "cluster") return cmd_cluster(c, out, err);
    if (c.subcommand == "simulate") return cmd_simulate(c, out, err);
    if (c.subcommand == "report") return cmd_report(c, out, err);
    throw validation_error("unknown subcommand '" + c.subcommand + "'");
  } catch (const validation_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::Validation);
  } catch (const domain_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::Validation);
  } catch (const capacity_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::Validation);
  } catch (const io_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::Runtime);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::Runtime);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::Runtime);
  }
}

}  // namespace runwatch
