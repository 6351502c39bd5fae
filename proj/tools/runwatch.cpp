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

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "runwatch/commands.hpp"

namespace {

void add_global_flags(CLI::App* cmd, runwatch::RunConfig& c) {
  cmd->add_option("--input", c.input, "Input file (blocks or transactions)");
  cmd->add_option("--out", c.out, "Output directory (file for simulate)");
  cmd->add_option("--format", c.format, "Input/output format: csv or jsonl (default: from extension)");
  cmd->add_option("--policy", c.policy, "Window policy: monthly, weekly, daily, days:N, blocks:N");
  cmd->add_option("--coin", c.coin, "Coin ticker; selects the default window policy");
  cmd->add_option("--fdr", c.fdr, "Target false discovery rate")->capture_default_str();
  cmd->add_option("--min-blocks", c.min_blocks, "Minimum blocks per member for pair candidates")->capture_default_str();
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_option("--family", c.family, "Multiple-testing family: window or global")->capture_default_str();
  cmd->add_option("--threads", c.threads, "Worker threads for window tests")->capture_default_str();
  cmd->add_flag("--quiet", c.quiet, "Suppress summaries on standard output");
}

}  // namespace

int main(int argc, char** argv) {
  runwatch::RunConfig c;
  CLI::App app{"runwatch: consecutive-block run tests for selfish mining and cartels"};
  app.require_subcommand(1);
  app.set_version_flag("--version", runwatch::kVersion);

  auto* dist = app.add_subcommand("dist", "Dump the run-count pmf, tail and critical value");
  dist->add_option("--power", c.h, "Success probability, decimal or blocks/T")->capture_default_str();
  dist->add_option("-T,--length", c.length, "Sequence length")->capture_default_str();
  dist->add_option("--alpha", c.alpha_sig, "Significance level for c*")->capture_default_str();
  dist->add_option("--cache", c.cache_dir, "Directory for cached tables (h given as blocks/T)");
  add_global_flags(dist, c);

  auto* detect = app.add_subcommand("detect", "Per-window miner tests with FDR control");
  detect->add_flag("--debug-raw-bh", c.debug_raw_bh, "Also write unadjusted rank-scaled p-values");
  add_global_flags(detect, c);

  auto* cartel = app.add_subcommand("cartel", "Pairwise tests and cartel network");
  add_global_flags(cartel, c);

  auto* cluster = app.add_subcommand("cluster", "UTXO address clustering and pool tagging");
  cluster->add_option("--blocks", c.blocks, "Block file supplying named-pool addresses");
  cluster->add_option("--pools", c.pools, "CSV with columns pool,address of known pool addresses");
  add_global_flags(cluster, c);

  auto* simulate = app.add_subcommand("simulate", "Generate honest, selfish or cartel block files");
  simulate->add_option("--mode", c.mode, "honest, selfish or cartel")->capture_default_str();
  simulate->add_option("--alpha", c.alpha_pow, "Attacker hash share")->capture_default_str();
  simulate->add_option("--gamma", c.gamma, "Tie-break share of honest power on the attacker branch")
      ->capture_default_str();
  simulate->add_option("--horizon", c.horizon, "Canonical blocks per segment")->capture_default_str();
  simulate->add_option("--windows", c.windows, "Independently seeded segments")->capture_default_str();
  simulate->add_option("--honest", c.honest, "Number of honest miners")->capture_default_str();
  simulate->add_option("--shares", c.shares, "Cartel member shares")->delimiter(',');
  simulate->add_option("--attribution", c.attribution, "Cartel block credit: turns or finder")->capture_default_str();
  simulate->add_option("--start-time", c.start_time, "Timestamp of the first block")->capture_default_str();
  simulate->add_option("--block-time", c.block_time, "Seconds between blocks")->capture_default_str();
  add_global_flags(simulate, c);

  auto* report = app.add_subcommand("report", "Plot-ready tables from a result directory");
  report->add_option("--bins", c.power_edges, "Power bucket edges")->delimiter(',');
  add_global_flags(report, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(runwatch::ExitCode::Validation);
  }
  c.subcommand = app.get_subcommands().front()->get_name();
  return runwatch::run_command(c, std::cout, std::cerr);
}
