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
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "runwatch/commands.hpp"

using namespace runwatch;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("runwatch_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Outcome {
  int code = -1;
  std::string out;
};

// Runs the installed binary through the shell; stderr is discarded.
Outcome run_cli(const std::string& args) {
  Outcome r;
  const std::string cmd = std::string(RUNWATCH_CLI) + " " + args + " 2>/dev/null";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

int run(RunConfig c, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = run_command(c, o, e);
  if (out) *out = o.str();
  return code;
}

}  // namespace

TEST(CmdDist, SmallTableAndCriticalValue) {
  RunConfig c;
  c.subcommand = "dist";
  c.h = "0.3";
  c.length = 6;
  std::string out;
  ASSERT_EQ(run(c, &out), 0);
  std::istringstream lines(out);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "x,pmf,tail");
  std::getline(lines, line);
  EXPECT_TRUE(line.starts_with("0,0.67330")) << line;
  EXPECT_TRUE(line.ends_with(",1")) << line;
  EXPECT_NE(out.find("\nc*="), std::string::npos);

  c.h = "1500/5000";
  c.length = 5000;
  ASSERT_EQ(run(c, &out), 0);
  EXPECT_TRUE(out.ends_with("c*=491\n"));
}

TEST(CmdDist, CacheIsReused) {
  const auto dir = scratch("dist_cache");
  RunConfig c;
  c.subcommand = "dist";
  c.h = "30/100";
  c.length = 100;
  c.cache_dir = dir.string();
  std::string first, second;
  ASSERT_EQ(run(c, &first), 0);
  EXPECT_TRUE(fs::exists(dir / "runcount_30_100.csv"));
  ASSERT_EQ(run(c, &second), 0);
  EXPECT_EQ(first, second);
  fs::remove_all(dir);
}

TEST(CmdDist, DomainErrors) {
  RunConfig c;
  c.subcommand = "dist";
  c.h = "1.5";
  EXPECT_EQ(run(c), 2);
  c.h = "7/5";
  EXPECT_EQ(run(c), 2);
  c.h = "abc";
  EXPECT_EQ(run(c), 2);
}

TEST(CmdDetect, EmptyBlockFileIsClean) {
  const auto dir = scratch("empty");
  std::ofstream(dir / "blocks.csv") << "height,timestamp,miner\n";
  RunConfig c;
  c.subcommand = "detect";
  c.input = (dir / "blocks.csv").string();
  c.out = (dir / "out").string();
  ASSERT_EQ(run(c), 0);
  EXPECT_EQ(slurp(dir / "out" / "miner_results.csv"), "window,miner,blocks,T,h_hat,c,p,p_adj,flagged\n");
  EXPECT_TRUE(fs::exists(dir / "out" / "manifest.json"));

  RunConfig r;
  r.subcommand = "report";
  r.out = c.out;
  ASSERT_EQ(run(r), 0);
  EXPECT_EQ(slurp(dir / "out" / "report" / "cartel_edges_ranked.csv"), "rank,i,j,weight\n");
  EXPECT_EQ(slurp(dir / "out" / "report" / "criterion_bars.csv"), "reading,criterion,fraction_of_miners\n");
  fs::remove_all(dir);
}

TEST(CmdCluster, FixtureAndEthRejection) {
  const auto dir = scratch("cluster");
  RunConfig c;
  c.subcommand = "cluster";
  c.input = (fs::path(RUNWATCH_FIXTURES) / "cluster_txs.csv").string();
  c.blocks = (fs::path(RUNWATCH_FIXTURES) / "cluster_blocks.csv").string();
  c.out = dir.string();
  std::string out;
  ASSERT_EQ(run(c, &out), 0);
  EXPECT_EQ(slurp(dir / "tags.csv"), slurp(fs::path(RUNWATCH_FIXTURES) / "cluster_expected_tags.csv"));
  EXPECT_NE(out.find("H1,3\nH2,1\nHp,1\n"), std::string::npos) << out;
  EXPECT_NE(out.find("before,0.5\nafter,0.16666666666666666\n"), std::string::npos) << out;

  RunConfig r;
  r.subcommand = "report";
  r.out = dir.string();
  r.input = c.blocks;
  ASSERT_EQ(run(r), 0);
  EXPECT_EQ(slurp(dir / "report" / "unknown_share.csv"), "stage,unknown_share\nbefore,0.5\nafter,0.16666666666666666\n");

  c.coin = "eth";
  EXPECT_EQ(run(c), 2);
  fs::remove_all(dir);
}

TEST(Binary, ExitCodes) {
  const auto dir = scratch("codes");
  EXPECT_EQ(run_cli("dist --power 0.3 -T 10").code, 0);
  EXPECT_EQ(run_cli("dist --power 2 -T 10").code, 2);
  EXPECT_EQ(run_cli("detect --input /nonexistent/blocks.csv --out " + dir.string()).code, 1);
  EXPECT_EQ(run_cli("frobnicate").code, 2);
  EXPECT_EQ(run_cli("detect --fdr 1.5 --input x.csv --out " + dir.string()).code, 2);
  std::ofstream(dir / "bad.csv") << "height,timestamp,miner\n2,0,a\n1,0,b\n";
  EXPECT_EQ(run_cli("detect --input " + (dir / "bad.csv").string() + " --out " + (dir / "o").string()).code, 2);
  EXPECT_EQ(run_cli("--version").code, 0);
  fs::remove_all(dir);
}

TEST(Binary, SimulateThenDetectFindsAttacker) {
  const auto dir = scratch("loop");
  const auto blocks = (dir / "sim.csv").string();
  ASSERT_EQ(run_cli("simulate --mode selfish --alpha 0.35 --gamma 0.5 --horizon 5000 --windows 3 --seed 11 --out " +
                    blocks)
                .code,
            0);
  ASSERT_EQ(run_cli("detect --policy blocks:5000 --threads 2 --input " + blocks + " --out " + (dir / "r").string())
                .code,
            0);
  const auto results = slurp(dir / "r" / "miner_results.csv");
  std::istringstream in(results);
  std::string line;
  std::size_t attacker_rows = 0, attacker_flags = 0;
  while (std::getline(in, line)) {
    if (line.find(",attacker,") == std::string::npos) continue;
    ++attacker_rows;
    attacker_flags += line.ends_with(",true");
  }
  EXPECT_EQ(attacker_rows, 3u);
  EXPECT_EQ(attacker_flags, 3u);
  fs::remove_all(dir);
}

TEST(Binary, JsonlSimulationAndCartelOutputs) {
  const auto dir = scratch("cartel");
  const auto blocks = (dir / "sim.jsonl").string();
  ASSERT_EQ(run_cli("simulate --mode cartel --shares 0.15,0.15 --horizon 5000 --windows 2 --seed 3 --out " + blocks).code,
            0);
  const auto r = run_cli("cartel --policy blocks:5000 --input " + blocks + " --out " + (dir / "r").string());
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(r.out.starts_with("i,j,weight\ncartel_a,cartel_b,")) << r.out;
  EXPECT_TRUE(fs::exists(dir / "r" / "cartel.dot"));
  EXPECT_EQ(run_cli("simulate --mode cartel --attribution sometimes --out " + blocks).code, 2);
  fs::remove_all(dir);
}
