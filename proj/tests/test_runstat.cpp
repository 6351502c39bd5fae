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

#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "oracles.hpp"
#include "runwatch/runstat.hpp"

using namespace runwatch;

namespace {

const std::vector<double> kGrid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

}  // namespace

TEST(PmfLing, TrivialBranches) {
  EXPECT_DOUBLE_EQ(pmf_ling(1.0, 3, 2), 1.0);
  EXPECT_DOUBLE_EQ(pmf_ling(0.0, 5, 0), 1.0);
  EXPECT_DOUBLE_EQ(pmf_ling(0.0, 5, 3), 0.0);
  EXPECT_DOUBLE_EQ(pmf_ling(0.2, 1, 0), 1.0);
  EXPECT_DOUBLE_EQ(pmf_ling(0.2, 0, 0), 1.0);
}

TEST(PmfLing, EnumeratedSmallCases) {
  // Enumeration of the 8 (16) binary sequences of length 3 (4).
  EXPECT_NEAR(pmf_ling(0.5, 3, 1), 0.25, 1e-15);
  EXPECT_NEAR(pmf_ling(0.5, 3, 0), 0.625, 1e-15);
  EXPECT_NEAR(pmf_ling(0.5, 4, 0), 0.5, 1e-15);
  EXPECT_NEAR(pmf_ling(0.5, 4, 1), 0.3125, 1e-15);
}

TEST(PmfLing, DomainErrorsNameTheParameter) {
  try {
    (void)pmf_ling(1.2, 3, 0);
    FAIL();
  } catch (const runwatch::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("h"), std::string::npos);
  }
  try {
    (void)pmf_ling(0.5, 3, 3);
    FAIL();
  } catch (const runwatch::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("x"), std::string::npos);
  }
  EXPECT_THROW((void)pmf_ling(-0.1, 3, 0), runwatch::domain_error);
  EXPECT_THROW((void)pmf_ling(std::nan(""), 3, 0), runwatch::domain_error);
}

TEST(PmfLing, AgreesWithLiteralTopDownRecursion) {
  for (double h : {0.05, 0.3, 0.5, 0.77, 0.95}) {
    oracle::LingLiteral literal(h);
    for (long T = 0; T <= 30; ++T) {
      const auto d = distribution_ling(h, static_cast<std::size_t>(T));
      for (long x = 0; x < static_cast<long>(d.size()); ++x)
        ASSERT_NEAR(d[static_cast<std::size_t>(x)], literal(T, x), 1e-13) << "h=" << h << " T=" << T << " x=" << x;
    }
  }
}

TEST(PmfLing, FrozenEnumerationAtPointThree) {
  // Exact rational enumeration of all 64 sequences of length 6 at h = 3/10.
  const std::vector<double> expected{0.673309, 0.231084, 0.072765, 0.018711, 0.003402, 0.000729};
  const auto d = distribution_ling(0.3, 6);
  ASSERT_EQ(d.size(), expected.size());
  for (std::size_t x = 0; x < expected.size(); ++x) EXPECT_NEAR(d[x], expected[x], 1e-15);
}

TEST(PmfLing, RepeatedQueriesReuseTable) {
  LingTable table(0.4);
  const auto& a = table.row(200);
  const auto& b = table.row(200);
  EXPECT_EQ(&a, &b);
  EXPECT_DOUBLE_EQ(table.pmf(200, 10), a[10]);
}

TEST(PmfLing, ConcurrentReadersSeeIdenticalTables) {
  LingTable table(0.27);
  std::vector<std::vector<double>> seen(4);
  std::vector<std::thread> workers;
  for (std::size_t k = 0; k < seen.size(); ++k)
    workers.emplace_back([&, k] { seen[k] = table.row(700); });
  for (auto& w : workers) w.join();
  for (const auto& s : seen) EXPECT_EQ(s, seen.front());
}

TEST(PmfChain, EnumeratedTable) {
  const auto d = pmf_chain(0.5, 3);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_NEAR(d[0], 0.625, 1e-15);
  EXPECT_NEAR(d[1], 0.25, 1e-15);
  EXPECT_NEAR(d[2], 0.125, 1e-15);
  const auto z = pmf_chain(0.0, 10);
  EXPECT_DOUBLE_EQ(z[0], 1.0);
  for (std::size_t x = 1; x < z.size(); ++x) EXPECT_DOUBLE_EQ(z[x], 0.0);
}

TEST(PmfChain, ModeMovesRightWithPower) {
  EXPECT_GT(pmf_chain(0.3, 100).mode(), pmf_chain(0.1, 100).mode());
}

TEST(Bruteforce, Tables) {
  const auto a = enumerate_bruteforce(0.5, 3);
  EXPECT_EQ(std::vector<double>(a.pmf().begin(), a.pmf().end()), (std::vector<double>{0.625, 0.25, 0.125}));
  const auto b = enumerate_bruteforce(0.5, 4);
  EXPECT_EQ(std::vector<double>(b.pmf().begin(), b.pmf().end()), (std::vector<double>{0.5, 0.3125, 0.125, 0.0625}));
  const auto c = enumerate_bruteforce(0.2, 1);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_DOUBLE_EQ(c[0], 1.0);
  EXPECT_THROW((void)enumerate_bruteforce(0.5, 21), runwatch::capacity_error);
}

TEST(Bruteforce, GroupSizesAtHalf) {
  // At h = 1/2 every sequence has weight 2^-T, so pmf * 2^T is the group size.
  for (int T = 1; T <= 14; ++T) {
    const auto counts = oracle::sequence_counts_by_runs(T);
    const auto d = enumerate_bruteforce(0.5, static_cast<std::size_t>(T));
    for (std::size_t x = 0; x < d.size(); ++x) EXPECT_DOUBLE_EQ(d[x] * std::ldexp(1.0, T), counts[x]);
  }
}

TEST(Properties, OracleTriangle) {
  for (std::size_t T = 2; T <= 12; ++T) {
    for (double h : kGrid) {
      const auto a = distribution_ling(h, T);
      const auto b = pmf_chain(h, T);
      const auto c = enumerate_bruteforce(h, T);
      for (std::size_t x = 0; x < a.size(); ++x) {
        EXPECT_NEAR(a[x], b[x], 1e-12);
        EXPECT_NEAR(a[x], c[x], 1e-12);
        EXPECT_NEAR(pmf_ling(h, T, x), a[x], 0.0);
      }
    }
  }
}

TEST(Properties, LingAndChainAgreeOnLongSequences) {
  for (double h : {0.01, 0.1, 0.35, 0.8}) {
    const auto a = distribution_ling(h, 1500);
    const auto b = pmf_chain(h, 1500);
    for (std::size_t x = 0; x < a.size(); ++x) ASSERT_NEAR(a[x], b[x], 1e-12) << h << " " << x;
  }
}

TEST(Properties, BoundaryBranchesAndRange) {
  for (double h : {0.05, 0.5, 0.93}) {
    for (std::size_t T : {2u, 3u, 7u, 40u}) {
      const auto d = distribution_ling(h, T);
      EXPECT_NEAR(d[T - 1], std::pow(h, T), 1e-12);
      if (T >= 3) { EXPECT_NEAR(d[T - 2], 2.0 * std::pow(h, T - 1) * (1.0 - h), 1e-12); }
      for (double v : d.pmf()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
      EXPECT_NEAR(d.total(), 1.0, 1e-9);
    }
  }
}

TEST(Properties, MeanMatchesClosedForm) {
  // E[runs] = (T - 1) h^2 by linearity over the T-1 adjacent pairs.
  for (double h : {0.1, 0.25, 0.6}) {
    for (std::size_t T : {10u, 500u, 3000u}) EXPECT_NEAR(distribution_ling(h, T).mean(), (T - 1) * h * h, 1e-8);
  }
}

TEST(Properties, ModeNonDecreasingInPower) {
  std::size_t prev = 0;
  for (double h : kGrid) {
    const auto m = distribution_ling(h, 100).mode();
    EXPECT_GE(m, prev) << "h=" << h;
    prev = m;
  }
}

TEST(PValue, Examples) {
  EXPECT_NEAR(p_value(0.5, 3, 1), 0.375, 1e-15);
  EXPECT_DOUBLE_EQ(p_value(0.5, 3, 0), 1.0);
  EXPECT_DOUBLE_EQ(p_value(0.123, 977, 0), 1.0);
  EXPECT_DOUBLE_EQ(p_value(1.0, 3, 2), 1.0);
  EXPECT_DOUBLE_EQ(p_value(0.0, 3, 1), 0.0);
  EXPECT_DOUBLE_EQ(p_value(0.4, 1, 0), 1.0);
  EXPECT_THROW((void)p_value(0.5, 3, 3), runwatch::domain_error);
}

TEST(PValue, MatchesFullTableTail) {
  for (double h : {0.03, 0.3, 0.7}) {
    const auto d = distribution_ling(h, 800);
    for (std::size_t c : {1u, 5u, 40u, 200u, 560u, 799u}) EXPECT_DOUBLE_EQ(p_value(h, 800, c), d.tail(c));
  }
}

TEST(PValue, MonotoneInCountAndPower) {
  const std::size_t T = 300;
  for (double h : kGrid) {
    double prev = 1.0;
    for (std::size_t c = 0; c < T; c += 7) {
      const double p = p_value(h, T, c);
      EXPECT_LE(p, prev + 1e-15);
      prev = p;
    }
  }
  for (std::size_t c : {1u, 10u, 50u, 120u}) {
    double prev = 0.0;
    for (double h : kGrid) {
      const double p = p_value(h, T, c);
      EXPECT_GE(p, prev - 1e-15) << "c=" << c << " h=" << h;
      prev = p;
    }
  }
}

TEST(CriticalCount, Examples) {
  EXPECT_EQ(critical_count(0.30, 5000, 0.05), 491u);
  EXPECT_EQ(critical_count(1.0, 10, 0.05), 9u);
  EXPECT_EQ(critical_count(0.5, 3, 0.5), 0u);
  EXPECT_EQ(critical_count(0.0, 10, 0.05), 0u);
  EXPECT_THROW((void)critical_count(0.3, 10, 0.0), runwatch::domain_error);
  EXPECT_THROW((void)critical_count(0.3, 10, 1.0), runwatch::domain_error);
}

TEST(CriticalCount, SeparatesSignificantCounts) {
  for (double h : {0.05, 0.2, 0.45}) {
    const std::size_t T = 2000;
    const auto c = critical_count(h, T, 0.05);
    EXPECT_GT(p_value(h, T, c), 0.05);
    EXPECT_LE(p_value(h, T, c + 1), 0.05);
  }
}

TEST(SampleRuncount, DegenerateAndDeterministic) {
  EXPECT_EQ(sample_runcount(0.0, 100, 5, 1), (std::vector<std::size_t>(5, 0)));
  EXPECT_EQ(sample_runcount(1.0, 10, 3, 2), (std::vector<std::size_t>{9, 9, 9}));
  EXPECT_EQ(sample_runcount(0.3, 200, 50, 9), sample_runcount(0.3, 200, 50, 9));
  EXPECT_NE(sample_runcount(0.3, 200, 50, 9), sample_runcount(0.3, 200, 50, 10));
  EXPECT_THROW((void)sample_runcount(0.3, 10, 0, 1), runwatch::domain_error);
}

TEST(SampleRuncount, MeanWithinThreeStandardErrors) {
  const double h = 0.25;
  const std::size_t T = 5000, n = 20000;
  const auto d = pmf_chain(h, T);
  const double mean = d.mean();
  double var = 0.0;
  for (std::size_t x = 0; x < d.size(); ++x) var += (x - mean) * (x - mean) * d[x];
  const auto s = sample_runcount(h, T, n, 7);
  const double emp = std::accumulate(s.begin(), s.end(), 0.0) / n;
  EXPECT_LT(std::abs(emp - mean), 3.0 * std::sqrt(var / n));
}
