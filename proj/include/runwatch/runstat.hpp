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

// Distribution of the number of overlapping success runs of length two
// ("type II binomial of order 2") in a sequence of T Bernoulli(h) trials.
//
// A run is an adjacent index pair (t, t+1) where both trials succeed, so a
// streak of L successes contributes L-1 runs. For T < 2 the count is
// identically zero.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "runwatch/error.hpp"

namespace runwatch {

// Neumaier compensated accumulator.
class CompensatedSum {
 public:
  void add(double v) noexcept {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

namespace detail {

inline void check_probability(double h, const char* name) {
  if (!(h >= 0.0 && h <= 1.0))
    throw domain_error(std::string(name) + " must lie in [0, 1], got " + std::to_string(h));
}

// Largest admissible run count for a sequence of length T.
constexpr std::size_t max_count(std::size_t T) noexcept { return T < 2 ? 0 : T - 1; }

inline void check_count(std::size_t T, std::size_t x, const char* name) {
  if (x > max_count(T))
    throw domain_error(std::string(name) + " = " + std::to_string(x) + " exceeds max(T-1, 0) = " +
                       std::to_string(max_count(T)) + " for T = " + std::to_string(T));
}

// Rows of the Ling recursion, evaluated bottom-up over the sequence length
// with every (T', x') subproblem below the requested row memoized in rolling
// buffers. Only entries x' < limit are produced.
//
// The third branch of the recursion,
//   P(T, x) = sum_{j=1}^{x+2} h^{j-1} (1-h) P(T-j, x - max(0, j-2)),
// splits into the j = 1 term (1-h) P(T-1, x) plus a diagonal sum
//   D(T, x) = sum_{j=2}^{x+2} h^{j-1} (1-h) P(T-j, x+2-j),
// which satisfies D(T, x) = h (1-h) P(T-2, x) + h D(T-1, x-1). Carrying D
// alongside P makes each entry O(1) instead of O(x).
inline std::vector<double> ling_row(double h, std::size_t T, std::size_t limit) {
  const double q = 1.0 - h;
  auto at = [](const std::vector<double>& r, std::size_t x) { return x < r.size() ? r[x] : 0.0; };

  std::vector<double> p1, p2, d1;  // P(t-1,.), P(t-2,.), D(t-1,.)
  std::vector<double> cur, dcur;
  for (std::size_t t = 0; t <= T; ++t) {
    const std::size_t width = std::min<std::size_t>(t < 2 ? 1 : t, limit);
    cur.assign(width, 0.0);
    dcur.assign(width, 0.0);
    if (t < 2) {
      if (width > 0) cur[0] = 1.0;
    } else {
      for (std::size_t x = 0; x < width; ++x) {
        dcur[x] = h * q * at(p2, x) + (x > 0 ? h * at(d1, x - 1) : 0.0);
        if (x == t - 1)
          cur[x] = std::pow(h, static_cast<double>(t));
        else if (x == t - 2 && x > 0)
          cur[x] = 2.0 * std::pow(h, static_cast<double>(t - 1)) * q;
        else
          cur[x] = q * at(p1, x) + dcur[x];
      }
    }
    p2 = std::move(p1);
    p1 = cur;
    d1 = std::move(dcur);
  }
  return p1;
}

// Point mass tables for the degenerate success probabilities.
inline std::vector<double> degenerate_row(double h, std::size_t T) {
  std::vector<double> row(max_count(T) + 1, 0.0);
  row[h == 1.0 ? max_count(T) : 0] = 1.0;
  return row;
}

}  // namespace detail

// Exact probability table of the run count for one (h, T). Immutable.
class RunCountDistribution {
 public:
  RunCountDistribution(double h, std::size_t T, std::vector<double> pmf)
      : h_(h), length_(T), pmf_(std::move(pmf)) {
    if (pmf_.size() != detail::max_count(T) + 1)
      throw domain_error("pmf table size does not match sequence length");
  }

  [[nodiscard]] double h() const noexcept { return h_; }
  [[nodiscard]] std::size_t length() const noexcept { return length_; }
  [[nodiscard]] std::span<const double> pmf() const noexcept { return pmf_; }
  [[nodiscard]] std::size_t size() const noexcept { return pmf_.size(); }
  [[nodiscard]] double operator[](std::size_t x) const { return pmf_.at(x); }

  [[nodiscard]] double total() const noexcept {
    CompensatedSum s;
    for (double v : pmf_) s.add(v);
    return s.value();
  }

  [[nodiscard]] double mean() const noexcept {
    CompensatedSum s;
    for (std::size_t x = 0; x < pmf_.size(); ++x) s.add(static_cast<double>(x) * pmf_[x]);
    return s.value();
  }

  // First index of the largest entry.
  [[nodiscard]] std::size_t mode() const noexcept {
    return static_cast<std::size_t>(std::max_element(pmf_.begin(), pmf_.end()) - pmf_.begin());
  }

  // P(X >= c) = 1 - sum_{x<c} pmf[x], clamped to [0, 1].
  [[nodiscard]] double tail(std::size_t c) const {
    detail::check_count(length_, c, "c");
    if (c == 0) return 1.0;
    CompensatedSum s;
    for (std::size_t x = 0; x < c; ++x) s.add(pmf_[x]);
    return std::clamp(1.0 - s.value(), 0.0, 1.0);
  }

 private:
  double h_;
  std::size_t length_;
  std::vector<double> pmf_;
};

// Memoizing evaluator of the Ling recursion for one success probability.
// Completed rows are cached per length; safe for concurrent readers.
class LingTable {
 public:
  explicit LingTable(double h) : h_(h) { detail::check_probability(h, "h"); }

  [[nodiscard]] double h() const noexcept { return h_; }

  [[nodiscard]] const std::vector<double>& row(std::size_t T) const {
    std::lock_guard lock(*mutex_);
    auto it = rows_.find(T);
    if (it == rows_.end()) {
      std::vector<double> r = (h_ == 0.0 || h_ == 1.0)
                                  ? detail::degenerate_row(h_, T)
                                  : detail::ling_row(h_, T, detail::max_count(T) + 1);
      it = rows_.emplace(T, std::move(r)).first;
    }
    return it->second;
  }

  [[nodiscard]] double pmf(std::size_t T, std::size_t x) const {
    detail::check_count(T, x, "x");
    return row(T)[x];
  }

  [[nodiscard]] RunCountDistribution distribution(std::size_t T) const { return {h_, T, row(T)}; }

 private:
  double h_;
  mutable std::unique_ptr<std::mutex> mutex_ = std::make_unique<std::mutex>();
  mutable std::map<std::size_t, std::vector<double>> rows_;
};

// P(c^(T) = x) by the Ling recursion. Repeated queries with the same h on
// one thread reuse the memoized table.
inline double pmf_ling(double h, std::size_t T, std::size_t x) {
  detail::check_probability(h, "h");
  detail::check_count(T, x, "x");
  thread_local std::unique_ptr<LingTable> cache;
  if (!cache || cache->h() != h) cache = std::make_unique<LingTable>(h);
  return cache->pmf(T, x);
}

inline RunCountDistribution distribution_ling(double h, std::size_t T) {
  return LingTable(h).distribution(T);
}

// Position-by-position dynamic program over (run count so far, last outcome).
// Structurally independent of the Ling recursion; used as a cross-check.
inline RunCountDistribution pmf_chain(double h, std::size_t T) {
  detail::check_probability(h, "h");
  const std::size_t n = detail::max_count(T) + 1;
  if (T < 2) return {h, T, std::vector<double>(1, 1.0)};
  const double q = 1.0 - h;
  // ends_fail[k], ends_succ[k]: P(k runs so far, last trial failed / succeeded)
  std::vector<double> ends_fail(n, 0.0), ends_succ(n, 0.0);
  std::vector<double> next_fail(n), next_succ(n);
  ends_fail[0] = q;
  ends_succ[0] = h;
  for (std::size_t t = 1; t < T; ++t) {
    const std::size_t reach = std::min(t, n - 1);  // at most t runs after t+1 trials
    for (std::size_t k = 0; k <= reach; ++k) {
      next_fail[k] = (ends_fail[k] + ends_succ[k]) * q;
      next_succ[k] = ends_fail[k] * h + (k > 0 ? ends_succ[k - 1] * h : 0.0);
    }
    std::copy_n(next_fail.begin(), reach + 1, ends_fail.begin());
    std::copy_n(next_succ.begin(), reach + 1, ends_succ.begin());
  }
  std::vector<double> pmf(n);
  for (std::size_t k = 0; k < n; ++k) pmf[k] = ends_fail[k] + ends_succ[k];
  return {h, T, std::move(pmf)};
}

inline constexpr std::size_t kBruteForceMaxLength = 20;

// Exhaustive sum over all 2^T outcome sequences.
inline RunCountDistribution enumerate_bruteforce(double h, std::size_t T) {
  detail::check_probability(h, "h");
  if (T > kBruteForceMaxLength)
    throw capacity_error("enumerate_bruteforce: T = " + std::to_string(T) + " exceeds " +
                         std::to_string(kBruteForceMaxLength));
  std::vector<double> pmf(detail::max_count(T) + 1, 0.0);
  const std::uint32_t total = std::uint32_t{1} << T;
  for (std::uint32_t mask = 0; mask < total; ++mask) {
    std::size_t runs = 0;
    int ones = 0;
    for (std::size_t t = 0; t < T; ++t) {
      const bool s = (mask >> t) & 1U;
      ones += s;
      if (s && t + 1 < T && ((mask >> (t + 1)) & 1U)) ++runs;
    }
    pmf[runs] += std::pow(h, ones) * std::pow(1.0 - h, static_cast<int>(T) - ones);
  }
  return {h, T, std::move(pmf)};
}

// P(X >= c) under Bernoulli(h), T trials: 1 - sum_{x<c} P(X = x).
// Only the rows x' < c of the recursion are evaluated, so the cost is
// O(T * c) rather than O(T^2).
inline double p_value(double h, std::size_t T, std::size_t c) {
  detail::check_probability(h, "h");
  detail::check_count(T, c, "c");
  if (c == 0) return 1.0;
  if (h == 0.0) return 0.0;
  if (h == 1.0) return 1.0;
  const auto lower = detail::ling_row(h, T, c);
  CompensatedSum s;
  for (double v : lower) s.add(v);
  return std::clamp(1.0 - s.value(), 0.0, 1.0);
}

// Largest c* with p_value(h, T, c*) > alpha_sig. An observed count is
// significant iff it is strictly greater than c*. Since p_value(.., 0) = 1,
// the result is always defined.
inline std::size_t critical_count(double h, std::size_t T, double alpha_sig) {
  detail::check_probability(h, "h");
  if (!(alpha_sig > 0.0 && alpha_sig < 1.0))
    throw domain_error("alpha_sig must lie in (0, 1), got " + std::to_string(alpha_sig));
  if (h == 0.0) return 0;
  if (h == 1.0) return detail::max_count(T);
  const LingTable table(h);
  const auto& row = table.row(T);
  CompensatedSum lower;
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c) {
    lower.add(row[c - 1]);
    if (std::clamp(1.0 - lower.value(), 0.0, 1.0) > alpha_sig)
      best = c;
    else
      break;
  }
  return best;
}

// n simulated run counts of i.i.d. Bernoulli(h) sequences of length T.
inline std::vector<std::size_t> sample_runcount(double h, std::size_t T, std::size_t n,
                                                std::uint64_t seed) {
  detail::check_probability(h, "h");
  if (n < 1) throw domain_error("sample_runcount: n must be at least 1");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution trial(h);
  std::vector<std::size_t> counts(n, 0);
  for (auto& count : counts) {
    bool prev = false;
    for (std::size_t t = 0; t < T; ++t) {
      const bool cur = trial(rng);
      if (cur && prev) ++count;
      prev = cur;
    }
  }
  return counts;
}

}  // namespace runwatch
