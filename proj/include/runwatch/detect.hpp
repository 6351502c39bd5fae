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

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <limits>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <future>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "runwatch/error.hpp"
#include "runwatch/runstat.hpp"

namespace runwatch {

// One mined block. `pool` is the named-pool tag when the dataset has one;
// the detection label falls back to the miner address when the pool is
// absent or reported as unknown.
struct BlockRecord {
  std::uint64_t height = 0;
  std::int64_t timestamp = 0;  // seconds since epoch, UTC
  std::string miner;
  std::string pool;

  [[nodiscard]] bool has_named_pool() const noexcept {
    return !pool.empty() && pool != "Unknown" && pool != "unknown";
  }
  [[nodiscard]] const std::string& label() const noexcept { return has_named_pool() ? pool : miner; }

  friend bool operator==(const BlockRecord&, const BlockRecord&) = default;
};

class WindowPolicy {
 public:
  enum class Kind { Monthly, Weekly, Days, FixedCount };

  static WindowPolicy monthly() { return {Kind::Monthly, 1}; }
  static WindowPolicy weekly() { return {Kind::Weekly, 7}; }
  static WindowPolicy days(std::size_t n) { return {Kind::Days, n}; }
  static WindowPolicy daily() { return days(1); }
  static WindowPolicy fixed_count(std::size_t n) { return {Kind::FixedCount, n}; }

  // Accepts "monthly", "weekly", "daily", "days:N" and "blocks:N".
  static WindowPolicy parse(std::string_view text) {
    auto number = [&](std::string_view digits) {
      std::size_t n = 0;
      if (digits.empty()) throw validation_error("window policy '" + std::string(text) + "' lacks a size");
      for (char ch : digits) {
        if (ch < '0' || ch > '9') throw validation_error("bad window policy size in '" + std::string(text) + "'");
        n = n * 10 + static_cast<std::size_t>(ch - '0');
      }
      if (n == 0) throw validation_error("window policy size must be positive");
      return n;
    };
    if (text == "monthly") return monthly();
    if (text == "weekly") return weekly();
    if (text == "daily") return daily();
    if (text.starts_with("days:")) return days(number(text.substr(5)));
    if (text.starts_with("blocks:")) return fixed_count(number(text.substr(7)));
    throw validation_error("unknown window policy '" + std::string(text) + "'");
  }

  // Default interval per coin, keyed by ticker.
  static std::optional<WindowPolicy> for_coin(std::string_view coin) {
    std::string c(coin);
    std::transform(c.begin(), c.end(), c.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (c == "btc" || c == "bch") return monthly();
    if (c == "ltc") return weekly();
    if (c == "mona") return days(5);
    if (c == "eth") return daily();
    return std::nullopt;
  }

  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  [[nodiscard]] std::size_t size() const noexcept { return n_; }

  [[nodiscard]] std::string to_string() const {
    switch (kind_) {
      case Kind::Monthly: return "monthly";
      case Kind::Weekly: return "weekly";
      case Kind::Days: return n_ == 1 ? "daily" : "days:" + std::to_string(n_);
      case Kind::FixedCount: return "blocks:" + std::to_string(n_);
    }
    return {};
  }

  friend bool operator==(const WindowPolicy&, const WindowPolicy&) = default;

 private:
  WindowPolicy(Kind k, std::size_t n) : kind_(k), n_(n) {}
  Kind kind_;
  std::size_t n_;
};

struct Window {
  std::size_t id = 0;
  std::string coin;
  std::string label;  // calendar start date or block range
  std::uint64_t first_height = 0;
  std::uint64_t last_height = 0;
  std::vector<std::string> sequence;

  [[nodiscard]] std::size_t length() const noexcept { return sequence.size(); }
};

namespace detail {

using std::chrono::days;
using std::chrono::sys_days;
using std::chrono::sys_seconds;

inline sys_days utc_day(std::int64_t ts) {
  return std::chrono::floor<days>(sys_seconds{std::chrono::seconds{ts}});
}

inline std::string iso_date(sys_days d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

// Calendar bucket key and the label of the bucket's first day.
inline std::pair<std::int64_t, std::string> calendar_bucket(const WindowPolicy& policy, std::int64_t ts) {
  const sys_days day = utc_day(ts);
  const std::int64_t n = day.time_since_epoch().count();
  switch (policy.kind()) {
    case WindowPolicy::Kind::Monthly: {
      const std::chrono::year_month_day ymd{day};
      const std::int64_t key = static_cast<int>(ymd.year()) * 12LL + static_cast<unsigned>(ymd.month()) - 1;
      return {key, iso_date(sys_days{ymd.year() / ymd.month() / 1}).substr(0, 7)};
    }
    case WindowPolicy::Kind::Weekly: {
      // 1970-01-01 was a Thursday; weeks start on Monday.
      const std::int64_t key = floor_div(n + 3, 7);
      return {key, iso_date(sys_days{days{key * 7 - 3}})};
    }
    case WindowPolicy::Kind::Days: {
      const auto len = static_cast<std::int64_t>(policy.size());
      const std::int64_t key = floor_div(n, len);
      return {key, iso_date(sys_days{days{key * len}})};
    }
    case WindowPolicy::Kind::FixedCount: break;
  }
  throw domain_error("calendar_bucket called with a fixed-count policy");
}

}  // namespace detail

// Partition a height-ordered block stream into windows. Calendar buckets
// are evaluated on the running maximum of timestamps so that windows stay
// contiguous when block times are slightly out of order.
inline std::vector<Window> split_windows(std::span<const BlockRecord> blocks, const WindowPolicy& policy,
                                         const std::string& coin = {}) {
  for (std::size_t i = 1; i < blocks.size(); ++i) {
    if (blocks[i].height <= blocks[i - 1].height)
      throw validation_error("block heights not strictly increasing at height " +
                             std::to_string(blocks[i].height));
  }
  std::vector<Window> out;
  auto open = [&](const BlockRecord& b, std::string label) {
    Window w;
    w.id = out.size();
    w.coin = coin;
    w.label = std::move(label);
    w.first_height = b.height;
    out.push_back(std::move(w));
  };

  if (policy.kind() == WindowPolicy::Kind::FixedCount) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (i % policy.size() == 0) {
        const std::size_t end = std::min(blocks.size(), i + policy.size());
        open(blocks[i], "blocks[" + std::to_string(i) + "," + std::to_string(end) + ")");
      }
      out.back().sequence.push_back(blocks[i].label());
      out.back().last_height = blocks[i].height;
    }
    return out;
  }

  std::optional<std::int64_t> current;
  std::int64_t clock = std::numeric_limits<std::int64_t>::min();
  for (const auto& b : blocks) {
    clock = std::max(clock, b.timestamp);
    auto [key, label] = detail::calendar_bucket(policy, clock);
    if (!current || key != *current) {
      open(b, std::move(label));
      current = key;
    }
    out.back().sequence.push_back(b.label());
    out.back().last_height = b.height;
  }
  return out;
}

// Overlapping count of adjacent positions both mined by `miner`.
inline std::size_t count_runs(const Window& window, std::string_view miner) {
  std::size_t c = 0;
  const auto& s = window.sequence;
  for (std::size_t t = 1; t < s.size(); ++t)
    if (s[t] == miner && s[t - 1] == miner) ++c;
  return c;
}

inline double estimate_power(const Window& window, std::string_view miner) {
  if (window.sequence.empty()) return 0.0;
  const auto n = std::count(window.sequence.begin(), window.sequence.end(), miner);
  return static_cast<double>(n) / static_cast<double>(window.length());
}

// Benjamini-Hochberg step-up adjustment. Output keeps the input order.
inline std::vector<double> bh_adjust(std::span<const double> pvalues) {
  const std::size_t m = pvalues.size();
  for (double p : pvalues) detail::check_probability(p, "p-value");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pvalues[a] < pvalues[b]; });
  std::vector<double> adjusted(m);
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const double p = pvalues[order[r]];
    // m / (r + 1) >= 1; the guards only absorb rounding in the product.
    const double raw =
        r + 1 == m ? p : std::max(p, p * static_cast<double>(m) / static_cast<double>(r + 1));
    running = std::min(running, raw);
    adjusted[order[r]] = std::min(running, 1.0);
  }
  return adjusted;
}

// The bare rank scaling p_(k) * m / k, with neither the suffix minimum nor
// the cap at one. Debug output only.
inline std::vector<double> bh_raw(std::span<const double> pvalues) {
  const std::size_t m = pvalues.size();
  for (double p : pvalues) detail::check_probability(p, "p-value");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pvalues[a] < pvalues[b]; });
  std::vector<double> out(m);
  for (std::size_t r = 0; r < m; ++r)
    out[order[r]] = pvalues[order[r]] * static_cast<double>(m) / static_cast<double>(r + 1);
  return out;
}

// Number of rejections at level `fdr`: the largest k whose adjusted value
// is below the level.
inline std::size_t bh_rejections(std::span<const double> adjusted, double fdr) {
  return static_cast<std::size_t>(
      std::count_if(adjusted.begin(), adjusted.end(), [&](double p) { return p < fdr; }));
}

struct MinerWindowResult {
  std::string miner;
  std::size_t window = 0;
  std::size_t blocks = 0;
  std::size_t length = 0;  // T
  double h_hat = 0.0;
  std::size_t c = 0;
  double p = 1.0;
  double p_adj = 1.0;
  bool flagged = false;

  friend bool operator==(const MinerWindowResult&, const MinerWindowResult&) = default;
};

namespace detail {

inline void check_fdr(double fdr) {
  if (!(fdr > 0.0 && fdr <= 1.0)) throw domain_error("fdr must lie in (0, 1], got " + std::to_string(fdr));
}

struct MinerTally {
  std::size_t blocks = 0;
  std::size_t runs = 0;
};

inline std::map<std::string, MinerTally> tally(const Window& window) {
  std::map<std::string, MinerTally> out;
  const auto& s = window.sequence;
  for (std::size_t t = 0; t < s.size(); ++t) {
    auto& m = out[s[t]];
    ++m.blocks;
    if (t > 0 && s[t - 1] == s[t]) ++m.runs;
  }
  return out;
}

inline void apply_adjustment(std::span<MinerWindowResult> results, double fdr) {
  std::vector<double> raw;
  raw.reserve(results.size());
  for (const auto& r : results) raw.push_back(r.p);
  const auto adj = bh_adjust(raw);
  for (std::size_t k = 0; k < results.size(); ++k) {
    results[k].p_adj = adj[k];
    results[k].flagged = adj[k] < fdr;
  }
}

// Raw per-miner statistics of one window, without multiple-testing
// adjustment. Miners are ordered by label.
inline std::vector<MinerWindowResult> raw_window_results(const Window& window) {
  std::vector<MinerWindowResult> out;
  const std::size_t T = window.length();
  for (const auto& [miner, t] : tally(window)) {
    MinerWindowResult r;
    r.miner = miner;
    r.window = window.id;
    r.blocks = t.blocks;
    r.length = T;
    r.h_hat = static_cast<double>(t.blocks) / static_cast<double>(T);
    r.c = t.runs;
    r.p = p_value(r.h_hat, T, r.c);
    r.p_adj = r.p;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace detail

// Test every miner of one window against its own plug-in power, with one BH
// family per window. Windows shorter than two blocks yield no results.
inline std::vector<MinerWindowResult> test_window(const Window& window, double fdr) {
  detail::check_fdr(fdr);
  if (window.length() < 2) return {};
  auto out = detail::raw_window_results(window);
  detail::apply_adjustment(out, fdr);
  return out;
}

enum class FamilyScope { Window, Global };

inline FamilyScope parse_family(std::string_view s) {
  if (s == "window") return FamilyScope::Window;
  if (s == "global") return FamilyScope::Global;
  throw validation_error("unknown family scope '" + std::string(s) + "'");
}

struct DetectOptions {
  double fdr = 0.05;
  FamilyScope family = FamilyScope::Window;
  unsigned threads = 1;
};

struct DetectionReport {
  std::vector<MinerWindowResult> results;  // ordered by (window id, miner)
  std::vector<std::string> notices;
};

// Runs test_window over all windows. Windows are processed independently
// (optionally on several threads) and merged in window order.
inline DetectionReport detect_windows(std::span<const Window> windows, const DetectOptions& opt = {}) {
  detail::check_fdr(opt.fdr);
  DetectionReport report;
  std::vector<std::vector<MinerWindowResult>> per(windows.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t w = begin; w < windows.size(); w += step)
      if (windows[w].length() >= 2) per[w] = detail::raw_window_results(windows[w]);
  };
  const unsigned threads = std::max(1U, opt.threads);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::future<void>> jobs;
    for (unsigned t = 0; t < threads; ++t) jobs.push_back(std::async(std::launch::async, work, t, threads));
    for (auto& j : jobs) j.get();
  }
  for (std::size_t w = 0; w < windows.size(); ++w) {
    if (windows[w].length() < 2) {
      report.notices.push_back("window " + std::to_string(windows[w].id) + " (" + windows[w].label +
                               ") skipped: T = " + std::to_string(windows[w].length()) + " < 2");
      continue;
    }
    if (opt.family == FamilyScope::Window) detail::apply_adjustment(per[w], opt.fdr);
    for (auto& r : per[w]) report.results.push_back(std::move(r));
  }
  if (opt.family == FamilyScope::Global) detail::apply_adjustment(report.results, opt.fdr);
  return report;
}

// Sample quantile with linear interpolation between order statistics
// (h = (n-1) q). `sorted` must be ascending and non-empty.
inline double quantile_linear(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw domain_error("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

struct MinerSummary {
  std::string miner;
  std::size_t active_windows = 0;
  double p_min = 1.0;
  double p_q1 = 1.0;
  double p_median = 1.0;
  double p_q3 = 1.0;
  double p_max = 1.0;
  double flagged_fraction = 0.0;
  double mean_h = 0.0;

  friend bool operator==(const MinerSummary&, const MinerSummary&) = default;
};

inline std::vector<MinerSummary> summarize_miners(std::span<const MinerWindowResult> results, double fdr = 0.05) {
  std::map<std::string, std::vector<const MinerWindowResult*>> by_miner;
  for (const auto& r : results) by_miner[r.miner].push_back(&r);
  std::vector<MinerSummary> out;
  for (const auto& [miner, rows] : by_miner) {
    std::vector<double> ps;
    CompensatedSum h;
    std::size_t flagged = 0;
    for (const auto* r : rows) {
      ps.push_back(r->p_adj);
      h.add(r->h_hat);
      if (r->p_adj < fdr) ++flagged;
    }
    std::sort(ps.begin(), ps.end());
    MinerSummary s;
    s.miner = miner;
    s.active_windows = rows.size();
    s.p_min = ps.front();
    s.p_q1 = quantile_linear(ps, 0.25);
    s.p_median = quantile_linear(ps, 0.5);
    s.p_q3 = quantile_linear(ps, 0.75);
    s.p_max = ps.back();
    s.flagged_fraction = static_cast<double>(flagged) / static_cast<double>(rows.size());
    s.mean_h = h.value() / static_cast<double>(rows.size());
    out.push_back(std::move(s));
  }
  return out;
}

// Share of miners meeting each abnormality criterion. The quantile reading
// counts a miner under a bar when that quantile of its adjusted p-values is
// below the level; the fraction reading counts it when at least that share
// of its active windows is flagged.
struct CriterionBars {
  std::size_t miners = 0;
  // min, q1, median, q3, max
  std::array<double, 5> by_quantile{};
  // any window, >=25%, >=50%, >=75%, all windows
  std::array<double, 5> by_fraction{};

  static constexpr std::array<const char*, 5> kQuantileNames{"min", "q25", "q50", "q75", "max"};
  static constexpr std::array<const char*, 5> kFractionNames{"any", "at_least_25", "at_least_50",
                                                             "at_least_75", "all"};
};

inline CriterionBars criterion_bars(std::span<const MinerSummary> summaries, double fdr = 0.05) {
  CriterionBars bars;
  bars.miners = summaries.size();
  if (summaries.empty()) return bars;
  constexpr std::array<double, 5> shares{0.0, 0.25, 0.5, 0.75, 1.0};
  for (const auto& s : summaries) {
    const std::array<double, 5> qs{s.p_min, s.p_q1, s.p_median, s.p_q3, s.p_max};
    for (std::size_t k = 0; k < 5; ++k) {
      if (qs[k] < fdr) bars.by_quantile[k] += 1.0;
      const bool meets = k == 0 ? s.flagged_fraction > 0.0 : s.flagged_fraction >= shares[k] - 1e-12;
      if (meets) bars.by_fraction[k] += 1.0;
    }
  }
  for (std::size_t k = 0; k < 5; ++k) {
    bars.by_quantile[k] /= static_cast<double>(summaries.size());
    bars.by_fraction[k] /= static_cast<double>(summaries.size());
  }
  return bars;
}

struct PowerBucketStat {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t observations = 0;
  std::size_t abnormal = 0;
  std::optional<double> abnormal_fraction;  // absent for empty bins

  friend bool operator==(const PowerBucketStat&, const PowerBucketStat&) = default;
};

inline std::vector<double> default_power_edges() {
  return {0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.40, 0.50, 1.0};
}

// Groups miner-window observations into [e_i, e_{i+1}). A final edge of
// exactly 1 also admits h_hat = 1 so that sole-miner windows are counted.
inline std::vector<PowerBucketStat> power_profile(std::span<const MinerWindowResult> results,
                                                  std::span<const double> edges, double fdr = 0.05) {
  if (edges.size() < 2) throw domain_error("power_profile needs at least two bin edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    detail::check_probability(edges[i], "bin edge");
    if (i > 0 && !(edges[i] > edges[i - 1])) throw domain_error("bin edges must be strictly increasing");
  }
  std::vector<PowerBucketStat> out(edges.size() - 1);
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    out[b].lo = edges[b];
    out[b].hi = edges[b + 1];
  }
  for (const auto& r : results) {
    auto it = std::upper_bound(edges.begin(), edges.end(), r.h_hat);
    std::size_t b;
    if (it == edges.begin()) continue;
    if (it == edges.end()) {
      if (r.h_hat == edges.back() && edges.back() == 1.0)
        b = out.size() - 1;
      else
        continue;
    } else {
      b = static_cast<std::size_t>(it - edges.begin()) - 1;
    }
    ++out[b].observations;
    if (r.p_adj < fdr) ++out[b].abnormal;
  }
  for (auto& s : out)
    if (s.observations > 0)
      s.abnormal_fraction = static_cast<double>(s.abnormal) / static_cast<double>(s.observations);
  return out;
}

}  // namespace runwatch
