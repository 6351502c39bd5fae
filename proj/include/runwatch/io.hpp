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

// Block and transaction file parsing, result persistence with a digest
// manifest, and an on-disk cache of run-count tables.

#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "runwatch/cartel.hpp"
#include "runwatch/cluster.hpp"
#include "runwatch/csv.hpp"
#include "runwatch/detect.hpp"
#include "runwatch/error.hpp"
#include "runwatch/runstat.hpp"
#include "runwatch/version.hpp"

namespace runwatch {

enum class FileFormat { Csv, Jsonl };

inline FileFormat parse_format(std::string_view s) {
  if (s == "csv") return FileFormat::Csv;
  if (s == "jsonl") return FileFormat::Jsonl;
  throw validation_error("unknown file format '" + std::string(s) + "' (expected csv or jsonl)");
}

// Guess from the extension; CSV otherwise.
inline FileFormat format_for_path(const std::filesystem::path& p) {
  return p.extension() == ".jsonl" ? FileFormat::Jsonl : FileFormat::Csv;
}

namespace detail {

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path.string() + "' for reading");
  return in;
}

inline void check_block(const BlockRecord& b, std::optional<std::uint64_t> prev, std::size_t line) {
  if (b.miner.empty() && !b.has_named_pool())
    throw validation_error("line " + std::to_string(line) + ": empty miner label");
  if (prev && b.height == *prev)
    throw validation_error("line " + std::to_string(line) + ": duplicate height " + std::to_string(b.height));
  if (prev && b.height < *prev)
    throw validation_error("line " + std::to_string(line) + ": height " + std::to_string(b.height) +
                           " is lower than previous height " + std::to_string(*prev));
}

template <typename T>
T json_field(const nlohmann::json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw validation_error("line " + std::to_string(line) + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw validation_error("line " + std::to_string(line) + ": field '" + key + "' has the wrong type");
  }
}

inline nlohmann::json parse_json_line(const std::string& text, std::size_t line) {
  try {
    auto j = nlohmann::json::parse(text);
    if (!j.is_object()) throw validation_error("line " + std::to_string(line) + ": expected a JSON object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw validation_error("line " + std::to_string(line) + ": " + e.what());
  }
}

inline bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace detail

// Block file: columns height, timestamp, miner and optionally pool.
// Records are validated to be in strictly increasing height order.
inline std::vector<BlockRecord> parse_blocks(std::istream& in, FileFormat format) {
  std::vector<BlockRecord> out;
  std::optional<std::uint64_t> prev;
  if (format == FileFormat::Csv) {
    csv::Table table(in);
    table.require({"height", "timestamp", "miner"});
    const bool with_pool = table.has("pool");
    while (table.next()) {
      BlockRecord b;
      b.height = csv::parse_int<std::uint64_t>(table["height"], table.line(), "height");
      b.timestamp = csv::parse_int<std::int64_t>(table["timestamp"], table.line(), "timestamp");
      b.miner = table["miner"];
      if (with_pool) b.pool = table["pool"];
      detail::check_block(b, prev, table.line());
      prev = b.height;
      out.push_back(std::move(b));
    }
    return out;
  }
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (detail::blank(text)) continue;
    const auto j = detail::parse_json_line(text, line);
    BlockRecord b;
    b.height = detail::json_field<std::uint64_t>(j, "height", line);
    b.timestamp = detail::json_field<std::int64_t>(j, "timestamp", line);
    b.miner = detail::json_field<std::string>(j, "miner", line);
    if (auto it = j.find("pool"); it != j.end() && !it->is_null()) b.pool = detail::json_field<std::string>(j, "pool", line);
    detail::check_block(b, prev, line);
    prev = b.height;
    out.push_back(std::move(b));
  }
  return out;
}

inline std::vector<BlockRecord> parse_blocks(const std::filesystem::path& path, FileFormat format) {
  auto in = detail::open_input(path);
  return parse_blocks(in, format);
}

inline std::string format_blocks(std::span<const BlockRecord> blocks, FileFormat format = FileFormat::Csv) {
  const bool with_pool = std::any_of(blocks.begin(), blocks.end(), [](const BlockRecord& b) { return !b.pool.empty(); });
  std::string out;
  if (format == FileFormat::Jsonl) {
    for (const auto& b : blocks) {
      nlohmann::ordered_json j{{"height", b.height}, {"timestamp", b.timestamp}, {"miner", b.miner}};
      if (!b.pool.empty()) j["pool"] = b.pool;
      out += j.dump() + "\n";
    }
    return out;
  }
  out = with_pool ? "height,timestamp,miner,pool\n" : "height,timestamp,miner\n";
  for (const auto& b : blocks) {
    csv::Row row{std::to_string(b.height), std::to_string(b.timestamp), b.miner};
    if (with_pool) row.push_back(b.pool);
    out += csv::join(row);
  }
  return out;
}

namespace detail {

inline std::pair<std::string, std::uint64_t> split_entry(std::string_view entry, std::size_t line) {
  const auto colon = entry.rfind(':');
  if (colon == std::string_view::npos || colon == 0)
    throw validation_error("line " + std::to_string(line) + ": expected address:amount, got '" + std::string(entry) + "'");
  return {std::string(entry.substr(0, colon)), csv::parse_int<std::uint64_t>(entry.substr(colon + 1), line, "amount")};
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline void check_transaction(const Transaction& tx, std::size_t line) {
  if (tx.id.empty()) throw validation_error("line " + std::to_string(line) + ": empty transaction id");
  if (tx.is_coinbase && !tx.inputs.empty())
    throw validation_error("line " + std::to_string(line) + ": coinbase transaction '" + tx.id + "' has inputs");
}

}  // namespace detail

// Transaction file. CSV columns: id, is_coinbase, inputs and outputs as
// "address:amount;..." lists, and an optional spent_by column with one
// (possibly empty) spending transaction id per output. JSONL objects carry
// the same fields with inputs/outputs as arrays of {address, amount,
// spent_by?}.
inline std::vector<Transaction> parse_transactions(std::istream& in, FileFormat format) {
  std::vector<Transaction> out;
  std::map<std::string, std::size_t> seen;
  auto finish = [&](Transaction tx, std::size_t line) {
    detail::check_transaction(tx, line);
    if (!seen.emplace(tx.id, line).second)
      throw validation_error("line " + std::to_string(line) + ": duplicate transaction id '" + tx.id + "'");
    out.push_back(std::move(tx));
  };

  if (format == FileFormat::Csv) {
    csv::Table table(in);
    table.require({"id", "is_coinbase", "inputs", "outputs"});
    const bool with_spends = table.has("spent_by");
    while (table.next()) {
      const std::size_t line = table.line();
      Transaction tx;
      tx.id = table["id"];
      tx.is_coinbase = csv::parse_bool(table["is_coinbase"], line, "is_coinbase");
      for (const auto& e : detail::split(table["inputs"], ';')) {
        auto [a, v] = detail::split_entry(e, line);
        tx.inputs.push_back({std::move(a), v});
      }
      for (const auto& e : detail::split(table["outputs"], ';')) {
        auto [a, v] = detail::split_entry(e, line);
        tx.outputs.push_back({std::move(a), v, std::nullopt});
      }
      if (with_spends && !table["spent_by"].empty()) {
        const auto refs = detail::split(table["spent_by"], ';');
        if (refs.size() != tx.outputs.size())
          throw validation_error("line " + std::to_string(line) + ": spent_by has " + std::to_string(refs.size()) +
                                 " entries for " + std::to_string(tx.outputs.size()) + " outputs");
        for (std::size_t k = 0; k < refs.size(); ++k)
          if (!refs[k].empty()) tx.outputs[k].spent_by = refs[k];
      }
      finish(std::move(tx), line);
    }
    return out;
  }

  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (detail::blank(text)) continue;
    const auto j = detail::parse_json_line(text, line);
    Transaction tx;
    tx.id = detail::json_field<std::string>(j, "id", line);
    tx.is_coinbase = j.value("is_coinbase", false);
    for (const auto& e : detail::json_field<nlohmann::json>(j, "inputs", line))
      tx.inputs.push_back({detail::json_field<std::string>(e, "address", line),
                           detail::json_field<std::uint64_t>(e, "amount", line)});
    for (const auto& e : detail::json_field<nlohmann::json>(j, "outputs", line)) {
      TxOutput o{detail::json_field<std::string>(e, "address", line),
                 detail::json_field<std::uint64_t>(e, "amount", line), std::nullopt};
      if (auto it = e.find("spent_by"); it != e.end() && !it->is_null()) o.spent_by = it->get<std::string>();
      tx.outputs.push_back(std::move(o));
    }
    finish(std::move(tx), line);
  }
  return out;
}

inline std::vector<Transaction> parse_transactions(const std::filesystem::path& path, FileFormat format) {
  auto in = detail::open_input(path);
  return parse_transactions(in, format);
}

// ---------------------------------------------------------------------------
// Result store

struct RunMetadata {
  std::string coin;
  std::string policy;
  std::string family = "window";
  double fdr = 0.05;
  std::size_t min_blocks = kDefaultMinBlocks;
  std::uint64_t seed = 0;
  std::string tool_version = kVersion;

  friend bool operator==(const RunMetadata&, const RunMetadata&) = default;
};

struct WindowRow {
  std::size_t id = 0;
  std::string coin;
  std::string label;
  std::uint64_t first_height = 0;
  std::uint64_t last_height = 0;
  std::size_t length = 0;
  std::size_t miners = 0;
  std::size_t flagged = 0;

  friend bool operator==(const WindowRow&, const WindowRow&) = default;
};

struct ClusterRow {
  std::string address;
  std::string cluster_id;

  friend bool operator==(const ClusterRow&, const ClusterRow&) = default;
};

struct TagRow {
  std::string address;
  std::string pool;
  std::string provenance;

  friend bool operator==(const TagRow&, const TagRow&) = default;
};

struct ResultStore {
  RunMetadata meta;
  std::vector<WindowRow> windows;
  std::vector<MinerWindowResult> miner_results;
  std::vector<MinerSummary> summaries;
  std::vector<PowerBucketStat> power;
  std::vector<PairWindowResult> pairs;
  CartelNetwork network;
  std::vector<ClusterRow> clusters;
  std::vector<TagRow> tags;

  friend bool operator==(const ResultStore&, const ResultStore&) = default;
};

inline std::vector<WindowRow> describe_windows(std::span<const Window> windows,
                                               std::span<const MinerWindowResult> results) {
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> counts;  // id -> (miners, flagged)
  for (const auto& r : results) {
    auto& c = counts[r.window];
    ++c.first;
    c.second += r.flagged;
  }
  std::vector<WindowRow> out;
  for (const auto& w : windows) {
    WindowRow row{w.id, w.coin, w.label, w.first_height, w.last_height, w.length(), 0, 0};
    if (auto it = counts.find(w.id); it != counts.end()) std::tie(row.miners, row.flagged) = it->second;
    out.push_back(std::move(row));
  }
  return out;
}

inline std::vector<ClusterRow> cluster_rows(const AddressPartition& partition) {
  std::vector<ClusterRow> out;
  for (const auto& [a, id] : partition.cluster_ids()) out.push_back({a, id});
  return out;
}

inline std::vector<TagRow> tag_rows(const PoolTagMap& tags) {
  std::map<std::string, TagRow> rows;
  for (const auto& [a, t] : tags.tags) rows[a] = {a, t.pool, t.provenance};
  for (const auto& a : tags.unknown) rows[a] = {a, "Unknown", ""};
  std::vector<TagRow> out;
  for (auto& [a, r] : rows) out.push_back(std::move(r));
  return out;
}

struct ManifestEntry {
  std::string name;
  std::string sha256;
  std::size_t bytes = 0;
};

struct Manifest {
  std::vector<ManifestEntry> files;
  std::string json;  // serialized manifest.json
};

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw io_error("SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[digest[k] >> 4];
    out += hex[digest[k] & 0xF];
  }
  return out;
}

namespace detail {

using csv::format_double;

inline std::string flag(bool b) { return b ? "true" : "false"; }

inline std::string windows_csv(const ResultStore& s) {
  std::string out = "window,coin,label,first_height,last_height,T,miners,flagged\n";
  for (const auto& w : s.windows)
    out += csv::join({std::to_string(w.id), w.coin, w.label, std::to_string(w.first_height),
                      std::to_string(w.last_height), std::to_string(w.length), std::to_string(w.miners),
                      std::to_string(w.flagged)});
  return out;
}

inline std::string miner_results_csv(const ResultStore& s) {
  std::string out = "window,miner,blocks,T,h_hat,c,p,p_adj,flagged\n";
  for (const auto& r : s.miner_results)
    out += csv::join({std::to_string(r.window), r.miner, std::to_string(r.blocks), std::to_string(r.length),
                      format_double(r.h_hat), std::to_string(r.c), format_double(r.p), format_double(r.p_adj),
                      flag(r.flagged)});
  return out;
}

inline std::string summary_csv(const ResultStore& s) {
  std::string out = "miner,active_windows,p_min,p_q1,p_median,p_q3,p_max,flagged_fraction,mean_h\n";
  for (const auto& m : s.summaries)
    out += csv::join({m.miner, std::to_string(m.active_windows), format_double(m.p_min), format_double(m.p_q1),
                      format_double(m.p_median), format_double(m.p_q3), format_double(m.p_max),
                      format_double(m.flagged_fraction), format_double(m.mean_h)});
  return out;
}

inline std::string power_csv(const ResultStore& s) {
  std::string out = "lo,hi,observations,abnormal,abnormal_fraction\n";
  for (const auto& b : s.power)
    out += csv::join({format_double(b.lo), format_double(b.hi), std::to_string(b.observations),
                      std::to_string(b.abnormal), b.abnormal_fraction ? format_double(*b.abnormal_fraction) : ""});
  return out;
}

inline std::string pairs_csv(const ResultStore& s) {
  std::string out = "window,miner_i,miner_j,blocks_i,blocks_j,c_pair,c_cross,h_pair,p,p_adj,is_cartel\n";
  for (const auto& r : s.pairs)
    out += csv::join({std::to_string(r.window), r.miner_i, r.miner_j, std::to_string(r.blocks_i),
                      std::to_string(r.blocks_j), std::to_string(r.c_pair), std::to_string(r.c_cross),
                      format_double(r.h_pair), format_double(r.p), format_double(r.p_adj), flag(r.is_cartel)});
  return out;
}

inline std::string edges_csv(const CartelNetwork& n) {
  std::string out = "i,j,weight\n";
  for (const auto& e : n.edges) out += csv::join({e.i, e.j, std::to_string(e.weight)});
  return out;
}

inline std::string nodes_csv(const CartelNetwork& n) {
  std::string out = "miner,mean_power,degree\n";
  for (const auto& v : n.nodes) out += csv::join({v.miner, format_double(v.mean_power), std::to_string(v.degree)});
  return out;
}

inline std::string clusters_csv(const ResultStore& s) {
  std::string out = "address,cluster_id\n";
  for (const auto& c : s.clusters) out += csv::join({c.address, c.cluster_id});
  return out;
}

inline std::string tags_csv(const ResultStore& s) {
  std::string out = "address,pool,provenance\n";
  for (const auto& t : s.tags) out += csv::join({t.address, t.pool, t.provenance});
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open '" + path.string() + "' for writing");
  out << content;
  out.close();
  if (!out) throw io_error("failed writing '" + path.string() + "'");
}

inline void validate_store(const ResultStore& s) {
  std::set<std::size_t> ids;
  for (const auto& w : s.windows) ids.insert(w.id);
  for (const auto& r : s.miner_results)
    if (!ids.count(r.window))
      throw validation_error("miner result for '" + r.miner + "' references unknown window " + std::to_string(r.window));
  for (const auto& r : s.pairs)
    if (!ids.count(r.window))
      throw validation_error("pair result references unknown window " + std::to_string(r.window));
}

}  // namespace detail

// Writes the store as a fixed set of files plus manifest.json holding a
// SHA-256 digest per file. Output is a pure function of the store.
inline Manifest write_named_files(const std::filesystem::path& out_dir,
                                  const std::vector<std::pair<std::string, std::string>>& files,
                                  const nlohmann::ordered_json& metadata) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw io_error("cannot create output directory '" + out_dir.string() + "': " + ec.message());
  Manifest m;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& [name, content] : files) {
    detail::write_file(out_dir / name, content);
    ManifestEntry e{name, sha256_hex(content), content.size()};
    list.push_back({{"name", e.name}, {"sha256", e.sha256}, {"bytes", e.bytes}});
    m.files.push_back(std::move(e));
  }
  nlohmann::ordered_json doc;
  doc["tool"] = "runwatch";
  doc["metadata"] = metadata;
  doc["files"] = std::move(list);
  m.json = doc.dump(2) + "\n";
  detail::write_file(out_dir / "manifest.json", m.json);
  return m;
}

inline nlohmann::ordered_json metadata_json(const RunMetadata& meta) {
  return {{"coin", meta.coin},     {"policy", meta.policy},         {"family", meta.family},
          {"fdr", meta.fdr},       {"min_blocks", meta.min_blocks}, {"seed", meta.seed},
          {"version", meta.tool_version}};
}

inline Manifest write_results(const ResultStore& store, const std::filesystem::path& out_dir) {
  detail::validate_store(store);
  const std::vector<std::pair<std::string, std::string>> files{
      {"windows.csv", detail::windows_csv(store)},
      {"miner_results.csv", detail::miner_results_csv(store)},
      {"miner_summary.csv", detail::summary_csv(store)},
      {"power_profile.csv", detail::power_csv(store)},
      {"pair_results.csv", detail::pairs_csv(store)},
      {"cartel_edges.csv", detail::edges_csv(store.network)},
      {"cartel_nodes.csv", detail::nodes_csv(store.network)},
      {"clusters.csv", detail::clusters_csv(store)},
      {"tags.csv", detail::tags_csv(store)},
  };
  return write_named_files(out_dir, files, metadata_json(store.meta));
}

// Loads a directory written by write_results. Missing files read as empty.
inline ResultStore read_results(const std::filesystem::path& dir) {
  ResultStore s;
  auto each = [&](const char* name, auto&& fn) {
    const auto path = dir / name;
    if (!std::filesystem::exists(path)) return;
    auto in = detail::open_input(path);
    try {
      csv::Table t(in);
      while (t.next()) fn(t);
    } catch (const validation_error& e) {
      throw validation_error(std::string(name) + ": " + e.what());
    }
  };
  using csv::parse_double;
  using csv::parse_int;
  const auto manifest = dir / "manifest.json";
  if (std::filesystem::exists(manifest)) {
    auto in = detail::open_input(manifest);
    try {
      const auto j = nlohmann::json::parse(in);
      const auto& m = j.at("metadata");
      s.meta.coin = m.value("coin", "");
      s.meta.policy = m.value("policy", "");
      s.meta.family = m.value("family", "window");
      s.meta.fdr = m.value("fdr", 0.05);
      s.meta.min_blocks = m.value("min_blocks", kDefaultMinBlocks);
      s.meta.seed = m.value("seed", std::uint64_t{0});
      s.meta.tool_version = m.value("version", std::string(kVersion));
    } catch (const nlohmann::json::exception& e) {
      throw validation_error("manifest.json: " + std::string(e.what()));
    }
  }
  each("windows.csv", [&](const csv::Table& t) {
    const auto l = t.line();
    s.windows.push_back({parse_int<std::size_t>(t["window"], l, "window"), t["coin"], t["label"],
                         parse_int<std::uint64_t>(t["first_height"], l, "first_height"),
                         parse_int<std::uint64_t>(t["last_height"], l, "last_height"),
                         parse_int<std::size_t>(t["T"], l, "T"), parse_int<std::size_t>(t["miners"], l, "miners"),
                         parse_int<std::size_t>(t["flagged"], l, "flagged")});
  });
  each("miner_results.csv", [&](const csv::Table& t) {
    const auto l = t.line();
    s.miner_results.push_back({t["miner"], parse_int<std::size_t>(t["window"], l, "window"),
                               parse_int<std::size_t>(t["blocks"], l, "blocks"), parse_int<std::size_t>(t["T"], l, "T"),
                               parse_double(t["h_hat"], l, "h_hat"), parse_int<std::size_t>(t["c"], l, "c"),
                               parse_double(t["p"], l, "p"), parse_double(t["p_adj"], l, "p_adj"),
                               csv::parse_bool(t["flagged"], l, "flagged")});
  });
  each("miner_summary.csv", [&](const csv::Table& t) {
    const auto l = t.line();
    s.summaries.push_back({t["miner"], parse_int<std::size_t>(t["active_windows"], l, "active_windows"),
                           parse_double(t["p_min"], l, "p_min"), parse_double(t["p_q1"], l, "p_q1"),
                           parse_double(t["p_median"], l, "p_median"), parse_double(t["p_q3"], l, "p_q3"),
                           parse_double(t["p_max"], l, "p_max"),
                           parse_double(t["flagged_fraction"], l, "flagged_fraction"),
                           parse_double(t["mean_h"], l, "mean_h")});
  });
  each("power_profile.csv", [&](const csv::Table& t) {
    const auto l = t.line();
    PowerBucketStat b{parse_double(t["lo"], l, "lo"), parse_double(t["hi"], l, "hi"),
                      parse_int<std::size_t>(t["observations"], l, "observations"),
                      parse_int<std::size_t>(t["abnormal"], l, "abnormal"), std::nullopt};
    if (!t["abnormal_fraction"].empty()) b.abnormal_fraction = parse_double(t["abnormal_fraction"], l, "abnormal_fraction");
    s.power.push_back(b);
  });
  each("pair_results.csv", [&](const csv::Table& t) {
    const auto l = t.line();
    s.pairs.push_back({t["miner_i"], t["miner_j"], parse_int<std::size_t>(t["window"], l, "window"),
                       parse_int<std::size_t>(t["blocks_i"], l, "blocks_i"),
                       parse_int<std::size_t>(t["blocks_j"], l, "blocks_j"),
                       parse_int<std::size_t>(t["c_pair"], l, "c_pair"), parse_int<std::size_t>(t["c_cross"], l, "c_cross"),
                       parse_double(t["h_pair"], l, "h_pair"), parse_double(t["p"], l, "p"),
                       parse_double(t["p_adj"], l, "p_adj"), csv::parse_bool(t["is_cartel"], l, "is_cartel")});
  });
  each("cartel_edges.csv", [&](const csv::Table& t) {
    s.network.edges.push_back({t["i"], t["j"], parse_int<std::size_t>(t["weight"], t.line(), "weight")});
  });
  each("cartel_nodes.csv", [&](const csv::Table& t) {
    const auto l = t.line();
    s.network.nodes.push_back({t["miner"], parse_double(t["mean_power"], l, "mean_power"),
                               parse_int<std::size_t>(t["degree"], l, "degree")});
  });
  each("clusters.csv", [&](const csv::Table& t) { s.clusters.push_back({t["address"], t["cluster_id"]}); });
  each("tags.csv", [&](const csv::Table& t) { s.tags.push_back({t["address"], t["pool"], t["provenance"]}); });
  return s;
}

// Run-count tables keyed by the exact plug-in power (blocks / T, T),
// memoized in memory and optionally persisted under a directory. Tables read
// from disk are checked against normalization before use.
class DistributionCache {
 public:
  DistributionCache() = default;
  explicit DistributionCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const RunCountDistribution& get(std::size_t blocks, std::size_t T) {
    if (blocks > T) throw domain_error("blocks exceed window length");
    std::lock_guard lock(mutex_);
    const auto key = std::make_pair(blocks, T);
    if (auto it = tables_.find(key); it != tables_.end()) return it->second;
    const double h = T == 0 ? 0.0 : static_cast<double>(blocks) / static_cast<double>(T);
    std::optional<RunCountDistribution> dist;
    if (!dir_.empty()) {
      const auto path = file_for(blocks, T);
      if (std::filesystem::exists(path)) dist = load(path, h, T);
    }
    if (!dist) {
      dist = LingTable(h).distribution(T);
      if (!dir_.empty()) save(*dist, file_for(blocks, T));
    }
    return tables_.emplace(key, std::move(*dist)).first->second;
  }

  [[nodiscard]] std::filesystem::path file_for(std::size_t blocks, std::size_t T) const {
    return dir_ / ("runcount_" + std::to_string(blocks) + "_" + std::to_string(T) + ".csv");
  }

  static RunCountDistribution load(const std::filesystem::path& path, double h, std::size_t T) {
    auto in = detail::open_input(path);
    csv::Table t(in);
    t.require({"x", "pmf"});
    std::vector<double> pmf;
    while (t.next()) {
      const auto x = csv::parse_int<std::size_t>(t["x"], t.line(), "x");
      if (x != pmf.size()) throw validation_error(path.string() + ": non-contiguous x at line " + std::to_string(t.line()));
      pmf.push_back(csv::parse_double(t["pmf"], t.line(), "pmf"));
    }
    if (pmf.size() != detail::max_count(T) + 1)
      throw validation_error(path.string() + ": table has " + std::to_string(pmf.size()) + " entries, expected " +
                             std::to_string(detail::max_count(T) + 1));
    RunCountDistribution d(h, T, std::move(pmf));
    if (std::abs(d.total() - 1.0) > 1e-9) throw validation_error(path.string() + ": table is not normalized");
    return d;
  }

  static void save(const RunCountDistribution& d, const std::filesystem::path& path) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    std::string out = "x,pmf\n";
    for (std::size_t x = 0; x < d.size(); ++x) out += std::to_string(x) + "," + csv::format_double(d[x]) + "\n";
    detail::write_file(path, out);
  }

 private:
  std::filesystem::path dir_;
  std::mutex mutex_;
  std::map<std::pair<std::size_t, std::size_t>, RunCountDistribution> tables_;
};

}  // namespace runwatch
