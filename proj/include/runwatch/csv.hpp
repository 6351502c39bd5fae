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

// Minimal RFC 4180 reader and writer.

#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "runwatch/error.hpp"

namespace runwatch::csv {

using Row = std::vector<std::string>;

// Reads one record, following quoted fields across line breaks. `line` is
// advanced by the number of physical lines consumed. Returns nullopt at EOF.
inline std::optional<Row> read_record(std::istream& in, std::size_t& line) {
  std::string text;
  if (!std::getline(in, text)) return std::nullopt;
  ++line;
  Row row;
  std::string field;
  bool quoted = false;
  std::size_t i = 0;
  for (;;) {
    if (i == text.size()) {
      if (quoted) {
        std::string more;
        if (!std::getline(in, more)) throw validation_error("line " + std::to_string(line) + ": unterminated quoted field");
        ++line;
        field += '\n';
        text = std::move(more);
        i = 0;
        continue;
      }
      break;
    }
    const char ch = text[i++];
    if (quoted) {
      if (ch == '"') {
        if (i < text.size() && text[i] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"' && field.empty()) {
      quoted = true;
    } else if (ch == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (ch == '\r' && i == text.size()) {
      // CRLF line ending
    } else {
      field += ch;
    }
  }
  row.push_back(std::move(field));
  return row;
}

inline std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline std::string join(const Row& row) {
  std::string out;
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (k) out += ',';
    out += escape(row[k]);
  }
  return out + "\n";
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline double parse_double(std::string_view s, std::size_t line, std::string_view column) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size() || !std::isfinite(v))
    throw validation_error("line " + std::to_string(line) + ": column '" + std::string(column) +
                           "' is not a finite number: '" + std::string(s) + "'");
  return v;
}

template <typename Int>
Int parse_int(std::string_view s, std::size_t line, std::string_view column) {
  Int v{};
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size())
    throw validation_error("line " + std::to_string(line) + ": column '" + std::string(column) +
                           "' is not an integer: '" + std::string(s) + "'");
  return v;
}

inline bool parse_bool(std::string_view s, std::size_t line, std::string_view column) {
  std::string lower(s);
  for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (lower == "true" || lower == "1") return true;
  if (lower == "false" || lower == "0") return false;
  throw validation_error("line " + std::to_string(line) + ": column '" + std::string(column) +
                         "' is not a boolean: '" + std::string(s) + "'");
}

// Header-indexed table reader.
class Table {
 public:
  explicit Table(std::istream& in) : in_(in) {
    auto header = read_record(in_, line_);
    if (!header) throw validation_error("missing header row");
    for (std::size_t k = 0; k < header->size(); ++k) columns_.emplace((*header)[k], k);
    width_ = header->size();
  }

  [[nodiscard]] bool has(const std::string& column) const { return columns_.count(column) != 0; }

  void require(std::initializer_list<const char*> names) const {
    for (const char* n : names)
      if (!has(n)) throw validation_error("missing required column '" + std::string(n) + "'");
  }

  // Advances to the next non-empty record.
  bool next() {
    for (;;) {
      auto row = read_record(in_, line_);
      if (!row) return false;
      if (row->size() == 1 && row->front().empty()) continue;
      if (row->size() != width_)
        throw validation_error("line " + std::to_string(line_) + ": expected " + std::to_string(width_) +
                               " fields, found " + std::to_string(row->size()));
      row_ = std::move(*row);
      return true;
    }
  }

  [[nodiscard]] const std::string& operator[](const std::string& column) const {
    auto it = columns_.find(column);
    if (it == columns_.end()) throw validation_error("missing column '" + column + "'");
    return row_[it->second];
  }

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
  std::size_t width_ = 0;
  std::map<std::string, std::size_t> columns_;
  Row row_;
};

}  // namespace runwatch::csv
