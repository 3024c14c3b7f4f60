/*
 * Copyright 2026 The PPS Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "pps/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>

#include "pps/error.hpp"

namespace pps::csv {

namespace {

std::string where(std::string_view stream, std::size_t line, std::size_t col) {
  return std::string(stream) + ":" + std::to_string(line) + ":" + std::to_string(col);
}

}  // namespace

std::size_t Table::column(std::string_view name, std::string_view stream) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw Error("MalformedRow", where(stream, 1, 0) + " missing column '" + std::string(name) + "'");
}

Table parse(std::string_view text, std::string_view stream) {
  Table table;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t record_line = 1;

  const auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
    // Skip blank lines entirely.
    if (!(record.size() == 1 && record[0].empty())) {
      if (table.header.empty() && table.rows.empty()) {
        table.header = std::move(record);
      } else {
        table.rows.push_back(std::move(record));
      }
    }
    record.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty()) {
          throw Error("MalformedRow", where(stream, line, record.size() + 1) + " stray quote");
        }
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        record_line = line;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) {
    throw Error("MalformedRow", where(stream, record_line, record.size() + 1) + " unterminated quote");
  }
  if (!field.empty() || !record.empty()) end_record();
  return table;
}

double to_double(std::string_view field, std::string_view stream, std::size_t line, std::size_t col) {
  double v = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [p, ec] = std::from_chars(first, last, v);
  if (field.empty() || ec != std::errc{} || p != last || !std::isfinite(v)) {
    throw Error("MalformedRow",
                where(stream, line, col) + " expected a number, got '" + std::string(field) + "'");
  }
  return v;
}

std::int64_t to_int(std::string_view field, std::string_view stream, std::size_t line, std::size_t col) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || ec != std::errc{} || p != field.data() + field.size()) {
    throw Error("MalformedRow",
                where(stream, line, col) + " expected an integer, got '" + std::string(field) + "'");
  }
  return v;
}

std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

Writer::Writer(const std::vector<std::string>& header) : width_(header.size()) { row(header); }

void Writer::row(const std::vector<std::string>& fields) {
  if (fields.size() != width_) {
    throw Error("MalformedRow", "writer row has " + std::to_string(fields.size()) +
                                    " fields, expected " + std::to_string(width_));
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_.push_back(',');
    out_ += quote(fields[i]);
  }
  out_.push_back('\n');
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), p);
}

}  // namespace pps::csv
