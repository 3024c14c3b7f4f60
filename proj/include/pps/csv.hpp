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

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pps::csv {

// A header row plus data rows. Line numbers are 1-based and count the header,
// so row i of `rows` came from line i + 2.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column; throws MalformedRow naming `stream` when absent.
  std::size_t column(std::string_view name, std::string_view stream) const;
};

// RFC 4180 reader: quoted fields, doubled quotes, CRLF or LF line endings.
// Throws Error("MalformedRow") with the line number on unterminated quotes.
Table parse(std::string_view text, std::string_view stream = "csv");

// Field parsers that report `stream:line:column` on failure.
double to_double(std::string_view field, std::string_view stream, std::size_t line, std::size_t col);
std::int64_t to_int(std::string_view field, std::string_view stream, std::size_t line, std::size_t col);

// Quotes a field only when it contains a comma, quote, CR or LF.
std::string quote(std::string_view field);

class Writer {
 public:
  explicit Writer(const std::vector<std::string>& header);
  void row(const std::vector<std::string>& fields);
  const std::string& str() const { return out_; }

 private:
  std::size_t width_;
  std::string out_;
};

// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace pps::csv
