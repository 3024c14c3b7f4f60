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

#include "pps/time.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <ctime>

#include <fmt/format.h>

#include "pps/error.hpp"

namespace pps {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::tm utc_fields(std::int64_t us) {
  const std::time_t secs = static_cast<std::time_t>(floor_div(us, 1000000));
  std::tm tm{};
  gmtime_r(&secs, &tm);
  return tm;
}

}  // namespace

Timestamp Timestamp::from_seconds(double s) {
  return Timestamp(static_cast<std::int64_t>(std::llround(s * 1e6)));
}

Timestamp Timestamp::parse(std::string_view text) {
  const auto bad = [&] {
    return Error("MalformedTimestamp", "cannot parse timestamp '" + std::string(text) + "'");
  };
  if (text.empty()) throw bad();
  bool negative = false;
  if (text.front() == '-') {
    negative = true;
    text.remove_prefix(1);
  }
  const auto dot = text.find('.');
  const std::string_view int_part = text.substr(0, dot);
  std::string_view frac_part = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
  if (int_part.empty() || frac_part.size() > 6) throw bad();
  std::int64_t whole = 0;
  auto [p, ec] = std::from_chars(int_part.data(), int_part.data() + int_part.size(), whole);
  if (ec != std::errc{} || p != int_part.data() + int_part.size()) throw bad();
  std::int64_t frac = 0;
  if (!frac_part.empty()) {
    auto [q, ec2] = std::from_chars(frac_part.data(), frac_part.data() + frac_part.size(), frac);
    if (ec2 != std::errc{} || q != frac_part.data() + frac_part.size()) throw bad();
    for (std::size_t i = frac_part.size(); i < 6; ++i) frac *= 10;
  }
  const std::int64_t us = whole * 1000000 + frac;
  return Timestamp(negative ? -us : us);
}

Timestamp Timestamp::parse_iso8601(std::string_view text) {
  int y, mo, d, h, mi;
  double s;
  const std::string copy(text);
  if (std::sscanf(copy.c_str(), "%d-%d-%dT%d:%d:%lfZ", &y, &mo, &d, &h, &mi, &s) != 6 ||
      copy.back() != 'Z') {
    throw Error("MalformedTimestamp", "cannot parse ISO-8601 time '" + copy + "'");
  }
  std::tm tm{};
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = 0;
  const std::int64_t base = static_cast<std::int64_t>(timegm(&tm));
  return Timestamp(base * 1000000 + static_cast<std::int64_t>(std::llround(s * 1e6)));
}

std::string Timestamp::to_string() const {
  const std::int64_t whole = floor_div(us_, 1000000);
  const std::int64_t frac = us_ - whole * 1000000;
  if (whole < 0 && frac != 0) {
    // -0.5 s is whole=-1, frac=500000; render as "-0.500000".
    const std::int64_t mag = -us_;
    return fmt::format("-{}.{:06d}", mag / 1000000, mag % 1000000);
  }
  return fmt::format("{}.{:06d}", whole, frac);
}

std::string Timestamp::iso8601() const {
  const std::tm tm = utc_fields(us_);
  return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}Z", tm.tm_year + 1900, tm.tm_mon + 1,
                     tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
}

std::string Timestamp::compact() const {
  const std::tm tm = utc_fields(us_);
  return fmt::format("{:04d}{:02d}{:02d}T{:02d}{:02d}{:02d}Z", tm.tm_year + 1900, tm.tm_mon + 1,
                     tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
}

}  // namespace pps
