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

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace pps {

// Seconds since the Unix epoch at microsecond resolution. Stored as an
// integer so CSV round trips are exact.
class Timestamp {
 public:
  constexpr Timestamp() = default;
  static constexpr Timestamp from_micros(std::int64_t us) { return Timestamp(us); }
  static Timestamp from_seconds(double s);
  // Accepts "1531231402", "1531231402.5", "-3.000001"; at most six decimals.
  static Timestamp parse(std::string_view text);
  // Accepts "2018-07-10T14:03:22Z" with optional fractional seconds.
  static Timestamp parse_iso8601(std::string_view text);

  constexpr std::int64_t micros() const { return us_; }
  constexpr double seconds() const { return static_cast<double>(us_) * 1e-6; }

  // "1531231402.000000"
  std::string to_string() const;
  // "2018-07-10T14:03:22Z" (truncated to seconds)
  std::string iso8601() const;
  // "20180710T140322Z" (truncated to seconds)
  std::string compact() const;

  constexpr Timestamp operator+(double dt_s) const {
    return Timestamp(us_ + static_cast<std::int64_t>(dt_s * 1e6 + (dt_s >= 0 ? 0.5 : -0.5)));
  }
  constexpr double operator-(Timestamp other) const {
    return static_cast<double>(us_ - other.us_) * 1e-6;
  }
  constexpr auto operator<=>(const Timestamp&) const = default;

 private:
  constexpr explicit Timestamp(std::int64_t us) : us_(us) {}
  std::int64_t us_ = 0;
};

}  // namespace pps
