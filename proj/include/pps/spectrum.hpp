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
#include <vector>

#include "pps/time.hpp"

namespace pps {

// keV = offset + slope * channel, evaluated at the channel center.
struct EnergyCalibration {
  double offset_kev = 0.0;
  double slope_kev_per_channel = 0.5;

  double energy(double channel) const { return offset_kev + slope_kev_per_channel * channel; }
  double channel(double energy_kev) const { return (energy_kev - offset_kev) / slope_kev_per_channel; }
  bool operator==(const EnergyCalibration&) const = default;
};

enum class SpectrumLabel { kIncremental, kAccumulated, kQc };

struct Spectrum {
  std::vector<std::uint64_t> counts;
  double live_time_s = 0.0;
  EnergyCalibration cal;
  SpectrumLabel label = SpectrumLabel::kIncremental;

  std::size_t channels() const { return counts.size(); }
  bool operator==(const Spectrum&) const = default;
};

// One poll of the detector's running accumulation.
struct TimedSpectrum {
  Timestamp t;
  Spectrum spectrum;
  bool operator==(const TimedSpectrum&) const = default;
};

}  // namespace pps
