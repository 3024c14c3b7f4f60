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

#include <cmath>
#include <cstdint>
#include <vector>

#include "pps/ingest.hpp"
#include "pps/spectrum.hpp"

namespace pps::testing {

// Noise-free spectrum: flat `background` counts per channel plus a Gaussian of
// total `area` counts at `center_kev` with standard deviation `sigma_kev`,
// integrated over each channel and rounded.
inline Spectrum gaussian_spectrum(double center_kev, double sigma_kev, double area, double background,
                                  double live_time_s = 60.0, std::size_t channels = 1024,
                                  EnergyCalibration cal = {}) {
  Spectrum s;
  s.cal = cal;
  s.live_time_s = live_time_s;
  s.counts.resize(channels);
  const double half = cal.slope_kev_per_channel / 2.0;
  for (std::size_t i = 0; i < channels; ++i) {
    const double e = cal.energy(static_cast<double>(i));
    const double lo = (e - half - center_kev) / (sigma_kev * std::sqrt(2.0));
    const double hi = (e + half - center_kev) / (sigma_kev * std::sqrt(2.0));
    const double peak = area > 0 ? area * 0.5 * (std::erf(hi) - std::erf(lo)) : 0.0;
    s.counts[i] = static_cast<std::uint64_t>(std::llround(background + peak));
  }
  return s;
}

// Constant-speed forward run, dwell, and mirrored reverse at 10 Hz.
inline std::vector<ingest::OdometrySample> out_and_back(double length_in, double speed_in_s, double dwell_s,
                                                        double sigma_in = 0.001) {
  std::vector<ingest::OdometrySample> odo;
  const double dt = 0.1;
  const auto steps = static_cast<int>(std::llround(length_in / (speed_in_s * dt)));
  const auto dwell_steps = static_cast<int>(std::llround(dwell_s / dt));
  const double dx = length_in / steps;
  Timestamp t = Timestamp::from_seconds(1000.0);
  odo.push_back({t, 0.0, sigma_in});
  for (int i = 0; i < steps; ++i) odo.push_back({t = t + dt, dx, sigma_in});
  for (int i = 0; i < dwell_steps; ++i) odo.push_back({t = t + dt, 0.0, sigma_in});
  for (int i = 0; i < steps; ++i) odo.push_back({t = t + dt, -dx, sigma_in});
  return odo;
}

}  // namespace pps::testing
