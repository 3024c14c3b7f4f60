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

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pps/ingest.hpp"
#include "pps/spectrum.hpp"

namespace pps::synth {

// Uniform deposit between two along-pipe positions.
struct Deposit {
  double start_ft = 0.0;
  double end_ft = 0.0;
  double g_per_ft = 0.0;
  std::string material = "hybrid_tacky_mat";
};

// Compact source. Its own areal density (mass over footprint) sets how much
// of its emission escapes. Vials thicker than kUnmeasurableArealDensity are
// expected to be flagged as unmeasurable.
inline constexpr double kUnmeasurableArealDensity = 0.5;  // g/cm2

struct Lump {
  double position_ft = 0.0;
  double g = 0.0;
  bool vial = false;
  double footprint_cm2 = 250.0;
};

// Block (height > 0, protrudes inward) or void (height < 0) on the wall.
struct SurfaceFeature {
  double start_ft = 0.0;
  double end_ft = 0.0;
  double theta_start_deg = 0.0;  // counter-clockwise span, may wrap past 180
  double theta_end_deg = 0.0;
  double height_cm = 0.0;
};

struct RobotModel {
  std::string id = "RP001";
  double speed_in_s = 1.0;
  double dwell_s = 15.0;
  double odometry_sigma_in = 0.002;
  double poll_hz = 10.0;
  double lidar_hz = 5.0;
  int lidar_rays = 360;
  double range_noise_cm = 0.3;
  double image_period_s = 2.0;
  double detector_offset_in = 0.0;
  double camera_offset_in = 0.0;
  double lidar_along_in = 0.0;
};

struct BackgroundModel {
  double exp_cps_per_kev = 4.0;
  double exp_scale_kev = 80.0;
  double flat_cps_per_kev = 0.05;
};

struct DetectorModel {
  std::string id = "D01";
  double k_cal_g_s = 0.002;
  double fov_in = 12.0;
  int channel_count = 1024;
  EnergyCalibration energy_cal;
  double u235_kev = 185.7;
  double fwhm_186_kev = 4.0;
  double u235_144_kev = 143.76;
  double fwhm_144_kev = 3.6;
  double line_144_yield = 0.19;  // detected 144 keV per 186 keV photon from a thin source
  double mu_144_ratio = 1.8;     // 144 keV attenuation over 186 keV
  double am241_kev = 59.5;
  double fwhm_60_kev = 3.0;
  BackgroundModel background;
  double live_fraction = 0.98;
  double am241_run_cps = 200.0;  // check source seen during the run
  double am241_qc_cps = 200.0;
  double qc_am241_shift_kev = 0.0;  // applied to the pre-run QC spectrum only
  double qc_live_time_s = 60.0;
  double mu_eff_cm2_g = 1.4;
  double deposit_width_cm = 10.0;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  double pipe_length_ft = 10.0;
  int pipe_diameter_in = 30;
  std::vector<Deposit> deposits;
  std::vector<Lump> lumps;
  std::vector<SurfaceFeature> features;
  RobotModel robot;
  DetectorModel detector;
  double contamination_g = 0.0;
  std::optional<double> detector_reset_at_s;  // seconds after run start
  bool noise_free = false;
  Timestamp start_time = Timestamp::parse_iso8601("2018-07-10T14:03:22Z");
  ingest::MeasurementRequest request;

  double nominal_radius_cm() const { return pipe_diameter_in / 2.0 * 2.54; }
  double pipe_length_in() const { return pipe_length_ft * 12.0; }
};

// Throws InvalidScenario.
void validate(const Scenario& s);

Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Scenario& s);

struct TruthSegment {
  int number = 0;
  double start_in = 0.0;
  double end_in = 0.0;
  double mass_g = 0.0;
};

struct ExpectedFlag {
  std::string code;
  int segment = 0;  // 0 for batch scope
  bool operator==(const ExpectedFlag&) const = default;
};

struct TruthImage {
  std::string file;
  double position_in = 0.0;
};

struct TruthPose {
  Timestamp t;
  double datum_in = 0.0;
};

struct GroundTruth {
  std::string scenario;
  double pipe_length_in = 0.0;
  double fov_in = 0.0;
  double max_datum_in = 0.0;
  Timestamp turnaround_time;
  std::vector<TruthSegment> segments;
  std::vector<ExpectedFlag> expected_flags;
  std::vector<TruthImage> images;
  std::vector<TruthPose> trajectory;  // one per poll
};

nlohmann::json to_json(const GroundTruth& t);

struct GeneratedRun {
  std::string bundle_zip;
  ingest::RunBundle bundle;
  GroundTruth truth;
};

GeneratedRun generate_run(const Scenario& s);

// Wall radius in pipe-centered coordinates at along-pipe z and angle theta
// (theta = 0 at the pipe bottom).
double true_radius_cm(const Scenario& s, double z_in, double theta_rad);

struct LineRates {
  double u186_cps = 0.0;
  double u144_cps = 0.0;
};

// Expected full-energy rates from deposits and lumps for a detector centered
// at `center_in`, before counting noise.
LineRates expected_line_rates(const Scenario& s, double center_in);
inline double expected_signal_cps(const Scenario& s, double center_in) {
  return expected_line_rates(s, center_in).u186_cps;
}

struct ObservedSegment {
  int number = 0;
  double start_in = 0.0;
  double end_in = 0.0;
  std::optional<double> mass_g;  // absent when rejected
  double mda_g = 0.0;
};

struct Observed {
  std::vector<ObservedSegment> segments;
  std::vector<ExpectedFlag> flags;
  double max_position_in = 0.0;
};

struct SegmentScore {
  int number = 0;
  double true_g = 0.0;
  std::optional<double> measured_g;
  double error_g = 0.0;
  double relative_error = 0.0;  // 0 when the truth is 0
};

struct ScoreReport {
  std::vector<SegmentScore> segments;
  double max_abs_error_g = 0.0;
  double length_error_in = 0.0;
  double flag_precision = 1.0;
  double flag_recall = 1.0;
  std::size_t below_mda = 0;
};

// Throws SegmentSetMismatch when the segment numbers or bounds (1 in
// tolerance) disagree.
ScoreReport score_pipeline(const GroundTruth& truth, const Observed& observed);

nlohmann::json to_json(const ScoreReport& r);

}  // namespace pps::synth
