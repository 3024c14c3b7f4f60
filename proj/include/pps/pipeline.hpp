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

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pps/geometry.hpp"
#include "pps/ingest.hpp"
#include "pps/localize.hpp"
#include "pps/qc.hpp"
#include "pps/radiometrics.hpp"

namespace pps::pipeline {

// Analyst-adjustable knobs; every value is echoed into the revision record.
struct ProcessingParameters {
  std::optional<double> window_length_in;  // defaults to the FOV length
  radiometrics::RoiDefinition u235_roi = radiometrics::u235_roi();
  radiometrics::RoiDefinition am241_roi = radiometrics::am241_roi();
  std::string material = "hybrid_tacky_mat";
  std::string qc_bounds_set = "default";
  geometry::DeviationThresholds deviation;
  qc::ReplicateThresholds replicate;
  radiometrics::UncertaintyModel uncertainty;
  std::string notes;

  bool operator==(const ProcessingParameters&) const;
};

nlohmann::json to_json(const ProcessingParameters& p);
ProcessingParameters parameters_from_json(const nlohmann::json& j);

// Applies one "key=value" override. Throws InvalidParameter.
void apply_override(ProcessingParameters& p, const std::string& assignment);

// Site configuration, not editable per run.
struct AnalysisConfig {
  radiometrics::CalibrationConstants calibration;
  localize::TrajectoryConfig trajectory;
  std::map<std::string, qc::QcBounds> am241_bounds{{"default", qc::am241_bounds()}};
  qc::QcBounds full_pipe_bounds = qc::u235_full_pipe_bounds();
  geometry::RangeCalibration lidar_calibration;
  geometry::GridConfig grid;
  double contamination_floor_g = 0.05;
  double closure_tolerance_in = 2.0;
  double ncs_threshold_g = 100.0;
  int calibration_validity_days = 365;

  const qc::QcBounds& bounds(const std::string& set) const;  // throws UnknownBoundsSet
};

AnalysisConfig default_config();
AnalysisConfig config_from_json(const nlohmann::json& j);

struct SegmentOutcome {
  int number = 0;
  double start_in = 0.0;
  double end_in = 0.0;
  localize::SegmentKind kind = localize::SegmentKind::kStandard;
  std::optional<radiometrics::SegmentResult> forward;
  std::optional<radiometrics::SegmentResult> reverse;
  std::optional<radiometrics::SegmentResult> reported;  // forward/reverse average
  std::optional<qc::QcResult> qc_forward;
  std::optional<qc::QcResult> qc_reverse;
  std::optional<geometry::DeviationMetrics> geometry;
  std::optional<radiometrics::LineRatioTest> line_ratio;  // on both traversals' windows
  std::vector<std::string> images;
  std::vector<std::string> notes;

  double length_ft() const { return (end_in - start_in) / 12.0; }
};

struct OperationalSummary {
  double measured_length_in = 0.0;
  double max_position_in = 0.0;
  double forward_speed_in_s = 0.0;
  double reverse_speed_in_s = 0.0;
  double run_duration_s = 0.0;
  double dwell_duration_s = 0.0;
  double odometry_closure_in = 0.0;  // raw sum of all displacements
  std::size_t polls = 0;
  std::size_t lidar_scans = 0;
  std::size_t images = 0;
  double window_length_in = 0.0;
  double fov_length_in = 0.0;
};

struct AnalysisResult {
  std::string batch_id;
  ingest::Manifest manifest;
  ingest::MeasurementRequest request;
  ProcessingParameters parameters;
  std::string calibration_file;
  Timestamp calibrated_on;
  OperationalSummary operations;
  std::vector<SegmentOutcome> segments;
  std::optional<qc::OnboardChecks> onboard;
  std::optional<qc::ContaminationResult> contamination;
  std::optional<qc::QcResult> full_pipe;
  std::optional<std::size_t> detector_reset_poll;
  bool localization_closure_failed = false;
  std::vector<std::string> warnings;
  // Named output files (CSV, PNG, OFF); kept out of the JSON record.
  std::map<std::string, std::string> artifacts;

  const SegmentOutcome* segment(int number) const;
};

nlohmann::json to_json(const AnalysisResult& r);
AnalysisResult result_from_json(const nlohmann::json& j);

// Runs localize -> radiometrics -> qc -> geometry on one bundle. Throws
// FatalIngestIssue when validation finds a fatal issue and ProcessingFailure
// (naming the module) when a stage cannot complete.
AnalysisResult analyze(const ingest::RunBundle& bundle, const ProcessingParameters& params,
                       const AnalysisConfig& config);

// Archive name of a camera frame: "image_" + file with separators flattened.
std::string image_artifact_name(const std::string& file);

// channel,energy_kev,counts
std::string spectrum_csv(const Spectrum& s);

// Replicate check over the segments not in `rejected` that have both
// traversals. Throws NoSegments when none remain.
qc::ReplicatePair replicate_for(const AnalysisResult& r, const std::vector<int>& rejected);

// JSON helpers shared with the review and service layers.
nlohmann::json to_json(const radiometrics::SegmentResult& s);
nlohmann::json to_json(const qc::QcResult& q);
nlohmann::json to_json(const qc::ReplicateResult& r);
nlohmann::json to_json(const qc::ContaminationResult& c);
nlohmann::json to_json(const geometry::DeviationMetrics& d);
nlohmann::json to_json(const radiometrics::LineRatioTest& t);

}  // namespace pps::pipeline
