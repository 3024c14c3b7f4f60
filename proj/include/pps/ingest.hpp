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
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pps/spectrum.hpp"
#include "pps/time.hpp"

namespace pps::ingest {

inline constexpr int kDefaultChannelCount = 1024;

struct Manifest {
  std::string robot_id;
  std::string detector_id = "default";
  double fov_length_in = 0.0;
  int pipe_diameter_in = 0;
  Timestamp start_time;
  int channel_count = kDefaultChannelCount;
  EnergyCalibration energy_cal;
  // Acquisition live time of the pre/post QC spectra.
  double qc_live_time_s = 0.0;
  // Per-robot sensor geometry; absent values fall back to server configuration.
  std::optional<double> detector_offset_in;
  std::optional<double> camera_offset_in;
  std::optional<double> lidar_along_in;
  // QC outcomes the robot computed onboard; kept for audit only.
  nlohmann::json robot_reported_qc;

  bool operator==(const Manifest&) const = default;
};

struct MeasurementRequest {
  std::string job_id;
  std::string building;
  std::string unit;
  std::string cell;
  std::string pipe_item_id;
  double expected_length_ft = 0.0;
  std::string operator_notes;
  std::string nearest_column_id;

  bool operator==(const MeasurementRequest&) const = default;
};

struct OdometrySample {
  Timestamp t;
  double dx_in = 0.0;
  double sigma_in = 0.0;
  bool operator==(const OdometrySample&) const = default;
};

struct LidarPoint {
  double theta_rad = 0.0;
  double r_cm = 0.0;
  bool operator==(const LidarPoint&) const = default;
};

struct LidarScan {
  Timestamp t;
  std::vector<LidarPoint> points;
  bool operator==(const LidarScan&) const = default;
};

struct ImageRef {
  Timestamp t;
  std::string file;  // relative to images/
  bool operator==(const ImageRef&) const = default;
};

struct RunBundle {
  Manifest manifest;
  MeasurementRequest request;
  std::vector<OdometrySample> odometry;
  std::vector<TimedSpectrum> spectra;  // accumulated, cumulative live time
  std::optional<TimedSpectrum> qc_pre;
  std::optional<TimedSpectrum> qc_post;
  std::vector<LidarScan> lidar;
  std::vector<ImageRef> images;
  std::map<std::string, std::string> image_files;  // name -> PNG bytes, never decoded

  bool operator==(const RunBundle&) const = default;
};

struct BatchId {
  std::string robot_id;
  Timestamp start_time;
  std::string rendered;  // "ROBOTID-YYYYMMDDThhmmssZ"

  bool operator==(const BatchId&) const = default;
};

enum class Severity { kWarning, kFatal };

struct IngestIssue {
  Severity severity = Severity::kWarning;
  std::string code;
  std::string message;
  std::string stream;
};

struct UnpackOptions {
  // When false, a decreasing accumulated count is left for validation and
  // processing to handle (the batch is then invalidated as a detector reset).
  bool require_monotone_accumulation = true;
};

RunBundle unpack_run_bundle(std::string_view archive, const UnpackOptions& options = {});

// Inverse of unpack_run_bundle for well-formed bundles; byte-deterministic.
std::string pack_run_bundle(const RunBundle& bundle);

BatchId make_batch_id(const std::string& robot_id, Timestamp start_time);

std::vector<IngestIssue> validate_bundle(const RunBundle& bundle);

bool has_fatal(const std::vector<IngestIssue>& issues);

// Index of the first poll whose counts drop in some channel relative to the
// previous poll, if any.
std::optional<std::size_t> first_decreasing_poll(const std::vector<TimedSpectrum>& spectra);

nlohmann::json to_json(const Manifest& m);
nlohmann::json to_json(const MeasurementRequest& r);
nlohmann::json to_json(const IngestIssue& issue);

// Inverses of the to_json overloads; throw MalformedRow on bad fields.
Manifest manifest_from_json(const nlohmann::json& j);
MeasurementRequest request_from_json(const nlohmann::json& j);

}  // namespace pps::ingest
