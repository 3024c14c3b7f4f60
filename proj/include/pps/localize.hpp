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

#include "pps/ingest.hpp"
#include "pps/time.hpp"

namespace pps::localize {

enum class Phase { kForward, kDwell, kReverse };

const char* to_string(Phase p);

struct TrajectorySample {
  Timestamp t;
  double position_in = 0.0;
  double sigma_in = 0.0;
  Phase phase = Phase::kForward;
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  Timestamp turnaround_time;
  std::size_t dwell_begin = 0;  // index of the last forward sample
  std::size_t dwell_end = 0;    // index of the first reverse sample
  double max_position_in = 0.0;

  Timestamp start() const { return samples.front().t; }
  Timestamp end() const { return samples.back().t; }
};

struct TrajectoryConfig {
  double start_sigma_in = 0.01;
  double closure_sigma_in = 1.0;
  double dwell_sigma_in = 0.01;
  // Used when an odometry row carries a non-positive sigma.
  double default_step_sigma_in = 0.02;
  double dwell_speed_threshold_in = 0.01;  // |dx| per sample below this counts as stopped
  double min_dwell_s = 10.0;
  // Datum position at run start relative to the launch edge; the robot also
  // returns there.
  double entrance_offset_in = 0.0;
};

// One residual (value - target) / sigma of the linear chain problem. A factor
// either ties two nodes (x[j] - x[i] = target) or anchors one (x[i] = target).
struct Factor {
  std::size_t i = 0;
  std::optional<std::size_t> j;
  double target = 0.0;
  double sigma = 1.0;
};

struct ChainProblem {
  std::size_t node_count = 0;
  std::vector<Factor> factors;
  std::size_t dwell_begin = 0;
  std::size_t dwell_end = 0;
};

// Locates the turnaround dwell and lists every factor of the least-squares
// chain. Throws NoDwellFound.
ChainProblem build_chain_problem(const std::vector<ingest::OdometrySample>& odometry,
                                 const TrajectoryConfig& config);

// Minimizes the weighted sum of squared factor residuals. Per-node sigma comes
// from the diagonal of the inverse information matrix. Throws NoDwellFound,
// SingularSystem.
Trajectory estimate_trajectory(const std::vector<ingest::OdometrySample>& odometry,
                               const TrajectoryConfig& config = {});

struct PositionEstimate {
  double position_in = 0.0;
  double sigma_in = 0.0;
};

// Linear interpolation between bracketing samples plus a sensor offset.
// Throws OutOfSpan.
PositionEstimate position_at(const Trajectory& traj, Timestamp t, double offset_in = 0.0);

struct SensorOffsets {
  double detector_fov_center_in = 0.0;
  double camera_view_in = 0.0;
  double lidar_along_in = 0.0;
  double lidar_radial_r_cm = 0.0;
  double lidar_radial_theta_rad = 0.0;
};

// Radial LiDAR mount for a pipe diameter: 9 cm above center for 30-in, 7 cm
// below center for 42-in, with theta = 0 at the pipe bottom.
SensorOffsets default_offsets(int pipe_diameter_in);

// Default offsets overridden by whatever the manifest carries.
SensorOffsets offsets_for(const ingest::Manifest& manifest);

enum class SegmentKind { kStandard, kStretch, kFov };

const char* to_string(SegmentKind k);

struct TimeWindow {
  Timestamp enter;
  Timestamp exit;
};

struct Segment {
  int number = 0;
  double start_in = 0.0;
  double end_in = 0.0;
  SegmentKind kind = SegmentKind::kStandard;
  std::optional<TimeWindow> forward;
  std::optional<TimeWindow> reverse;

  double length_in() const { return end_in - start_in; }
};

struct SegmentPlan {
  std::vector<Segment> segments;
  std::vector<std::string> warnings;

  const Segment* find(int number) const;
};

inline constexpr double kStandardSegmentIn = 12.0;
inline constexpr double kMinStretchIn = 3.0;

// Standard 12-in segments from the launch edge, then the remainder segment,
// then the FOV-length segment farthest from launch. Throws PipeTooShort.
SegmentPlan divide_segments(double max_position_in, double fov_length_in);

// Attaches forward and reverse (enter, exit) windows for the detector FOV
// center crossing each segment's bounds. The farthest segment's windows meet
// at the turnaround. Throws SegmentNotTraversed.
SegmentPlan segment_time_windows(const Trajectory& traj, SegmentPlan plan, double detector_offset_in,
                                 double bound_tolerance_in = 1.0);

// Farthest detector-center position reached, used as the measured pipe length.
double measured_length_in(const Trajectory& traj, double detector_offset_in);

// trajectory.csv: t,x,sigma,phase
std::string trajectory_csv(const Trajectory& traj);

}  // namespace pps::localize
