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
#include <utility>
#include <vector>

#include "pps/ingest.hpp"
#include "pps/localize.hpp"
#include "pps/png.hpp"

namespace pps::geometry {

using ingest::LidarPoint;

// Moves sensor-frame polar points to the pipe-centered frame, where the sensor
// sits at (r0, theta0). Computed through Cartesian coordinates; theta is
// returned in (-pi, pi].
std::vector<LidarPoint> recenter_scan(const std::vector<LidarPoint>& points, double r0_cm, double theta0_rad);

// Closed-form radius after re-centering, kept as an independent check.
double recentered_radius(double r_cm, double theta_rad, double r0_cm, double theta0_rad);

// Piecewise-linear range correction: r <- r + correction(r). Zero correction
// outside the knot span.
struct RangeCalibration {
  std::vector<std::pair<double, double>> knots;  // (range cm, correction cm), ascending

  double correction(double r_cm) const;
};

std::vector<LidarPoint> apply_range_calibration(const std::vector<LidarPoint>& points, const RangeCalibration& cal);

struct PositionedScan {
  Timestamp t;
  double z_in = 0.0;                // along-pipe position of the scan plane
  std::vector<LidarPoint> points;  // pipe-centered
};

struct GridConfig {
  double cell_z_cm = 1.0;
  double cell_theta_deg = 1.0;
  int fill_radius_cells = 3;
};

enum class CellState : unsigned char { kEmpty, kMeasured, kFilled };

struct SurfaceHeatmap {
  double z_start_in = 0.0;
  double z_end_in = 0.0;
  double nominal_radius_cm = 0.0;
  double cell_z_cm = 1.0;
  double cell_theta_rad = 0.0;
  std::size_t nz = 0;
  std::size_t ntheta = 0;
  std::vector<double> radius_cm;  // row-major [iz * ntheta + itheta]
  std::vector<CellState> state;
  std::vector<std::size_t> hits;

  std::size_t index(std::size_t iz, std::size_t it) const { return iz * ntheta + it; }
  bool occupied(std::size_t i) const { return state[i] != CellState::kEmpty; }
  double z_center_cm(std::size_t iz) const { return (static_cast<double>(iz) + 0.5) * cell_z_cm; }
  double theta_center_rad(std::size_t it) const;
  std::size_t occupied_count() const;
};

// Cells hold the mean centered radius of the points falling in them. Empty
// cells between the first and last measured z column take the value of the
// nearest measured cell within `fill_radius_cells`. Throws NoScansInSegment.
SurfaceHeatmap build_heatmap(const std::vector<PositionedScan>& scans, double z_start_in, double z_end_in,
                             double nominal_radius_cm, const GridConfig& grid = {}, bool include_end = false);

struct MeshVertex {
  double z_cm = 0.0;
  double theta_rad = 0.0;
  double r_cm = 0.0;
};

struct SurfaceMesh {
  std::vector<MeshVertex> vertices;
  std::vector<std::array<std::size_t, 3>> triangles;
  // Cell-index coordinates the triangulation was computed in.
  std::vector<std::pair<std::int64_t, std::int64_t>> lattice;
};

// Delaunay triangulation of occupied cell centers in the (z, theta) cell
// plane. Throws DegenerateInput.
SurfaceMesh triangulate_surface(const SurfaceHeatmap& hm);

// OFF text with vertices as (z cm, theta rad, r cm).
std::string mesh_off(const SurfaceMesh& mesh);

struct DeviationThresholds {
  double deviation_cm = 2.0;
  double max_fraction = 0.05;
};

struct DeviationMetrics {
  double fraction = 0.0;
  double max_abs_deviation_cm = 0.0;
  std::size_t occupied_cells = 0;
  std::size_t deviating_cells = 0;
  bool flagged = false;
};

DeviationMetrics geometric_deviation(const SurfaceHeatmap& hm, const DeviationThresholds& thresholds = {});

// Deviation r - R as color on a diverging ramp clamped at +-range_cm; theta on
// the y axis, z on the x axis, empty cells black.
png::Image heatmap_image(const SurfaceHeatmap& hm, double range_cm = 5.0);

// Occupied cells: z_cm,theta_deg,r_cm,deviation_cm,state
std::string heatmap_csv(const SurfaceHeatmap& hm);

struct PositionedImage {
  std::string file;
  Timestamp t;
  std::optional<double> distance_in;  // absent outside the trajectory span
  int segment = 0;                     // 0 when unassigned
};

std::vector<PositionedImage> assign_image_positions(const std::vector<ingest::ImageRef>& images,
                                                    const localize::Trajectory& traj, double camera_offset_in,
                                                    const localize::SegmentPlan& plan);

// Segment owning an along-pipe position, or 0.
int segment_at(const localize::SegmentPlan& plan, double position_in);

// Re-centers, corrects and positions every scan inside the trajectory span.
std::vector<PositionedScan> position_scans(const std::vector<ingest::LidarScan>& scans,
                                           const localize::Trajectory& traj,
                                           const localize::SensorOffsets& offsets, const RangeCalibration& cal);

inline double nominal_radius_cm(int pipe_diameter_in) { return pipe_diameter_in / 2.0 * 2.54; }

}  // namespace pps::geometry
