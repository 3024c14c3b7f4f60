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

#include "pps/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "pps/delaunay.hpp"
#include "pps/error.hpp"

namespace pps::geometry {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  return a <= -kPi ? a + 2.0 * kPi : a;
}

}  // namespace

std::vector<LidarPoint> recenter_scan(const std::vector<LidarPoint>& points, double r0_cm, double theta0_rad) {
  if (r0_cm < 0) throw Error("InvalidArgument", "radial offset must be non-negative");
  const double ox = r0_cm * std::cos(theta0_rad);
  const double oy = r0_cm * std::sin(theta0_rad);
  std::vector<LidarPoint> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    const double x = p.r_cm * std::cos(p.theta_rad) + ox;
    const double y = p.r_cm * std::sin(p.theta_rad) + oy;
    out.push_back({wrap_angle(std::atan2(y, x)), std::hypot(x, y)});
  }
  return out;
}

double recentered_radius(double r_cm, double theta_rad, double r0_cm, double theta0_rad) {
  return std::sqrt(std::max(0.0, r_cm * r_cm + r0_cm * r0_cm + 2.0 * r_cm * r0_cm * std::cos(theta0_rad - theta_rad)));
}

double RangeCalibration::correction(double r_cm) const {
  if (knots.empty() || r_cm < knots.front().first || r_cm > knots.back().first) return 0.0;
  const auto hi = std::lower_bound(knots.begin(), knots.end(), r_cm,
                                   [](const auto& k, double r) { return k.first < r; });
  if (hi->first == r_cm || hi == knots.begin()) return hi->second;
  const auto lo = hi - 1;
  const double f = (r_cm - lo->first) / (hi->first - lo->first);
  return lo->second + f * (hi->second - lo->second);
}

std::vector<LidarPoint> apply_range_calibration(const std::vector<LidarPoint>& points, const RangeCalibration& cal) {
  for (std::size_t i = 1; i < cal.knots.size(); ++i) {
    if (!(cal.knots[i].first > cal.knots[i - 1].first)) {
      throw Error("InvalidArgument", "range calibration knots must be strictly ascending");
    }
  }
  std::vector<LidarPoint> out = points;
  for (auto& p : out) p.r_cm += cal.correction(p.r_cm);
  return out;
}

double SurfaceHeatmap::theta_center_rad(std::size_t it) const {
  return -kPi + (static_cast<double>(it) + 0.5) * cell_theta_rad;
}

std::size_t SurfaceHeatmap::occupied_count() const {
  return static_cast<std::size_t>(std::count_if(state.begin(), state.end(), [](CellState s) {
    return s != CellState::kEmpty;
  }));
}

SurfaceHeatmap build_heatmap(const std::vector<PositionedScan>& scans, double z_start_in, double z_end_in,
                             double nominal_radius_cm, const GridConfig& grid, bool include_end) {
  if (!(z_end_in > z_start_in) || !(grid.cell_z_cm > 0) || !(grid.cell_theta_deg > 0)) {
    throw Error("InvalidArgument", "heatmap needs a positive span and cell size");
  }
  SurfaceHeatmap hm;
  hm.z_start_in = z_start_in;
  hm.z_end_in = z_end_in;
  hm.nominal_radius_cm = nominal_radius_cm;
  hm.cell_z_cm = grid.cell_z_cm;
  hm.ntheta = static_cast<std::size_t>(std::llround(360.0 / grid.cell_theta_deg));
  hm.cell_theta_rad = 2.0 * kPi / static_cast<double>(hm.ntheta);
  const double span_cm = (z_end_in - z_start_in) * 2.54;
  hm.nz = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(span_cm / grid.cell_z_cm - 1e-9)));
  const std::size_t cells = hm.nz * hm.ntheta;
  std::vector<double> sum(cells, 0.0);
  hm.hits.assign(cells, 0);

  bool any = false;
  for (const auto& scan : scans) {
    const bool inside = scan.z_in >= z_start_in && (include_end ? scan.z_in <= z_end_in : scan.z_in < z_end_in);
    if (!inside) continue;
    any = true;
    const double zrel = (scan.z_in - z_start_in) * 2.54;
    const std::size_t iz = std::min(hm.nz - 1, static_cast<std::size_t>(std::max(0.0, zrel / grid.cell_z_cm)));
    for (const auto& p : scan.points) {
      if (!(p.r_cm > 0) || !std::isfinite(p.theta_rad)) continue;
      const double th = wrap_angle(p.theta_rad);
      const auto it = std::min(hm.ntheta - 1,
                               static_cast<std::size_t>(std::max(0.0, std::floor((th + kPi) / hm.cell_theta_rad))));
      sum[hm.index(iz, it)] += p.r_cm;
      ++hm.hits[hm.index(iz, it)];
    }
  }
  if (!any) {
    throw Error("NoScansInSegment", fmt::format("no LiDAR scans between {:.2f} and {:.2f} in", z_start_in, z_end_in));
  }

  hm.radius_cm.assign(cells, 0.0);
  hm.state.assign(cells, CellState::kEmpty);
  std::size_t z_lo = hm.nz, z_hi = 0;
  for (std::size_t i = 0; i < cells; ++i) {
    if (hm.hits[i] == 0) continue;
    hm.radius_cm[i] = sum[i] / static_cast<double>(hm.hits[i]);
    hm.state[i] = CellState::kMeasured;
    z_lo = std::min(z_lo, i / hm.ntheta);
    z_hi = std::max(z_hi, i / hm.ntheta);
  }
  if (z_lo > z_hi) return hm;

  // Neighbor offsets ordered by distance, then z, then theta.
  const int rad = grid.fill_radius_cells;
  std::vector<std::pair<int, int>> offsets;
  for (int dz = -rad; dz <= rad; ++dz) {
    for (int dt = -rad; dt <= rad; ++dt) {
      if ((dz != 0 || dt != 0) && dz * dz + dt * dt <= rad * rad) offsets.emplace_back(dz, dt);
    }
  }
  std::stable_sort(offsets.begin(), offsets.end(), [](const auto& a, const auto& b) {
    return a.first * a.first + a.second * a.second < b.first * b.first + b.second * b.second;
  });
  for (std::size_t iz = z_lo; iz <= z_hi; ++iz) {
    for (std::size_t it = 0; it < hm.ntheta; ++it) {
      const std::size_t i = hm.index(iz, it);
      if (hm.state[i] != CellState::kEmpty) continue;
      for (const auto& [dz, dt] : offsets) {
        const long nz = static_cast<long>(iz) + dz;
        const long nt = static_cast<long>(it) + dt;
        if (nz < 0 || nz >= static_cast<long>(hm.nz) || nt < 0 || nt >= static_cast<long>(hm.ntheta)) continue;
        const std::size_t j = hm.index(static_cast<std::size_t>(nz), static_cast<std::size_t>(nt));
        if (hm.state[j] == CellState::kMeasured) {
          hm.radius_cm[i] = hm.radius_cm[j];
          hm.state[i] = CellState::kFilled;
          break;
        }
      }
    }
  }
  return hm;
}

SurfaceMesh triangulate_surface(const SurfaceHeatmap& hm) {
  SurfaceMesh mesh;
  std::vector<delaunay::Point> pts;
  const double z0_cm = hm.z_start_in * 2.54;
  for (std::size_t iz = 0; iz < hm.nz; ++iz) {
    for (std::size_t it = 0; it < hm.ntheta; ++it) {
      const std::size_t i = hm.index(iz, it);
      if (!hm.occupied(i)) continue;
      pts.push_back({static_cast<std::int64_t>(iz), static_cast<std::int64_t>(it)});
      mesh.lattice.emplace_back(static_cast<std::int64_t>(iz), static_cast<std::int64_t>(it));
      mesh.vertices.push_back({z0_cm + hm.z_center_cm(iz), hm.theta_center_rad(it), hm.radius_cm[i]});
    }
  }
  mesh.triangles = delaunay::triangulate(pts);
  return mesh;
}

std::string mesh_off(const SurfaceMesh& mesh) {
  std::string out = fmt::format("OFF\n{} {} 0\n", mesh.vertices.size(), mesh.triangles.size());
  for (const auto& v : mesh.vertices) out += fmt::format("{:.3f} {:.6f} {:.3f}\n", v.z_cm, v.theta_rad, v.r_cm);
  for (const auto& t : mesh.triangles) out += fmt::format("3 {} {} {}\n", t[0], t[1], t[2]);
  return out;
}

DeviationMetrics geometric_deviation(const SurfaceHeatmap& hm, const DeviationThresholds& thresholds) {
  DeviationMetrics m;
  for (std::size_t i = 0; i < hm.state.size(); ++i) {
    if (!hm.occupied(i)) continue;
    ++m.occupied_cells;
    const double d = std::abs(hm.radius_cm[i] - hm.nominal_radius_cm);
    m.max_abs_deviation_cm = std::max(m.max_abs_deviation_cm, d);
    if (d > thresholds.deviation_cm) ++m.deviating_cells;
  }
  if (m.occupied_cells > 0) {
    m.fraction = static_cast<double>(m.deviating_cells) / static_cast<double>(m.occupied_cells);
  }
  m.flagged = m.fraction > thresholds.max_fraction;
  return m;
}

png::Image heatmap_image(const SurfaceHeatmap& hm, double range_cm) {
  png::Image img;
  img.width = static_cast<int>(hm.nz);
  img.height = static_cast<int>(hm.ntheta);
  img.rgb.assign(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * 3, 0);
  for (std::size_t iz = 0; iz < hm.nz; ++iz) {
    for (std::size_t it = 0; it < hm.ntheta; ++it) {
      const std::size_t i = hm.index(iz, it);
      if (!hm.occupied(i)) continue;
      const double t = std::clamp((hm.radius_cm[i] - hm.nominal_radius_cm) / range_cm, -1.0, 1.0);
      // Inward (material on the wall) shades red, outward (voids, ports) blue.
      const auto fade = [&](double f) { return static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - f))); };
      std::uint8_t r = 255, g = 255, b = 255;
      if (t < 0) g = b = fade(-t);
      if (t > 0) r = g = fade(t);
      const std::size_t row = hm.ntheta - 1 - it;
      const std::size_t px = (row * hm.nz + iz) * 3;
      img.rgb[px] = r;
      img.rgb[px + 1] = g;
      img.rgb[px + 2] = b;
    }
  }
  return img;
}

std::string heatmap_csv(const SurfaceHeatmap& hm) {
  std::string out = "z_cm,theta_deg,r_cm,deviation_cm,state\n";
  const double z0_cm = hm.z_start_in * 2.54;
  for (std::size_t iz = 0; iz < hm.nz; ++iz) {
    for (std::size_t it = 0; it < hm.ntheta; ++it) {
      const std::size_t i = hm.index(iz, it);
      if (!hm.occupied(i)) continue;
      out += fmt::format("{:.2f},{:.2f},{:.3f},{:.3f},{}\n", z0_cm + hm.z_center_cm(iz),
                         hm.theta_center_rad(it) * 180.0 / kPi, hm.radius_cm[i],
                         hm.radius_cm[i] - hm.nominal_radius_cm,
                         hm.state[i] == CellState::kMeasured ? "measured" : "filled");
    }
  }
  return out;
}

int segment_at(const localize::SegmentPlan& plan, double position_in) {
  for (std::size_t k = 0; k < plan.segments.size(); ++k) {
    const auto& s = plan.segments[k];
    const bool last = k + 1 == plan.segments.size();
    if (position_in >= s.start_in && (last ? position_in <= s.end_in : position_in < s.end_in)) return s.number;
  }
  return 0;
}

std::vector<PositionedImage> assign_image_positions(const std::vector<ingest::ImageRef>& images,
                                                    const localize::Trajectory& traj, double camera_offset_in,
                                                    const localize::SegmentPlan& plan) {
  std::vector<PositionedImage> out;
  out.reserve(images.size());
  for (const auto& img : images) {
    PositionedImage p;
    p.file = img.file;
    p.t = img.t;
    if (img.t >= traj.start() && img.t <= traj.end()) {
      p.distance_in = localize::position_at(traj, img.t, camera_offset_in).position_in;
      p.segment = segment_at(plan, *p.distance_in);
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PositionedScan> position_scans(const std::vector<ingest::LidarScan>& scans,
                                           const localize::Trajectory& traj,
                                           const localize::SensorOffsets& offsets, const RangeCalibration& cal) {
  std::vector<PositionedScan> out;
  out.reserve(scans.size());
  for (const auto& s : scans) {
    if (s.t < traj.start() || s.t > traj.end()) continue;
    PositionedScan p;
    p.t = s.t;
    p.z_in = localize::position_at(traj, s.t, offsets.lidar_along_in).position_in;
    p.points = recenter_scan(apply_range_calibration(s.points, cal), offsets.lidar_radial_r_cm,
                             offsets.lidar_radial_theta_rad);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace pps::geometry
