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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <fmt/format.h>

#include "pps/delaunay.hpp"
#include "pps/error.hpp"
#include "pps/geometry.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace pps::geometry {
namespace {

constexpr double kPi = std::numbers::pi;

TEST(Recenter, ZeroOffsetIsIdentity) {
  const std::vector<LidarPoint> pts{{0.1, 30.0}, {-2.0, 40.0}, {3.0, 10.0}};
  const auto out = recenter_scan(pts, 0.0, 1.0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_NEAR(out[i].r_cm, pts[i].r_cm, 1e-12);
    EXPECT_NEAR(out[i].theta_rad, pts[i].theta_rad, 1e-12);
  }
}

TEST(Recenter, CollinearAddsOffset) {
  const auto out = recenter_scan({{kPi, 29.1}}, 9.0, kPi);
  EXPECT_NEAR(out[0].r_cm, 38.1, 1e-12);
  EXPECT_NEAR(std::abs(out[0].theta_rad), kPi, 1e-12);
}

TEST(Recenter, CartesianMatchesClosedFormRadius) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> r(0.1, 100.0), th(-kPi, kPi), r0(0.0, 20.0);
  double worst = 0;
  for (int i = 0; i < 100000; ++i) {
    const double rr = r(rng), tt = th(rng), rr0 = r0(rng), tt0 = th(rng);
    const double cart = recenter_scan({{tt, rr}}, rr0, tt0)[0].r_cm;
    const double closed = recentered_radius(rr, tt, rr0, tt0);
    if (closed > 1e-3) worst = std::max(worst, std::abs(cart - closed) / closed);
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(RangeCalibration, LookupTable) {
  const std::vector<LidarPoint> pts{{0, 100.0}, {0, 50.0}};
  EXPECT_EQ(apply_range_calibration(pts, {})[0].r_cm, 100.0);
  RangeCalibration one{{{100.0, 0.5}}};
  EXPECT_DOUBLE_EQ(apply_range_calibration(pts, one)[0].r_cm, 100.5);
  EXPECT_DOUBLE_EQ(apply_range_calibration(pts, one)[1].r_cm, 50.0);
  RangeCalibration two{{{40.0, 1.0}, {60.0, 2.0}}};
  EXPECT_DOUBLE_EQ(two.correction(45.0), 1.25);
  EXPECT_DOUBLE_EQ(apply_range_calibration(pts, two)[1].r_cm, 51.5);
  RangeCalibration bad{{{60.0, 1.0}, {40.0, 2.0}}};
  EXPECT_THROW(apply_range_calibration(pts, bad), Error);
}

// Pipe-centered scans of a cylinder of radius R with optional bumps.
std::vector<PositionedScan> cylinder_scans(double radius, double z0, double z1, double dz_in, int points,
                                           double noise_cm = 0.0, unsigned seed = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, noise_cm > 0 ? noise_cm : 1.0);
  std::vector<PositionedScan> scans;
  for (double z = z0; z < z1; z += dz_in) {
    PositionedScan s;
    s.z_in = z;
    for (int k = 0; k < points; ++k) {
      const double th = -kPi + (k + 0.5) * 2 * kPi / points;
      s.points.push_back({th, radius + (noise_cm > 0 ? n(rng) : 0.0)});
    }
    scans.push_back(std::move(s));
  }
  return scans;
}

TEST(Heatmap, PerfectCylinderIsConstant) {
  const double r = geometry::nominal_radius_cm(30);
  const auto scans = cylinder_scans(r, 0.0, 12.0, 0.1, 360);
  const auto hm = build_heatmap(scans, 0.0, 12.0, r);
  EXPECT_EQ(hm.nz, 31u);  // 30.48 cm
  EXPECT_EQ(hm.ntheta, 360u);
  ASSERT_GT(hm.occupied_count(), 0u);
  for (std::size_t i = 0; i < hm.state.size(); ++i) {
    if (hm.occupied(i)) EXPECT_NEAR(hm.radius_cm[i], r, 1e-9);
  }
  EXPECT_FALSE(geometric_deviation(hm).flagged);
  EXPECT_EQ(geometric_deviation(hm).deviating_cells, 0u);
}

TEST(Heatmap, SingleScanFillsOneColumn) {
  auto scans = cylinder_scans(38.1, 5.0, 5.05, 0.1, 360);
  ASSERT_EQ(scans.size(), 1u);
  const auto hm = build_heatmap(scans, 0.0, 12.0, 38.1);
  std::set<std::size_t> columns;
  for (std::size_t i = 0; i < hm.state.size(); ++i) {
    if (hm.occupied(i)) columns.insert(i / hm.ntheta);
  }
  EXPECT_EQ(columns.size(), 1u);
}

TEST(Heatmap, GapsFilledFromNearestMeasuredCell) {
  // 120 points per scan leave two empty theta bins between measured ones.
  const auto scans = cylinder_scans(38.1, 0.0, 12.0, 0.1, 120);
  const auto hm = build_heatmap(scans, 0.0, 12.0, 38.1);
  std::size_t measured = 0, filled = 0;
  for (auto s : hm.state) {
    measured += s == CellState::kMeasured;
    filled += s == CellState::kFilled;
  }
  EXPECT_GT(filled, 0u);
  EXPECT_EQ(measured + filled, hm.state.size());
}

TEST(Heatmap, NoScansInSegment) {
  const auto scans = cylinder_scans(38.1, 20.0, 30.0, 1.0, 36);
  try {
    build_heatmap(scans, 0.0, 12.0, 38.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "NoScansInSegment");
  }
}

TEST(Heatmap, ThetaCutAtPi) {
  PositionedScan s;
  s.z_in = 1.0;
  s.points = {{kPi, 30.0}, {-kPi + 1e-9, 31.0}, {0.0, 32.0}};
  const auto hm = build_heatmap({s}, 0.0, 12.0, 30.0);
  const std::size_t iz = hm.index(static_cast<std::size_t>(2.54 / 1.0), 0) / hm.ntheta;
  EXPECT_EQ(hm.state[hm.index(iz, hm.ntheta - 1)], CellState::kMeasured);
  EXPECT_DOUBLE_EQ(hm.radius_cm[hm.index(iz, hm.ntheta - 1)], 30.0);
  EXPECT_DOUBLE_EQ(hm.radius_cm[hm.index(iz, 0)], 31.0);
  EXPECT_DOUBLE_EQ(hm.radius_cm[hm.index(iz, 180)], 32.0);
}

TEST(Deviation, ThresholdBehavior) {
  const double r = 38.1;
  auto hm = build_heatmap(cylinder_scans(r, 0.0, 12.0, 0.05, 360), 0.0, 12.0, r);
  const std::size_t n = hm.occupied_count();
  hm.radius_cm[0] = r + 8.0;
  auto m = geometric_deviation(hm);
  EXPECT_FALSE(m.flagged);
  EXPECT_EQ(m.deviating_cells, 1u);
  EXPECT_NEAR(m.max_abs_deviation_cm, 8.0, 1e-9);
  // A port covering 10% of the cells at +8 cm.
  for (std::size_t i = 0; i < n / 10; ++i) hm.radius_cm[i] = r + 8.0;
  m = geometric_deviation(hm);
  EXPECT_TRUE(m.flagged);
  EXPECT_NEAR(m.fraction, 0.10, 0.01);
}

TEST(Mesh, SquareGivesTwoTriangles) {
  SurfaceHeatmap hm;
  hm.nz = 2;
  hm.ntheta = 2;
  hm.cell_theta_rad = kPi;
  hm.radius_cm.assign(4, 10.0);
  hm.state.assign(4, CellState::kMeasured);
  const auto mesh = triangulate_surface(hm);
  EXPECT_EQ(mesh.vertices.size(), 4u);
  EXPECT_EQ(mesh.triangles.size(), 2u);
  const std::string off = mesh_off(mesh);
  EXPECT_EQ(off.rfind("OFF\n4 2 0\n", 0), 0u);
}

TEST(Mesh, CollinearCellsAreDegenerate) {
  SurfaceHeatmap hm;
  hm.nz = 5;
  hm.ntheta = 1;
  hm.cell_theta_rad = 2 * kPi;
  hm.radius_cm.assign(5, 10.0);
  hm.state.assign(5, CellState::kMeasured);
  try {
    triangulate_surface(hm);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "DegenerateInput");
  }
}

TEST(Images, PositionsAndSegments) {
  const auto odo = testing::out_and_back(60.0, 2.0, 15.0);
  const auto traj = localize::estimate_trajectory(odo);
  const auto plan = localize::divide_segments(traj.max_position_in, 12.0);
  std::vector<ingest::ImageRef> imgs;
  for (int k = 0; k < 5; ++k) imgs.push_back({traj.start() + 5.0 * k, fmt::format("{:04d}.png", k)});
  imgs.push_back({traj.turnaround_time, "turn.png"});
  imgs.push_back({traj.end() + 100.0, "late.png"});
  const auto out = assign_image_positions(imgs, traj, 3.0, plan);
  for (int k = 0; k < 5; ++k) {
    ASSERT_TRUE(out[k].distance_in);
    EXPECT_NEAR(*out[k].distance_in, 10.0 * k + 3.0, 1e-6);
  }
  EXPECT_EQ(out[0].segment, 1);
  EXPECT_EQ(out[2].segment, 2);
  EXPECT_NEAR(*out[5].distance_in, traj.max_position_in + 3.0, 1e-6);
  EXPECT_EQ(out[5].segment, 0);  // beyond the far end
  EXPECT_FALSE(out[6].distance_in);
  EXPECT_EQ(out[6].segment, 0);
}

TEST(HeatmapImage, Dimensions) {
  const double r = 38.1;
  const auto hm = build_heatmap(cylinder_scans(r, 0.0, 12.0, 0.1, 360), 0.0, 12.0, r);
  const auto img = heatmap_image(hm);
  EXPECT_EQ(img.width, static_cast<int>(hm.nz));
  EXPECT_EQ(img.height, 360);
  const auto decoded = png::decode(png::encode(img));
  EXPECT_EQ(decoded.rgb, img.rgb);
}

void expect_delaunay(const std::vector<delaunay::Point>& pts, const std::vector<delaunay::Triangle>& tris) {
  EXPECT_EQ(testing::delaunay_violation(pts, tris), "");
}

using testing::hull_area2;
using testing::tri_area2;

TEST(Delaunay, RandomPointsSatisfyEmptyCircumcircle) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::int64_t> u(0, 1000);
  for (int trial = 0; trial < 20; ++trial) {
    std::set<std::pair<std::int64_t, std::int64_t>> seen;
    std::vector<delaunay::Point> pts;
    while (pts.size() < 200) {
      const delaunay::Point p{u(rng), u(rng)};
      if (seen.insert({p.x, p.y}).second) pts.push_back(p);
    }
    const auto tris = delaunay::triangulate(pts);
    expect_delaunay(pts, tris);
    EXPECT_DOUBLE_EQ(tri_area2(pts, tris), hull_area2(pts));
  }
}

TEST(Delaunay, LatticeWithCocircularPoints) {
  std::vector<delaunay::Point> pts;
  for (int x = 0; x < 20; ++x) {
    for (int y = 0; y < 25; ++y) pts.push_back({x, y});
  }
  const auto tris = delaunay::triangulate(pts);
  EXPECT_EQ(tris.size(), 2u * 19u * 24u);
  expect_delaunay(pts, tris);
}

TEST(Delaunay, CollinearHullPoints) {
  std::vector<delaunay::Point> pts;
  for (int x = 0; x <= 10; ++x) pts.push_back({x, 0});
  pts.push_back({5, 3});
  pts.push_back({-3, 0});
  pts.push_back({13, 0});
  const auto tris = delaunay::triangulate(pts);
  expect_delaunay(pts, tris);
  EXPECT_DOUBLE_EQ(tri_area2(pts, tris), hull_area2(pts));
  EXPECT_EQ(tris.size(), 12u);  // 13 points on the base, one apex
}

TEST(Delaunay, Degenerate) {
  EXPECT_THROW(delaunay::triangulate({{0, 0}, {1, 1}}), Error);
  EXPECT_THROW(delaunay::triangulate({{0, 0}, {1, 1}, {2, 2}, {5, 5}}), Error);
  EXPECT_THROW(delaunay::triangulate({{0, 0}, {1, 0}, {0, 1}, {1, 0}}), Error);
  EXPECT_THROW(delaunay::triangulate({{0, 0}, {1, 0}, {0, delaunay::kMaxCoordinate + 1}}), Error);
}

TEST(Delaunay, HeatmapScaleIsFast) {
  SurfaceHeatmap hm;
  hm.nz = 460;
  hm.ntheta = 360;
  hm.cell_theta_rad = 2 * kPi / 360;
  hm.radius_cm.assign(hm.nz * hm.ntheta, 38.1);
  hm.state.assign(hm.nz * hm.ntheta, CellState::kMeasured);
  const auto mesh = triangulate_surface(hm);
  EXPECT_EQ(mesh.triangles.size(), 2u * 459u * 359u);
}

}  // namespace
}  // namespace pps::geometry
