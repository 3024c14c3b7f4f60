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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "pps/delaunay.hpp"
#include "pps/localize.hpp"

// Independent reference computations shared by the unit and acceptance tests.
namespace pps::testing {

using ingest::OdometrySample;

// Weighted dense Jacobian of the chain objective, assembled without the
// library's factor list, then solved by Householder QR.
inline Eigen::VectorXd dense_solve(const std::vector<OdometrySample>& odo, std::size_t dwell_begin,
                                   std::size_t dwell_end, const localize::TrajectoryConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(odo.size());
  const Eigen::Index rows = n + 2;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
  a(0, 0) = 1.0 / cfg.start_sigma_in;
  for (Eigen::Index k = 1; k < n; ++k) {
    const double s = odo[static_cast<std::size_t>(k)].sigma_in;
    a(k, k) = 1.0 / s;
    a(k, k - 1) = -1.0 / s;
    b(k) = odo[static_cast<std::size_t>(k)].dx_in / s;
  }
  a(n, n - 1) = 1.0 / cfg.closure_sigma_in;
  a(n + 1, static_cast<Eigen::Index>(dwell_end)) = 1.0 / cfg.dwell_sigma_in;
  a(n + 1, static_cast<Eigen::Index>(dwell_begin)) = -1.0 / cfg.dwell_sigma_in;
  return a.householderQr().solve(b);
}

// Unit steps out, a dwell, unit steps back, with noisy readings and sigmas.
inline std::vector<OdometrySample> small_chain(std::mt19937_64& rng, int fwd, int dwell, int rev) {
  std::normal_distribution<double> noise(0.0, 0.05);
  std::uniform_real_distribution<double> sig(0.01, 0.05);
  std::vector<OdometrySample> odo;
  Timestamp t = Timestamp::from_seconds(50.0);
  odo.push_back({t, 0.0, 0.02});
  for (int i = 0; i < fwd; ++i) odo.push_back({t = t + 1.0, 1.0 + noise(rng), sig(rng)});
  for (int i = 0; i < dwell; ++i) odo.push_back({t = t + 1.0, 0.0, sig(rng)});
  for (int i = 0; i < rev; ++i) odo.push_back({t = t + 1.0, -1.0 + noise(rng), sig(rng)});
  return odo;
}

// Norm of the objective gradient at the estimated positions.
inline double chain_gradient_norm(const std::vector<OdometrySample>& odo, const localize::Trajectory& traj,
                                  const localize::TrajectoryConfig& cfg) {
  const auto problem = localize::build_chain_problem(odo, cfg);
  std::vector<double> grad(problem.node_count, 0.0);
  for (const auto& f : problem.factors) {
    const double xi = traj.samples[f.i].position_in;
    const double value = f.j ? traj.samples[*f.j].position_in - xi : xi;
    const double r = (value - f.target) / (f.sigma * f.sigma);
    if (f.j) {
      grad[*f.j] += r;
      grad[f.i] -= r;
    } else {
      grad[f.i] += r;
    }
  }
  double norm = 0;
  for (double g : grad) norm += g * g;
  return std::sqrt(norm);
}

// Brute-force empty-circumcircle check in floating point with tolerance.
// Empty when every triangle is counter-clockwise and no other point lies
// inside its circumcircle.
inline std::string delaunay_violation(const std::vector<delaunay::Point>& pts,
                                      const std::vector<delaunay::Triangle>& tris) {
  for (const auto& t : tris) {
    const auto& a = pts[t[0]];
    const auto& b = pts[t[1]];
    const auto& c = pts[t[2]];
    const double ax = a.x, ay = a.y, bx = b.x, by = b.y, cx = c.x, cy = c.y;
    const double d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by));
    if (d <= 0) return fmt::format("triangle {} {} {} not counter-clockwise", t[0], t[1], t[2]);
    const double ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)) / d;
    const double uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)) / d;
    const double r2 = (ax - ux) * (ax - ux) + (ay - uy) * (ay - uy);
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (k == t[0] || k == t[1] || k == t[2]) continue;
      const double dx = pts[k].x - ux, dy = pts[k].y - uy;
      if (dx * dx + dy * dy < r2 * (1 - 1e-9)) {
        return fmt::format("point {} inside circumcircle of {} {} {}", k, t[0], t[1], t[2]);
      }
    }
  }
  return "";
}

// Area of the triangulation equals the convex hull area (full coverage).
inline double hull_area2(std::vector<delaunay::Point> p) {
  std::sort(p.begin(), p.end(), [](auto& a, auto& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  std::vector<delaunay::Point> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && delaunay::orient(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && delaunay::orient(h[k - 2], h[k - 1], p[i - 1]) <= 0) --k;
    h[k++] = p[i - 1];
  }
  h.resize(k - 1);
  std::int64_t a = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const auto& u = h[i];
    const auto& v = h[(i + 1) % h.size()];
    a += u.x * v.y - v.x * u.y;
  }
  return static_cast<double>(a);
}

inline double tri_area2(const std::vector<delaunay::Point>& pts, const std::vector<delaunay::Triangle>& tris) {
  double a = 0;
  for (const auto& t : tris) a += static_cast<double>(delaunay::orient(pts[t[0]], pts[t[1]], pts[t[2]]));
  return a;
}

}  // namespace pps::testing
