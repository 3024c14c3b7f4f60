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

#include "pps/localize.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <fmt/format.h>

#include "pps/csv.hpp"
#include "pps/error.hpp"

namespace pps::localize {

const char* to_string(Phase p) {
  switch (p) {
    case Phase::kForward:
      return "forward";
    case Phase::kDwell:
      return "dwell";
    case Phase::kReverse:
      return "reverse";
  }
  return "?";
}

const char* to_string(SegmentKind k) {
  switch (k) {
    case SegmentKind::kStandard:
      return "standard";
    case SegmentKind::kStretch:
      return "stretch";
    case SegmentKind::kFov:
      return "fov";
  }
  return "?";
}

ChainProblem build_chain_problem(const std::vector<ingest::OdometrySample>& odometry,
                                 const TrajectoryConfig& config) {
  const std::size_t n = odometry.size();
  if (n < 2) throw Error("NoDwellFound", "odometry has fewer than two samples");

  // Longest stationary stretch (by duration) long enough to be the turnaround.
  std::size_t best_begin = 0, best_end = 0;
  double best_duration = -1.0;
  std::size_t i = 1;
  while (i < n) {
    if (std::abs(odometry[i].dx_in) >= config.dwell_speed_threshold_in) {
      ++i;
      continue;
    }
    const std::size_t first_step = i;
    while (i < n && std::abs(odometry[i].dx_in) < config.dwell_speed_threshold_in) ++i;
    const std::size_t begin = first_step - 1, end = i - 1;
    const double duration = odometry[end].t - odometry[begin].t;
    if (duration > best_duration) {
      best_duration = duration;
      best_begin = begin;
      best_end = end;
    }
  }
  if (best_duration < config.min_dwell_s) {
    throw Error("NoDwellFound",
                fmt::format("no stationary interval of at least {} s (longest {} s)", config.min_dwell_s,
                            std::max(best_duration, 0.0)));
  }

  ChainProblem problem;
  problem.node_count = n;
  problem.dwell_begin = best_begin;
  problem.dwell_end = best_end;
  problem.factors.reserve(n + 2);
  problem.factors.push_back({0, std::nullopt, config.entrance_offset_in, config.start_sigma_in});
  for (std::size_t k = 1; k < n; ++k) {
    const double sigma = odometry[k].sigma_in > 0 ? odometry[k].sigma_in : config.default_step_sigma_in;
    problem.factors.push_back({k - 1, k, odometry[k].dx_in, sigma});
  }
  problem.factors.push_back({n - 1, std::nullopt, config.entrance_offset_in, config.closure_sigma_in});
  problem.factors.push_back({best_begin, best_end, 0.0, config.dwell_sigma_in});
  return problem;
}

Trajectory estimate_trajectory(const std::vector<ingest::OdometrySample>& odometry,
                               const TrajectoryConfig& config) {
  if (odometry.empty()) throw Error("NoDwellFound", "odometry is empty");
  const ChainProblem problem = build_chain_problem(odometry, config);
  const auto n = static_cast<Eigen::Index>(problem.node_count);

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(problem.factors.size() * 4);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (const Factor& f : problem.factors) {
    if (!(f.sigma > 0) || !std::isfinite(f.sigma)) {
      throw Error("SingularSystem", fmt::format("factor at node {} has sigma {}", f.i, f.sigma));
    }
    const double w = 1.0 / (f.sigma * f.sigma);
    const auto a = static_cast<Eigen::Index>(f.i);
    if (f.j) {
      const auto b = static_cast<Eigen::Index>(*f.j);
      triplets.emplace_back(a, a, w);
      triplets.emplace_back(b, b, w);
      triplets.emplace_back(a, b, -w);
      triplets.emplace_back(b, a, -w);
      rhs[a] -= w * f.target;
      rhs[b] += w * f.target;
    } else {
      triplets.emplace_back(a, a, w);
      rhs[a] += w * f.target;
    }
  }
  Eigen::SparseMatrix<double> information(n, n);
  information.setFromTriplets(triplets.begin(), triplets.end());

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  solver.compute(information);
  if (solver.info() != Eigen::Success || (solver.vectorD().array() <= 0).any()) {
    throw Error("SingularSystem", "information matrix is not positive definite");
  }
  Eigen::VectorXd x = solver.solve(rhs);
  // Long chains are ill-conditioned; refinement brings the answer back to
  // rounding level.
  for (int pass = 0; pass < 2 && x.allFinite(); ++pass) x += solver.solve(rhs - information * x);
  if (solver.info() != Eigen::Success || !x.allFinite()) {
    throw Error("SingularSystem", "normal equation solve failed");
  }

  Trajectory traj;
  traj.samples.resize(problem.node_count);
  traj.dwell_begin = problem.dwell_begin;
  traj.dwell_end = problem.dwell_end;
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    unit[k] = 1.0;
    const double variance = solver.solve(unit)[k];
    unit[k] = 0.0;
    auto& s = traj.samples[static_cast<std::size_t>(k)];
    s.t = odometry[static_cast<std::size_t>(k)].t;
    s.position_in = x[k];
    s.sigma_in = std::sqrt(std::max(variance, 0.0));
    const auto idx = static_cast<std::size_t>(k);
    s.phase = idx <= problem.dwell_begin ? Phase::kForward
              : idx >= problem.dwell_end ? Phase::kReverse
                                         : Phase::kDwell;
  }
  const Timestamp dwell_start = traj.samples[problem.dwell_begin].t;
  const Timestamp dwell_stop = traj.samples[problem.dwell_end].t;
  traj.turnaround_time = Timestamp::from_micros((dwell_start.micros() + dwell_stop.micros()) / 2);
  traj.max_position_in = x.maxCoeff();
  return traj;
}

PositionEstimate position_at(const Trajectory& traj, Timestamp t, double offset_in) {
  const auto& s = traj.samples;
  if (s.empty() || t < s.front().t || t > s.back().t) {
    throw Error("OutOfSpan", fmt::format("time {} is outside the trajectory", t.to_string()));
  }
  const auto it = std::lower_bound(s.begin(), s.end(), t,
                                   [](const TrajectorySample& a, Timestamp b) { return a.t < b; });
  if (it->t == t) return {it->position_in + offset_in, it->sigma_in};
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double f = (t - lo.t) / (hi.t - lo.t);
  return {lo.position_in + f * (hi.position_in - lo.position_in) + offset_in,
          lo.sigma_in + f * (hi.sigma_in - lo.sigma_in)};
}

SensorOffsets default_offsets(int pipe_diameter_in) {
  SensorOffsets o;
  if (pipe_diameter_in == 42) {
    o.lidar_radial_r_cm = 7.0;
    o.lidar_radial_theta_rad = 0.0;
  } else {
    o.lidar_radial_r_cm = 9.0;
    o.lidar_radial_theta_rad = std::numbers::pi;
  }
  return o;
}

SensorOffsets offsets_for(const ingest::Manifest& manifest) {
  SensorOffsets o = default_offsets(manifest.pipe_diameter_in);
  if (manifest.detector_offset_in) o.detector_fov_center_in = *manifest.detector_offset_in;
  if (manifest.camera_offset_in) o.camera_view_in = *manifest.camera_offset_in;
  if (manifest.lidar_along_in) o.lidar_along_in = *manifest.lidar_along_in;
  return o;
}

const Segment* SegmentPlan::find(int number) const {
  for (const auto& s : segments) {
    if (s.number == number) return &s;
  }
  return nullptr;
}

SegmentPlan divide_segments(double max_position_in, double fov_length_in) {
  if (!(fov_length_in > 0)) throw Error("PipeTooShort", "FOV length must be positive");
  if (max_position_in < fov_length_in) {
    throw Error("PipeTooShort",
                fmt::format("measured length {} in is shorter than the {} in FOV", max_position_in, fov_length_in));
  }
  const double before_fov = max_position_in - fov_length_in;
  auto full = static_cast<long>(std::floor(before_fov / kStandardSegmentIn + 1e-9));
  double remainder = std::max(0.0, before_fov - kStandardSegmentIn * static_cast<double>(full));
  if (remainder < 1e-9) remainder = 0.0;

  SegmentPlan plan;
  std::vector<std::pair<double, SegmentKind>> lengths;
  if (remainder >= kMinStretchIn) {
    lengths.assign(static_cast<std::size_t>(full), {kStandardSegmentIn, SegmentKind::kStandard});
    lengths.emplace_back(remainder, SegmentKind::kStretch);
  } else if (full > 0) {
    lengths.assign(static_cast<std::size_t>(full - 1), {kStandardSegmentIn, SegmentKind::kStandard});
    lengths.emplace_back(kStandardSegmentIn + remainder,
                         remainder > 0 ? SegmentKind::kStretch : SegmentKind::kStandard);
  } else if (remainder > 0) {
    lengths.emplace_back(remainder, SegmentKind::kStretch);
    plan.warnings.push_back(fmt::format(
        "SHORT_REMAINDER: {:.3f} in before the FOV segment is shorter than {} in and has no 12 in "
        "segment to merge into; kept as its own segment",
        remainder, kMinStretchIn));
  }
  lengths.emplace_back(fov_length_in, SegmentKind::kFov);

  double start = 0.0;
  int number = 1;
  for (std::size_t k = 0; k < lengths.size(); ++k) {
    Segment seg;
    seg.number = number++;
    seg.start_in = start;
    seg.end_in = k + 1 == lengths.size() ? max_position_in : start + lengths[k].first;
    seg.kind = lengths[k].second;
    start = seg.end_in;
    plan.segments.push_back(seg);
  }
  return plan;
}

double measured_length_in(const Trajectory& traj, double detector_offset_in) {
  return traj.max_position_in + detector_offset_in;
}

namespace {

Timestamp interpolate_crossing(const TrajectorySample& a, const TrajectorySample& b, double pa, double pb,
                               double bound) {
  if (pa == pb) return b.t;
  const double f = std::clamp((bound - pa) / (pb - pa), 0.0, 1.0);
  return a.t + f * (b.t - a.t);
}

// First time the detector center reaches `bound` moving outward.
std::optional<Timestamp> forward_crossing(const Trajectory& traj, double offset, double bound, double tol) {
  const auto& s = traj.samples;
  for (std::size_t i = 0; i <= traj.dwell_begin; ++i) {
    const double p = s[i].position_in + offset;
    if (p >= bound) {
      if (i == 0) return s[0].t;
      return interpolate_crossing(s[i - 1], s[i], s[i - 1].position_in + offset, p, bound);
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 0; i <= traj.dwell_begin; ++i) {
    if (s[i].position_in > s[best].position_in) best = i;
  }
  if (s[best].position_in + offset >= bound - tol) return s[best].t;
  return std::nullopt;
}

// First time the detector center comes back down to `bound`.
std::optional<Timestamp> reverse_crossing(const Trajectory& traj, double offset, double bound, double tol) {
  const auto& s = traj.samples;
  for (std::size_t i = traj.dwell_end; i < s.size(); ++i) {
    const double p = s[i].position_in + offset;
    if (p <= bound) {
      if (i == traj.dwell_end) return s[i].t;
      return interpolate_crossing(s[i - 1], s[i], s[i - 1].position_in + offset, p, bound);
    }
  }
  std::size_t best = traj.dwell_end;
  for (std::size_t i = traj.dwell_end; i < s.size(); ++i) {
    if (s[i].position_in < s[best].position_in) best = i;
  }
  if (s[best].position_in + offset <= bound + tol) return s[best].t;
  return std::nullopt;
}

}  // namespace

SegmentPlan segment_time_windows(const Trajectory& traj, SegmentPlan plan, double detector_offset_in,
                                 double bound_tolerance_in) {
  if (traj.samples.empty()) throw Error("SegmentNotTraversed", "empty trajectory");
  const auto need = [&](std::optional<Timestamp> t, const Segment& seg, const char* what) {
    if (!t) {
      throw Error("SegmentNotTraversed",
                  fmt::format("segment {} [{:.2f}, {:.2f}] in: no {} crossing", seg.number, seg.start_in,
                              seg.end_in, what));
    }
    return *t;
  };
  for (std::size_t k = 0; k < plan.segments.size(); ++k) {
    Segment& seg = plan.segments[k];
    const bool last = k + 1 == plan.segments.size();
    const Timestamp f_enter =
        need(forward_crossing(traj, detector_offset_in, seg.start_in, bound_tolerance_in), seg, "forward entry");
    const Timestamp f_exit =
        last ? traj.turnaround_time
             : need(forward_crossing(traj, detector_offset_in, seg.end_in, bound_tolerance_in), seg, "forward exit");
    const Timestamp r_enter =
        last ? traj.turnaround_time
             : need(reverse_crossing(traj, detector_offset_in, seg.end_in, bound_tolerance_in), seg, "reverse entry");
    const Timestamp r_exit =
        need(reverse_crossing(traj, detector_offset_in, seg.start_in, bound_tolerance_in), seg, "reverse exit");
    seg.forward = TimeWindow{f_enter, f_exit};
    seg.reverse = TimeWindow{r_enter, r_exit};
  }
  return plan;
}

std::string trajectory_csv(const Trajectory& traj) {
  csv::Writer w({"t", "x", "sigma", "phase"});
  for (const auto& s : traj.samples) {
    w.row({s.t.to_string(), fmt::format("{:.6f}", s.position_in), fmt::format("{:.6f}", s.sigma_in),
           to_string(s.phase)});
  }
  return w.str();
}

}  // namespace pps::localize
