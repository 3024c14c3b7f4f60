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

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "pps/pipeline.hpp"

namespace pps::testing {

// Hand-built analysis results for workflow and reporting tests; no physics.
struct FakeRun {
  int segments = 5;
  double segment_length_in = 24.0;
  // Per-segment (forward, reverse) masses; defaults to 1 g both ways.
  std::map<int, std::pair<double, double>> masses;
  double sigma_g = 0.05;
  bool pre_qc_fail = false;
  bool post_qc_fail = false;
  bool contamination = false;
  bool detector_reset = false;
  bool full_pipe_fail = false;
  bool closure_fail = false;
  std::vector<int> seg_qc_fwd_fail;
  std::vector<int> seg_qc_rev_fail;
  std::vector<int> geometry;
  std::vector<int> lumps;
  std::vector<int> unmeasured;  // no results at all for these segments
};

inline bool has(const std::vector<int>& v, int n) { return std::find(v.begin(), v.end(), n) != v.end(); }

inline qc::QcResult fake_qc(qc::Context c, int segment, bool pass) {
  qc::QcResult q;
  q.context = c;
  q.segment = segment;
  q.measured = qc::PeakMetrics{pass ? 59.5 : 66.0, 3.0, 200.0, 12000.0};
  q.criteria.push_back({"centroid", q.measured->centroid_kev, 2.0, pass});
  q.criteria.push_back({"fwhm", 3.0, 6.0, true});
  q.pass = pass;
  return q;
}

inline radiometrics::SegmentResult fake_segment_result(int n, localize::Phase phase, double mass, double sigma,
                                                       bool lump) {
  radiometrics::SegmentResult r;
  r.segment = n;
  r.phase = phase;
  r.mass_g = mass;
  r.density_at_max_g_per_ft = mass;
  r.sigma_random_g = sigma;
  r.tmu_g = 2.0 * std::hypot(sigma, 0.1 * mass);
  r.mda_g = 0.05;
  r.lump_flagged = lump;
  return r;
}

inline pipeline::AnalysisResult fake_result(const FakeRun& f) {
  pipeline::AnalysisResult r;
  r.batch_id = "RP001-20180710T140322Z";
  r.manifest.robot_id = "RP001";
  r.manifest.detector_id = "D01";
  r.manifest.fov_length_in = 12.0;
  r.manifest.pipe_diameter_in = 30;
  r.manifest.start_time = Timestamp::parse_iso8601("2018-07-10T14:03:22Z");
  r.request.job_id = "J-17";
  r.request.building = "K-25";
  r.request.unit = "U3";
  r.request.cell = "C5";
  r.request.pipe_item_id = "PI-0042";
  r.request.expected_length_ft = f.segments * f.segment_length_in / 12.0;
  r.calibration_file = "cal-D01";
  r.calibrated_on = Timestamp::parse_iso8601("2018-03-01T00:00:00Z");
  r.operations.measured_length_in = f.segments * f.segment_length_in;
  r.operations.max_position_in = r.operations.measured_length_in - 6.0;
  r.operations.forward_speed_in_s = 1.0;
  r.operations.reverse_speed_in_s = 1.0;
  r.operations.run_duration_s = 2 * r.operations.max_position_in + 15.0;
  r.operations.window_length_in = 12.0;
  r.operations.fov_length_in = 12.0;
  for (int n = 1; n <= f.segments; ++n) {
    pipeline::SegmentOutcome s;
    s.number = n;
    s.start_in = (n - 1) * f.segment_length_in;
    s.end_in = n * f.segment_length_in;
    if (!has(f.unmeasured, n)) {
      auto [mf, mr] = f.masses.count(n) ? f.masses.at(n) : std::pair{1.0, 1.0};
      const bool lump = has(f.lumps, n);
      s.forward = fake_segment_result(n, localize::Phase::kForward, mf, f.sigma_g, lump);
      s.reverse = fake_segment_result(n, localize::Phase::kReverse, mr, f.sigma_g, lump);
      s.reported = radiometrics::average_fwd_rev(*s.forward, *s.reverse, r.parameters.uncertainty);
      s.qc_forward = fake_qc(qc::Context::kSegmentForward, n, !has(f.seg_qc_fwd_fail, n));
      s.qc_reverse = fake_qc(qc::Context::kSegmentReverse, n, !has(f.seg_qc_rev_fail, n));
    } else {
      s.notes.push_back("no spectra in segment");
    }
    geometry::DeviationMetrics d;
    d.occupied_cells = 1000;
    d.flagged = has(f.geometry, n);
    d.deviating_cells = d.flagged ? 120 : 3;
    d.fraction = d.deviating_cells / 1000.0;
    d.max_abs_deviation_cm = d.flagged ? 8.0 : 1.0;
    s.geometry = d;
    r.segments.push_back(std::move(s));
  }
  qc::OnboardChecks ob;
  ob.pre = fake_qc(qc::Context::kPre, 0, !f.pre_qc_fail);
  ob.post = fake_qc(qc::Context::kPost, 0, !f.post_qc_fail);
  r.onboard = ob;
  qc::ContaminationResult c;
  c.delta_cps = f.contamination ? 5.0 : 0.01;
  c.sigma_cps = 0.1;
  c.threshold_cps = 0.3;
  c.delta_g = c.delta_cps * 0.002;
  c.pass = !f.contamination;
  r.contamination = c;
  if (f.detector_reset) r.detector_reset_poll = 1234;
  r.full_pipe = fake_qc(qc::Context::kFullPipe, 0, !f.full_pipe_fail);
  r.localization_closure_failed = f.closure_fail;
  if (f.closure_fail) r.operations.odometry_closure_in = 3.5;
  return r;
}

}  // namespace pps::testing
