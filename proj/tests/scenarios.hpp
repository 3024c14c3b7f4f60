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

#include <string>
#include <vector>

#include "pps/pipeline.hpp"
#include "pps/review.hpp"
#include "pps/synth.hpp"

namespace pps::testing {

// Short pipe with coarse sensors, for tests that only need a valid run.
inline synth::Scenario quick_scenario(std::uint64_t seed = 1) {
  synth::Scenario s;
  s.name = "quick";
  s.seed = seed;
  s.pipe_length_ft = 5.0;
  s.robot.speed_in_s = 2.0;
  s.robot.lidar_rays = 120;
  s.robot.image_period_s = 5.0;
  return s;
}

// 10-ft, 30-in pipe with 3 g of tacky-mat material spread over 6 ft to 7 ft,
// seen by a 6-in detector field of view.
inline synth::Scenario tacky_mat_scenario(std::uint64_t seed = 1) {
  synth::Scenario s;
  s.name = "tacky_mat";
  s.seed = seed;
  s.pipe_length_ft = 10.0;
  s.pipe_diameter_in = 30;
  s.detector.fov_in = 6.0;
  s.deposits.push_back({6.0, 7.0, 3.0, "hybrid_tacky_mat"});
  return s;
}

struct Analyzed {
  synth::GeneratedRun run;
  pipeline::AnalysisResult result;
};

inline Analyzed generate_and_analyze(const synth::Scenario& s, const pipeline::ProcessingParameters& p = {}) {
  Analyzed a;
  a.run = synth::generate_run(s);
  ingest::UnpackOptions lenient;
  lenient.require_monotone_accumulation = false;
  a.result = pipeline::analyze(ingest::unpack_run_bundle(a.run.bundle_zip, lenient), p, pipeline::default_config());
  return a;
}

inline std::vector<synth::ExpectedFlag> raised_flags(const pipeline::AnalysisResult& r) {
  std::optional<qc::ReplicatePair> rep;
  try {
    rep = pipeline::replicate_for(r, {});
  } catch (const std::exception&) {
  }
  std::vector<synth::ExpectedFlag> out;
  for (const auto& f : review::raise_flags(r, {}, rep)) out.push_back({f.code, f.segment});
  return out;
}

inline synth::Observed observe(const pipeline::AnalysisResult& r) {
  synth::Observed o;
  o.max_position_in = r.operations.measured_length_in;
  for (const auto& s : r.segments) {
    synth::ObservedSegment seg{s.number, s.start_in, s.end_in, {}, 0.0};
    if (s.reported) {
      seg.mass_g = s.reported->mass_g;
      seg.mda_g = s.reported->mda_g;
    }
    o.segments.push_back(seg);
  }
  o.flags = raised_flags(r);
  return o;
}

inline bool has_flag(const std::vector<synth::ExpectedFlag>& flags, const std::string& code, int segment = -1) {
  for (const auto& f : flags) {
    if (f.code == code && (segment < 0 || f.segment == segment)) return true;
  }
  return false;
}

}  // namespace pps::testing
