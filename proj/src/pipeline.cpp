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

#include "pps/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pps/csv.hpp"
#include "pps/error.hpp"

namespace pps::pipeline {

namespace {

// Runs one stage, re-raising its errors as ProcessingFailure tagged with the
// stage name.
template <typename F>
auto stage(const char* module, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error("ProcessingFailure", fmt::format("{}: {}", module, e.what()));
  }
}

// Accumulated difference between the first poll at or after `enter` and the
// last poll at or before `exit`.
std::optional<Spectrum> window_between(const std::vector<TimedSpectrum>& stream, Timestamp enter, Timestamp exit) {
  const auto lo = std::lower_bound(stream.begin(), stream.end(), enter,
                                   [](const TimedSpectrum& s, Timestamp t) { return s.t < t; });
  auto hi = std::upper_bound(stream.begin(), stream.end(), exit,
                             [](Timestamp t, const TimedSpectrum& s) { return t < s.t; });
  if (lo == stream.end() || hi == stream.begin()) return std::nullopt;
  --hi;
  if (hi <= lo) return std::nullopt;
  return radiometrics::incremental_spectrum(*lo, *hi);
}

qc::QcResult segment_qc(const std::vector<TimedSpectrum>& stream, const std::optional<localize::TimeWindow>& w,
                        const qc::QcBounds& bounds, qc::Context ctx, int number,
                        const radiometrics::RoiDefinition& roi) {
  std::optional<Spectrum> s;
  if (w) s = window_between(stream, w->enter, w->exit);
  if (!s || !(s->live_time_s > 0)) {
    qc::QcResult r;
    r.context = ctx;
    r.segment = number;
    r.pass = false;
    r.note = "fewer than two spectrum polls inside the traversal window";
    return r;
  }
  qc::QcResult r = qc::qc_check(*s, bounds, ctx, roi);
  r.segment = number;
  return r;
}

std::string seg_name(int n, const char* what) { return fmt::format("seg_{:03d}_{}", n, what); }

}  // namespace

std::string image_artifact_name(const std::string& file) {
  std::string out = "image_" + file;
  for (auto& c : out) {
    if (c == '/' || c == '\\') c = '_';
  }
  return out;
}

const SegmentOutcome* AnalysisResult::segment(int number) const {
  for (const auto& s : segments) {
    if (s.number == number) return &s;
  }
  return nullptr;
}

const qc::QcBounds& AnalysisConfig::bounds(const std::string& set) const {
  const auto it = am241_bounds.find(set);
  if (it == am241_bounds.end()) throw Error("UnknownBoundsSet", "no QC bounds set named " + set);
  return it->second;
}

AnalysisConfig default_config() {
  AnalysisConfig c;
  c.calibration.calibrated_on = Timestamp::parse_iso8601("2018-03-01T00:00:00Z");
  return c;
}

std::string spectrum_csv(const Spectrum& s) {
  csv::Writer w({"channel", "energy_kev", "counts"});
  for (std::size_t c = 0; c < s.counts.size(); ++c) {
    w.row({std::to_string(c), fmt::format("{:.4f}", s.cal.energy(static_cast<double>(c))), std::to_string(s.counts[c])});
  }
  return w.str();
}

qc::ReplicatePair replicate_for(const AnalysisResult& r, const std::vector<int>& rejected) {
  std::vector<radiometrics::SegmentResult> fwd, rev;
  for (const auto& s : r.segments) {
    if (std::find(rejected.begin(), rejected.end(), s.number) != rejected.end()) continue;
    if (!s.forward || !s.reverse) continue;
    fwd.push_back(*s.forward);
    rev.push_back(*s.reverse);
  }
  return qc::replicate_check(fwd, rev, r.parameters.replicate);
}

AnalysisResult analyze(const ingest::RunBundle& b, const ProcessingParameters& p, const AnalysisConfig& cfg) {
  const auto issues = ingest::validate_bundle(b);
  for (const auto& i : issues) {
    if (i.severity == ingest::Severity::kFatal) {
      throw Error("FatalIngestIssue", fmt::format("{} ({}): {}", i.code, i.stream, i.message));
    }
  }

  AnalysisResult r;
  r.batch_id = ingest::make_batch_id(b.manifest.robot_id, b.manifest.start_time).rendered;
  r.manifest = b.manifest;
  r.request = b.request;
  r.parameters = p;
  r.calibration_file = cfg.calibration.file_id;
  r.calibrated_on = cfg.calibration.calibrated_on;
  for (const auto& i : issues) r.warnings.push_back(fmt::format("{}: {}", i.code, i.message));

  const double fov = b.manifest.fov_length_in;
  const double window = p.window_length_in.value_or(fov);
  const localize::SensorOffsets offsets = localize::offsets_for(b.manifest);
  // Parameter errors are the caller's, not a stage failure.
  const qc::QcBounds& am_bounds = cfg.bounds(p.qc_bounds_set);
  const double mu = cfg.calibration.mu_for(p.material);

  // Localization and segmentation.
  const localize::Trajectory traj = stage("localize", [&] { return localize::estimate_trajectory(b.odometry, cfg.trajectory); });
  const double length = localize::measured_length_in(traj, offsets.detector_fov_center_in);
  localize::SegmentPlan plan = stage("localize", [&] {
    return localize::segment_time_windows(traj, localize::divide_segments(length, fov), offsets.detector_fov_center_in);
  });
  for (const auto& w : plan.warnings) r.warnings.push_back(w);

  auto& ops = r.operations;
  ops.measured_length_in = length;
  ops.max_position_in = traj.max_position_in;
  ops.fov_length_in = fov;
  ops.window_length_in = window;
  ops.polls = b.spectra.size();
  ops.lidar_scans = b.lidar.size();
  ops.images = b.images.size();
  ops.run_duration_s = traj.end() - traj.start();
  {
    const auto& s = traj.samples;
    const double t_fwd = s[traj.dwell_begin].t - s.front().t;
    const double t_rev = s.back().t - s[traj.dwell_end].t;
    ops.dwell_duration_s = s[traj.dwell_end].t - s[traj.dwell_begin].t;
    ops.forward_speed_in_s = t_fwd > 0 ? (s[traj.dwell_begin].position_in - s.front().position_in) / t_fwd : 0.0;
    ops.reverse_speed_in_s = t_rev > 0 ? (s[traj.dwell_end].position_in - s.back().position_in) / t_rev : 0.0;
  }
  for (const auto& o : b.odometry) ops.odometry_closure_in += o.dx_in;
  r.localization_closure_failed = std::abs(ops.odometry_closure_in) > cfg.closure_tolerance_in;

  for (const auto& seg : plan.segments) {
    SegmentOutcome o;
    o.number = seg.number;
    o.start_in = seg.start_in;
    o.end_in = seg.end_in;
    o.kind = seg.kind;
    r.segments.push_back(std::move(o));
  }
  r.artifacts["trajectory.csv"] = localize::trajectory_csv(traj);

  // Onboard QC and contamination, recomputed from the raw check spectra.
  r.onboard = stage("qc", [&] { return qc::recompute_onboard_checks(b, am_bounds, p.am241_roi); });
  r.onboard->pre.spectrum_ref = "qc_pre_spectrum.csv";
  r.onboard->post.spectrum_ref = "qc_post_spectrum.csv";
  r.artifacts["qc_pre_spectrum.csv"] = spectrum_csv(b.qc_pre->spectrum);
  r.artifacts["qc_post_spectrum.csv"] = spectrum_csv(b.qc_post->spectrum);
  r.contamination = stage("qc", [&] {
    return qc::contamination_check(b.qc_pre->spectrum, b.qc_post->spectrum, p.u235_roi, cfg.calibration.k_cal_g_s,
                                   cfg.contamination_floor_g);
  });

  // Radiometrics. A detector reset leaves nothing trustworthy to assay.
  r.detector_reset_poll = ingest::first_decreasing_poll(b.spectra);
  std::vector<qc::QcResult> qc_rows{r.onboard->pre, r.onboard->post};
  if (r.detector_reset_poll) {
    r.warnings.push_back(fmt::format("accumulated counts drop at poll {}; radiometric analysis skipped",
                                     *r.detector_reset_poll));
  } else {
    const Spectrum whole = radiometrics::incremental_spectrum(b.spectra.front(), b.spectra.back());
    r.full_pipe = stage("qc", [&] { return qc::full_pipe_check(whole, p.u235_roi, cfg.full_pipe_bounds); });
    r.full_pipe->spectrum_ref = "full_pipe_spectrum.csv";
    r.artifacts["full_pipe_spectrum.csv"] = spectrum_csv(whole);
    qc_rows.push_back(*r.full_pipe);

    radiometrics::MassCurve curves[2];
    const localize::Phase phases[2] = {localize::Phase::kForward, localize::Phase::kReverse};
    for (int k = 0; k < 2; ++k) {
      curves[k] = stage("radiometrics", [&] {
        const auto windows = radiometrics::moving_window_spectra(b.spectra, traj, window, phases[k],
                                                                 offsets.detector_fov_center_in);
        return radiometrics::build_mass_curve(windows, phases[k], window, p.u235_roi, cfg.calibration, mu, fov);
      });
    }
    r.artifacts["mass_curve_fwd.csv"] = radiometrics::mass_curve_csv(curves[0]);
    r.artifacts["mass_curve_rev.csv"] = radiometrics::mass_curve_csv(curves[1]);

    for (std::size_t i = 0; i < plan.segments.size(); ++i) {
      const auto& seg = plan.segments[i];
      SegmentOutcome& o = r.segments[i];
      const bool last = i + 1 == plan.segments.size();
      std::optional<Spectrum> both;
      for (int k = 0; k < 2; ++k) {
        try {
          auto res = radiometrics::segment_result(curves[k], seg, cfg.calibration, fov, p.uncertainty, last);
          const Spectrum used = radiometrics::incremental_spectrum(b.spectra[res.first_poll], b.spectra[res.last_poll]);
          r.artifacts[seg_name(seg.number, k == 0 ? "spectrum_fwd.csv" : "spectrum_rev.csv")] = spectrum_csv(used);
          (k == 0 ? o.forward : o.reverse) = res;
          if (!both) {
            both = used;
          } else {
            for (std::size_t c = 0; c < used.counts.size(); ++c) both->counts[c] += used.counts[c];
            both->live_time_s += used.live_time_s;
          }
        } catch (const Error& e) {
          o.notes.push_back(fmt::format("{} traversal: {}", k == 0 ? "forward" : "reverse", e.what()));
        }
      }
      if (both) {
        o.line_ratio = stage("radiometrics", [&] {
          return radiometrics::line_ratio_test(*both, p.u235_roi, radiometrics::u235_144_roi(), cfg.calibration, mu);
        });
      }
      o.qc_forward = segment_qc(b.spectra, seg.forward, am_bounds, qc::Context::kSegmentForward, seg.number, p.am241_roi);
      o.qc_reverse = segment_qc(b.spectra, seg.reverse, am_bounds, qc::Context::kSegmentReverse, seg.number, p.am241_roi);
      qc_rows.push_back(*o.qc_forward);
      qc_rows.push_back(*o.qc_reverse);
    }

    // A compact source also depresses the line ratio of the windows either
    // side of it. Within a run of adjacent ratio failures only the segments
    // holding the most material keep the flag.
    const auto seen_g = [](const SegmentOutcome& o) {
      double sum = 0.0;
      int n = 0;
      for (const auto* t : {&o.forward, &o.reverse}) {
        if (*t) {
          sum += (*t)->mass_g;
          ++n;
        }
      }
      return n ? sum / n : 0.0;
    };
    const auto ratio_failed = [&](std::size_t i) {
      return i < r.segments.size() && r.segments[i].line_ratio && r.segments[i].line_ratio->flagged;
    };
    for (std::size_t i = 0; i < r.segments.size(); ++i) {
      SegmentOutcome& o = r.segments[i];
      if (ratio_failed(i)) {
        const double here = seen_g(o);
        const bool peak = (i == 0 || !ratio_failed(i - 1) || here >= seen_g(r.segments[i - 1])) &&
                          (!ratio_failed(i + 1) || here >= seen_g(r.segments[i + 1]));
        if (peak) {
          for (auto* t : {&o.forward, &o.reverse}) {
            if (*t) (*t)->lump_flagged = true;
          }
          o.notes.push_back(fmt::format("144/186 keV ratio {:.3f} +- {:.3f} is below the {:.3f} expected at {:.2f} g/cm2",
                                        o.line_ratio->ratio, o.line_ratio->sigma, o.line_ratio->threshold_ratio,
                                        cfg.calibration.tau_max_g_cm2));
        } else {
          o.notes.push_back(fmt::format("144/186 keV ratio {:.3f} is low but attributed to a neighbouring segment",
                                        o.line_ratio->ratio));
        }
      }
      if (o.forward && o.reverse) o.reported = radiometrics::average_fwd_rev(*o.forward, *o.reverse, p.uncertainty);
    }

    csv::Writer w({"segment", "start_in", "end_in", "kind", "fwd_g", "fwd_sigma_g", "rev_g", "rev_sigma_g", "mass_g",
                   "tmu_g", "mda_g", "attenuation_factor", "lump_flagged"});
    for (const auto& o : r.segments) {
      const auto num = [](const std::optional<radiometrics::SegmentResult>& s, double radiometrics::SegmentResult::*f) {
        return s ? fmt::format("{:.6f}", (*s).*f) : std::string();
      };
      w.row({std::to_string(o.number), fmt::format("{:.3f}", o.start_in), fmt::format("{:.3f}", o.end_in),
             localize::to_string(o.kind), num(o.forward, &radiometrics::SegmentResult::mass_g),
             num(o.forward, &radiometrics::SegmentResult::sigma_random_g),
             num(o.reverse, &radiometrics::SegmentResult::mass_g),
             num(o.reverse, &radiometrics::SegmentResult::sigma_random_g),
             num(o.reported, &radiometrics::SegmentResult::mass_g), num(o.reported, &radiometrics::SegmentResult::tmu_g),
             num(o.reported, &radiometrics::SegmentResult::mda_g),
             num(o.reported, &radiometrics::SegmentResult::attenuation_factor),
             o.reported ? (o.reported->lump_flagged ? "true" : "false") : ""});
    }
    r.artifacts["segments.csv"] = w.str();
  }
  r.artifacts["qc_results.csv"] = qc::qc_results_csv(qc_rows);

  // Geometry.
  if (!b.lidar.empty()) {
    const auto scans = stage("geometry", [&] {
      return geometry::position_scans(b.lidar, traj, offsets, cfg.lidar_calibration);
    });
    const double radius = geometry::nominal_radius_cm(b.manifest.pipe_diameter_in);
    for (std::size_t i = 0; i < r.segments.size(); ++i) {
      SegmentOutcome& o = r.segments[i];
      try {
        const auto hm = geometry::build_heatmap(scans, o.start_in, o.end_in, radius, cfg.grid, i + 1 == r.segments.size());
        o.geometry = geometry::geometric_deviation(hm, p.deviation);
        r.artifacts[seg_name(o.number, "heatmap.png")] = png::encode(geometry::heatmap_image(hm));
        r.artifacts[seg_name(o.number, "heatmap.csv")] = geometry::heatmap_csv(hm);
        try {
          r.artifacts[seg_name(o.number, "mesh.off")] = geometry::mesh_off(geometry::triangulate_surface(hm));
        } catch (const Error& e) {
          o.notes.push_back(fmt::format("surface mesh: {}", e.what()));
        }
      } catch (const Error& e) {
        o.notes.push_back(fmt::format("surface model: {}", e.what()));
      }
    }
  }

  // Camera frames.
  const auto images = stage("geometry", [&] {
    return geometry::assign_image_positions(b.images, traj, offsets.camera_view_in, plan);
  });
  {
    csv::Writer w({"file", "t", "distance_in", "segment"});
    for (const auto& img : images) {
      w.row({img.file, img.t.to_string(), img.distance_in ? fmt::format("{:.3f}", *img.distance_in) : "",
             std::to_string(img.segment)});
      for (auto& o : r.segments) {
        if (o.number == img.segment) o.images.push_back(img.file);
      }
      if (auto f = b.image_files.find(img.file); f != b.image_files.end()) {
        r.artifacts[image_artifact_name(img.file)] = f->second;
      }
    }
    r.artifacts["images.csv"] = w.str();
  }
  return r;
}

}  // namespace pps::pipeline
