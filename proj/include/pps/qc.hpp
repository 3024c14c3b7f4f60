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
#include "pps/radiometrics.hpp"
#include "pps/spectrum.hpp"
#include "pps/time.hpp"

namespace pps::qc {

struct Range {
  double min = 0.0;
  double max = 0.0;

  bool contains(double v) const { return v >= min && v <= max; }
};

struct QcBounds {
  Range fwhm_kev{2.5, 8.0};
  Range centroid_kev{58.0, 62.0};
  Range efficiency_cps{120.0, 320.0};  // gross peak-window counts per second
  double min_gross_counts = 100.0;

  // Throws InvalidBounds unless min < max in each pair.
  void validate() const;
};

// Defaults for the Am-241 check source and for the U-235 full-pipe peak.
QcBounds am241_bounds();
QcBounds u235_full_pipe_bounds();

enum class Context { kPre, kPost, kSegmentForward, kSegmentReverse, kFullPipe };

const char* to_string(Context c);

struct PeakMetrics {
  double centroid_kev = 0.0;
  double fwhm_kev = 0.0;
  double gross_rate_cps = 0.0;
  double gross_counts = 0.0;
};

// Centroid and FWHM are taken on the peak-window counts above the linear
// baseline through the two side-window means. Throws NoPeak, InvalidArgument.
PeakMetrics peak_metrics(const Spectrum& s, const radiometrics::RoiDefinition& roi, double min_gross_counts = 1.0);

struct Criterion {
  std::string name;  // "centroid", "fwhm", "efficiency_min", "efficiency_max"
  double measured = 0.0;
  double bound = 0.0;
  bool pass = true;
};

struct QcResult {
  Context context = Context::kPre;
  int segment = 0;  // segment contexts only
  std::optional<PeakMetrics> measured;
  std::vector<Criterion> criteria;
  bool pass = false;
  std::string note;
  std::string spectrum_ref;

  const Criterion* find(const std::string& name) const;
};

// Segment contexts drop the efficiency upper bound.
QcResult qc_check(const Spectrum& s, const QcBounds& bounds, Context context,
                  const radiometrics::RoiDefinition& roi = radiometrics::am241_roi());

struct ContaminationResult {
  double delta_cps = 0.0;  // net_post_rate - net_pre_rate
  double sigma_cps = 0.0;
  double threshold_cps = 0.0;
  double delta_g = 0.0;
  bool pass = true;
};

// Fails when |delta| exceeds max(n_sigma * sigma, floor_g / k_cal).
ContaminationResult contamination_check(const Spectrum& pre, const Spectrum& post,
                                        const radiometrics::RoiDefinition& roi, double k_cal_g_s,
                                        double floor_g = 0.05, double n_sigma = 3.0);

// Critical level 2.33 sqrt(B) for a background of B counts.
double critical_level(double background_counts);

QcResult full_pipe_check(const Spectrum& accumulated, const radiometrics::RoiDefinition& roi, const QcBounds& bounds);

enum class ReplicateKind { kTotal, kMax };

const char* to_string(ReplicateKind k);

struct ReplicateThresholds {
  double max_rpd_percent = 25.0;
  double sigma_multiple = 2.0;
};

struct ReplicateResult {
  ReplicateKind kind = ReplicateKind::kTotal;
  int segment = 0;  // kMax: the forward argmax segment
  double forward_g = 0.0;
  double forward_sigma_g = 0.0;
  double reverse_g = 0.0;
  double reverse_sigma_g = 0.0;
  std::optional<double> rpd_percent;  // absent when the mean is zero
  double two_sigma_bound_g = 0.0;
  bool pass_rpd = false;
  bool pass_sigma = false;
  bool pass = false;
};

// Single comparison of two values with their random uncertainties.
ReplicateResult compare_replicates(ReplicateKind kind, double fwd, double fwd_sigma, double rev, double rev_sigma,
                                   const ReplicateThresholds& thresholds = {});

struct ReplicatePair {
  ReplicateResult total;
  ReplicateResult max;
};

// Inputs hold the non-rejected segments of each traversal. Throws NoSegments,
// SegmentNumberMismatch.
ReplicatePair replicate_check(const std::vector<radiometrics::SegmentResult>& fwd,
                              const std::vector<radiometrics::SegmentResult>& rev,
                              const ReplicateThresholds& thresholds = {});

struct OnboardChecks {
  QcResult pre;
  QcResult post;
  // Robot-reported outcomes kept for audit only.
  std::optional<bool> robot_pre_pass;
  std::optional<bool> robot_post_pass;
  std::string note;
};

// Throws MissingQcSpectrum.
OnboardChecks recompute_onboard_checks(const ingest::RunBundle& bundle, const QcBounds& bounds,
                                       const radiometrics::RoiDefinition& roi = radiometrics::am241_roi());

struct QcTrendEntry {
  std::string batch_id;
  std::string robot_id;
  std::string detector_id;
  Timestamp timestamp;
  Context context = Context::kPre;
  double efficiency_cps = 0.0;
  bool pass = false;
};

// qc_results.csv: context,segment,centroid_kev,fwhm_kev,gross_rate_cps,pass,note
std::string qc_results_csv(const std::vector<QcResult>& results);

// qc_trend.csv: batch_id,robot_id,detector_id,timestamp,context,efficiency_cps,pass
std::string qc_trend_csv(const std::vector<QcTrendEntry>& entries);

}  // namespace pps::qc
