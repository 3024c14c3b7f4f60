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

#include "pps/qc.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pps/csv.hpp"
#include "pps/error.hpp"

namespace pps::qc {

namespace rad = radiometrics;

void QcBounds::validate() const {
  const auto check = [](const Range& r, const char* name) {
    if (!(r.min < r.max)) throw Error("InvalidBounds", fmt::format("{} bounds need min < max", name));
  };
  check(fwhm_kev, "fwhm");
  check(centroid_kev, "centroid");
  check(efficiency_cps, "efficiency");
  if (min_gross_counts < 0) throw Error("InvalidBounds", "min gross counts must be non-negative");
}

QcBounds am241_bounds() { return {}; }

QcBounds u235_full_pipe_bounds() {
  QcBounds b;
  b.fwhm_kev = {3.0, 10.0};
  b.centroid_kev = {183.0, 189.0};
  b.efficiency_cps = {0.0, 1e12};
  b.min_gross_counts = 1.0;
  return b;
}

const char* to_string(Context c) {
  switch (c) {
    case Context::kPre: return "pre";
    case Context::kPost: return "post";
    case Context::kSegmentForward: return "segment_fwd";
    case Context::kSegmentReverse: return "segment_rev";
    case Context::kFullPipe: return "full_pipe";
  }
  return "?";
}

const char* to_string(ReplicateKind k) { return k == ReplicateKind::kTotal ? "total" : "max"; }

PeakMetrics peak_metrics(const Spectrum& s, const rad::RoiDefinition& roi, double min_gross_counts) {
  if (!(s.live_time_s > 0)) throw Error("InvalidArgument", "spectrum live time must be positive");
  const rad::RoiChannels ch = rad::roi_channels(s.cal, s.channels(), roi);
  const auto mean = [&](std::size_t lo, std::size_t hi) {
    double total = 0;
    for (std::size_t i = lo; i <= hi; ++i) total += static_cast<double>(s.counts[i]);
    return total / static_cast<double>(hi - lo + 1);
  };
  const double xl = 0.5 * static_cast<double>(ch.left_lo + ch.left_hi);
  const double xr = 0.5 * static_cast<double>(ch.right_lo + ch.right_hi);
  const double yl = mean(ch.left_lo, ch.left_hi);
  const double yr = mean(ch.right_lo, ch.right_hi);
  const auto baseline = [&](double x) { return yl + (yr - yl) * (x - xl) / (xr - xl); };

  PeakMetrics m;
  std::vector<double> net;
  net.reserve(ch.peak_hi - ch.peak_lo + 1);
  for (std::size_t i = ch.peak_lo; i <= ch.peak_hi; ++i) {
    m.gross_counts += static_cast<double>(s.counts[i]);
    net.push_back(static_cast<double>(s.counts[i]) - baseline(static_cast<double>(i)));
  }
  m.gross_rate_cps = m.gross_counts / s.live_time_s;
  if (m.gross_counts < min_gross_counts || m.gross_counts <= 0) {
    throw Error("NoPeak", fmt::format("{} window holds {} counts", roi.name, m.gross_counts));
  }
  const auto mode_it = std::max_element(net.begin(), net.end());
  const double peak = *mode_it;
  if (!(peak > 0)) throw Error("NoPeak", fmt::format("no counts above baseline in the {} window", roi.name));

  double weight = 0, moment = 0;
  for (std::size_t k = 0; k < net.size(); ++k) {
    const double w = std::max(net[k], 0.0);
    weight += w;
    moment += w * static_cast<double>(ch.peak_lo + k);
  }
  m.centroid_kev = s.cal.energy(moment / weight);

  // Half-maximum crossings are read off a 1-2-1 smoothed profile so a single
  // high channel does not pull the width in; the kernel's 0.5 channel^2
  // variance is removed afterwards assuming a Gaussian line.
  std::vector<double> sm(net.size());
  for (std::size_t k = 0; k < net.size(); ++k) {
    const double l = net[k > 0 ? k - 1 : k];
    const double r = net[k + 1 < net.size() ? k + 1 : k];
    sm[k] = 0.25 * l + 0.5 * net[k] + 0.25 * r;
  }
  const auto top = std::max_element(sm.begin(), sm.end());
  const double half = *top / 2.0;
  const std::size_t mode = static_cast<std::size_t>(top - sm.begin());
  // Crossings fall back to the window edge when the peak spills over it.
  double left = 0.0;
  for (std::size_t k = mode; k-- > 0;) {
    if (sm[k] < half) {
      left = static_cast<double>(k) + (half - sm[k]) / (sm[k + 1] - sm[k]);
      break;
    }
  }
  double right = static_cast<double>(sm.size() - 1);
  for (std::size_t k = mode + 1; k < sm.size(); ++k) {
    if (sm[k] < half) {
      right = static_cast<double>(k - 1) + (sm[k - 1] - half) / (sm[k - 1] - sm[k]);
      break;
    }
  }
  constexpr double kFwhmPerSigma = 2.3548200450309493;
  const double sigma_ch = (right - left) / kFwhmPerSigma;
  m.fwhm_kev = std::sqrt(std::max(sigma_ch * sigma_ch - 0.5, 0.0)) * kFwhmPerSigma * s.cal.slope_kev_per_channel;
  return m;
}

const Criterion* QcResult::find(const std::string& name) const {
  for (const auto& c : criteria) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

namespace {

bool is_segment(Context c) { return c == Context::kSegmentForward || c == Context::kSegmentReverse; }

void add_range(QcResult& r, const std::string& name, double v, const Range& range) {
  const bool below = v < range.min;
  r.criteria.push_back({name, v, below ? range.min : range.max, range.contains(v)});
}

void finish(QcResult& r) {
  r.pass = r.measured.has_value() &&
           std::all_of(r.criteria.begin(), r.criteria.end(), [](const Criterion& c) { return c.pass; });
}

}  // namespace

QcResult qc_check(const Spectrum& s, const QcBounds& bounds, Context context, const rad::RoiDefinition& roi) {
  bounds.validate();
  QcResult r;
  r.context = context;
  try {
    r.measured = peak_metrics(s, roi, bounds.min_gross_counts);
  } catch (const Error& e) {
    if (e.code() != "NoPeak") throw;
    r.note = e.what();
    r.pass = false;
    return r;
  }
  add_range(r, "centroid", r.measured->centroid_kev, bounds.centroid_kev);
  add_range(r, "fwhm", r.measured->fwhm_kev, bounds.fwhm_kev);
  const double rate = r.measured->gross_rate_cps;
  r.criteria.push_back({"efficiency_min", rate, bounds.efficiency_cps.min, rate >= bounds.efficiency_cps.min});
  if (!is_segment(context)) {
    r.criteria.push_back({"efficiency_max", rate, bounds.efficiency_cps.max, rate <= bounds.efficiency_cps.max});
  }
  finish(r);
  if (!r.pass) {
    std::vector<std::string> failed;
    for (const auto& c : r.criteria) {
      if (!c.pass) failed.push_back(c.name);
    }
    r.note = fmt::format("failed: {}", fmt::join(failed, ", "));
  }
  return r;
}

ContaminationResult contamination_check(const Spectrum& pre, const Spectrum& post, const rad::RoiDefinition& roi,
                                        double k_cal_g_s, double floor_g, double n_sigma) {
  if (!(pre.live_time_s > 0) || !(post.live_time_s > 0)) {
    throw Error("InvalidArgument", "QC spectra need positive live time");
  }
  const rad::NetCounts a = rad::net_peak_counts(pre, roi);
  const rad::NetCounts b = rad::net_peak_counts(post, roi);
  ContaminationResult r;
  r.delta_cps = b.net / post.live_time_s - a.net / pre.live_time_s;
  r.sigma_cps = std::hypot(a.sigma / pre.live_time_s, b.sigma / post.live_time_s);
  r.threshold_cps = std::max(n_sigma * r.sigma_cps, floor_g / k_cal_g_s);
  r.delta_g = r.delta_cps * k_cal_g_s;
  r.pass = std::abs(r.delta_cps) <= r.threshold_cps;
  return r;
}

double critical_level(double background_counts) { return 2.33 * std::sqrt(std::max(background_counts, 0.0)); }

QcResult full_pipe_check(const Spectrum& accumulated, const rad::RoiDefinition& roi, const QcBounds& bounds) {
  bounds.validate();
  QcResult r;
  r.context = Context::kFullPipe;
  const rad::NetCounts nc = rad::net_peak_counts(accumulated, roi);
  const double lc = critical_level(nc.background);
  if (nc.net < lc) {
    r.pass = true;
    r.note = fmt::format("below LLD: net {:.1f} < L_c {:.1f}", nc.net, lc);
    return r;
  }
  try {
    r.measured = peak_metrics(accumulated, roi, bounds.min_gross_counts);
  } catch (const Error& e) {
    if (e.code() != "NoPeak") throw;
    r.note = e.what();
    r.pass = false;
    return r;
  }
  add_range(r, "centroid", r.measured->centroid_kev, bounds.centroid_kev);
  add_range(r, "fwhm", r.measured->fwhm_kev, bounds.fwhm_kev);
  finish(r);
  if (!r.pass) r.note = "peak drift or defocusing";
  return r;
}

ReplicateResult compare_replicates(ReplicateKind kind, double fwd, double fwd_sigma, double rev, double rev_sigma,
                                   const ReplicateThresholds& thresholds) {
  ReplicateResult r;
  r.kind = kind;
  r.forward_g = fwd;
  r.forward_sigma_g = fwd_sigma;
  r.reverse_g = rev;
  r.reverse_sigma_g = rev_sigma;
  const double mean = 0.5 * (fwd + rev);
  const double delta = std::abs(fwd - rev);
  if (mean != 0.0) {
    r.rpd_percent = delta / std::abs(mean) * 100.0;
    r.pass_rpd = *r.rpd_percent <= thresholds.max_rpd_percent;
  }
  r.two_sigma_bound_g = thresholds.sigma_multiple * std::hypot(fwd_sigma, rev_sigma);
  r.pass_sigma = delta <= r.two_sigma_bound_g;
  r.pass = r.pass_rpd || r.pass_sigma;
  return r;
}

ReplicatePair replicate_check(const std::vector<rad::SegmentResult>& fwd, const std::vector<rad::SegmentResult>& rev,
                              const ReplicateThresholds& thresholds) {
  if (fwd.empty() || rev.empty()) throw Error("NoSegments", "replicate check needs at least one segment");
  if (fwd.size() != rev.size()) {
    throw Error("SegmentNumberMismatch", fmt::format("{} forward vs {} reverse segments", fwd.size(), rev.size()));
  }
  double tf = 0, tr = 0, vf = 0, vr = 0;
  for (std::size_t i = 0; i < fwd.size(); ++i) {
    if (fwd[i].segment != rev[i].segment) {
      throw Error("SegmentNumberMismatch",
                  fmt::format("forward segment {} paired with reverse segment {}", fwd[i].segment, rev[i].segment));
    }
    tf += fwd[i].mass_g;
    tr += rev[i].mass_g;
    vf += fwd[i].sigma_random_g * fwd[i].sigma_random_g;
    vr += rev[i].sigma_random_g * rev[i].sigma_random_g;
  }
  ReplicatePair out;
  out.total = compare_replicates(ReplicateKind::kTotal, tf, std::sqrt(vf), tr, std::sqrt(vr), thresholds);
  std::size_t arg = 0;
  for (std::size_t i = 1; i < fwd.size(); ++i) {
    if (fwd[i].mass_g > fwd[arg].mass_g) arg = i;
  }
  out.max = compare_replicates(ReplicateKind::kMax, fwd[arg].mass_g, fwd[arg].sigma_random_g, rev[arg].mass_g,
                               rev[arg].sigma_random_g, thresholds);
  out.max.segment = fwd[arg].segment;
  return out;
}

namespace {

std::optional<bool> reported_pass(const nlohmann::json& reported, const char* key) {
  if (!reported.is_object() || !reported.contains(key)) return std::nullopt;
  const auto& v = reported.at(key);
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_object() && v.contains("pass") && v.at("pass").is_boolean()) return v.at("pass").get<bool>();
  return std::nullopt;
}

}  // namespace

OnboardChecks recompute_onboard_checks(const ingest::RunBundle& bundle, const QcBounds& bounds,
                                       const rad::RoiDefinition& roi) {
  if (!bundle.qc_pre) throw Error("MissingQcSpectrum", "bundle has no pre-run QC spectrum");
  if (!bundle.qc_post) throw Error("MissingQcSpectrum", "bundle has no post-run QC spectrum");
  OnboardChecks out;
  out.pre = qc_check(bundle.qc_pre->spectrum, bounds, Context::kPre, roi);
  out.post = qc_check(bundle.qc_post->spectrum, bounds, Context::kPost, roi);
  out.pre.spectrum_ref = "qc_pre.csv";
  out.post.spectrum_ref = "qc_post.csv";
  out.robot_pre_pass = reported_pass(bundle.manifest.robot_reported_qc, "pre");
  out.robot_post_pass = reported_pass(bundle.manifest.robot_reported_qc, "post");
  std::vector<std::string> notes;
  if (out.robot_pre_pass && *out.robot_pre_pass != out.pre.pass) {
    notes.push_back(fmt::format("robot reported pre-run {}, recomputed {}", *out.robot_pre_pass ? "pass" : "fail",
                                out.pre.pass ? "pass" : "fail"));
  }
  if (out.robot_post_pass && *out.robot_post_pass != out.post.pass) {
    notes.push_back(fmt::format("robot reported post-run {}, recomputed {}", *out.robot_post_pass ? "pass" : "fail",
                                out.post.pass ? "pass" : "fail"));
  }
  out.note = fmt::format("{}", fmt::join(notes, "; "));
  return out;
}

std::string qc_results_csv(const std::vector<QcResult>& results) {
  csv::Writer w({"context", "segment", "centroid_kev", "fwhm_kev", "gross_rate_cps", "pass", "note"});
  for (const auto& r : results) {
    const auto num = [&](double PeakMetrics::*field) {
      return r.measured ? fmt::format("{:.4f}", (*r.measured).*field) : std::string();
    };
    w.row({to_string(r.context), r.segment ? std::to_string(r.segment) : std::string(),
           num(&PeakMetrics::centroid_kev), num(&PeakMetrics::fwhm_kev), num(&PeakMetrics::gross_rate_cps),
           r.pass ? "true" : "false", r.note});
  }
  return w.str();
}

std::string qc_trend_csv(const std::vector<QcTrendEntry>& entries) {
  csv::Writer w({"batch_id", "robot_id", "detector_id", "timestamp", "context", "efficiency_cps", "pass"});
  for (const auto& e : entries) {
    w.row({e.batch_id, e.robot_id, e.detector_id, e.timestamp.iso8601(), to_string(e.context),
           fmt::format("{:.4f}", e.efficiency_cps), e.pass ? "true" : "false"});
  }
  return w.str();
}

}  // namespace pps::qc
