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

#include "pps/radiometrics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pps/csv.hpp"
#include "pps/error.hpp"

namespace pps::radiometrics {

RoiDefinition u235_roi() { return {"U-235", 186.0, 8.0, 8.0, 4.0}; }

RoiDefinition am241_roi() { return {"Am-241", 60.0, 8.0, 8.0, 4.0}; }

RoiDefinition u235_144_roi() { return {"U-235 144", 143.76, 6.0, 6.0, 3.0}; }

RoiChannels roi_channels(const EnergyCalibration& cal, std::size_t channel_count, const RoiDefinition& roi) {
  if (!(cal.slope_kev_per_channel > 0)) throw Error("RoiOutOfRange", "energy calibration slope must be positive");
  if (roi.peak_halfwidth_kev <= 0 || roi.side_window_kev <= 0 || roi.gap_kev < 0) {
    throw Error("RoiOutOfRange", roi.name + " window widths must be positive");
  }
  constexpr double eps = 1e-9;
  const auto lo_of = [&](double e) { return std::ceil(cal.channel(e) - eps); };
  const auto hi_of = [&](double e) { return std::floor(cal.channel(e) + eps); };

  const double p_lo = roi.center_kev - roi.peak_halfwidth_kev;
  const double p_hi = roi.center_kev + roi.peak_halfwidth_kev;
  const double ranges[3][2] = {{lo_of(p_lo - roi.gap_kev - roi.side_window_kev), hi_of(p_lo - roi.gap_kev)},
                               {lo_of(p_lo), hi_of(p_hi)},
                               {lo_of(p_hi + roi.gap_kev), hi_of(p_hi + roi.gap_kev + roi.side_window_kev)}};
  for (const auto& r : ranges) {
    if (r[0] < 0 || r[1] >= static_cast<double>(channel_count) || r[1] < r[0]) {
      throw Error("RoiOutOfRange", fmt::format("{} windows do not fit in {} channels", roi.name, channel_count));
    }
  }
  if (!(ranges[0][1] < ranges[1][0] && ranges[1][1] < ranges[2][0])) {
    throw Error("RoiOutOfRange", roi.name + " side windows overlap the peak window");
  }
  RoiChannels c;
  c.left_lo = static_cast<std::size_t>(ranges[0][0]);
  c.left_hi = static_cast<std::size_t>(ranges[0][1]);
  c.peak_lo = static_cast<std::size_t>(ranges[1][0]);
  c.peak_hi = static_cast<std::size_t>(ranges[1][1]);
  c.right_lo = static_cast<std::size_t>(ranges[2][0]);
  c.right_hi = static_cast<std::size_t>(ranges[2][1]);
  return c;
}

NetCounts net_peak_counts(const Spectrum& s, const RoiDefinition& roi) {
  const RoiChannels ch = roi_channels(s.cal, s.channels(), roi);
  const auto sum = [&](std::size_t lo, std::size_t hi) {
    double total = 0;
    for (std::size_t i = lo; i <= hi; ++i) total += static_cast<double>(s.counts[i]);
    return total;
  };
  const double gross = sum(ch.peak_lo, ch.peak_hi);
  const double sides = sum(ch.left_lo, ch.left_hi) + sum(ch.right_lo, ch.right_hi);
  const double ratio = ch.peak_width() / ch.side_width();
  NetCounts out;
  out.gross = gross;
  // Multiply before dividing: exact for integer-valued flat spectra.
  out.background = sides * ch.peak_width() / ch.side_width();
  out.net = gross - out.background;
  out.sigma = std::sqrt(gross + ratio * ratio * sides);
  return out;
}

Spectrum incremental_spectrum(const TimedSpectrum& acc_start, const TimedSpectrum& acc_end) {
  const Spectrum& a = acc_start.spectrum;
  const Spectrum& b = acc_end.spectrum;
  if (a.channels() != b.channels() || !(a.cal == b.cal)) {
    throw Error("ChannelMismatch", "spectra differ in channel count or energy calibration");
  }
  if (!(acc_end.t > acc_start.t)) throw Error("NonMonotonicTime", "window end does not follow its start");
  Spectrum out;
  out.cal = a.cal;
  out.label = SpectrumLabel::kIncremental;
  out.live_time_s = b.live_time_s - a.live_time_s;
  out.counts.resize(a.channels());
  for (std::size_t i = 0; i < a.channels(); ++i) {
    if (b.counts[i] < a.counts[i]) {
      throw Error("NegativeDifference",
                  fmt::format("channel {} fell from {} to {} between {} and {}", i, a.counts[i], b.counts[i],
                              acc_start.t.to_string(), acc_end.t.to_string()));
    }
    out.counts[i] = b.counts[i] - a.counts[i];
  }
  return out;
}

std::vector<WindowSpectrum> moving_window_spectra(const std::vector<TimedSpectrum>& stream,
                                                  const localize::Trajectory& traj, double window_length_in,
                                                  localize::Phase phase, double detector_offset_in) {
  if (!(window_length_in > 0)) throw Error("EmptyWindow", "window length must be positive");
  struct Poll {
    std::size_t index;
    double position;
  };
  std::vector<Poll> polls;
  const bool forward = phase == localize::Phase::kForward;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const Timestamp t = stream[i].t;
    if (t < traj.start() || t > traj.end()) continue;
    if (forward ? t > traj.turnaround_time : t < traj.turnaround_time) continue;
    polls.push_back({i, localize::position_at(traj, t, detector_offset_in).position_in});
  }
  if (polls.size() < 2) throw Error("EmptyWindow", fmt::format("{} phase has fewer than two polls", to_string(phase)));

  const double half = window_length_in / 2.0;
  // Forward travel increases position, reverse decreases; `behind`/`ahead`
  // are measured along the direction of travel.
  const auto behind = [&](double p, double center) { return forward ? p <= center - half : p >= center + half; };
  const auto ahead = [&](double p, double center) { return forward ? p >= center + half : p <= center - half; };

  std::vector<WindowSpectrum> out;
  out.reserve(polls.size());
  for (std::size_t k = 0; k < polls.size(); ++k) {
    const double center = polls[k].position;
    std::size_t first = 0;
    for (std::size_t j = k + 1; j-- > 0;) {
      if (behind(polls[j].position, center)) {
        first = j;
        break;
      }
    }
    std::size_t last = polls.size() - 1;
    for (std::size_t j = k; j < polls.size(); ++j) {
      if (ahead(polls[j].position, center)) {
        last = j;
        break;
      }
    }
    if (first == last) {
      throw Error("EmptyWindow", fmt::format("no polls within the window centered at {:.3f} in", center));
    }
    WindowSpectrum w;
    w.center_in = center;
    w.center_t = stream[polls[k].index].t;
    w.first_poll = polls[first].index;
    w.last_poll = polls[last].index;
    w.spectrum = incremental_spectrum(stream[w.first_poll], stream[w.last_poll]);
    out.push_back(std::move(w));
  }
  return out;
}

double self_attenuation_factor(double areal_density_g_cm2, double mu_eff_cm2_g) {
  const double x = mu_eff_cm2_g * areal_density_g_cm2;
  if (!(x > 0)) return 1.0;
  return x / -std::expm1(-x);
}

double CalibrationConstants::mu_for(const std::string& material) const {
  const auto it = mu_eff_cm2_g.find(material);
  if (it == mu_eff_cm2_g.end()) throw Error("UnknownMaterial", "no attenuation coefficient for " + material);
  return it->second;
}

MassDensity counts_to_mass_density(double net_rate_cps, double sigma_rate_cps, const CalibrationConstants& cal,
                                   double mu_eff_cm2_g, double fov_length_in) {
  if (!(fov_length_in > 0)) throw Error("InvalidArgument", "FOV length must be positive");
  const double area_cm2 = cal.deposit_width_cm * fov_length_in * kCmPerInch;
  const auto tau_of = [&](double m) { return std::max(m, 0.0) / area_cm2; };
  const double unattenuated = net_rate_cps * cal.k_cal_g_s;

  MassDensity out;
  double m = unattenuated;
  out.converged = false;
  for (int it = 1; it <= kMaxFixedPointIterations; ++it) {
    const double next = unattenuated * self_attenuation_factor(tau_of(m), mu_eff_cm2_g);
    out.iterations = it;
    const bool done = std::abs(next - m) <= kMassTolerance_g;
    m = next;
    if (done) {
      out.converged = true;
      break;
    }
  }
  out.mass_in_fov_g = m;
  out.areal_density_g_cm2 = tau_of(m);
  out.attenuation_factor = self_attenuation_factor(out.areal_density_g_cm2, mu_eff_cm2_g);
  const double fov_ft = fov_length_in / kInchesPerFoot;
  out.g_per_ft = m / fov_ft;
  out.sigma_g_per_ft = sigma_rate_cps * cal.k_cal_g_s * out.attenuation_factor / fov_ft;
  if (!out.converged) {
    out.lump_flagged = true;
    out.diagnostic = fmt::format("attenuation fixed point did not converge in {} iterations (m = {:.6f} g)",
                                 kMaxFixedPointIterations, m);
  } else if (out.areal_density_g_cm2 > cal.tau_max_g_cm2) {
    out.lump_flagged = true;
    out.diagnostic = fmt::format("areal density {:.4f} g/cm2 exceeds {:.4f} g/cm2", out.areal_density_g_cm2,
                                 cal.tau_max_g_cm2);
  }
  return out;
}

double line_ratio_model(double areal_density_g_cm2, double mu_eff_cm2_g, double mu_ratio) {
  const auto escape = [](double x) { return x > 1e-12 ? -std::expm1(-x) / x : 1.0; };
  const double x = mu_eff_cm2_g * std::max(areal_density_g_cm2, 0.0);
  return escape(mu_ratio * x) / escape(x);
}

LineRatioTest line_ratio_test(const Spectrum& s, const RoiDefinition& roi_186, const RoiDefinition& roi_144,
                              const CalibrationConstants& cal, double mu_eff_cm2_g) {
  LineRatioTest t;
  const NetCounts hi = net_peak_counts(s, roi_186);
  const NetCounts lo = net_peak_counts(s, roi_144);
  t.net_186 = hi.net;
  t.net_144 = lo.net;
  t.threshold_ratio = line_ratio_model(cal.tau_max_g_cm2, mu_eff_cm2_g, cal.mu_ratio_144);
  if (!(hi.sigma > 0) || hi.net < cal.line_ratio_min_significance * hi.sigma || !(cal.line_144_yield > 0)) return t;
  t.assessed = true;
  t.ratio = lo.net / (hi.net * cal.line_144_yield);
  const double scale = hi.net * cal.line_144_yield;
  t.sigma = std::hypot(lo.sigma / scale, t.ratio * hi.sigma / hi.net);
  t.z = t.sigma > 0 ? (t.threshold_ratio - t.ratio) / t.sigma : 0.0;
  t.flagged = t.z > cal.line_ratio_z;
  return t;
}

double mda(double background_counts, double live_time_s, const CalibrationConstants& cal, double fov_length_in) {
  if (background_counts < 0 || !(live_time_s > 0) || !(fov_length_in > 0)) {
    throw Error("InvalidArgument", "MDA needs B >= 0 and positive live time");
  }
  const double counts = 2.71 + 4.65 * std::sqrt(background_counts);
  return counts / live_time_s * cal.k_cal_g_s;
}

MassCurve build_mass_curve(const std::vector<WindowSpectrum>& windows, localize::Phase phase,
                           double window_length_in, const RoiDefinition& roi, const CalibrationConstants& cal,
                           double mu_eff_cm2_g, double fov_length_in) {
  MassCurve curve;
  curve.phase = phase;
  curve.window_length_in = window_length_in;
  const bool forward = phase == localize::Phase::kForward;
  for (const auto& w : windows) {
    if (!curve.samples.empty()) {
      const double prev = curve.samples.back().position_in;
      if (forward ? !(w.center_in > prev) : !(w.center_in < prev)) continue;
    }
    if (!(w.spectrum.live_time_s > 0)) continue;
    const NetCounts nc = net_peak_counts(w.spectrum, roi);
    const double lt = w.spectrum.live_time_s;
    const MassDensity md = counts_to_mass_density(nc.net / lt, nc.sigma / lt, cal, mu_eff_cm2_g, fov_length_in);
    CurveSample s;
    s.position_in = w.center_in;
    s.g_per_ft = md.g_per_ft;
    s.sigma_g_per_ft = md.sigma_g_per_ft;
    s.net_counts = nc.net;
    s.background_counts = nc.background;
    s.live_time_s = lt;
    s.attenuation_factor = md.attenuation_factor;
    s.lump_flagged = md.lump_flagged;
    s.first_poll = w.first_poll;
    s.last_poll = w.last_poll;
    curve.samples.push_back(s);
  }
  return curve;
}

double UncertaintyModel::tmu(double mass_g, double sigma_random_g) const {
  const double sys = systematic_fraction * mass_g;
  return coverage * std::sqrt(sigma_random_g * sigma_random_g + sys * sys);
}

SegmentResult segment_result(const MassCurve& curve, const localize::Segment& seg, const CalibrationConstants& cal,
                             double fov_length_in, const UncertaintyModel& uncertainty, bool last_segment) {
  const CurveSample* best = nullptr;
  bool lump = false;
  for (const auto& s : curve.samples) {
    const bool inside = s.position_in >= seg.start_in &&
                        (last_segment ? s.position_in <= seg.end_in : s.position_in < seg.end_in);
    if (!inside) continue;
    lump = lump || s.lump_flagged;
    if (!best || s.g_per_ft > best->g_per_ft) best = &s;
  }
  if (!best) {
    throw Error("NoSamplesInSegment", fmt::format("segment {} [{:.2f}, {:.2f}] in has no {} curve samples",
                                                  seg.number, seg.start_in, seg.end_in, to_string(curve.phase)));
  }
  const double length_ft = seg.length_in() / kInchesPerFoot;
  SegmentResult r;
  r.segment = seg.number;
  r.phase = curve.phase;
  r.density_at_max_g_per_ft = best->g_per_ft;
  r.mass_g = best->g_per_ft * length_ft;
  r.sigma_random_g = best->sigma_g_per_ft * length_ft;
  r.tmu_g = uncertainty.tmu(r.mass_g, r.sigma_random_g);
  // The FOV-basis detection limit, scaled to the segment like the mass is.
  r.mda_g = mda(best->background_counts, best->live_time_s, cal, fov_length_in) * seg.length_in() / fov_length_in;
  r.attenuation_factor = best->attenuation_factor;
  r.lump_flagged = lump;
  r.max_position_in = best->position_in;
  r.first_poll = best->first_poll;
  r.last_poll = best->last_poll;
  return r;
}

SegmentResult average_fwd_rev(const SegmentResult& fwd, const SegmentResult& rev, const UncertaintyModel& uncertainty) {
  if (fwd.segment != rev.segment) {
    throw Error("SegmentNumberMismatch", fmt::format("forward segment {} vs reverse segment {}", fwd.segment, rev.segment));
  }
  SegmentResult r = fwd;
  r.mass_g = 0.5 * (fwd.mass_g + rev.mass_g);
  r.density_at_max_g_per_ft = 0.5 * (fwd.density_at_max_g_per_ft + rev.density_at_max_g_per_ft);
  r.sigma_random_g = 0.5 * std::hypot(fwd.sigma_random_g, rev.sigma_random_g);
  r.tmu_g = uncertainty.tmu(r.mass_g, r.sigma_random_g);
  r.mda_g = std::max(fwd.mda_g, rev.mda_g);
  r.attenuation_factor = std::max(fwd.attenuation_factor, rev.attenuation_factor);
  r.lump_flagged = fwd.lump_flagged || rev.lump_flagged;
  return r;
}

std::string mass_curve_csv(const MassCurve& curve) {
  csv::Writer w({"position_in", "g_per_ft", "sigma"});
  for (const auto& s : curve.samples) {
    w.row({fmt::format("{:.4f}", s.position_in), fmt::format("{:.6f}", s.g_per_ft),
           fmt::format("{:.6f}", s.sigma_g_per_ft)});
  }
  return w.str();
}

}  // namespace pps::radiometrics
