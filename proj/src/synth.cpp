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

#include "pps/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <fmt/format.h>

#include "pps/error.hpp"
#include "pps/png.hpp"

namespace pps::synth {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kCmPerIn = 2.54;

[[noreturn]] void invalid(const std::string& msg) { throw Error("InvalidScenario", msg); }

// Escape probability of a slab with optical thickness x.
double transmission(double x) { return x > 1e-12 ? -std::expm1(-x) / x : 1.0; }

double overlap(double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); }

bool angle_in_span(double theta_rad, double start_deg, double end_deg) {
  double t = theta_rad * 180.0 / kPi;
  const auto norm = [](double d) {
    d = std::fmod(d, 360.0);
    return d < 0 ? d + 360.0 : d;
  };
  const double a = norm(start_deg), b = norm(end_deg), x = norm(t);
  return a <= b ? (x >= a && x <= b) : (x >= a || x <= b);
}

// Integral of a unit-area Gaussian over [lo, hi].
double gauss_mass(double lo, double hi, double mean, double sigma) {
  const double s = sigma * std::numbers::sqrt2;
  return 0.5 * (std::erf((hi - mean) / s) - std::erf((lo - mean) / s));
}

// Per-channel expected count shape for a unit-rate line.
std::vector<double> line_shape(const DetectorModel& d, double center_kev, double fwhm_kev) {
  std::vector<double> out(static_cast<std::size_t>(d.channel_count), 0.0);
  const double sigma = fwhm_kev / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  const double half = 0.5 * d.energy_cal.slope_kev_per_channel;
  for (std::size_t c = 0; c < out.size(); ++c) {
    const double e = d.energy_cal.energy(static_cast<double>(c));
    if (std::abs(e - center_kev) > 10 * sigma + 1) continue;
    out[c] = gauss_mass(e - half, e + half, center_kev, sigma);
  }
  return out;
}

std::vector<double> background_shape(const DetectorModel& d) {
  std::vector<double> out(static_cast<std::size_t>(d.channel_count), 0.0);
  const double w = d.energy_cal.slope_kev_per_channel;
  const auto& b = d.background;
  for (std::size_t c = 0; c < out.size(); ++c) {
    const double e = d.energy_cal.energy(static_cast<double>(c));
    if (e < 0) continue;
    out[c] = w * (b.exp_cps_per_kev * std::exp(-e / b.exp_scale_kev) + b.flat_cps_per_kev);
  }
  return out;
}

// Robot kinematics: out at constant speed, dwell, back.
struct Kinematics {
  double max_datum_in = 0.0;
  double speed = 1.0;
  double dwell = 15.0;
  double t_out = 0.0;

  double total() const { return 2 * t_out + dwell; }
  double datum(double t) const {
    if (t <= 0) return 0.0;
    if (t <= t_out) return speed * t;
    if (t <= t_out + dwell) return max_datum_in;
    return std::max(0.0, max_datum_in - speed * (t - t_out - dwell));
  }
};

Kinematics kinematics(const Scenario& s) {
  Kinematics k;
  k.max_datum_in = s.pipe_length_in() - s.robot.detector_offset_in;
  k.speed = s.robot.speed_in_s;
  k.dwell = s.robot.dwell_s;
  k.t_out = k.max_datum_in / k.speed;
  return k;
}

// Segment bounds for a pipe measured to `length`, written out directly from
// the launch-edge rules so the oracle does not reuse the pipeline's planner.
std::vector<TruthSegment> truth_segments(double length, double fov) {
  std::vector<TruthSegment> out;
  const double body = length - fov;
  int full = static_cast<int>(std::floor(body / 12.0 + 1e-9));
  double rest = body - 12.0 * full;
  if (std::abs(rest) < 1e-9) rest = 0.0;
  double pos = 0.0;
  int n = 0;
  const bool merge = rest > 0 && rest < 3.0 && full >= 1;
  for (int i = 0; i < full; ++i) {
    const double len = (merge && i == full - 1) ? 12.0 + rest : 12.0;
    out.push_back({++n, pos, pos + len, 0.0});
    pos += len;
  }
  if (rest > 0 && !merge) {
    out.push_back({++n, pos, pos + rest, 0.0});
    pos += rest;
  }
  out.push_back({++n, pos, length, 0.0});
  return out;
}

double segment_mass(const Scenario& s, double a_in, double b_in, bool inclusive_end) {
  double m = 0.0;
  for (const auto& d : s.deposits) m += d.g_per_ft * overlap(a_in, b_in, d.start_ft * 12, d.end_ft * 12) / 12.0;
  for (const auto& l : s.lumps) {
    const double p = l.position_ft * 12;
    if (p >= a_in && (inclusive_end ? p <= b_in : p < b_in)) m += l.g;
  }
  return m;
}

// Fraction of 1 cm x 1 deg cells of a segment whose true wall deviates from
// nominal by more than 2 cm.
double deviating_fraction(const Scenario& s, double a_in, double b_in) {
  const double R = s.nominal_radius_cm();
  const auto nz = static_cast<std::size_t>(std::ceil((b_in - a_in) * kCmPerIn - 1e-9));
  std::size_t dev = 0, total = 0;
  for (std::size_t iz = 0; iz < nz; ++iz) {
    const double z = a_in + (static_cast<double>(iz) + 0.5) / kCmPerIn;
    if (z > b_in) break;
    for (int it = 0; it < 360; ++it) {
      const double th = -kPi + (it + 0.5) * kPi / 180.0;
      ++total;
      if (std::abs(true_radius_cm(s, z, th) - R) > 2.0) ++dev;
    }
  }
  return total ? static_cast<double>(dev) / static_cast<double>(total) : 0.0;
}

// Ray from the sensor (pipe-frame origin o) at angle phi to the first wall hit.
double cast_ray(const Scenario& s, double z_in, double ox, double oy, double phi) {
  const double dx = std::cos(phi), dy = std::sin(phi);
  const double od = ox * dx + oy * dy;
  const double oo = ox * ox + oy * oy;
  const auto hit = [&](double rho) {
    const double disc = od * od - oo + rho * rho;
    return disc < 0 ? -1.0 : -od + std::sqrt(disc);
  };
  const double R = s.nominal_radius_cm();
  double best = -1.0;
  std::vector<double> radii{R};
  for (const auto& f : s.features) {
    if (z_in >= f.start_ft * 12 && z_in <= f.end_ft * 12) radii.push_back(R - f.height_cm);
  }
  for (double rho : radii) {
    const double t = hit(rho);
    if (t <= 0) continue;
    const double th = std::atan2(oy + t * dy, ox + t * dx);
    if (std::abs(true_radius_cm(s, z_in, th) - rho) > 1e-9) continue;
    if (best < 0 || t < best) best = t;
  }
  return best > 0 ? best : hit(R);
}

Spectrum make_spectrum(const std::vector<double>& expected, double live, std::mt19937_64& rng, bool noise_free,
                       const EnergyCalibration& cal) {
  Spectrum s;
  s.live_time_s = live;
  s.cal = cal;
  s.label = SpectrumLabel::kQc;
  s.counts.resize(expected.size());
  for (std::size_t c = 0; c < expected.size(); ++c) {
    const double lam = expected[c] * live;
    if (noise_free) {
      s.counts[c] = static_cast<std::uint64_t>(std::llround(lam));
    } else {
      s.counts[c] = lam > 0 ? std::poisson_distribution<std::uint64_t>(lam)(rng) : 0;
    }
  }
  return s;
}

std::string placeholder_png(std::size_t index) {
  png::Image img;
  img.width = 16;
  img.height = 12;
  img.rgb.assign(16 * 12 * 3, static_cast<std::uint8_t>(40 + (index * 37) % 180));
  return png::encode(img);
}

}  // namespace

void validate(const Scenario& s) {
  if (!(s.pipe_length_ft > 0)) invalid("pipe length must be positive");
  if (s.pipe_diameter_in != 30 && s.pipe_diameter_in != 42) invalid("pipe diameter must be 30 or 42 in");
  const auto& d = s.detector;
  if (!(d.fov_in > 0) || s.pipe_length_in() < d.fov_in) invalid("pipe must be at least one FOV long");
  if (d.channel_count <= 0) invalid("channel_count must be positive");
  if (!(d.energy_cal.slope_kev_per_channel > 0)) invalid("energy calibration slope must be positive");
  if (!(d.k_cal_g_s > 0)) invalid("k_cal must be positive");
  if (!(d.live_fraction > 0) || d.live_fraction > 1) invalid("live_fraction must be in (0, 1]");
  if (!(d.qc_live_time_s > 0)) invalid("qc_live_time_s must be positive");
  if (!(d.deposit_width_cm > 0) || d.mu_eff_cm2_g < 0) invalid("attenuation model parameters out of range");
  const auto& r = s.robot;
  if (r.id.empty()) invalid("robot id is empty");
  if (!(r.speed_in_s > 0) || !(r.poll_hz > 0) || !(r.lidar_hz > 0)) invalid("robot rates must be positive");
  if (r.dwell_s < 10.0) invalid("dwell must last at least 10 s to be detectable");
  if (r.odometry_sigma_in < 0 || r.range_noise_cm < 0) invalid("noise levels must be non-negative");
  if (r.lidar_rays < 3) invalid("need at least 3 LiDAR rays per scan");
  if (!(r.image_period_s > 0)) invalid("image period must be positive");
  if (r.detector_offset_in >= s.pipe_length_in()) invalid("detector offset exceeds the pipe");
  for (const auto& dep : s.deposits) {
    if (!(dep.end_ft > dep.start_ft) || dep.start_ft < 0 || dep.end_ft > s.pipe_length_ft || dep.g_per_ft < 0) {
      invalid(fmt::format("deposit {}-{} ft is outside the pipe or inverted", dep.start_ft, dep.end_ft));
    }
  }
  for (const auto& l : s.lumps) {
    if (l.position_ft < 0 || l.position_ft > s.pipe_length_ft || l.g < 0 || !(l.footprint_cm2 > 0)) {
      invalid(fmt::format("lump at {} ft is invalid", l.position_ft));
    }
  }
  for (const auto& f : s.features) {
    if (!(f.end_ft > f.start_ft)) invalid("feature extent is inverted");
    if (f.height_cm >= s.nominal_radius_cm() - 12.0) invalid("feature would reach the LiDAR");
  }
  if (s.contamination_g < 0) invalid("contamination must be non-negative");
}

double true_radius_cm(const Scenario& s, double z_in, double theta_rad) {
  double r = s.nominal_radius_cm();
  for (const auto& f : s.features) {
    if (z_in >= f.start_ft * 12 && z_in <= f.end_ft * 12 && angle_in_span(theta_rad, f.theta_start_deg, f.theta_end_deg)) {
      r = s.nominal_radius_cm() - f.height_cm;
    }
  }
  return r;
}

LineRates expected_line_rates(const Scenario& s, double center_in) {
  const auto& d = s.detector;
  const double lo = center_in - d.fov_in / 2, hi = center_in + d.fov_in / 2;
  LineRates out;
  const auto add = [&](double g, double areal) {
    const double x = d.mu_eff_cm2_g * areal;
    out.u186_cps += g / d.k_cal_g_s * transmission(x);
    out.u144_cps += g / d.k_cal_g_s * d.line_144_yield * transmission(d.mu_144_ratio * x);
  };
  for (const auto& dep : s.deposits) {
    // A uniform deposit of linear density g/ft spread across the deposit width.
    add(dep.g_per_ft * overlap(lo, hi, dep.start_ft * 12, dep.end_ft * 12) / 12.0,
        dep.g_per_ft / (d.deposit_width_cm * 12.0 * kCmPerIn));
  }
  for (const auto& l : s.lumps) {
    const double p = l.position_ft * 12;
    if (p < lo || p > hi) continue;
    add(l.g, l.g / l.footprint_cm2);
  }
  return out;
}

GeneratedRun generate_run(const Scenario& s) {
  validate(s);
  const auto& d = s.detector;
  const auto& r = s.robot;
  std::mt19937_64 rng(s.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const Kinematics kin = kinematics(s);
  const Timestamp t0 = s.start_time;

  GeneratedRun out;
  ingest::RunBundle& b = out.bundle;
  auto& m = b.manifest;
  m.robot_id = r.id;
  m.detector_id = d.id;
  m.fov_length_in = d.fov_in;
  m.pipe_diameter_in = s.pipe_diameter_in;
  m.start_time = t0;
  m.channel_count = d.channel_count;
  m.energy_cal = d.energy_cal;
  m.qc_live_time_s = d.qc_live_time_s;
  if (r.detector_offset_in != 0) m.detector_offset_in = r.detector_offset_in;
  if (r.camera_offset_in != 0) m.camera_offset_in = r.camera_offset_in;
  if (r.lidar_along_in != 0) m.lidar_along_in = r.lidar_along_in;
  b.request = s.request;

  const std::vector<double> bkg = background_shape(d);
  const std::vector<double> u235 = line_shape(d, d.u235_kev, d.fwhm_186_kev);
  const std::vector<double> u144 = line_shape(d, d.u235_144_kev, d.fwhm_144_kev);
  const std::vector<double> am = line_shape(d, d.am241_kev, d.fwhm_60_kev);
  const std::size_t nch = bkg.size();

  // Odometry and accumulated spectra share the poll clock.
  const double dt = 1.0 / r.poll_hz;
  const auto polls = static_cast<std::size_t>(std::floor(kin.total() * r.poll_hz + 1e-9)) + 1;
  std::vector<std::uint64_t> acc(nch, 0);
  std::vector<double> acc_expected(nch, 0.0);
  double live_total = 0.0;
  bool reset_done = false;
  double prev_datum = 0.0;
  std::vector<double> lam(nch);
  for (std::size_t k = 0; k < polls; ++k) {
    const double t = static_cast<double>(k) * dt;
    const Timestamp ts = t0 + t;
    const double x = kin.datum(t);
    const double noise = r.odometry_sigma_in > 0 && k > 0 && !s.noise_free ? r.odometry_sigma_in * unit(rng) : 0.0;
    b.odometry.push_back({ts, k == 0 ? 0.0 : x - prev_datum + noise, r.odometry_sigma_in > 0 ? r.odometry_sigma_in : 0.001});
    out.truth.trajectory.push_back({ts, x});

    if (k > 0) {
      if (s.detector_reset_at_s && !reset_done && t >= *s.detector_reset_at_s) {
        std::fill(acc.begin(), acc.end(), 0);
        std::fill(acc_expected.begin(), acc_expected.end(), 0.0);
        live_total = 0.0;
        reset_done = true;
      }
      const double center = kin.datum(t - dt / 2) + r.detector_offset_in;
      const LineRates signal = expected_line_rates(s, center);
      const double live = dt * d.live_fraction;
      for (std::size_t c = 0; c < nch; ++c) {
        lam[c] = live * (bkg[c] + d.am241_run_cps * am[c] + signal.u186_cps * u235[c] + signal.u144_cps * u144[c]);
      }
      if (s.noise_free) {
        for (std::size_t c = 0; c < nch; ++c) {
          acc_expected[c] += lam[c];
          acc[c] = static_cast<std::uint64_t>(std::llround(acc_expected[c]));
        }
      } else {
        for (std::size_t c = 0; c < nch; ++c) {
          if (lam[c] > 0) acc[c] += std::poisson_distribution<std::uint64_t>(lam[c])(rng);
        }
      }
      live_total += live;
    }
    TimedSpectrum poll;
    poll.t = ts;
    poll.spectrum.counts = acc;
    poll.spectrum.live_time_s = std::round(live_total * 1e6) / 1e6;
    poll.spectrum.cal = d.energy_cal;
    poll.spectrum.label = SpectrumLabel::kAccumulated;
    b.spectra.push_back(std::move(poll));
    prev_datum = x;
  }

  // Check-source spectra taken before launch and after recovery.
  {
    std::vector<double> pre(nch), post(nch);
    const std::vector<double> am_pre = line_shape(d, d.am241_kev + d.qc_am241_shift_kev, d.fwhm_60_kev);
    const double pickup_cps = s.contamination_g / d.k_cal_g_s;
    for (std::size_t c = 0; c < nch; ++c) {
      pre[c] = bkg[c] + d.am241_qc_cps * am_pre[c];
      post[c] = bkg[c] + d.am241_qc_cps * am[c] + pickup_cps * u235[c];
    }
    b.qc_pre = TimedSpectrum{t0 + (-d.qc_live_time_s - 60.0), make_spectrum(pre, d.qc_live_time_s, rng, s.noise_free, d.energy_cal)};
    b.qc_post = TimedSpectrum{t0 + (kin.total() + 60.0), make_spectrum(post, d.qc_live_time_s, rng, s.noise_free, d.energy_cal)};
  }
  m.robot_reported_qc = {{"pre", true}, {"post", true}};

  // LiDAR from the mount offset for this diameter, theta = 0 at the bottom.
  {
    const double r0 = s.pipe_diameter_in == 42 ? 7.0 : 9.0;
    const double th0 = s.pipe_diameter_in == 42 ? 0.0 : kPi;
    const double ox = r0 * std::cos(th0), oy = r0 * std::sin(th0);
    const double period = 1.0 / r.lidar_hz;
    for (double t = 0.0; t <= kin.total() + 1e-9; t += period) {
      ingest::LidarScan scan;
      scan.t = t0 + t;
      const double z = kin.datum(t) + r.lidar_along_in;
      scan.points.reserve(static_cast<std::size_t>(r.lidar_rays));
      for (int i = 0; i < r.lidar_rays; ++i) {
        const double phi = -kPi + (i + 0.5) * 2 * kPi / r.lidar_rays;
        double range = cast_ray(s, z, ox, oy, phi);
        if (r.range_noise_cm > 0 && !s.noise_free) range += r.range_noise_cm * unit(rng);
        scan.points.push_back({phi, range});
      }
      b.lidar.push_back(std::move(scan));
    }
  }

  // Placeholder camera frames.
  {
    std::size_t n = 0;
    for (double t = 0.0; t <= kin.total() + 1e-9; t += r.image_period_s, ++n) {
      const std::string file = fmt::format("{:04d}.png", n);
      b.images.push_back({t0 + t, file});
      b.image_files.emplace(file, placeholder_png(n));
      out.truth.images.push_back({file, kin.datum(t) + r.camera_offset_in});
    }
  }

  GroundTruth& truth = out.truth;
  truth.scenario = s.name;
  truth.pipe_length_in = s.pipe_length_in();
  truth.fov_in = d.fov_in;
  truth.max_datum_in = kin.max_datum_in;
  truth.turnaround_time = t0 + (kin.t_out + kin.dwell / 2);
  truth.segments = truth_segments(s.pipe_length_in(), d.fov_in);
  for (std::size_t i = 0; i < truth.segments.size(); ++i) {
    auto& seg = truth.segments[i];
    seg.mass_g = segment_mass(s, seg.start_in, seg.end_in, i + 1 == truth.segments.size());
  }
  if (s.contamination_g > 0) truth.expected_flags.push_back({"CONTAMINATION", 0});
  if (s.detector_reset_at_s && *s.detector_reset_at_s < kin.total()) {
    truth.expected_flags.push_back({"DETECTOR_RESET", 0});
  }
  if (s.detector.qc_am241_shift_kev != 0) truth.expected_flags.push_back({"PRE_QC_FAIL", 0});
  for (const auto& l : s.lumps) {
    if (!l.vial || l.g / l.footprint_cm2 <= kUnmeasurableArealDensity) continue;
    const double p = l.position_ft * 12;
    for (std::size_t i = 0; i < truth.segments.size(); ++i) {
      const auto& seg = truth.segments[i];
      if (p >= seg.start_in && (p < seg.end_in || i + 1 == truth.segments.size())) {
        truth.expected_flags.push_back({"SEG_LUMP_SELF_ATTENUATION", seg.number});
        break;
      }
    }
  }
  if (!s.features.empty()) {
    for (const auto& seg : truth.segments) {
      if (deviating_fraction(s, seg.start_in, seg.end_in) > 0.05) {
        truth.expected_flags.push_back({"SEG_GEOMETRY_DEVIATION", seg.number});
      }
    }
  }

  out.bundle_zip = ingest::pack_run_bundle(b);
  return out;
}

// ---- JSON -----------------------------------------------------------------

namespace {

template <typename T>
void get(const json& j, const char* key, T& v) {
  if (j.contains(key) && !j.at(key).is_null()) v = j.at(key).get<T>();
}

}  // namespace

Scenario scenario_from_json(const json& j) {
  if (!j.is_object()) invalid("scenario must be a JSON object");
  static const std::set<std::string> known{"name",   "seed",  "noise_free", "contamination_g", "detector_reset_at_s",
                                           "start_time", "pipe", "deposits", "lumps",   "features",
                                           "robot",  "detector", "request"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) invalid("unknown scenario key '" + key + "'");
  }
  Scenario s;
  try {
    get(j, "name", s.name);
    get(j, "seed", s.seed);
    get(j, "noise_free", s.noise_free);
    get(j, "contamination_g", s.contamination_g);
    if (j.contains("detector_reset_at_s") && !j["detector_reset_at_s"].is_null()) {
      s.detector_reset_at_s = j["detector_reset_at_s"].get<double>();
    }
    if (j.contains("start_time")) s.start_time = Timestamp::parse_iso8601(j["start_time"].get<std::string>());
    if (j.contains("pipe")) {
      const auto& p = j["pipe"];
      get(p, "length_ft", s.pipe_length_ft);
      get(p, "diameter_in", s.pipe_diameter_in);
    }
    for (const auto& e : j.value("deposits", json::array())) {
      Deposit dep;
      get(e, "start_ft", dep.start_ft);
      get(e, "end_ft", dep.end_ft);
      get(e, "g_per_ft", dep.g_per_ft);
      get(e, "material", dep.material);
      s.deposits.push_back(dep);
    }
    for (const auto& e : j.value("lumps", json::array())) {
      Lump l;
      get(e, "position_ft", l.position_ft);
      get(e, "g", l.g);
      get(e, "vial", l.vial);
      get(e, "footprint_cm2", l.footprint_cm2);
      s.lumps.push_back(l);
    }
    for (const auto& e : j.value("features", json::array())) {
      SurfaceFeature f;
      get(e, "start_ft", f.start_ft);
      get(e, "end_ft", f.end_ft);
      get(e, "theta_start_deg", f.theta_start_deg);
      get(e, "theta_end_deg", f.theta_end_deg);
      get(e, "height_cm", f.height_cm);
      s.features.push_back(f);
    }
    if (j.contains("robot")) {
      const auto& e = j["robot"];
      auto& r = s.robot;
      get(e, "id", r.id);
      get(e, "speed_in_s", r.speed_in_s);
      get(e, "dwell_s", r.dwell_s);
      get(e, "odometry_sigma_in", r.odometry_sigma_in);
      get(e, "poll_hz", r.poll_hz);
      get(e, "lidar_hz", r.lidar_hz);
      get(e, "lidar_rays", r.lidar_rays);
      get(e, "range_noise_cm", r.range_noise_cm);
      get(e, "image_period_s", r.image_period_s);
      get(e, "detector_offset_in", r.detector_offset_in);
      get(e, "camera_offset_in", r.camera_offset_in);
      get(e, "lidar_along_in", r.lidar_along_in);
    }
    if (j.contains("detector")) {
      const auto& e = j["detector"];
      auto& d = s.detector;
      get(e, "id", d.id);
      get(e, "k_cal_g_s", d.k_cal_g_s);
      get(e, "fov_in", d.fov_in);
      get(e, "channel_count", d.channel_count);
      if (e.contains("energy_cal")) {
        get(e["energy_cal"], "offset_kev", d.energy_cal.offset_kev);
        get(e["energy_cal"], "slope_kev_per_channel", d.energy_cal.slope_kev_per_channel);
      }
      get(e, "u235_kev", d.u235_kev);
      get(e, "fwhm_186_kev", d.fwhm_186_kev);
      get(e, "u235_144_kev", d.u235_144_kev);
      get(e, "fwhm_144_kev", d.fwhm_144_kev);
      get(e, "line_144_yield", d.line_144_yield);
      get(e, "mu_144_ratio", d.mu_144_ratio);
      get(e, "am241_kev", d.am241_kev);
      get(e, "fwhm_60_kev", d.fwhm_60_kev);
      if (e.contains("background")) {
        get(e["background"], "exp_cps_per_kev", d.background.exp_cps_per_kev);
        get(e["background"], "exp_scale_kev", d.background.exp_scale_kev);
        get(e["background"], "flat_cps_per_kev", d.background.flat_cps_per_kev);
      }
      get(e, "live_fraction", d.live_fraction);
      get(e, "am241_run_cps", d.am241_run_cps);
      get(e, "am241_qc_cps", d.am241_qc_cps);
      get(e, "qc_am241_shift_kev", d.qc_am241_shift_kev);
      get(e, "qc_live_time_s", d.qc_live_time_s);
      get(e, "mu_eff_cm2_g", d.mu_eff_cm2_g);
      get(e, "deposit_width_cm", d.deposit_width_cm);
    }
    if (j.contains("request")) {
      const auto& e = j["request"];
      auto& q = s.request;
      get(e, "job_id", q.job_id);
      get(e, "building", q.building);
      get(e, "unit", q.unit);
      get(e, "cell", q.cell);
      get(e, "pipe_item_id", q.pipe_item_id);
      get(e, "expected_length_ft", q.expected_length_ft);
      get(e, "operator_notes", q.operator_notes);
      get(e, "nearest_column_id", q.nearest_column_id);
    }
  } catch (const json::exception& e) {
    invalid(e.what());
  }
  validate(s);
  return s;
}

json to_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  j["seed"] = s.seed;
  j["noise_free"] = s.noise_free;
  j["contamination_g"] = s.contamination_g;
  j["detector_reset_at_s"] = s.detector_reset_at_s ? json(*s.detector_reset_at_s) : json(nullptr);
  j["start_time"] = s.start_time.iso8601();
  j["pipe"] = {{"length_ft", s.pipe_length_ft}, {"diameter_in", s.pipe_diameter_in}};
  j["deposits"] = json::array();
  for (const auto& d : s.deposits) {
    j["deposits"].push_back({{"start_ft", d.start_ft}, {"end_ft", d.end_ft}, {"g_per_ft", d.g_per_ft}, {"material", d.material}});
  }
  j["lumps"] = json::array();
  for (const auto& l : s.lumps) {
    j["lumps"].push_back({{"position_ft", l.position_ft}, {"g", l.g}, {"vial", l.vial}, {"footprint_cm2", l.footprint_cm2}});
  }
  j["features"] = json::array();
  for (const auto& f : s.features) {
    j["features"].push_back({{"start_ft", f.start_ft},
                             {"end_ft", f.end_ft},
                             {"theta_start_deg", f.theta_start_deg},
                             {"theta_end_deg", f.theta_end_deg},
                             {"height_cm", f.height_cm}});
  }
  const auto& r = s.robot;
  j["robot"] = {{"id", r.id},
                {"speed_in_s", r.speed_in_s},
                {"dwell_s", r.dwell_s},
                {"odometry_sigma_in", r.odometry_sigma_in},
                {"poll_hz", r.poll_hz},
                {"lidar_hz", r.lidar_hz},
                {"lidar_rays", r.lidar_rays},
                {"range_noise_cm", r.range_noise_cm},
                {"image_period_s", r.image_period_s},
                {"detector_offset_in", r.detector_offset_in},
                {"camera_offset_in", r.camera_offset_in},
                {"lidar_along_in", r.lidar_along_in}};
  const auto& d = s.detector;
  j["detector"] = {{"id", d.id},
                   {"k_cal_g_s", d.k_cal_g_s},
                   {"fov_in", d.fov_in},
                   {"channel_count", d.channel_count},
                   {"energy_cal", {{"offset_kev", d.energy_cal.offset_kev}, {"slope_kev_per_channel", d.energy_cal.slope_kev_per_channel}}},
                   {"u235_kev", d.u235_kev},
                   {"fwhm_186_kev", d.fwhm_186_kev},
                   {"u235_144_kev", d.u235_144_kev},
                   {"fwhm_144_kev", d.fwhm_144_kev},
                   {"line_144_yield", d.line_144_yield},
                   {"mu_144_ratio", d.mu_144_ratio},
                   {"am241_kev", d.am241_kev},
                   {"fwhm_60_kev", d.fwhm_60_kev},
                   {"background",
                    {{"exp_cps_per_kev", d.background.exp_cps_per_kev},
                     {"exp_scale_kev", d.background.exp_scale_kev},
                     {"flat_cps_per_kev", d.background.flat_cps_per_kev}}},
                   {"live_fraction", d.live_fraction},
                   {"am241_run_cps", d.am241_run_cps},
                   {"am241_qc_cps", d.am241_qc_cps},
                   {"qc_am241_shift_kev", d.qc_am241_shift_kev},
                   {"qc_live_time_s", d.qc_live_time_s},
                   {"mu_eff_cm2_g", d.mu_eff_cm2_g},
                   {"deposit_width_cm", d.deposit_width_cm}};
  j["request"] = ingest::to_json(s.request);
  return j;
}

json to_json(const GroundTruth& t) {
  json j;
  j["scenario"] = t.scenario;
  j["pipe_length_in"] = t.pipe_length_in;
  j["fov_in"] = t.fov_in;
  j["max_datum_in"] = t.max_datum_in;
  j["turnaround_time"] = t.turnaround_time.to_string();
  j["segments"] = json::array();
  for (const auto& s : t.segments) {
    j["segments"].push_back({{"number", s.number}, {"start_in", s.start_in}, {"end_in", s.end_in}, {"mass_g", s.mass_g}});
  }
  j["expected_flags"] = json::array();
  for (const auto& f : t.expected_flags) j["expected_flags"].push_back({{"code", f.code}, {"segment", f.segment}});
  j["images"] = json::array();
  for (const auto& i : t.images) j["images"].push_back({{"file", i.file}, {"position_in", i.position_in}});
  return j;
}

// ---- scoring ----------------------------------------------------------------

ScoreReport score_pipeline(const GroundTruth& truth, const Observed& obs) {
  if (truth.segments.size() != obs.segments.size()) {
    throw Error("SegmentSetMismatch", fmt::format("truth has {} segments, pipeline {}", truth.segments.size(),
                                                  obs.segments.size()));
  }
  ScoreReport rep;
  for (std::size_t i = 0; i < truth.segments.size(); ++i) {
    const auto& t = truth.segments[i];
    const auto& o = obs.segments[i];
    if (t.number != o.number || std::abs(t.start_in - o.start_in) > 1.0 || std::abs(t.end_in - o.end_in) > 1.0) {
      throw Error("SegmentSetMismatch",
                  fmt::format("segment {} [{:.2f}, {:.2f}] vs pipeline {} [{:.2f}, {:.2f}]", t.number, t.start_in,
                              t.end_in, o.number, o.start_in, o.end_in));
    }
    SegmentScore sc;
    sc.number = t.number;
    sc.true_g = t.mass_g;
    sc.measured_g = o.mass_g;
    if (o.mass_g) {
      sc.error_g = *o.mass_g - t.mass_g;
      sc.relative_error = t.mass_g > 0 ? sc.error_g / t.mass_g : 0.0;
      rep.max_abs_error_g = std::max(rep.max_abs_error_g, std::abs(sc.error_g));
      if (*o.mass_g < o.mda_g) ++rep.below_mda;
    }
    rep.segments.push_back(sc);
  }
  rep.length_error_in = obs.max_position_in - truth.pipe_length_in;
  std::size_t hit = 0;
  for (const auto& f : truth.expected_flags) {
    hit += std::find(obs.flags.begin(), obs.flags.end(), f) != obs.flags.end();
  }
  std::size_t correct = 0;
  for (const auto& f : obs.flags) {
    correct += std::find(truth.expected_flags.begin(), truth.expected_flags.end(), f) != truth.expected_flags.end();
  }
  rep.flag_recall = truth.expected_flags.empty() ? 1.0 : static_cast<double>(hit) / truth.expected_flags.size();
  rep.flag_precision = obs.flags.empty() ? 1.0 : static_cast<double>(correct) / obs.flags.size();
  return rep;
}

json to_json(const ScoreReport& r) {
  json j;
  j["max_abs_error_g"] = r.max_abs_error_g;
  j["length_error_in"] = r.length_error_in;
  j["flag_precision"] = r.flag_precision;
  j["flag_recall"] = r.flag_recall;
  j["below_mda"] = r.below_mda;
  j["segments"] = json::array();
  for (const auto& s : r.segments) {
    json e{{"number", s.number}, {"true_g", s.true_g}, {"error_g", s.error_g}, {"relative_error", s.relative_error}};
    e["measured_g"] = s.measured_g ? json(*s.measured_g) : json(nullptr);
    j["segments"].push_back(e);
  }
  return j;
}

}  // namespace pps::synth
