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
#include <random>

#include "pps/error.hpp"
#include "pps/radiometrics.hpp"
#include "support.hpp"

namespace pps::radiometrics {
namespace {

TimedSpectrum acc(double t, std::vector<std::uint64_t> counts, double live) {
  TimedSpectrum s;
  s.t = Timestamp::from_seconds(t);
  s.spectrum.counts = std::move(counts);
  s.spectrum.live_time_s = live;
  s.spectrum.label = SpectrumLabel::kAccumulated;
  return s;
}

TEST(Incremental, ElementwiseDifference) {
  const auto d = incremental_spectrum(acc(1, {5, 10, 3}, 1.0), acc(2, {7, 15, 3}, 1.9));
  EXPECT_EQ(d.counts, (std::vector<std::uint64_t>{2, 5, 0}));
  EXPECT_NEAR(d.live_time_s, 0.9, 1e-12);
  const auto z = incremental_spectrum(acc(1, {7, 15, 3}, 1.0), acc(2, {7, 15, 3}, 2.0));
  EXPECT_EQ(z.counts, (std::vector<std::uint64_t>{0, 0, 0}));
  EXPECT_DOUBLE_EQ(z.live_time_s, 1.0);
  try {
    incremental_spectrum(acc(1, {7, 15, 3}, 1.0), acc(2, {7, 14, 3}, 2.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "NegativeDifference");
  }
  EXPECT_THROW(incremental_spectrum(acc(1, {1, 2}, 1.0), acc(2, {1, 2, 3}, 2.0)), Error);
}

TEST(NetCounts, StatedEstimatorArithmetic) {
  // Peak window of 33 channels, side windows of 17 each: build exact sums.
  Spectrum s;
  s.live_time_s = 1.0;
  s.counts.assign(1024, 0);
  const RoiDefinition roi = u235_roi();
  const RoiChannels ch = roi_channels(s.cal, s.channels(), roi);
  EXPECT_EQ(ch.peak_hi - ch.peak_lo + 1, 33u);
  EXPECT_EQ(ch.left_hi - ch.left_lo + 1, 17u);
  EXPECT_EQ(ch.right_hi - ch.right_lo + 1, 17u);
  s.counts[ch.peak_lo] = 400;
  s.counts[ch.left_lo] = 100;
  s.counts[ch.right_lo] = 100;
  const double ratio = 33.0 / 34.0;
  const NetCounts nc = net_peak_counts(s, roi);
  EXPECT_DOUBLE_EQ(nc.gross, 400.0);
  EXPECT_NEAR(nc.net, 400.0 - 200.0 * ratio, 1e-12);
  EXPECT_NEAR(nc.sigma, std::sqrt(400.0 + ratio * ratio * 200.0), 1e-12);
}

TEST(NetCounts, EqualWidthsGiveTextbookValues) {
  // 1 keV channels centered on half-integers: the 16 keV peak window holds 16
  // channels and each 8 keV side window holds 8.
  Spectrum s;
  s.live_time_s = 1.0;
  s.cal = {0.5, 1.0};
  s.counts.assign(400, 0);
  const RoiDefinition roi{"U-235", 186.0, 8.0, 8.0, 4.0};
  const RoiChannels ch = roi_channels(s.cal, s.channels(), roi);
  ASSERT_EQ(ch.peak_width(), 16.0);
  ASSERT_EQ(ch.side_width(), 16.0);
  s.counts[ch.peak_lo] = 400;
  s.counts[ch.left_lo] = 100;
  s.counts[ch.right_hi] = 100;
  const NetCounts nc = net_peak_counts(s, roi);
  EXPECT_DOUBLE_EQ(nc.net, 200.0);
  EXPECT_NEAR(nc.sigma, std::sqrt(600.0), 1e-12);
  EXPECT_NEAR(nc.sigma, 24.49, 0.005);
}

TEST(NetCounts, FlatSpectrumIsExactlyZero) {
  for (std::uint64_t level : {0ULL, 1ULL, 7ULL, 12345ULL}) {
    Spectrum s;
    s.live_time_s = 5.0;
    s.counts.assign(1024, level);
    for (const auto& roi : {u235_roi(), am241_roi()}) {
      EXPECT_EQ(net_peak_counts(s, roi).net, 0.0);
    }
  }
}

TEST(NetCounts, RoiOutsideSpectrum) {
  Spectrum s;
  s.live_time_s = 1;
  s.counts.assign(300, 1);  // 150 keV span
  try {
    net_peak_counts(s, u235_roi());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "RoiOutOfRange");
  }
}

TEST(NetCounts, PoissonGaussianAreaRecovered) {
  std::mt19937_64 rng(21);
  const Spectrum mean = testing::gaussian_spectrum(186.0, 2.5, 1000.0, 0.0);
  int inside = 0;
  const int trials = 200;
  for (int k = 0; k < trials; ++k) {
    Spectrum s = mean;
    for (std::size_t i = 0; i < s.counts.size(); ++i) {
      const double lambda = static_cast<double>(mean.counts[i]) + 20.0;
      s.counts[i] = std::poisson_distribution<std::uint64_t>(lambda)(rng);
    }
    const NetCounts nc = net_peak_counts(s, u235_roi());
    if (std::abs(nc.net - 1000.0) <= 3.0 * nc.sigma) ++inside;
  }
  EXPECT_GE(inside, 195);
}

TEST(Attenuation, ClosedForms) {
  EXPECT_DOUBLE_EQ(self_attenuation_factor(0.0, 1.4), 1.0);
  EXPECT_NEAR(self_attenuation_factor(1.0, 1.0), 1.0 / (1.0 - std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(self_attenuation_factor(1.0, 1.0), 1.5820, 1e-4);
  EXPECT_NEAR(self_attenuation_factor(0.1, 1.0), 1.0508, 1e-4);
  double prev = 1.0;
  for (double tau = 1e-6; tau < 20; tau *= 1.5) {
    const double af = self_attenuation_factor(tau, 1.4);
    EXPECT_GT(af, prev);
    prev = af;
  }
}

TEST(MassDensity, AttenuationOffArithmetic) {
  CalibrationConstants cal;
  const double huge_width = 1e12;  // tau ~ 0
  cal.deposit_width_cm = huge_width;
  const MassDensity md = counts_to_mass_density(100.0, 5.0, cal, 1.4, 18.0);
  EXPECT_NEAR(md.mass_in_fov_g, 0.2, 1e-9);
  EXPECT_NEAR(md.g_per_ft, 0.2 / 1.5, 1e-9);
  EXPECT_NEAR(md.attenuation_factor, 1.0, 1e-9);
  EXPECT_FALSE(md.lump_flagged);

  const MassDensity zero = counts_to_mass_density(0.0, 1.0, CalibrationConstants{}, 1.4, 12.0);
  EXPECT_EQ(zero.g_per_ft, 0.0);
  EXPECT_EQ(zero.attenuation_factor, 1.0);
}

TEST(MassDensity, FixedPointMatchesBisection) {
  CalibrationConstants cal;
  cal.tau_max_g_cm2 = 10.0;
  const double fov = 12.0;
  const double mu = 1.4;
  const double area = cal.deposit_width_cm * fov * 2.54;
  // Pick the rate so that mu * tau(m*) = 1 at the solution.
  const double m_star = area / mu;
  const double rate = m_star / (cal.k_cal_g_s * self_attenuation_factor(m_star / area, mu));
  const MassDensity md = counts_to_mass_density(rate, 0.0, cal, mu, fov);
  ASSERT_TRUE(md.converged);

  const auto g = [&](double m) { return m - rate * cal.k_cal_g_s * self_attenuation_factor(m / area, mu); };
  double lo = 0.0, hi = 10.0 * m_star;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0 ? hi : lo) = mid;
  }
  EXPECT_NEAR(md.mass_in_fov_g, 0.5 * (lo + hi), 1e-6);
  EXPECT_NEAR(md.areal_density_g_cm2 * mu, 1.0, 1e-6);
  EXPECT_LE(std::abs(g(md.mass_in_fov_g)), 1e-6);
}

TEST(MassDensity, LumpFlagAboveTauMax) {
  CalibrationConstants cal;
  cal.tau_max_g_cm2 = 0.1;
  const MassDensity md = counts_to_mass_density(2e4, 10.0, cal, 1.4, 12.0);
  EXPECT_TRUE(md.lump_flagged);
  EXPECT_FALSE(md.diagnostic.empty());
}

TEST(MassDensity, NonConvergenceIsFlaggedNotThrown) {
  CalibrationConstants cal;
  // A strongly attenuating deposit makes the map expansive near the root.
  cal.deposit_width_cm = 0.01;
  const MassDensity md = counts_to_mass_density(1e6, 10.0, cal, 50.0, 1.0);
  EXPECT_TRUE(md.lump_flagged);
  EXPECT_FALSE(md.converged);
  EXPECT_NE(md.diagnostic.find("converge"), std::string::npos);
}

TEST(Mda, CurrieArithmetic) {
  CalibrationConstants cal;
  EXPECT_NEAR(mda(0.0, 1.0, cal, 12.0), 2.71 * 0.002, 1e-15);
  EXPECT_NEAR(mda(100.0, 10.0, cal, 12.0), 0.009842, 1e-12);
  EXPECT_THROW(mda(1.0, 0.0, cal, 12.0), Error);
}

MassCurve curve_of(std::vector<std::pair<double, double>> pts, double sigma = 0.1) {
  MassCurve c;
  for (auto [p, d] : pts) {
    CurveSample s;
    s.position_in = p;
    s.g_per_ft = d;
    s.sigma_g_per_ft = sigma;
    s.live_time_s = 6.0;
    s.background_counts = 100.0;
    c.samples.push_back(s);
  }
  return c;
}

TEST(SegmentResult, MaxRule) {
  localize::Segment seg{1, 0.0, 12.0, localize::SegmentKind::kStandard, {}, {}};
  const auto c = curve_of({{2, 0.5}, {6, 0.8}, {10, 0.7}, {13, 5.0}});
  UncertaintyModel u;
  const SegmentResult r = segment_result(c, seg, CalibrationConstants{}, 12.0, u);
  EXPECT_DOUBLE_EQ(r.mass_g, 0.8);
  EXPECT_DOUBLE_EQ(r.max_position_in, 6.0);
  EXPECT_GE(r.tmu_g, r.sigma_random_g);
  EXPECT_NEAR(r.tmu_g, 2.0 * std::hypot(0.1, 0.08), 1e-12);

  const auto zero = segment_result(curve_of({{2, 0}, {6, 0}}), seg, CalibrationConstants{}, 12.0, u);
  EXPECT_EQ(zero.mass_g, 0.0);
  EXPECT_NEAR(zero.tmu_g, 2.0 * zero.sigma_random_g, 1e-15);

  try {
    segment_result(curve_of({{20, 1}}), seg, CalibrationConstants{}, 12.0, u);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "NoSamplesInSegment");
  }
}

TEST(SegmentResult, LastSegmentIncludesEnd) {
  localize::Segment seg{2, 12.0, 24.0, localize::SegmentKind::kFov, {}, {}};
  const auto c = curve_of({{24.0, 1.0}});
  EXPECT_THROW(segment_result(c, seg, CalibrationConstants{}, 12.0, UncertaintyModel{}, false), Error);
  EXPECT_DOUBLE_EQ(segment_result(c, seg, CalibrationConstants{}, 12.0, UncertaintyModel{}, true).mass_g, 1.0);
}

TEST(SegmentResult, MaxIsAtLeastMean) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 3);
  localize::Segment seg{1, 0.0, 12.0, localize::SegmentKind::kStandard, {}, {}};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<double, double>> pts;
    double sum = 0;
    for (int i = 0; i < 60; ++i) {
      const double d = u(rng);
      pts.emplace_back(i * 0.2, d);
      sum += d;
    }
    const auto r = segment_result(curve_of(pts), seg, CalibrationConstants{}, 12.0, UncertaintyModel{});
    EXPECT_GE(r.density_at_max_g_per_ft, sum / 60.0);
  }
}

TEST(Average, ForwardReverse) {
  SegmentResult f, r;
  f.segment = r.segment = 3;
  f.mass_g = 10;
  f.sigma_random_g = 1;
  r.mass_g = 12;
  r.sigma_random_g = 1;
  f.mda_g = 0.1;
  r.mda_g = 0.2;
  r.lump_flagged = true;
  const auto a = average_fwd_rev(f, r, UncertaintyModel{});
  EXPECT_DOUBLE_EQ(a.mass_g, 11.0);
  EXPECT_NEAR(a.sigma_random_g, 0.7071, 1e-4);
  EXPECT_DOUBLE_EQ(a.mda_g, 0.2);
  EXPECT_TRUE(a.lump_flagged);
  r.segment = 4;
  EXPECT_THROW(average_fwd_rev(f, r, UncertaintyModel{}), Error);
}

// Stream of accumulated spectra for a constant-speed out-and-back run with a
// constant count rate in one channel.
struct SyntheticRun {
  localize::Trajectory traj;
  std::vector<TimedSpectrum> stream;
};

SyntheticRun constant_run(double length_in, double speed) {
  SyntheticRun run;
  const auto odo = testing::out_and_back(length_in, speed, 15.0);
  run.traj = localize::estimate_trajectory(odo);
  std::mt19937_64 rng(1);
  std::vector<std::uint64_t> counts(1024, 0);
  double live = 0;
  for (const auto& o : odo) {
    TimedSpectrum s;
    s.t = o.t;
    s.spectrum.counts = counts;
    s.spectrum.live_time_s = live;
    s.spectrum.label = SpectrumLabel::kAccumulated;
    run.stream.push_back(s);
    for (auto& c : counts) c += std::poisson_distribution<std::uint64_t>(0.05)(rng);
    live += 0.1;
  }
  return run;
}

TEST(MovingWindow, SpansWindowLengthAtConstantSpeed) {
  const SyntheticRun run = constant_run(120.0, 1.0);
  const auto windows = moving_window_spectra(run.stream, run.traj, 18.0, localize::Phase::kForward);
  ASSERT_FALSE(windows.empty());
  for (const auto& w : windows) {
    if (w.center_in < 9.5 || w.center_in > 110.5) continue;
    const double span = run.stream[w.last_poll].t - run.stream[w.first_poll].t;
    EXPECT_NEAR(span, 18.0, 0.2 + 1e-9) << w.center_in;
  }
  // Truncated windows at the launch edge carry their own live time.
  EXPECT_NEAR(windows.front().spectrum.live_time_s, 0.1 * (windows.front().last_poll - windows.front().first_poll),
              1e-9);
}

TEST(MovingWindow, ConservesCountsExactly) {
  const SyntheticRun run = constant_run(60.0, 2.0);
  for (auto phase : {localize::Phase::kForward, localize::Phase::kReverse}) {
    const auto windows = moving_window_spectra(run.stream, run.traj, 12.0, phase);
    for (const auto& w : windows) {
      const auto& a = run.stream[w.first_poll].spectrum.counts;
      const auto& b = run.stream[w.last_poll].spectrum.counts;
      for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(w.spectrum.counts[i], b[i] - a[i]);
    }
    // Chaining adjacent polls across the phase telescopes to the total.
    std::vector<std::uint64_t> sum(1024, 0);
    std::vector<std::size_t> in_phase;
    for (std::size_t k = 0; k < run.stream.size(); ++k) {
      const Timestamp t = run.stream[k].t;
      if (phase == localize::Phase::kForward ? t <= run.traj.turnaround_time : t >= run.traj.turnaround_time) {
        in_phase.push_back(k);
      }
    }
    for (std::size_t k = 0; k + 1 < in_phase.size(); ++k) {
      const auto inc = incremental_spectrum(run.stream[in_phase[k]], run.stream[in_phase[k + 1]]);
      for (std::size_t i = 0; i < 1024; ++i) sum[i] += inc.counts[i];
    }
    const auto& first = run.stream[in_phase.front()].spectrum.counts;
    const auto& last = run.stream[in_phase.back()].spectrum.counts;
    for (std::size_t i = 0; i < 1024; ++i) ASSERT_EQ(sum[i], last[i] - first[i]);
  }
}

TEST(MovingWindow, ReverseCentersDecrease) {
  const SyntheticRun run = constant_run(60.0, 2.0);
  const auto windows = moving_window_spectra(run.stream, run.traj, 12.0, localize::Phase::kReverse);
  const auto curve = build_mass_curve(windows, localize::Phase::kReverse, 12.0, u235_roi(), CalibrationConstants{},
                                      1.4, 12.0);
  ASSERT_GT(curve.samples.size(), 10u);
  for (std::size_t i = 1; i < curve.samples.size(); ++i) {
    EXPECT_LT(curve.samples[i].position_in, curve.samples[i - 1].position_in);
  }
}

TEST(MovingWindow, EmptyWindowError) {
  SyntheticRun run = constant_run(60.0, 2.0);
  run.stream.resize(1);
  try {
    moving_window_spectra(run.stream, run.traj, 12.0, localize::Phase::kForward);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "EmptyWindow");
  }
}

TEST(MassCurveCsv, Header) {
  const auto text = mass_curve_csv(curve_of({{1, 2}}));
  EXPECT_EQ(text, "position_in,g_per_ft,sigma\n1.0000,2.000000,0.100000\n");
}

}  // namespace
}  // namespace pps::radiometrics
