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

// Acceptance suite: one verdict line per criterion. Run without arguments for
// the full table, or with --only <id> for a single criterion (ctest registers
// one test per id).

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>

#include <unistd.h>

#include <fmt/format.h>

#include "fixtures.hpp"
#include "model_check.hpp"
#include "oracles.hpp"
#include "pps/archive.hpp"
#include "pps/csv.hpp"
#include "pps/error.hpp"
#include "pps/geometry.hpp"
#include "pps/qc.hpp"
#include "pps/radiometrics.hpp"
#include "pps/reporting.hpp"
#include "scenarios.hpp"
#include "support.hpp"

namespace {

using namespace pps;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

// Collects named sub-checks; the verdict passes when all do and its detail
// lists the failures, or the summary when there are none.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void note(const std::string& s) { notes_.push_back(s); }
  Verdict verdict() const {
    std::string d;
    const auto& parts = failures_.empty() ? notes_ : failures_;
    for (std::size_t i = 0; i < parts.size(); ++i) d += (i ? "; " : "") + parts[i];
    return {failures_.empty(), d};
  }

 private:
  std::vector<std::string> failures_, notes_;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---- segmentation ---------------------------------------------------------------

Verdict segmentation() {
  Checks c;
  const auto t0 = Clock::now();
  std::size_t plans = 0, violating = 0;
  std::string first;
  double worst_gap = 0.0;  // largest L - FOV among violations
  for (int fov = 12; fov <= 36; ++fov) {
    for (double len = fov; len <= 1200.0; len += 0.25) {
      ++plans;
      std::string why;
      try {
        const auto plan = localize::divide_segments(len, fov);
        double total = 0;
        for (std::size_t k = 0; k < plan.segments.size() && why.empty(); ++k) {
          const auto& s = plan.segments[k];
          total += s.length_in();
          if (s.number != static_cast<int>(k) + 1) why = "numbering";
          if (s.kind == localize::SegmentKind::kStandard && s.length_in() != 12.0) why = "interior length";
          if (s.kind == localize::SegmentKind::kStretch && (s.length_in() < 3.0 || s.length_in() >= 15.0)) {
            why = fmt::format("stretch {:.2f} in", s.length_in());
          }
          if (k > 0 && s.start_in != plan.segments[k - 1].end_in) why = "not contiguous";
        }
        if (why.empty() && plan.segments.front().start_in != 0.0) why = "not from launch edge";
        if (why.empty() && (plan.segments.back().kind != localize::SegmentKind::kFov ||
                            std::abs(plan.segments.back().length_in() - fov) > 1e-9)) {
          why = "terminal segment";
        }
        if (why.empty() && std::abs(total - len) > 1e-9) why = "lengths do not sum";
      } catch (const Error& e) {
        why = e.code();
      }
      if (!why.empty()) {
        ++violating;
        worst_gap = std::max(worst_gap, len - fov);
        if (first.empty()) first = fmt::format("L={} FOV={}: {}", len, fov, why);
      }
    }
  }
  const double dt = seconds_since(t0);
  c.expect(violating == 0, fmt::format("{} of {} plans violate (first {}; all with L - FOV <= {:.2f} in, where the "
                                       "remainder cannot reach 3 in)",
                                       violating, plans, first, worst_gap));
  c.expect(dt < 5.0, fmt::format("{:.2f} s", dt));
  c.note(fmt::format("{} plans in {:.2f} s", plans, dt));
  return c.verdict();
}

// ---- tacky-mat source --------------------------------------------------------------

struct Curve {
  std::vector<double> x, g, sigma;
};

Curve read_curve(const std::string& text) {
  const auto t = csv::parse(text);
  Curve c;
  for (const auto& r : t.rows) {
    c.x.push_back(std::stod(r[0]));
    c.g.push_back(std::stod(r[1]));
    c.sigma.push_back(std::stod(r[2]));
  }
  return c;
}

// Linear interpolation; nullopt outside the sampled range.
std::optional<std::pair<double, double>> sample(const Curve& c, double x) {
  for (std::size_t i = 1; i < c.x.size(); ++i) {
    const double a = c.x[i - 1], b = c.x[i];
    if ((x - a) * (x - b) <= 0 && a != b) {
      const double w = (x - a) / (b - a);
      return std::pair{c.g[i - 1] + w * (c.g[i] - c.g[i - 1]), c.sigma[i - 1] + w * (c.sigma[i] - c.sigma[i - 1])};
    }
  }
  return std::nullopt;
}

Verdict tacky_mat() {
  Checks c;
  const auto scenario = testing::tacky_mat_scenario(1);
  const auto run = synth::generate_run(scenario);
  const auto t0 = Clock::now();
  const auto bundle = ingest::unpack_run_bundle(run.bundle_zip);
  const auto result = pipeline::analyze(bundle, {}, pipeline::default_config());
  review::Batch b;
  b.id = result.batch_id;
  b.robot_id = result.manifest.robot_id;
  b.start_time = result.manifest.start_time;
  review::record_revision(b, result, testing::model::kAnalyst, testing::model::kNow);
  const auto html = reporting::render_report(reporting::build_report(b, true));
  const double dt = seconds_since(t0);

  const pipeline::SegmentOutcome* seg = nullptr;
  for (const auto& s : result.segments) {
    if (s.start_in == 72.0 && s.end_in == 84.0) seg = &s;
  }
  c.expect(seg && seg->reported, "no reported segment spans 72-84 in");
  if (seg && seg->reported) {
    const double m = seg->reported->mass_g;
    c.expect(std::abs(m - 3.0) <= 0.15 * 3.0, fmt::format("segment {} reports {:.3f} g", seg->number, m));
    c.note(fmt::format("segment {} (6-7 ft) {:.3f} g (fwd {:.3f}, rev {:.3f})", seg->number, m, seg->forward->mass_g,
                       seg->reverse->mass_g));
  }

  // Overlay: the reverse curve, interpolated onto the forward positions, lies
  // within 3 combined sigma nearly everywhere and peaks at the same place.
  const auto fwd = read_curve(result.artifacts.at("mass_curve_fwd.csv"));
  const auto rev = read_curve(result.artifacts.at("mass_curve_rev.csv"));
  std::size_t compared = 0, within = 0;
  for (std::size_t i = 0; i < fwd.x.size(); ++i) {
    const auto r = sample(rev, fwd.x[i]);
    if (!r) continue;
    ++compared;
    if (std::abs(fwd.g[i] - r->first) <= 3.0 * std::hypot(fwd.sigma[i], r->second)) ++within;
  }
  const auto argmax = [](const Curve& k) {
    return k.x[static_cast<std::size_t>(std::max_element(k.g.begin(), k.g.end()) - k.g.begin())];
  };
  const double agree = compared ? static_cast<double>(within) / static_cast<double>(compared) : 0.0;
  const double peak_gap = std::abs(argmax(fwd) - argmax(rev));
  c.expect(agree >= 0.95, fmt::format("curves agree within 3 sigma at only {:.1f}% of positions", 100 * agree));
  c.expect(peak_gap <= scenario.detector.fov_in,
           fmt::format("curve peaks {:.1f} in apart (fwd {:.1f}, rev {:.1f})", peak_gap, argmax(fwd), argmax(rev)));
  c.note(fmt::format("curves overlay at {:.1f}% of {} positions, peaks {:.1f} in apart", 100 * agree, compared,
                     peak_gap));

  const auto rep = pipeline::replicate_for(result, {});
  c.expect(rep.total.pass && rep.max.pass, "replicate check fails");
  c.expect(b.state == review::BatchState::kProcessed, "batch not PROCESSED");
  c.expect(!html.empty(), "empty report");
  c.expect(dt < 60.0, fmt::format("pipeline took {:.1f} s", dt));
  c.note(fmt::format("replicate total {:.3f}/{:.3f} g pass; pipeline {:.1f} s", rep.total.forward_g,
                     rep.total.reverse_g, dt));
  return c.verdict();
}

// ---- replicate thresholds ---------------------------------------------------------

Verdict replicate() {
  Checks c;
  const auto a = qc::compare_replicates(qc::ReplicateKind::kTotal, 10.0, 0.1, 12.0, 0.1);
  c.expect(a.pass && a.pass_rpd, "(10, 12) does not pass by RPD");
  const auto b = qc::compare_replicates(qc::ReplicateKind::kTotal, 10.0, 1.5, 14.0, 1.5);
  c.expect(b.pass && !b.pass_rpd && b.pass_sigma, "(10, 14, 1.5) does not pass by 2 sigma alone");
  const auto d = qc::compare_replicates(qc::ReplicateKind::kTotal, 10.0, 0.5, 14.0, 0.5);
  c.expect(!d.pass && !d.pass_rpd && !d.pass_sigma, "(10, 14, 0.5) passes");

  // The same totals through the workflow.
  const auto state_for = [](double fwd, double rev, double sigma) {
    testing::FakeRun f;
    f.segments = 1;
    f.masses = {{1, {fwd, rev}}};
    f.sigma_g = sigma;
    auto batch = testing::model::uploaded();
    return review::record_revision(batch, testing::fake_result(f), testing::model::kAnalyst, testing::model::kNow);
  };
  c.expect(state_for(10, 12, 0.1) == review::BatchState::kProcessed, "(10, 12) batch not PROCESSED");
  c.expect(state_for(10, 14, 1.5) == review::BatchState::kProcessed, "(10, 14, 1.5) batch not PROCESSED");
  c.expect(state_for(10, 14, 0.5) == review::BatchState::kInvalid, "(10, 14, 0.5) batch not INVALID");
  c.note(fmt::format("RPD {:.2f}% pass; |d| 4 vs 2 sigma {:.4f} pass; |d| 4 vs 2 sigma {:.4f} fail, batch INVALID",
                     *a.rpd_percent, b.two_sigma_bound_g, d.two_sigma_bound_g));
  return c.verdict();
}

// ---- surface fidelity ----------------------------------------------------------------

Verdict surface() {
  Checks c;
  auto s = testing::quick_scenario(21);
  s.name = "blocks";
  s.robot.speed_in_s = 1.0;
  s.robot.lidar_rays = 360;
  s.robot.range_noise_cm = 0.3;
  s.features.push_back({1.0, 1.5, 20.0, 60.0, 4.0});
  s.features.push_back({2.5, 3.0, 170.0, 200.0, 2.5});
  s.features.push_back({3.5, 4.0, -90.0, -45.0, 6.0});
  const auto a = testing::generate_and_analyze(s);
  std::size_t cells = 0, within = 0;
  for (const auto& [name, text] : a.result.artifacts) {
    if (name.size() < 12 || name.compare(name.size() - 12, 12, "_heatmap.csv") != 0) continue;
    const auto t = csv::parse(text, name);
    for (const auto& r : t.rows) {
      const double z_in = std::stod(r[0]) / 2.54;
      const double theta = std::stod(r[1]) * std::numbers::pi / 180.0;
      const double truth = synth::true_radius_cm(s, z_in, theta);
      ++cells;
      if (std::abs(std::stod(r[2]) - truth) <= 1.0) ++within;
    }
  }
  const double frac = cells ? static_cast<double>(within) / static_cast<double>(cells) : 0.0;
  c.expect(cells > 0, "no heatmap cells");
  c.expect(frac >= 0.95, fmt::format("{:.2f}% of cells within 1 cm", 100 * frac));
  c.note(fmt::format("{:.2f}% of {} occupied cells within 1 cm", 100 * frac, cells));

  // Brute-force Delaunay verification on random and lattice point sets.
  std::mt19937_64 rng(500);
  std::size_t sets = 0;
  for (std::size_t n : {10u, 50u, 200u, 500u}) {
    for (std::int64_t span : {30, 1000, 100000}) {
      std::uniform_int_distribution<std::int64_t> u(0, span);
      std::set<std::pair<std::int64_t, std::int64_t>> seen;
      std::vector<delaunay::Point> pts;
      while (pts.size() < n) {
        const delaunay::Point p{u(rng), u(rng)};
        if (seen.insert({p.x, p.y}).second) pts.push_back(p);
      }
      const auto tris = delaunay::triangulate(pts);
      const auto v = testing::delaunay_violation(pts, tris);
      c.expect(v.empty(), fmt::format("{} points in [0,{}]^2: {}", n, span, v));
      c.expect(testing::tri_area2(pts, tris) == testing::hull_area2(pts), "triangulation does not cover the hull");
      ++sets;
    }
  }
  std::vector<delaunay::Point> lattice;
  for (int x = 0; x < 20; ++x) {
    for (int y = 0; y < 25; ++y) lattice.push_back({x, y});
  }
  const auto v = testing::delaunay_violation(lattice, delaunay::triangulate(lattice));
  c.expect(v.empty(), "lattice: " + v);
  c.note(fmt::format("empty circumcircle holds on {} random sets and a 500-point lattice", sets));
  return c.verdict();
}

// ---- re-centering ----------------------------------------------------------------

Verdict recenter() {
  Checks c;
  std::mt19937_64 rng(2024);
  constexpr double kPi = std::numbers::pi;
  std::uniform_real_distribution<double> r(0.1, 100.0), th(-kPi, kPi), r0(0.0, 20.0);
  double worst = 0;
  for (int i = 0; i < 100000; ++i) {
    const double rr = r(rng), tt = th(rng), rr0 = r0(rng), tt0 = th(rng);
    const double cart = geometry::recenter_scan({{tt, rr}}, rr0, tt0)[0].r_cm;
    const double closed = geometry::recentered_radius(rr, tt, rr0, tt0);
    worst = std::max(worst, std::abs(cart - closed) / std::max(closed, 1e-300));
  }
  c.expect(worst <= 1e-12, fmt::format("worst relative difference {:.3g}", worst));
  c.note(fmt::format("1e5 samples, worst relative difference {:.3g}", worst));
  return c.verdict();
}

// ---- spectrum conservation --------------------------------------------------------

Verdict conservation() {
  Checks c;
  std::vector<synth::Scenario> runs{testing::quick_scenario(31), testing::tacky_mat_scenario(32)};
  runs.push_back(testing::quick_scenario(33));
  runs.back().deposits.push_back({1.0, 3.0, 5.0});
  runs.back().contamination_g = 0.5;
  runs.push_back(testing::quick_scenario(34));
  runs.back().lumps.push_back({2.0, 3.0, true, 2.0});
  std::mt19937_64 rng(6);
  std::size_t ranges = 0;
  for (const auto& s : runs) {
    const auto bundle = ingest::unpack_run_bundle(synth::generate_run(s).bundle_zip);
    const auto& polls = bundle.spectra;
    const std::size_t channels = polls.front().spectrum.counts.size();
    std::uniform_int_distribution<std::size_t> pick(0, polls.size() - 1);
    for (int trial = 0; trial < 40; ++trial) {
      std::size_t lo = pick(rng), hi = pick(rng);
      if (trial == 0) lo = 0, hi = polls.size() - 1;
      if (lo > hi) std::swap(lo, hi);
      std::vector<std::uint64_t> sum(channels, 0);
      for (std::size_t k = lo; k < hi; ++k) {
        const auto inc = radiometrics::incremental_spectrum(polls[k], polls[k + 1]);
        for (std::size_t ch = 0; ch < channels; ++ch) sum[ch] += inc.counts[ch];
      }
      const auto whole = radiometrics::incremental_spectrum(polls[lo], polls[hi]);
      bool equal = whole.counts == sum;
      for (std::size_t ch = 0; ch < channels && equal; ++ch) {
        equal = sum[ch] == polls[hi].spectrum.counts[ch] - polls[lo].spectrum.counts[ch];
      }
      c.expect(equal, fmt::format("{} polls {}..{} not conserved", s.name, lo, hi));
      ++ranges;
    }
  }
  c.note(fmt::format("{} poll ranges over {} runs conserve every channel exactly", ranges, runs.size()));
  return c.verdict();
}

// ---- QC suite ---------------------------------------------------------------------

Spectrum am241(double center, double rate = 200.0) {
  return testing::gaussian_spectrum(center, 3.0 / 2.3548, rate * 60.0, 2.0, 60.0);
}

Verdict qc_suite() {
  Checks c;
  const auto bounds = qc::am241_bounds();
  for (auto ctx : {qc::Context::kPre, qc::Context::kPost}) {
    const auto r = qc::qc_check(am241(59.5), bounds, ctx);
    c.expect(r.pass, fmt::format("{} nominal peak fails: {}", qc::to_string(ctx), r.note));
  }
  for (double shift : {-4.0, -2.6, 2.6, 4.0}) {
    const auto r = qc::qc_check(am241(59.5 + shift), bounds, qc::Context::kPre);
    bool only_centroid = !r.pass;
    for (const auto& k : r.criteria) only_centroid = only_centroid && (k.pass == (k.name != "centroid"));
    c.expect(only_centroid, fmt::format("shift {:+.1f} keV does not fail exactly the centroid", shift));
  }
  std::size_t hot = 0;
  for (double rate = bounds.efficiency_cps.max * 0.5; rate <= bounds.efficiency_cps.max * 50; rate *= 1.3) {
    for (auto ctx : {qc::Context::kSegmentForward, qc::Context::kSegmentReverse}) {
      const auto r = qc::qc_check(am241(59.5, rate), bounds, ctx);
      const auto* k = r.find("efficiency_max");
      c.expect(!k || k->pass, fmt::format("segment context fails efficiency_max at {:.0f} cps", rate));
      c.expect(r.pass, fmt::format("segment context fails at {:.0f} cps: {}", rate, r.note));
      ++hot;
    }
  }

  auto s = testing::quick_scenario(3);
  s.contamination_g = 1.0;
  const auto a = testing::generate_and_analyze(s);
  auto batch = testing::model::uploaded();
  batch.id = a.result.batch_id;
  const auto state = review::record_revision(batch, a.result, testing::model::kAnalyst, testing::model::kNow);
  c.expect(a.result.contamination && !a.result.contamination->pass, "contamination not detected");
  c.expect(state == review::BatchState::kInvalid, "contaminated batch not INVALID");
  c.note(fmt::format("nominal passes, centroid shifts fail only centroid, {} hot segment checks pass, "
                     "contamination {:.3f} g invalidates",
                     hot, a.result.contamination ? a.result.contamination->delta_g : 0.0));
  return c.verdict();
}

// ---- trajectory optimizer ----------------------------------------------------------

Verdict trajectory() {
  Checks c;
  double worst_integral = 0.0;
  for (double len : {10.0, 120.0, 600.0}) {
    const auto odo = testing::out_and_back(len, 1.0, 15.0);
    const auto traj = localize::estimate_trajectory(odo);
    double integral = 0.0;
    for (std::size_t k = 0; k < odo.size(); ++k) {
      if (k > 0) integral += odo[k].dx_in;
      worst_integral = std::max(worst_integral, std::abs(traj.samples[k].position_in - integral) / len);
    }
  }
  c.expect(worst_integral < 1e-12, fmt::format("noise-free chain off the integral by {:.3g} of length", worst_integral));

  std::mt19937_64 rng(5);
  localize::TrajectoryConfig cfg;
  double worst_grad = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto odo = testing::small_chain(rng, 100 + 20 * trial, 30, 100 + 20 * trial);
    worst_grad = std::max(worst_grad, testing::chain_gradient_norm(odo, localize::estimate_trajectory(odo, cfg), cfg));
  }
  c.expect(worst_grad < 1e-8, fmt::format("gradient norm {:.3g}", worst_grad));

  double worst_dense = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int leg = 5 + trial % 15;
    const auto odo = testing::small_chain(rng, leg, 50 - 1 - 2 * leg, leg);
    const auto traj = localize::estimate_trajectory(odo, cfg);
    const auto ref = testing::dense_solve(odo, traj.dwell_begin, traj.dwell_end, cfg);
    for (std::size_t k = 0; k < odo.size(); ++k) {
      worst_dense = std::max(worst_dense, std::abs(traj.samples[k].position_in - ref[static_cast<Eigen::Index>(k)]));
    }
  }
  c.expect(worst_dense < 1e-9, fmt::format("dense solve differs by {:.3g} in", worst_dense));
  c.note(fmt::format("integral error {:.2g} (relative), gradient {:.2g}, dense difference {:.2g} in", worst_integral,
                     worst_grad, worst_dense));
  return c.verdict();
}

// ---- workflow ---------------------------------------------------------------------

Verdict workflow() {
  Checks c;
  const auto out = testing::model::explore(6);
  c.expect(out.violation.empty(), out.violation);
  for (auto s : {review::BatchState::kLocked, review::BatchState::kApproved, review::BatchState::kInvalid}) {
    c.expect(out.reached.count(s) > 0, std::string("never reached ") + review::to_string(s));
  }
  c.note(fmt::format("{} states, {} transitions explored to depth 6", out.states, out.edges));
  return c.verdict();
}

// ---- determinism --------------------------------------------------------------------

struct Rendered {
  std::string report, ncs, conda;
  review::Batch batch;
};

Rendered approve_and_render(const std::string& zip) {
  namespace m = testing::model;
  const auto result = pipeline::analyze(ingest::unpack_run_bundle(zip), {}, pipeline::default_config());
  Rendered r;
  auto& b = r.batch;
  b = m::uploaded();
  b.id = result.batch_id;
  review::record_revision(b, result, m::kAnalyst, m::kNow);
  for (const auto* f : b.blocking_flags()) review::clear_flag(b, f->id, "reviewed", m::kAnalyst, m::kNow + 10.0);
  review::transition(b, review::Action::kLock, m::kAnalyst, m::kNow + 20.0);
  review::transition(b, review::Action::kApprove, m::kPm, m::kNow + 30.0);
  r.report = reporting::render_report(reporting::build_report(b, false));
  r.ncs = reporting::render_ncs(b, reporting::build_ncs_table(b));
  r.conda = reporting::build_conda_export(b);
  return r;
}

Verdict determinism() {
  Checks c;
  auto s = testing::quick_scenario(41);
  s.deposits.push_back({1.0, 2.5, 2.0});
  const auto zip = synth::generate_run(s).bundle_zip;
  const auto a = approve_and_render(zip);
  const auto b = approve_and_render(zip);
  c.expect(a.report == b.report, "report HTML differs");
  c.expect(a.ncs == b.ncs, "NCS output differs");
  c.expect(a.conda == b.conda, "CONDA CSV differs");

  // Through the archive and back.
  const auto dir = std::filesystem::temp_directory_path() / fmt::format("pps_acceptance_{}", ::getpid());
  std::filesystem::remove_all(dir);
  {
    archive::Archive store(dir);
    auto copy = a.batch;
    store.create_batch(copy, zip);
    store.save(copy);
    const auto loaded = store.load(copy.id);
    c.expect(loaded.has_value(), "batch not reloaded");
    if (loaded) {
      c.expect(reporting::render_report(reporting::build_report(*loaded, false)) == a.report,
               "report differs after reload");
      c.expect(reporting::build_conda_export(*loaded) == a.conda, "CONDA differs after reload");
    }
  }
  std::filesystem::remove_all(dir);

  const auto parsed = reporting::parse_conda_export(a.conda);
  const auto stored = reporting::conda_rows(a.batch);
  c.expect(parsed == stored, "CONDA rows do not round-trip");
  c.note(fmt::format("report {} B, NCS {} B, CONDA {} rows byte-identical and round-trip", a.report.size(),
                     a.ncs.size(), parsed.size()));
  return c.verdict();
}

// ---- zero source -----------------------------------------------------------------------

Verdict zero_source() {
  Checks c;
  std::size_t below = 0, total = 0;
  for (std::uint64_t seed = 51; seed <= 55; ++seed) {
    auto s = testing::tacky_mat_scenario(seed);
    s.deposits.clear();
    s.name = "empty";
    const auto a = testing::generate_and_analyze(s);
    const auto score = synth::score_pipeline(a.run.truth, testing::observe(a.result));
    below += score.below_mda;
    total += score.segments.size();
  }
  const double frac = static_cast<double>(below) / static_cast<double>(total);
  c.expect(frac >= 0.95, fmt::format("{} of {} segments below MDA", below, total));
  c.note(fmt::format("{} of {} segments ({:.1f}%) below MDA over 5 empty pipes", below, total, 100 * frac));
  return c.verdict();
}

struct Criterion {
  const char* id;
  const char* title;
  std::function<Verdict()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {"segmentation", "segmentation properties for FOV 12-36 in, L up to 1200 in, under 5 s", segmentation},
      {"tacky_mat", "3 g tacky-mat source at 6-7 ft reported within 15%, curves overlay, replicate passes", tacky_mat},
      {"replicate", "replicate thresholds and invalidation", replicate},
      {"surface", "surface fidelity within 1 cm and Delaunay empty circumcircle", surface},
      {"recenter", "re-centering Cartesian vs closed form", recenter},
      {"conservation", "channelwise spectrum conservation", conservation},
      {"qc", "QC criteria, segment efficiency waiver, contamination invalidation", qc_suite},
      {"trajectory", "trajectory optimizer exactness, stationarity, dense agreement", trajectory},
      {"workflow", "workflow model check to six actions", workflow},
      {"determinism", "report, NCS and CONDA determinism and CONDA round trip", determinism},
      {"zero_source", "empty pipe below MDA", zero_source},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string only;
  bool list = false;
  app.add_option("--only", only, "run a single criterion by id");
  app.add_flag("--list", list, "print criterion ids");
  CLI11_PARSE(app, argc, argv);

  if (list) {
    for (const auto& c : criteria()) std::cout << c.id << "\n";
    return 0;
  }
  int failed = 0, ran = 0;
  for (const auto& c : criteria()) {
    if (!only.empty() && only != c.id) continue;
    ++ran;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::cout << fmt::format("{} {:<13} {} [{:.1f} s]\n     {}\n", v.pass ? "PASS" : "FAIL", c.id, c.title,
                             seconds_since(t0), v.detail)
              << std::flush;
  }
  if (ran == 0) {
    std::cerr << "unknown criterion " << only << "\n";
    return 2;
  }
  std::cout << fmt::format("{} of {} criteria pass\n", ran - failed, ran);
  return failed ? 1 : 0;
}
