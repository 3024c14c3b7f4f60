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

#include <charconv>

#include <fmt/format.h>

#include "pps/error.hpp"
#include "pps/pipeline.hpp"

namespace pps::pipeline {

using nlohmann::json;
namespace rad = radiometrics;

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

template <typename T>
void get(const json& j, const char* key, T& v) {
  if (j.contains(key) && !j.at(key).is_null()) v = j.at(key).get<T>();
}

json roi_json(const rad::RoiDefinition& r) {
  return {{"name", r.name},
          {"center_kev", r.center_kev},
          {"peak_halfwidth_kev", r.peak_halfwidth_kev},
          {"side_window_kev", r.side_window_kev},
          {"gap_kev", r.gap_kev}};
}

rad::RoiDefinition roi_from(const json& j, rad::RoiDefinition r) {
  get(j, "name", r.name);
  get(j, "center_kev", r.center_kev);
  get(j, "peak_halfwidth_kev", r.peak_halfwidth_kev);
  get(j, "side_window_kev", r.side_window_kev);
  get(j, "gap_kev", r.gap_kev);
  return r;
}

localize::Phase phase_from(const std::string& s) {
  if (s == "forward") return localize::Phase::kForward;
  if (s == "reverse") return localize::Phase::kReverse;
  return localize::Phase::kDwell;
}

localize::SegmentKind kind_from(const std::string& s) {
  if (s == "stretch") return localize::SegmentKind::kStretch;
  if (s == "fov") return localize::SegmentKind::kFov;
  return localize::SegmentKind::kStandard;
}

qc::Context context_from(const std::string& s) {
  for (auto c : {qc::Context::kPre, qc::Context::kPost, qc::Context::kSegmentForward, qc::Context::kSegmentReverse,
                 qc::Context::kFullPipe}) {
    if (s == qc::to_string(c)) return c;
  }
  throw Error("MalformedRecord", "unknown QC context " + s);
}

rad::SegmentResult segment_result_from(const json& j) {
  rad::SegmentResult s;
  s.segment = j.at("segment").get<int>();
  s.phase = phase_from(j.at("phase").get<std::string>());
  s.mass_g = j.at("mass_g").get<double>();
  s.density_at_max_g_per_ft = j.at("density_at_max_g_per_ft").get<double>();
  s.sigma_random_g = j.at("sigma_random_g").get<double>();
  s.tmu_g = j.at("tmu_g").get<double>();
  s.mda_g = j.at("mda_g").get<double>();
  s.attenuation_factor = j.at("attenuation_factor").get<double>();
  s.lump_flagged = j.at("lump_flagged").get<bool>();
  s.max_position_in = j.at("max_position_in").get<double>();
  s.first_poll = j.at("first_poll").get<std::size_t>();
  s.last_poll = j.at("last_poll").get<std::size_t>();
  return s;
}

qc::QcResult qc_from(const json& j) {
  qc::QcResult q;
  q.context = context_from(j.at("context").get<std::string>());
  q.segment = j.value("segment", 0);
  if (j.contains("measured") && !j["measured"].is_null()) {
    const auto& m = j["measured"];
    q.measured = qc::PeakMetrics{m.at("centroid_kev").get<double>(), m.at("fwhm_kev").get<double>(),
                                 m.at("gross_rate_cps").get<double>(), m.at("gross_counts").get<double>()};
  }
  for (const auto& c : j.at("criteria")) {
    q.criteria.push_back(
        {c.at("name").get<std::string>(), c.at("measured").get<double>(), c.at("bound").get<double>(), c.at("pass").get<bool>()});
  }
  q.pass = j.at("pass").get<bool>();
  q.note = j.value("note", "");
  q.spectrum_ref = j.value("spectrum_ref", "");
  return q;
}

geometry::DeviationMetrics deviation_from(const json& j) {
  geometry::DeviationMetrics d;
  d.fraction = j.at("fraction").get<double>();
  d.max_abs_deviation_cm = j.at("max_abs_deviation_cm").get<double>();
  d.occupied_cells = j.at("occupied_cells").get<std::size_t>();
  d.deviating_cells = j.at("deviating_cells").get<std::size_t>();
  d.flagged = j.at("flagged").get<bool>();
  return d;
}

std::optional<bool> opt_bool(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<bool>();
}

}  // namespace

json to_json(const rad::SegmentResult& s) {
  return {{"segment", s.segment},
          {"phase", localize::to_string(s.phase)},
          {"mass_g", s.mass_g},
          {"density_at_max_g_per_ft", s.density_at_max_g_per_ft},
          {"sigma_random_g", s.sigma_random_g},
          {"tmu_g", s.tmu_g},
          {"mda_g", s.mda_g},
          {"attenuation_factor", s.attenuation_factor},
          {"lump_flagged", s.lump_flagged},
          {"max_position_in", s.max_position_in},
          {"first_poll", s.first_poll},
          {"last_poll", s.last_poll}};
}

json to_json(const qc::QcResult& q) {
  json j{{"context", qc::to_string(q.context)}, {"segment", q.segment}, {"pass", q.pass}, {"note", q.note},
         {"spectrum_ref", q.spectrum_ref}};
  if (q.measured) {
    j["measured"] = {{"centroid_kev", q.measured->centroid_kev},
                     {"fwhm_kev", q.measured->fwhm_kev},
                     {"gross_rate_cps", q.measured->gross_rate_cps},
                     {"gross_counts", q.measured->gross_counts}};
  } else {
    j["measured"] = nullptr;
  }
  j["criteria"] = json::array();
  for (const auto& c : q.criteria) {
    j["criteria"].push_back({{"name", c.name}, {"measured", c.measured}, {"bound", c.bound}, {"pass", c.pass}});
  }
  return j;
}

json to_json(const qc::ReplicateResult& r) {
  return {{"kind", qc::to_string(r.kind)},
          {"segment", r.segment},
          {"forward_g", r.forward_g},
          {"forward_sigma_g", r.forward_sigma_g},
          {"reverse_g", r.reverse_g},
          {"reverse_sigma_g", r.reverse_sigma_g},
          {"rpd_percent", opt(r.rpd_percent)},
          {"two_sigma_bound_g", r.two_sigma_bound_g},
          {"pass_rpd", r.pass_rpd},
          {"pass_sigma", r.pass_sigma},
          {"pass", r.pass}};
}

json to_json(const qc::ContaminationResult& c) {
  return {{"delta_cps", c.delta_cps}, {"sigma_cps", c.sigma_cps}, {"threshold_cps", c.threshold_cps},
          {"delta_g", c.delta_g},     {"pass", c.pass}};
}

json to_json(const radiometrics::LineRatioTest& t) {
  return {{"ratio", t.ratio},     {"sigma", t.sigma},     {"threshold_ratio", t.threshold_ratio},
          {"z", t.z},             {"net_186", t.net_186}, {"net_144", t.net_144},
          {"assessed", t.assessed}, {"flagged", t.flagged}};
}

json to_json(const geometry::DeviationMetrics& d) {
  return {{"fraction", d.fraction},
          {"max_abs_deviation_cm", d.max_abs_deviation_cm},
          {"occupied_cells", d.occupied_cells},
          {"deviating_cells", d.deviating_cells},
          {"flagged", d.flagged}};
}

// ---- parameters -------------------------------------------------------------

bool ProcessingParameters::operator==(const ProcessingParameters& o) const { return to_json(*this) == to_json(o); }

json to_json(const ProcessingParameters& p) {
  return {{"window_length_in", opt(p.window_length_in)},
          {"u235_roi", roi_json(p.u235_roi)},
          {"am241_roi", roi_json(p.am241_roi)},
          {"material", p.material},
          {"qc_bounds_set", p.qc_bounds_set},
          {"deviation_cm", p.deviation.deviation_cm},
          {"deviation_fraction", p.deviation.max_fraction},
          {"replicate_rpd_percent", p.replicate.max_rpd_percent},
          {"replicate_sigma_multiple", p.replicate.sigma_multiple},
          {"systematic_fraction", p.uncertainty.systematic_fraction},
          {"coverage_factor", p.uncertainty.coverage},
          {"notes", p.notes}};
}

ProcessingParameters parameters_from_json(const json& j) {
  ProcessingParameters p;
  if (!j.is_object()) throw Error("InvalidParameter", "parameters must be a JSON object");
  try {
    if (j.contains("window_length_in") && !j["window_length_in"].is_null()) {
      p.window_length_in = j["window_length_in"].get<double>();
    }
    if (j.contains("u235_roi")) p.u235_roi = roi_from(j["u235_roi"], p.u235_roi);
    if (j.contains("am241_roi")) p.am241_roi = roi_from(j["am241_roi"], p.am241_roi);
    get(j, "material", p.material);
    get(j, "qc_bounds_set", p.qc_bounds_set);
    get(j, "deviation_cm", p.deviation.deviation_cm);
    get(j, "deviation_fraction", p.deviation.max_fraction);
    get(j, "replicate_rpd_percent", p.replicate.max_rpd_percent);
    get(j, "replicate_sigma_multiple", p.replicate.sigma_multiple);
    get(j, "systematic_fraction", p.uncertainty.systematic_fraction);
    get(j, "coverage_factor", p.uncertainty.coverage);
    get(j, "notes", p.notes);
  } catch (const json::exception& e) {
    throw Error("InvalidParameter", e.what());
  }
  if (p.window_length_in && !(*p.window_length_in > 0)) throw Error("InvalidParameter", "window_length_in must be positive");
  if (!(p.deviation.deviation_cm > 0) || !(p.deviation.max_fraction >= 0)) {
    throw Error("InvalidParameter", "deviation thresholds out of range");
  }
  if (!(p.replicate.max_rpd_percent >= 0) || !(p.replicate.sigma_multiple >= 0)) {
    throw Error("InvalidParameter", "replicate thresholds must be non-negative");
  }
  if (!(p.uncertainty.coverage > 0) || p.uncertainty.systematic_fraction < 0) {
    throw Error("InvalidParameter", "uncertainty model out of range");
  }
  return p;
}

void apply_override(ProcessingParameters& p, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error("InvalidParameter", "expected key=value, got " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  json j = to_json(p);
  const auto number = [&]() {
    double v = 0;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
      throw Error("InvalidParameter", fmt::format("{} needs a number, got '{}'", key, value));
    }
    return v;
  };
  const auto dot = key.find('.');
  if (dot != std::string::npos) {
    const std::string head = key.substr(0, dot), tail = key.substr(dot + 1);
    if ((head != "u235_roi" && head != "am241_roi") || !j[head].contains(tail) || tail == "name") {
      throw Error("InvalidParameter", "unknown parameter " + key);
    }
    j[head][tail] = number();
  } else if (key == "material" || key == "qc_bounds_set" || key == "notes") {
    j[key] = value;
  } else if (j.contains(key)) {
    j[key] = number();
  } else {
    throw Error("InvalidParameter", "unknown parameter " + key);
  }
  p = parameters_from_json(j);
}

// ---- configuration ------------------------------------------------------------

AnalysisConfig config_from_json(const json& j) {
  AnalysisConfig c = default_config();
  try {
    if (j.contains("calibration")) {
      const auto& e = j["calibration"];
      get(e, "k_cal_g_s", c.calibration.k_cal_g_s);
      get(e, "systematic_fraction", c.calibration.systematic_fraction);
      get(e, "deposit_width_cm", c.calibration.deposit_width_cm);
      get(e, "tau_max_g_cm2", c.calibration.tau_max_g_cm2);
      get(e, "line_144_yield", c.calibration.line_144_yield);
      get(e, "mu_ratio_144", c.calibration.mu_ratio_144);
      get(e, "line_ratio_min_significance", c.calibration.line_ratio_min_significance);
      get(e, "line_ratio_z", c.calibration.line_ratio_z);
      get(e, "file_id", c.calibration.file_id);
      if (e.contains("calibrated_on")) {
        c.calibration.calibrated_on = Timestamp::parse_iso8601(e["calibrated_on"].get<std::string>());
      }
      if (e.contains("mu_eff_cm2_g")) {
        c.calibration.mu_eff_cm2_g.clear();
        for (const auto& [k, v] : e["mu_eff_cm2_g"].items()) c.calibration.mu_eff_cm2_g[k] = v.get<double>();
      }
    }
    if (j.contains("qc_bounds")) {
      for (const auto& [name, e] : j["qc_bounds"].items()) {
        qc::QcBounds b = qc::am241_bounds();
        get(e, "min_gross_counts", b.min_gross_counts);
        if (e.contains("fwhm_kev")) b.fwhm_kev = {e["fwhm_kev"].at(0).get<double>(), e["fwhm_kev"].at(1).get<double>()};
        if (e.contains("centroid_kev")) {
          b.centroid_kev = {e["centroid_kev"].at(0).get<double>(), e["centroid_kev"].at(1).get<double>()};
        }
        if (e.contains("efficiency_cps")) {
          b.efficiency_cps = {e["efficiency_cps"].at(0).get<double>(), e["efficiency_cps"].at(1).get<double>()};
        }
        b.validate();
        c.am241_bounds[name] = b;
      }
    }
    if (j.contains("lidar_calibration")) {
      for (const auto& k : j["lidar_calibration"]) {
        c.lidar_calibration.knots.emplace_back(k.at(0).get<double>(), k.at(1).get<double>());
      }
    }
    get(j, "contamination_floor_g", c.contamination_floor_g);
    get(j, "closure_tolerance_in", c.closure_tolerance_in);
    get(j, "ncs_threshold_g", c.ncs_threshold_g);
    get(j, "calibration_validity_days", c.calibration_validity_days);
  } catch (const json::exception& e) {
    throw Error("InvalidConfig", e.what());
  }
  return c;
}

// ---- results ------------------------------------------------------------------

json to_json(const AnalysisResult& r) {
  json j;
  j["batch_id"] = r.batch_id;
  j["manifest"] = ingest::to_json(r.manifest);
  j["request"] = ingest::to_json(r.request);
  j["parameters"] = to_json(r.parameters);
  j["calibration_file"] = r.calibration_file;
  j["calibrated_on"] = r.calibrated_on.to_string();
  const auto& o = r.operations;
  j["operations"] = {{"measured_length_in", o.measured_length_in},
                     {"max_position_in", o.max_position_in},
                     {"forward_speed_in_s", o.forward_speed_in_s},
                     {"reverse_speed_in_s", o.reverse_speed_in_s},
                     {"run_duration_s", o.run_duration_s},
                     {"dwell_duration_s", o.dwell_duration_s},
                     {"odometry_closure_in", o.odometry_closure_in},
                     {"polls", o.polls},
                     {"lidar_scans", o.lidar_scans},
                     {"images", o.images},
                     {"window_length_in", o.window_length_in},
                     {"fov_length_in", o.fov_length_in}};
  j["segments"] = json::array();
  for (const auto& s : r.segments) {
    json e{{"number", s.number}, {"start_in", s.start_in}, {"end_in", s.end_in}, {"kind", localize::to_string(s.kind)}};
    e["forward"] = s.forward ? to_json(*s.forward) : json(nullptr);
    e["reverse"] = s.reverse ? to_json(*s.reverse) : json(nullptr);
    e["reported"] = s.reported ? to_json(*s.reported) : json(nullptr);
    e["qc_forward"] = s.qc_forward ? to_json(*s.qc_forward) : json(nullptr);
    e["qc_reverse"] = s.qc_reverse ? to_json(*s.qc_reverse) : json(nullptr);
    e["geometry"] = s.geometry ? to_json(*s.geometry) : json(nullptr);
    e["line_ratio"] = s.line_ratio ? to_json(*s.line_ratio) : json(nullptr);
    e["images"] = s.images;
    e["notes"] = s.notes;
    j["segments"].push_back(e);
  }
  if (r.onboard) {
    j["onboard"] = {{"pre", to_json(r.onboard->pre)},
                    {"post", to_json(r.onboard->post)},
                    {"robot_pre_pass", r.onboard->robot_pre_pass ? json(*r.onboard->robot_pre_pass) : json(nullptr)},
                    {"robot_post_pass", r.onboard->robot_post_pass ? json(*r.onboard->robot_post_pass) : json(nullptr)},
                    {"note", r.onboard->note}};
  } else {
    j["onboard"] = nullptr;
  }
  j["contamination"] = r.contamination ? to_json(*r.contamination) : json(nullptr);
  j["full_pipe"] = r.full_pipe ? to_json(*r.full_pipe) : json(nullptr);
  j["detector_reset_poll"] = r.detector_reset_poll ? json(*r.detector_reset_poll) : json(nullptr);
  j["localization_closure_failed"] = r.localization_closure_failed;
  j["warnings"] = r.warnings;
  j["artifacts"] = json::array();
  for (const auto& [name, data] : r.artifacts) j["artifacts"].push_back(name);
  return j;
}

AnalysisResult result_from_json(const json& j) {
  AnalysisResult r;
  try {
    r.batch_id = j.at("batch_id").get<std::string>();
    r.manifest = ingest::manifest_from_json(j.at("manifest"));
    r.request = ingest::request_from_json(j.at("request"));
    r.parameters = parameters_from_json(j.at("parameters"));
    r.calibration_file = j.at("calibration_file").get<std::string>();
    r.calibrated_on = Timestamp::parse(j.at("calibrated_on").get<std::string>());
    const auto& o = j.at("operations");
    auto& ops = r.operations;
    ops.measured_length_in = o.at("measured_length_in").get<double>();
    ops.max_position_in = o.at("max_position_in").get<double>();
    ops.forward_speed_in_s = o.at("forward_speed_in_s").get<double>();
    ops.reverse_speed_in_s = o.at("reverse_speed_in_s").get<double>();
    ops.run_duration_s = o.at("run_duration_s").get<double>();
    ops.dwell_duration_s = o.at("dwell_duration_s").get<double>();
    ops.odometry_closure_in = o.at("odometry_closure_in").get<double>();
    ops.polls = o.at("polls").get<std::size_t>();
    ops.lidar_scans = o.at("lidar_scans").get<std::size_t>();
    ops.images = o.at("images").get<std::size_t>();
    ops.window_length_in = o.at("window_length_in").get<double>();
    ops.fov_length_in = o.at("fov_length_in").get<double>();
    for (const auto& e : j.at("segments")) {
      SegmentOutcome s;
      s.number = e.at("number").get<int>();
      s.start_in = e.at("start_in").get<double>();
      s.end_in = e.at("end_in").get<double>();
      s.kind = kind_from(e.at("kind").get<std::string>());
      if (!e.at("forward").is_null()) s.forward = segment_result_from(e["forward"]);
      if (!e.at("reverse").is_null()) s.reverse = segment_result_from(e["reverse"]);
      if (!e.at("reported").is_null()) s.reported = segment_result_from(e["reported"]);
      if (!e.at("qc_forward").is_null()) s.qc_forward = qc_from(e["qc_forward"]);
      if (!e.at("qc_reverse").is_null()) s.qc_reverse = qc_from(e["qc_reverse"]);
      if (!e.at("geometry").is_null()) s.geometry = deviation_from(e["geometry"]);
      if (e.contains("line_ratio") && !e["line_ratio"].is_null()) {
        const auto& l = e["line_ratio"];
        radiometrics::LineRatioTest t;
        t.ratio = l.at("ratio").get<double>();
        t.sigma = l.at("sigma").get<double>();
        t.threshold_ratio = l.at("threshold_ratio").get<double>();
        t.z = l.at("z").get<double>();
        t.net_186 = l.at("net_186").get<double>();
        t.net_144 = l.at("net_144").get<double>();
        t.assessed = l.at("assessed").get<bool>();
        t.flagged = l.at("flagged").get<bool>();
        s.line_ratio = t;
      }
      s.images = e.at("images").get<std::vector<std::string>>();
      s.notes = e.at("notes").get<std::vector<std::string>>();
      r.segments.push_back(std::move(s));
    }
    if (!j.at("onboard").is_null()) {
      const auto& e = j["onboard"];
      qc::OnboardChecks ob;
      ob.pre = qc_from(e.at("pre"));
      ob.post = qc_from(e.at("post"));
      ob.robot_pre_pass = opt_bool(e, "robot_pre_pass");
      ob.robot_post_pass = opt_bool(e, "robot_post_pass");
      ob.note = e.value("note", "");
      r.onboard = ob;
    }
    if (!j.at("contamination").is_null()) {
      const auto& e = j["contamination"];
      r.contamination = qc::ContaminationResult{e.at("delta_cps").get<double>(), e.at("sigma_cps").get<double>(),
                                                e.at("threshold_cps").get<double>(), e.at("delta_g").get<double>(),
                                                e.at("pass").get<bool>()};
    }
    if (!j.at("full_pipe").is_null()) r.full_pipe = qc_from(j["full_pipe"]);
    if (!j.at("detector_reset_poll").is_null()) r.detector_reset_poll = j["detector_reset_poll"].get<std::size_t>();
    r.localization_closure_failed = j.at("localization_closure_failed").get<bool>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error("MalformedRecord", e.what());
  }
  return r;
}

}  // namespace pps::pipeline
