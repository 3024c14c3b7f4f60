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

#include "pps/service.hpp"

#include <chrono>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "pps/error.hpp"
#include "pps/ingest.hpp"
#include "pps/reporting.hpp"

namespace pps::service {

using nlohmann::json;
using review::Batch;
using review::User;

namespace {

Timestamp now() {
  auto us = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::system_clock::now().time_since_epoch());
  return Timestamp::from_micros(us.count());
}

}  // namespace

const char* to_string(JobPhase p) {
  switch (p) {
    case JobPhase::kQueued: return "queued";
    case JobPhase::kRunning: return "running";
    case JobPhase::kDone: return "done";
    case JobPhase::kFailed: return "failed";
  }
  return "?";
}

json to_json(const JobStatus& s) {
  return {{"batch_id", s.batch_id},
          {"phase", to_string(s.phase)},
          {"progress", fmt::format("{:.2f}", s.progress)},
          {"error", s.error},
          {"revision", s.revision}};
}

int http_status(const std::string& code) {
  static const std::map<std::string, int> table{
      {"Unauthorized", 401},
      {"ForbiddenRole", 403},
      {"UnknownBatch", 404},
      {"UnknownSegment", 404},
      {"UnknownFlag", 404},
      {"UnknownArtifact", 404},
      {"NotFound", 404},
      {"InvalidTransition", 409},
      {"WrongState", 409},
      {"OpenFlags", 409},
      {"InvalidatedBatch", 409},
      {"NoSegments", 409},
      {"InvalidatingFlag", 409},
      {"FlagNotOpen", 409},
      {"DuplicateBatch", 409},
      {"ConcurrentModification", 409},
      {"JobRunning", 409},
      {"NotApproved", 409},
      {"NotProcessed", 409},
      {"EmptyComment", 422},
      {"FatalIngestIssue", 422},
      {"InvalidParameter", 422},
      {"UnknownMaterial", 422},
      {"UnknownBoundsSet", 422},
      {"InvalidPayload", 422},
      {"InvalidBatchId", 422},
  };
  if (auto it = table.find(code); it != table.end()) return it->second;
  static const std::set<std::string> malformed{"MissingStream", "MalformedRow", "MalformedArchive",
                                               "MalformedTimestamp", "ChannelMismatch", "DecreasingAccumulation",
                                               "NonMonotonicTime", "EmptyRobotId", "InvalidRole"};
  if (malformed.count(code)) return 422;
  return 500;
}

std::vector<UserEntry> demo_users() {
  return {{{"technician", "Technician", review::Role::kTechnician}, "technician-token"},
          {{"analyst", "Analyst", review::Role::kAnalyst}, "analyst-token"},
          {{"pm", "Program Manager", review::Role::kProgramManager}, "pm-token"}};
}

ServiceConfig config_from_json(const json& j) {
  ServiceConfig c;
  try {
    if (j.contains("archive")) c.archive_root = j["archive"].get<std::string>();
    if (j.contains("analysis")) c.analysis = pipeline::config_from_json(j["analysis"]);
    if (j.contains("defaults")) c.defaults = pipeline::parameters_from_json(j["defaults"]);
    if (j.contains("users")) {
      for (const auto& u : j["users"]) {
        c.users.push_back({{u.at("id").get<std::string>(), u.value("name", u.at("id").get<std::string>()),
                            review::role_from_string(u.at("role").get<std::string>())},
                           u.at("token").get<std::string>()});
      }
    }
  } catch (const json::exception& e) {
    throw Error("InvalidConfig", e.what());
  } catch (const Error& e) {
    throw Error("InvalidConfig", e.what());
  }
  if (c.users.empty()) c.users = demo_users();
  return c;
}

ServiceConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("InvalidConfig", "cannot read " + path.string());
  try {
    return config_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error("InvalidConfig", e.what());
  }
}

// ---- Service ------------------------------------------------------------------

Service::Service(ServiceConfig config)
    : config_(std::move(config)), archive_(std::make_unique<archive::Archive>(config_.archive_root)) {
  if (config_.users.empty()) config_.users = demo_users();
  for (const auto& u : config_.users) archive_->put_user(u.user, u.token);
}

Service::~Service() {
  std::lock_guard lk(jobs_mu_);
  for (auto& [_, job] : jobs_) {
    if (job.worker.joinable()) job.worker.join();
  }
}

User Service::authenticate(const std::string& token) {
  if (token.empty()) throw Error("Unauthorized", "missing bearer token");
  auto u = archive_->user_by_token(token);
  if (!u) throw Error("Unauthorized", "unknown token");
  return *u;
}

Batch Service::load(const std::string& id) {
  auto b = archive_->load(id);
  if (!b) throw Error("UnknownBatch", "no batch " + id);
  return *b;
}

json Service::view(const Batch& b) {
  json j = review::summary_json(b);
  json arts = json::object();
  if (b.revision) {
    for (const auto& a : archive_->artifacts(b.id, b.revision->number)) arts[a.name] = a.id;
  }
  j["artifacts"] = arts;
  {
    std::lock_guard lk(jobs_mu_);
    if (auto it = jobs_.find(b.id); it != jobs_.end()) j["job"] = to_json(it->second.status);
  }
  return j;
}

json Service::upload(const std::string& bundle_zip, const User& user) {
  // Any authenticated role may upload.
  ingest::UnpackOptions lenient;
  lenient.require_monotone_accumulation = false;
  ingest::RunBundle bundle;
  try {
    bundle = ingest::unpack_run_bundle(bundle_zip, lenient);
  } catch (const Error& e) {
    throw Error("FatalIngestIssue", e.what());
  }
  json warnings = json::array();
  for (const auto& issue : ingest::validate_bundle(bundle)) {
    if (issue.severity == ingest::Severity::kFatal) {
      throw Error("FatalIngestIssue", fmt::format("{} ({}): {}", issue.code, issue.stream, issue.message));
    }
    warnings.push_back({{"code", issue.code}, {"stream", issue.stream}, {"message", issue.message}});
  }
  const auto id = ingest::make_batch_id(bundle.manifest.robot_id, bundle.manifest.start_time);
  Batch b;
  b.id = id.rendered;
  b.robot_id = bundle.manifest.robot_id;
  b.start_time = bundle.manifest.start_time;
  b.uploaded_by = user.id;
  b.uploaded_at = now();
  b.audit.push_back({"upload", user.id, b.uploaded_at, fmt::format("{} bytes", bundle_zip.size())});
  archive_->create_batch(b, bundle_zip);
  json j = view(b);
  j["warnings"] = warnings;
  return j;
}

json Service::list() {
  json out = json::array();
  for (const auto& l : archive_->list()) {
    out.push_back({{"id", l.id},
                   {"robot_id", l.robot_id},
                   {"state", l.state},
                   {"revision", l.revision},
                   {"start_time", l.start_time.iso8601()},
                   {"uploaded_at", l.uploaded_at.iso8601()}});
  }
  return out;
}

json Service::batch(const std::string& id) { return view(load(id)); }

json Service::segment(const std::string& id, int n) {
  const Batch b = load(id);
  if (!b.revision) throw Error("NotProcessed", "batch " + id + " has no analysis revision");
  const auto* s = b.revision->result.segment(n);
  if (!s) throw Error("UnknownSegment", fmt::format("batch {} has no segment {}", id, n));
  std::map<std::string, std::string> ids;
  for (const auto& a : archive_->artifacts(id, b.revision->number)) ids[a.name] = a.id;
  auto id_of = [&](const std::string& name) { return ids.count(name) ? json(ids[name]) : json(nullptr); };
  auto seg_file = [&](const char* what) { return id_of(fmt::format("seg_{:03d}_{}", n, what)); };
  const bool rejected = b.segment_rejected(n);
  json j{{"batch_id", id},
         {"number", n},
         {"start_ft", reporting::feet(s->start_in / 12.0)},
         {"end_ft", reporting::feet(s->end_in / 12.0)},
         {"kind", localize::to_string(s->kind)},
         {"status", rejected ? "rejected" : "reported"},
         {"notes", s->notes}};
  for (const auto& [key, r] : {std::pair{"forward", &s->forward}, {"reverse", &s->reverse}, {"reported", &s->reported}}) {
    if (*r && !(rejected && std::string(key) == "reported")) {
      json v = pipeline::to_json(**r);
      v["mass_g"] = reporting::grams((*r)->mass_g);
      v["tmu_g"] = reporting::grams((*r)->tmu_g);
      v["mda_g"] = reporting::grams((*r)->mda_g);
      v["sigma_random_g"] = reporting::grams((*r)->sigma_random_g);
      j[key] = v;
    } else {
      j[key] = nullptr;
    }
  }
  j["qc_forward"] = s->qc_forward ? pipeline::to_json(*s->qc_forward) : json(nullptr);
  j["qc_reverse"] = s->qc_reverse ? pipeline::to_json(*s->qc_reverse) : json(nullptr);
  j["geometry"] = s->geometry ? pipeline::to_json(*s->geometry) : json(nullptr);
  j["images"] = json::array();
  for (const auto& img : s->images) {
    j["images"].push_back({{"file", img}, {"artifact", id_of(pipeline::image_artifact_name(img))}});
  }
  j["artifacts"] = {{"heatmap_png", seg_file("heatmap.png")},
                    {"heatmap_csv", seg_file("heatmap.csv")},
                    {"mesh_off", seg_file("mesh.off")},
                    {"spectrum_fwd_csv", seg_file("spectrum_fwd.csv")},
                    {"spectrum_rev_csv", seg_file("spectrum_rev.csv")},
                    {"mass_curve_fwd_csv", id_of("mass_curve_fwd.csv")},
                    {"mass_curve_rev_csv", id_of("mass_curve_rev.csv")}};
  j["flags"] = json::array();
  for (const auto& f : b.revision->flags) {
    if (f.segment == n) j["flags"].push_back(review::to_json(f));
  }
  j["comments"] = json::array();
  for (const auto& c : b.comments) {
    if (c.segment == n) j["comments"].push_back(review::to_json(c));
  }
  return j;
}

pipeline::ProcessingParameters Service::resolve_parameters(const json& params) const {
  json merged = pipeline::to_json(config_.defaults);
  if (!params.is_null()) {
    if (!params.is_object()) throw Error("InvalidParameter", "parameters must be a JSON object");
    merged.merge_patch(params);
  }
  auto p = pipeline::parameters_from_json(merged);
  config_.analysis.calibration.mu_for(p.material);
  config_.analysis.bounds(p.qc_bounds_set);
  return p;
}

void Service::set_status(const std::string& id, JobPhase phase, double progress, std::string error, int revision) {
  {
    std::lock_guard lk(jobs_mu_);
    auto& s = jobs_[id].status;
    s.batch_id = id;
    s.phase = phase;
    s.progress = progress;
    s.error = std::move(error);
    if (revision) s.revision = revision;
  }
  jobs_cv_.notify_all();
}

JobStatus Service::process(const std::string& id, const json& params, const User& user) {
  review::require_role(user, {review::Role::kAnalyst}, "process");
  const Batch b = load(id);
  if (b.state == review::BatchState::kInvalid) throw Error("InvalidatedBatch", "batch " + id + " is INVALID");
  if (b.state != review::BatchState::kUploaded && b.state != review::BatchState::kProcessed) {
    throw Error("WrongState", fmt::format("cannot process a {} batch", to_string(b.state)));
  }
  auto p = resolve_parameters(params);
  std::lock_guard lk(jobs_mu_);
  auto& job = jobs_[id];
  if (job.status.phase == JobPhase::kQueued && job.worker.joinable()) throw Error("JobRunning", "batch " + id + " is queued");
  if (job.status.phase == JobPhase::kRunning) throw Error("JobRunning", "batch " + id + " is being processed");
  if (job.worker.joinable()) job.worker.join();
  job.status = JobStatus{id, JobPhase::kQueued, 0.0, {}, 0};
  job.worker = std::thread([this, id, p = std::move(p), user] { run_job(id, p, user); });
  return job.status;
}

JobStatus Service::process_sync(const std::string& id, const json& params, const User& user) {
  process(id, params, user);
  return wait(id);
}

JobStatus Service::status(const std::string& id) {
  {
    std::lock_guard lk(jobs_mu_);
    if (auto it = jobs_.find(id); it != jobs_.end()) return it->second.status;
  }
  const Batch b = load(id);
  JobStatus s;
  s.batch_id = id;
  if (b.revision) {
    s.phase = JobPhase::kDone;
    s.progress = 1.0;
    s.revision = b.revision->number;
  }
  return s;
}

JobStatus Service::wait(const std::string& id) {
  std::unique_lock lk(jobs_mu_);
  jobs_cv_.wait(lk, [&] {
    auto it = jobs_.find(id);
    return it == jobs_.end() || it->second.status.phase == JobPhase::kDone ||
           it->second.status.phase == JobPhase::kFailed;
  });
  auto it = jobs_.find(id);
  if (it != jobs_.end()) return it->second.status;
  JobStatus s;
  s.batch_id = id;
  return s;
}

void Service::run_job(const std::string& id, pipeline::ProcessingParameters params, User user) {
  try {
    set_status(id, JobPhase::kRunning, 0.05);
    ingest::UnpackOptions lenient;
    lenient.require_monotone_accumulation = false;
    const auto bundle = ingest::unpack_run_bundle(archive_->bundle(id), lenient);
    set_status(id, JobPhase::kRunning, 0.2);
    auto result = pipeline::analyze(bundle, params, config_.analysis);
    set_status(id, JobPhase::kRunning, 0.8);
    auto artifacts = std::move(result.artifacts);
    result.artifacts.clear();
    const Batch b = archive_->update(
        id, [&](Batch& x) { review::record_revision(x, std::move(result), user, now()); }, artifacts);
    set_status(id, JobPhase::kDone, 1.0, {}, b.revision->number);
  } catch (const Error& e) {
    set_status(id, JobPhase::kFailed, 1.0, e.what());
  } catch (const std::exception& e) {
    set_status(id, JobPhase::kFailed, 1.0, std::string("ProcessingFailure: ") + e.what());
  }
}

json Service::clear_flag(const std::string& id, int flag, const std::string& comment, const User& user) {
  return view(archive_->update(id, [&](Batch& b) { review::clear_flag(b, flag, comment, user, now()); }));
}

json Service::reject_segment(const std::string& id, int n, const std::string& reason, const User& user) {
  return view(archive_->update(id, [&](Batch& b) { review::reject_segment(b, n, reason, user, now()); }));
}

json Service::add_comment(const std::string& id, int segment, const std::string& text, const User& user) {
  return view(archive_->update(id, [&](Batch& b) { review::add_comment(b, segment, text, user, now()); }));
}

json Service::transition(const std::string& id, review::Action action, const User& user) {
  if (action == review::Action::kProcessComplete || action == review::Action::kInvalidate) {
    throw Error("InvalidTransition", "processing outcomes are set by the analysis job");
  }
  return view(archive_->update(id, [&](Batch& b) { review::transition(b, action, user, now()); }));
}

Download Service::report(const std::string& id, bool draft) {
  const Batch b = load(id);
  if (!b.revision) throw Error("NotProcessed", "batch " + id + " has no analysis revision");
  const int rev = b.revision->number;
  reporting::ReportInputs in;
  in.trend = archive_->qc_trend(b.robot_id);
  in.ncs_threshold_g = config_.analysis.ncs_threshold_g;
  in.calibration_validity_days = config_.analysis.calibration_validity_days;
  for (const auto& a : archive_->artifacts(id, rev)) {
    in.artifact_ids[a.name] = a.id;
    if (a.name == "mass_curve_fwd.csv") in.mass_curve_fwd_csv = archive_->artifact_bytes(a);
    if (a.name == "mass_curve_rev.csv") in.mass_curve_rev_csv = archive_->artifact_bytes(a);
    if (a.name == "qc_pre_spectrum.csv") in.qc_pre_spectrum_csv = archive_->artifact_bytes(a);
    if (a.name == "qc_post_spectrum.csv") in.qc_post_spectrum_csv = archive_->artifact_bytes(a);
  }
  // Report links to itself would change its own inputs; drop report files.
  for (const char* self : {"report.html", "report_draft.html", "ncs.html", "conda.csv"}) in.artifact_ids.erase(self);
  const auto html = reporting::render_report(reporting::build_report(b, draft, in));
  const auto info = archive_->attach(id, rev, draft ? "report_draft.html" : "report.html", html, "report");
  return {info.content_type, html, info.id};
}

Download Service::ncs(const std::string& id) {
  const Batch b = load(id);
  const auto rows = reporting::build_ncs_table(b, config_.analysis.ncs_threshold_g);
  const auto html = reporting::render_ncs(b, rows);
  const auto info = archive_->attach(id, b.revision->number, "ncs.html", html, "report");
  return {info.content_type, html, info.id};
}

Download Service::conda(const std::string& id) {
  const Batch b = load(id);
  const auto text = reporting::build_conda_export(b);
  const auto info = archive_->attach(id, b.revision->number, "conda.csv", text, "report");
  return {info.content_type, text, info.id};
}

json Service::qc_trend(const std::string& robot_id) {
  json out = json::array();
  for (const auto& e : archive_->qc_trend(robot_id)) {
    out.push_back({{"batch_id", e.batch_id},
                   {"robot_id", e.robot_id},
                   {"detector_id", e.detector_id},
                   {"timestamp", e.timestamp.iso8601()},
                   {"context", qc::to_string(e.context)},
                   {"efficiency_cps", fmt::format("{:.3f}", e.efficiency_cps)},
                   {"pass", e.pass}});
  }
  return out;
}

Download Service::artifact(const std::string& artifact_id) {
  auto info = archive_->artifact_info(artifact_id);
  if (!info) throw Error("UnknownArtifact", "no artifact " + artifact_id);
  return {info->content_type, archive_->artifact_bytes(*info), info->id};
}

}  // namespace pps::service
