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

#include "pps/review.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

#include "pps/error.hpp"

namespace pps::review {

using nlohmann::json;

const char* to_string(BatchState s) {
  switch (s) {
    case BatchState::kUploaded: return "UPLOADED";
    case BatchState::kProcessed: return "PROCESSED";
    case BatchState::kLocked: return "LOCKED";
    case BatchState::kApproved: return "APPROVED";
    case BatchState::kInvalid: return "INVALID";
  }
  return "?";
}

const char* to_string(Role r) {
  switch (r) {
    case Role::kTechnician: return "technician";
    case Role::kAnalyst: return "analyst";
    case Role::kProgramManager: return "program_manager";
  }
  return "?";
}

const char* to_string(Action a) {
  switch (a) {
    case Action::kProcessComplete: return "process_complete";
    case Action::kLock: return "lock";
    case Action::kApprove: return "approve";
    case Action::kReturn: return "return";
    case Action::kInvalidate: return "invalidate";
  }
  return "?";
}

const char* to_string(FlagSeverity s) { return s == FlagSeverity::kClearable ? "clearable" : "invalidating"; }

const char* to_string(FlagStatus s) {
  switch (s) {
    case FlagStatus::kOpen: return "open";
    case FlagStatus::kCleared: return "cleared";
    case FlagStatus::kSuperseded: return "superseded";
  }
  return "?";
}

BatchState state_from_string(const std::string& s) {
  for (auto v : {BatchState::kUploaded, BatchState::kProcessed, BatchState::kLocked, BatchState::kApproved,
                 BatchState::kInvalid}) {
    if (s == to_string(v)) return v;
  }
  throw Error("MalformedRecord", "unknown batch state " + s);
}

Role role_from_string(const std::string& s) {
  for (auto v : {Role::kTechnician, Role::kAnalyst, Role::kProgramManager}) {
    if (s == to_string(v)) return v;
  }
  throw Error("InvalidRole", "unknown role " + s);
}

FlagStatus flag_status_from_string(const std::string& s) {
  for (auto v : {FlagStatus::kOpen, FlagStatus::kCleared, FlagStatus::kSuperseded}) {
    if (s == to_string(v)) return v;
  }
  throw Error("MalformedRecord", "unknown flag status " + s);
}

const Flag* Batch::flag(int id) const {
  if (!revision) return nullptr;
  for (const auto& f : revision->flags) {
    if (f.id == id) return &f;
  }
  return nullptr;
}

bool Batch::segment_rejected(int n) const {
  if (!revision) return false;
  for (const auto& s : revision->segments) {
    if (s.number == n) return s.rejected;
  }
  return false;
}

std::vector<int> Batch::rejected_segments() const {
  std::vector<int> out;
  if (!revision) return out;
  for (const auto& s : revision->segments) {
    if (s.rejected) out.push_back(s.number);
  }
  return out;
}

std::vector<const Flag*> Batch::blocking_flags() const {
  std::vector<const Flag*> out;
  if (!revision) return out;
  for (const auto& f : revision->flags) {
    if (f.severity == FlagSeverity::kInvalidating || f.status == FlagStatus::kOpen) out.push_back(&f);
  }
  return out;
}

bool is_invalidating(const std::string& code) {
  return code == "CONTAMINATION" || code == "REPLICATE_TOTAL" || code == "REPLICATE_MAX" || code == "DETECTOR_RESET";
}

namespace {

Flag make_flag(std::string code, int segment, std::string message) {
  Flag f;
  f.severity = is_invalidating(code) ? FlagSeverity::kInvalidating : FlagSeverity::kClearable;
  f.code = std::move(code);
  f.segment = segment;
  f.message = std::move(message);
  return f;
}

std::string qc_message(const qc::QcResult& q) {
  if (!q.measured) return q.note.empty() ? "no peak" : q.note;
  std::string out;
  for (const auto& c : q.criteria) {
    if (c.pass) continue;
    if (!out.empty()) out += "; ";
    out += fmt::format("{} {:.3f} outside bound {:.3f}", c.name, c.measured, c.bound);
  }
  return out;
}

std::string replicate_message(const qc::ReplicateResult& r) {
  return fmt::format("forward {:.3f} +- {:.3f} g, reverse {:.3f} +- {:.3f} g, RPD {}, 2 sigma bound {:.3f} g",
                     r.forward_g, r.forward_sigma_g, r.reverse_g, r.reverse_sigma_g,
                     r.rpd_percent ? fmt::format("{:.1f}%", *r.rpd_percent) : std::string("n/a"), r.two_sigma_bound_g);
}

[[noreturn]] void fail(const char* code, const std::string& msg) { throw Error(code, msg); }

void audit(Batch& b, const std::string& action, const User& u, Timestamp now, std::string detail = {}) {
  b.audit.push_back({action, u.id, now, std::move(detail)});
}

void require_mutable(const Batch& b) {
  if (b.state == BatchState::kApproved) fail("InvalidTransition", "batch " + b.id + " is APPROVED and immutable");
  if (b.state == BatchState::kInvalid) fail("InvalidatedBatch", "batch " + b.id + " is INVALID");
}

void require_processed(const Batch& b, const char* what) {
  require_mutable(b);
  if (b.state != BatchState::kProcessed || !b.revision) {
    fail("WrongState", fmt::format("{} needs a PROCESSED batch; {} is {}", what, b.id, to_string(b.state)));
  }
}

void renumber(std::vector<Flag>& flags, int first) {
  for (auto& f : flags) f.id = first++;
}

std::optional<qc::ReplicatePair> replicate_or_note(const pipeline::AnalysisResult& r, const std::vector<int>& rejected,
                                                   std::string& note) {
  try {
    note.clear();
    return pipeline::replicate_for(r, rejected);
  } catch (const Error& e) {
    note = e.what();
    return std::nullopt;
  }
}

}  // namespace

void require_role(const User& user, std::initializer_list<Role> roles, const char* what) {
  if (std::find(roles.begin(), roles.end(), user.role) == roles.end()) {
    fail("ForbiddenRole", fmt::format("{} may not {} (role {})", user.id, what, to_string(user.role)));
  }
}

std::vector<Flag> raise_flags(const pipeline::AnalysisResult& r, const std::vector<int>& rejected,
                              const std::optional<qc::ReplicatePair>& replicate) {
  std::vector<Flag> out;
  if (r.onboard) {
    if (!r.onboard->pre.pass) out.push_back(make_flag("PRE_QC_FAIL", 0, qc_message(r.onboard->pre)));
    if (!r.onboard->post.pass) out.push_back(make_flag("POST_QC_FAIL", 0, qc_message(r.onboard->post)));
  }
  if (r.contamination && !r.contamination->pass) {
    out.push_back(make_flag("CONTAMINATION", 0,
                            fmt::format("186 keV rate changed by {:.3f} cps ({:.4f} g), threshold {:.3f} cps",
                                        r.contamination->delta_cps, r.contamination->delta_g,
                                        r.contamination->threshold_cps)));
  }
  if (r.detector_reset_poll) {
    out.push_back(make_flag("DETECTOR_RESET", 0,
                            fmt::format("accumulated counts decrease at poll {}", *r.detector_reset_poll)));
  }
  if (r.full_pipe && !r.full_pipe->pass) out.push_back(make_flag("FULL_PIPE_SPECTRUM", 0, qc_message(*r.full_pipe)));
  if (r.localization_closure_failed) {
    out.push_back(make_flag("LOCALIZATION_CLOSURE", 0,
                            fmt::format("odometry does not return to the entrance: net {:.2f} in",
                                        r.operations.odometry_closure_in)));
  }
  if (replicate) {
    if (!replicate->total.pass) out.push_back(make_flag("REPLICATE_TOTAL", 0, replicate_message(replicate->total)));
    if (!replicate->max.pass) {
      out.push_back(make_flag("REPLICATE_MAX", 0,
                              fmt::format("segment {}: {}", replicate->max.segment, replicate_message(replicate->max))));
    }
  }
  for (const auto& s : r.segments) {
    if (std::find(rejected.begin(), rejected.end(), s.number) != rejected.end()) continue;
    if (s.qc_forward && !s.qc_forward->pass) out.push_back(make_flag("SEG_QC_FWD", s.number, qc_message(*s.qc_forward)));
    if (s.qc_reverse && !s.qc_reverse->pass) out.push_back(make_flag("SEG_QC_REV", s.number, qc_message(*s.qc_reverse)));
    if (s.geometry && s.geometry->flagged) {
      out.push_back(make_flag("SEG_GEOMETRY_DEVIATION", s.number,
                              fmt::format("{:.1f}% of cells deviate more than threshold (max {:.2f} cm)",
                                          100 * s.geometry->fraction, s.geometry->max_abs_deviation_cm)));
    }
    const bool lump = (s.reported && s.reported->lump_flagged) || (s.forward && s.forward->lump_flagged) ||
                      (s.reverse && s.reverse->lump_flagged);
    if (lump) {
      out.push_back(make_flag("SEG_LUMP_SELF_ATTENUATION", s.number,
                              "self-attenuation too high to measure; segment is unmeasurable"));
    }
  }
  return out;
}

BatchState transition(Batch& b, Action action, const User& user, Timestamp now) {
  switch (action) {
    case Action::kProcessComplete:
      require_mutable(b);
      require_role(user, {Role::kAnalyst}, "process");
      if (b.state != BatchState::kUploaded && b.state != BatchState::kProcessed) {
        fail("WrongState", fmt::format("cannot process a {} batch", to_string(b.state)));
      }
      b.state = BatchState::kProcessed;
      b.returned_from_pm = false;
      break;
    case Action::kInvalidate:
      require_mutable(b);
      require_role(user, {Role::kAnalyst}, "invalidate");
      if (b.state != BatchState::kUploaded && b.state != BatchState::kProcessed) {
        fail("InvalidTransition", fmt::format("cannot invalidate a {} batch", to_string(b.state)));
      }
      b.state = BatchState::kInvalid;
      break;
    case Action::kLock: {
      require_mutable(b);
      require_role(user, {Role::kAnalyst}, "lock");
      if (b.state != BatchState::kProcessed || !b.revision) {
        fail("InvalidTransition", fmt::format("cannot lock a {} batch", to_string(b.state)));
      }
      std::vector<std::string> blocking;
      for (const Flag* f : b.blocking_flags()) {
        blocking.push_back(f->segment ? fmt::format("{}#{} (segment {})", f->code, f->id, f->segment)
                                      : fmt::format("{}#{}", f->code, f->id));
      }
      for (const auto& s : b.revision->result.segments) {
        if (!s.reported && !b.segment_rejected(s.number)) {
          blocking.push_back(fmt::format("segment {} has no result and is not rejected", s.number));
        }
      }
      if (!blocking.empty()) {
        std::string list;
        for (const auto& x : blocking) list += (list.empty() ? "" : ", ") + x;
        fail("OpenFlags", "resolve before locking: " + list);
      }
      if (!b.revision->replicate) fail("NoSegments", "replicate check has no segments: " + b.revision->replicate_note);
      b.state = BatchState::kLocked;
      b.returned_from_pm = false;
      break;
    }
    case Action::kApprove:
      require_mutable(b);
      require_role(user, {Role::kProgramManager}, "approve");
      if (b.state != BatchState::kLocked) fail("InvalidTransition", fmt::format("cannot approve a {} batch", to_string(b.state)));
      b.state = BatchState::kApproved;
      b.approved_by = user.name.empty() ? user.id : user.name;
      b.approved_at = now;
      break;
    case Action::kReturn:
      require_mutable(b);
      require_role(user, {Role::kProgramManager}, "return");
      if (b.state != BatchState::kLocked) fail("InvalidTransition", fmt::format("cannot return a {} batch", to_string(b.state)));
      b.state = BatchState::kProcessed;
      b.returned_from_pm = true;
      break;
  }
  audit(b, to_string(action), user, now);
  return b.state;
}

BatchState record_revision(Batch& b, pipeline::AnalysisResult result, const User& user, Timestamp now) {
  require_mutable(b);
  require_role(user, {Role::kAnalyst}, "process");
  if (b.state != BatchState::kUploaded && b.state != BatchState::kProcessed) {
    fail("WrongState", fmt::format("cannot process a {} batch", to_string(b.state)));
  }
  Revision rev;
  rev.number = b.revision ? b.revision->number + 1 : 1;
  rev.created_by = user.id;
  rev.created_at = now;
  rev.result = std::move(result);
  rev.replicate = replicate_or_note(rev.result, {}, rev.replicate_note);
  rev.flags = raise_flags(rev.result, {}, rev.replicate);
  renumber(rev.flags, 1);
  for (const auto& s : rev.result.segments) rev.segments.push_back({s.number, false, {}, {}, {}});
  const bool invalid = std::any_of(rev.flags.begin(), rev.flags.end(),
                                   [](const Flag& f) { return f.severity == FlagSeverity::kInvalidating; });
  b.revision = std::move(rev);
  b.returned_from_pm = false;
  b.state = invalid ? BatchState::kInvalid : BatchState::kProcessed;
  audit(b, invalid ? "invalidate" : "process_complete", user, now, fmt::format("revision {}", b.revision->number));
  return b.state;
}

void clear_flag(Batch& b, int flag_id, const std::string& comment, const User& user, Timestamp now) {
  require_role(user, {Role::kAnalyst}, "clear flags");
  Flag* f = nullptr;
  if (b.revision) {
    for (auto& x : b.revision->flags) {
      if (x.id == flag_id) f = &x;
    }
  }
  if (!f) fail("UnknownFlag", fmt::format("no flag {} in batch {}", flag_id, b.id));
  if (f->severity == FlagSeverity::kInvalidating) fail("InvalidatingFlag", f->code + " cannot be cleared");
  require_processed(b, "clearing a flag");
  if (std::all_of(comment.begin(), comment.end(), [](unsigned char c) { return std::isspace(c); })) {
    fail("EmptyComment", "clearing a flag needs a justification");
  }
  if (f->status != FlagStatus::kOpen) fail("FlagNotOpen", fmt::format("flag {} is {}", flag_id, to_string(f->status)));
  f->status = FlagStatus::kCleared;
  f->clearance = Clearance{comment, user.id, now};
  audit(b, "clear_flag", user, now, fmt::format("{}#{}: {}", f->code, f->id, comment));
}

void reject_segment(Batch& b, int segment, const std::string& reason, const User& user, Timestamp now) {
  require_mutable(b);
  require_role(user, {Role::kAnalyst}, "reject segments");
  require_processed(b, "rejecting a segment");
  Revision& rev = *b.revision;
  auto it = std::find_if(rev.segments.begin(), rev.segments.end(), [&](const SegmentStatus& s) { return s.number == segment; });
  if (it == rev.segments.end()) fail("UnknownSegment", fmt::format("batch {} has no segment {}", b.id, segment));
  if (it->rejected) return;
  it->rejected = true;
  it->reason = reason;
  it->user = user.id;
  it->at = now;
  for (auto& f : rev.flags) {
    if (f.segment == segment && f.status == FlagStatus::kOpen) f.status = FlagStatus::kSuperseded;
  }
  // Re-evaluate the replicate check without the rejected segments.
  rev.replicate = replicate_or_note(rev.result, b.rejected_segments(), rev.replicate_note);
  rev.flags.erase(std::remove_if(rev.flags.begin(), rev.flags.end(),
                                 [](const Flag& f) { return f.code == "REPLICATE_TOTAL" || f.code == "REPLICATE_MAX"; }),
                  rev.flags.end());
  int next = 1;
  for (const auto& f : rev.flags) next = std::max(next, f.id + 1);
  std::vector<Flag> fresh;
  for (auto& f : raise_flags(rev.result, b.rejected_segments(), rev.replicate)) {
    if (f.code == "REPLICATE_TOTAL" || f.code == "REPLICATE_MAX") fresh.push_back(std::move(f));
  }
  renumber(fresh, next);
  audit(b, "reject_segment", user, now, fmt::format("segment {}: {}", segment, reason));
  if (!fresh.empty()) {
    rev.flags.insert(rev.flags.end(), fresh.begin(), fresh.end());
    b.state = BatchState::kInvalid;
    audit(b, "invalidate", user, now, "replicate check fails after rejection");
  }
}

const Comment& add_comment(Batch& b, int segment, const std::string& text, const User& user, Timestamp now) {
  require_mutable(b);
  require_role(user, {Role::kAnalyst, Role::kProgramManager}, "comment");
  if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) {
    fail("EmptyComment", "comment text is empty");
  }
  if (segment != 0) {
    if (!b.revision || !b.revision->result.segment(segment)) {
      fail("UnknownSegment", fmt::format("batch {} has no segment {}", b.id, segment));
    }
  }
  int next = 1;
  for (const auto& c : b.comments) next = std::max(next, c.id + 1);
  b.comments.push_back({next, segment, text, user.id, now});
  audit(b, "comment", user, now, segment ? fmt::format("segment {}", segment) : "batch");
  return b.comments.back();
}

// ---- JSON views ---------------------------------------------------------------

json to_json(const Flag& f) {
  json j{{"id", f.id},
         {"segment", f.segment},
         {"scope", f.segment ? "segment" : "batch"},
         {"code", f.code},
         {"severity", to_string(f.severity)},
         {"status", to_string(f.status)},
         {"message", f.message}};
  if (f.clearance) {
    j["clearance"] = {{"comment", f.clearance->comment}, {"user", f.clearance->user}, {"at", f.clearance->at.iso8601()}};
  } else {
    j["clearance"] = nullptr;
  }
  return j;
}

json to_json(const Comment& c) {
  return {{"id", c.id}, {"segment", c.segment}, {"text", c.text}, {"user", c.user}, {"at", c.at.iso8601()}};
}

json to_json(const SegmentStatus& s) {
  return {{"number", s.number}, {"status", s.rejected ? "rejected" : "reported"}, {"reason", s.reason}};
}

json summary_json(const Batch& b) {
  json j;
  j["id"] = b.id;
  j["robot_id"] = b.robot_id;
  j["start_time"] = b.start_time.iso8601();
  j["state"] = to_string(b.state);
  j["returned_from_pm"] = b.returned_from_pm;
  j["approved_by"] = b.approved_by ? json(*b.approved_by) : json(nullptr);
  j["approved_at"] = b.approved_at ? json(b.approved_at->iso8601()) : json(nullptr);
  j["uploaded_by"] = b.uploaded_by;
  j["comments"] = json::array();
  for (const auto& c : b.comments) j["comments"].push_back(to_json(c));
  if (!b.revision) {
    j["revision"] = nullptr;
    return j;
  }
  const Revision& rev = *b.revision;
  const auto& r = rev.result;
  j["revision"] = rev.number;
  j["parameters"] = pipeline::to_json(r.parameters);
  j["flags"] = json::array();
  for (const auto& f : rev.flags) j["flags"].push_back(to_json(f));
  j["operations"] = {{"measured_length_ft", fmt::format("{:.1f}", r.operations.measured_length_in / 12.0)},
                     {"forward_speed_in_s", fmt::format("{:.3f}", r.operations.forward_speed_in_s)},
                     {"reverse_speed_in_s", fmt::format("{:.3f}", r.operations.reverse_speed_in_s)},
                     {"run_duration_s", fmt::format("{:.1f}", r.operations.run_duration_s)}};
  j["segments"] = json::array();
  for (const auto& s : r.segments) {
    const bool rejected = b.segment_rejected(s.number);
    int open = 0;
    for (const auto& f : rev.flags) open += f.segment == s.number && f.status == FlagStatus::kOpen;
    json row{{"number", s.number},
             {"start_ft", fmt::format("{:.1f}", s.start_in / 12.0)},
             {"end_ft", fmt::format("{:.1f}", s.end_in / 12.0)},
             {"kind", localize::to_string(s.kind)},
             {"status", rejected ? "rejected" : "reported"},
             {"open_flags", open}};
    if (!rejected && s.reported) {
      row["mass_g"] = fmt::format("{:.3f}", s.reported->mass_g);
      row["tmu_g"] = fmt::format("{:.3f}", s.reported->tmu_g);
      row["mda_g"] = fmt::format("{:.3f}", s.reported->mda_g);
    } else {
      row["mass_g"] = row["tmu_g"] = row["mda_g"] = nullptr;
    }
    j["segments"].push_back(row);
  }
  if (rev.replicate) {
    j["replicate"] = {{"total", pipeline::to_json(rev.replicate->total)}, {"max", pipeline::to_json(rev.replicate->max)}};
  } else {
    j["replicate"] = {{"error", rev.replicate_note}};
  }
  j["qc"] = {{"pre", r.onboard ? pipeline::to_json(r.onboard->pre) : json(nullptr)},
             {"post", r.onboard ? pipeline::to_json(r.onboard->post) : json(nullptr)},
             {"contamination", r.contamination ? pipeline::to_json(*r.contamination) : json(nullptr)},
             {"full_pipe", r.full_pipe ? pipeline::to_json(*r.full_pipe) : json(nullptr)}};
  j["warnings"] = r.warnings;
  return j;
}

}  // namespace pps::review
