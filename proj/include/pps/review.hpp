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

#include <nlohmann/json.hpp>

#include "pps/pipeline.hpp"
#include "pps/time.hpp"

namespace pps::review {

enum class BatchState { kUploaded, kProcessed, kLocked, kApproved, kInvalid };
enum class Role { kTechnician, kAnalyst, kProgramManager };
enum class Action { kProcessComplete, kLock, kApprove, kReturn, kInvalidate };
enum class FlagSeverity { kClearable, kInvalidating };
enum class FlagStatus { kOpen, kCleared, kSuperseded };

const char* to_string(BatchState s);
const char* to_string(Role r);
const char* to_string(Action a);
const char* to_string(FlagSeverity s);
const char* to_string(FlagStatus s);
BatchState state_from_string(const std::string& s);  // throws MalformedRecord
Role role_from_string(const std::string& s);          // throws InvalidRole
FlagStatus flag_status_from_string(const std::string& s);

struct User {
  std::string id;
  std::string name;
  Role role = Role::kAnalyst;
};

struct Clearance {
  std::string comment;
  std::string user;
  Timestamp at;
};

struct Flag {
  int id = 0;
  int segment = 0;  // 0 for batch scope
  std::string code;
  FlagSeverity severity = FlagSeverity::kClearable;
  FlagStatus status = FlagStatus::kOpen;
  std::string message;
  std::optional<Clearance> clearance;
};

struct SegmentStatus {
  int number = 0;
  bool rejected = false;
  std::string reason;
  std::string user;
  Timestamp at;
};

struct Comment {
  int id = 0;
  int segment = 0;  // 0 for batch scope
  std::string text;
  std::string user;
  Timestamp at;
};

struct AuditEntry {
  std::string action;
  std::string user;
  Timestamp at;
  std::string detail;
};

struct Revision {
  int number = 0;
  pipeline::AnalysisResult result;
  std::string created_by;
  Timestamp created_at;
  std::vector<Flag> flags;
  std::vector<SegmentStatus> segments;
  std::optional<qc::ReplicatePair> replicate;  // absent when no segment is left
  std::string replicate_note;
};

struct Batch {
  std::string id;
  std::string robot_id;
  Timestamp start_time;
  BatchState state = BatchState::kUploaded;
  bool returned_from_pm = false;
  std::optional<std::string> approved_by;
  std::optional<Timestamp> approved_at;
  std::string uploaded_by;
  Timestamp uploaded_at;
  std::optional<Revision> revision;  // current analysis revision
  std::vector<Comment> comments;     // chronological
  std::vector<AuditEntry> audit;
  std::int64_t version = 0;          // bumped by every persisted mutation

  const Flag* flag(int id) const;
  bool segment_rejected(int n) const;
  std::vector<int> rejected_segments() const;
  // Open clearable flags plus any invalidating flag.
  std::vector<const Flag*> blocking_flags() const;
};

// Flag catalog over one analysis result with the given segments rejected.
// Ids are left at 0; the caller numbers them.
std::vector<Flag> raise_flags(const pipeline::AnalysisResult& result, const std::vector<int>& rejected,
                              const std::optional<qc::ReplicatePair>& replicate);

bool is_invalidating(const std::string& code);

// Workflow operations. Each validates role and state, mutates the batch and
// appends an audit entry. Errors: ForbiddenRole, InvalidTransition,
// OpenFlags, InvalidatedBatch, NoSegments, WrongState, InvalidatingFlag,
// EmptyComment, UnknownFlag, FlagNotOpen, UnknownSegment.
BatchState transition(Batch& b, Action action, const User& user, Timestamp now);

// Installs a new analysis revision (reprocessing resets flags, clearances and
// rejections) and moves the batch to PROCESSED, or INVALID when an
// invalidating flag is raised.
BatchState record_revision(Batch& b, pipeline::AnalysisResult result, const User& user, Timestamp now);

void clear_flag(Batch& b, int flag_id, const std::string& comment, const User& user, Timestamp now);
void reject_segment(Batch& b, int segment, const std::string& reason, const User& user, Timestamp now);
const Comment& add_comment(Batch& b, int segment, const std::string& text, const User& user, Timestamp now);

// Checks that only the role gate would pass; used to reject before work.
void require_role(const User& user, std::initializer_list<Role> roles, const char* what);

nlohmann::json to_json(const Flag& f);
nlohmann::json to_json(const Comment& c);
nlohmann::json to_json(const SegmentStatus& s);
nlohmann::json summary_json(const Batch& b);

}  // namespace pps::review
