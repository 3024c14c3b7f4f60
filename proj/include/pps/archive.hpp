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

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pps/qc.hpp"
#include "pps/review.hpp"

struct sqlite3;

namespace pps::archive {

struct ArtifactInfo {
  std::string id;  // opaque; never a filesystem path
  std::string batch_id;
  int revision = 0;
  std::string name;
  std::string content_type;
  std::string sha256;
  std::size_t size = 0;
};

struct BatchListing {
  std::string id;
  std::string robot_id;
  std::string state;
  int revision = 0;
  Timestamp start_time;
  Timestamp uploaded_at;
};

const char* content_type_for(const std::string& name);

// Relational index (SQLite) plus a content-addressed blob directory:
//
//   root/pps.sqlite
//   root/blobs/ab/abcdef...          one file per distinct content
//   root/{batch}/bundle.zip
//   root/{batch}/rev{N}/{artifact}   readable copies for audit
//
// All access goes through one connection guarded by a mutex. Batch rows carry
// a version; save() is a compare-and-set against it.
class Archive {
 public:
  explicit Archive(std::filesystem::path root);
  ~Archive();
  Archive(const Archive&) = delete;
  Archive& operator=(const Archive&) = delete;

  const std::filesystem::path& root() const { return root_; }

  void put_user(const review::User& user, const std::string& token);
  std::optional<review::User> user_by_token(const std::string& token);
  std::optional<review::User> user(const std::string& id);

  // Throws DuplicateBatch.
  void create_batch(review::Batch& batch, const std::string& bundle_zip);
  std::optional<review::Batch> load(const std::string& id);
  std::vector<BatchListing> list();
  std::string bundle(const std::string& id);  // throws UnknownBatch

  // Persists the batch if the stored version still equals batch.version and
  // bumps it. Artifacts, if given, belong to the current revision; their blob
  // files are written before any row references them. Throws
  // ConcurrentModification, UnknownBatch.
  void save(review::Batch& batch, const std::map<std::string, std::string>& artifacts = {});

  // Load, apply, save under the archive lock. Throws UnknownBatch plus
  // whatever fn throws (nothing is saved then).
  review::Batch update(const std::string& id, const std::function<void(review::Batch&)>& fn,
                       const std::map<std::string, std::string>& artifacts = {});

  std::vector<ArtifactInfo> artifacts(const std::string& batch_id, int revision);
  std::optional<ArtifactInfo> artifact_info(const std::string& artifact_id);
  std::optional<ArtifactInfo> artifact_by_name(const std::string& batch_id, int revision, const std::string& name);
  std::string artifact_bytes(const ArtifactInfo& info);

  // Adds loose files (reports, exports) to a stored revision without touching
  // workflow state.
  ArtifactInfo attach(const std::string& batch_id, int revision, const std::string& name, const std::string& bytes,
                      const std::string& user);

  // Ordered by timestamp then batch.
  std::vector<qc::QcTrendEntry> qc_trend(const std::string& robot_id = {});

 private:
  void exec(const char* sql);
  std::string write_blob(const std::string& bytes);
  void materialize(const std::string& batch_id, int revision, const std::string& name, const std::string& bytes);
  std::optional<review::Batch> load_locked(const std::string& id);
  void save_locked(review::Batch& batch, const std::map<std::string, std::string>& artifacts);
  void insert_artifact_row(const std::string& batch_id, int revision, const std::string& name,
                           const std::string& sha, std::size_t size, const std::string& user, Timestamp at);

  std::filesystem::path root_;
  sqlite3* db_ = nullptr;
  std::recursive_mutex mu_;
};

// Schema text, also printed by `pps schema`.
const char* schema_sql();

}  // namespace pps::archive
