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

#include "pps/archive.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <sqlite3.h>

#include "pps/error.hpp"
#include "pps/hash.hpp"

namespace pps::archive {

namespace fs = std::filesystem;
using nlohmann::json;

const char* schema_sql() {
  return R"sql(
CREATE TABLE IF NOT EXISTS users (
  id TEXT PRIMARY KEY,
  name TEXT NOT NULL,
  role TEXT NOT NULL,
  token TEXT NOT NULL UNIQUE,
  created_at INTEGER NOT NULL,
  created_by TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS batches (
  id TEXT PRIMARY KEY,
  robot_id TEXT NOT NULL,
  start_time INTEGER NOT NULL,
  state TEXT NOT NULL,
  returned_from_pm INTEGER NOT NULL,
  approved_by TEXT,
  approved_at INTEGER,
  revision INTEGER NOT NULL,
  version INTEGER NOT NULL,
  bundle_sha256 TEXT NOT NULL REFERENCES blobs(sha256),
  created_at INTEGER NOT NULL,
  created_by TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS revisions (
  batch_id TEXT NOT NULL REFERENCES batches(id),
  number INTEGER NOT NULL,
  parameters_json TEXT NOT NULL,
  results_json TEXT NOT NULL,
  replicate_json TEXT,
  replicate_note TEXT NOT NULL,
  created_at INTEGER NOT NULL,
  created_by TEXT NOT NULL,
  PRIMARY KEY (batch_id, number)
);
CREATE TABLE IF NOT EXISTS segments (
  batch_id TEXT NOT NULL,
  revision INTEGER NOT NULL,
  number INTEGER NOT NULL,
  status TEXT NOT NULL,
  reason TEXT NOT NULL,
  created_at INTEGER NOT NULL,
  created_by TEXT NOT NULL,
  PRIMARY KEY (batch_id, revision, number)
);
CREATE TABLE IF NOT EXISTS flags (
  batch_id TEXT NOT NULL,
  revision INTEGER NOT NULL,
  id INTEGER NOT NULL,
  segment INTEGER NOT NULL,
  code TEXT NOT NULL,
  severity TEXT NOT NULL,
  status TEXT NOT NULL,
  message TEXT NOT NULL,
  clearance_comment TEXT,
  cleared_by TEXT,
  cleared_at INTEGER,
  created_at INTEGER NOT NULL,
  created_by TEXT NOT NULL,
  PRIMARY KEY (batch_id, revision, id)
);
CREATE TABLE IF NOT EXISTS comments (
  batch_id TEXT NOT NULL,
  id INTEGER NOT NULL,
  segment INTEGER NOT NULL,
  text TEXT NOT NULL,
  created_at INTEGER NOT NULL,
  created_by TEXT NOT NULL,
  PRIMARY KEY (batch_id, id)
);
CREATE TABLE IF NOT EXISTS audit (
  batch_id TEXT NOT NULL,
  seq INTEGER NOT NULL,
  action TEXT NOT NULL,
  detail TEXT NOT NULL,
  created_at INTEGER NOT NULL,
  created_by TEXT NOT NULL,
  PRIMARY KEY (batch_id, seq)
);
CREATE TABLE IF NOT EXISTS qc_trend (
  batch_id TEXT NOT NULL,
  robot_id TEXT NOT NULL,
  detector_id TEXT NOT NULL,
  timestamp INTEGER NOT NULL,
  context TEXT NOT NULL,
  efficiency_cps REAL NOT NULL,
  pass INTEGER NOT NULL,
  created_at INTEGER NOT NULL,
  created_by TEXT NOT NULL,
  PRIMARY KEY (batch_id, context)
);
CREATE TABLE IF NOT EXISTS blobs (
  sha256 TEXT PRIMARY KEY,
  size INTEGER NOT NULL,
  created_at INTEGER NOT NULL,
  created_by TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS artifacts (
  id TEXT PRIMARY KEY,
  batch_id TEXT NOT NULL,
  revision INTEGER NOT NULL,
  name TEXT NOT NULL,
  sha256 TEXT NOT NULL REFERENCES blobs(sha256),
  created_at INTEGER NOT NULL,
  created_by TEXT NOT NULL,
  UNIQUE (batch_id, revision, name)
);
CREATE INDEX IF NOT EXISTS qc_trend_robot ON qc_trend(robot_id, timestamp);
)sql";
}

const char* content_type_for(const std::string& name) {
  auto ends = [&](const char* s) {
    const std::string suf(s);
    return name.size() >= suf.size() && name.compare(name.size() - suf.size(), suf.size(), suf) == 0;
  };
  if (ends(".png")) return "image/png";
  if (ends(".csv")) return "text/csv";
  if (ends(".html")) return "text/html; charset=utf-8";
  if (ends(".json")) return "application/json";
  if (ends(".off")) return "text/plain";
  if (ends(".zip")) return "application/zip";
  return "application/octet-stream";
}

namespace {

Timestamp wall_now() {
  auto us = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::system_clock::now().time_since_epoch());
  return Timestamp::from_micros(us.count());
}

class Stmt {
 public:
  Stmt(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &s_, nullptr) != SQLITE_OK) {
      throw Error("ArchiveError", fmt::format("prepare failed: {} ({})", sqlite3_errmsg(db), sql));
    }
  }
  ~Stmt() { sqlite3_finalize(s_); }
  Stmt(const Stmt&) = delete;
  Stmt& operator=(const Stmt&) = delete;

  Stmt& bind(int i, const std::string& v) {
    sqlite3_bind_text(s_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
    return *this;
  }
  Stmt& bind(int i, const char* v) { return bind(i, std::string(v)); }
  Stmt& bind(int i, std::int64_t v) {
    sqlite3_bind_int64(s_, i, v);
    return *this;
  }
  Stmt& bind(int i, int v) { return bind(i, static_cast<std::int64_t>(v)); }
  Stmt& bind(int i, double v) {
    sqlite3_bind_double(s_, i, v);
    return *this;
  }
  Stmt& bind(int i, Timestamp t) { return bind(i, t.micros()); }
  Stmt& null(int i) {
    sqlite3_bind_null(s_, i);
    return *this;
  }

  bool step() {
    const int rc = sqlite3_step(s_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw Error("ArchiveError", sqlite3_errmsg(db_));
  }
  void run() { step(); }

  std::string text(int c) const {
    const auto* p = sqlite3_column_text(s_, c);
    return p ? std::string(reinterpret_cast<const char*>(p), sqlite3_column_bytes(s_, c)) : std::string();
  }
  std::int64_t i64(int c) const { return sqlite3_column_int64(s_, c); }
  double real(int c) const { return sqlite3_column_double(s_, c); }
  bool is_null(int c) const { return sqlite3_column_type(s_, c) == SQLITE_NULL; }
  Timestamp time(int c) const { return Timestamp::from_micros(i64(c)); }

 private:
  sqlite3* db_;
  sqlite3_stmt* s_ = nullptr;
};

// BEGIN IMMEDIATE ... COMMIT, rolled back unless commit() is reached.
class Tx {
 public:
  explicit Tx(sqlite3* db) : db_(db) { exec("BEGIN IMMEDIATE"); }
  ~Tx() {
    if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
  }
  void commit() {
    exec("COMMIT");
    done_ = true;
  }

 private:
  void exec(const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "?";
      sqlite3_free(err);
      throw Error("ArchiveError", msg);
    }
  }
  sqlite3* db_;
  bool done_ = false;
};

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("ArchiveError", "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("ArchiveError", "missing blob " + path.filename().string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool safe_component(const std::string& s) {
  if (s.empty() || s == "." || s == "..") return false;
  return s.find_first_of("/\\") == std::string::npos;
}

}  // namespace

Archive::Archive(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "blobs");
  if (sqlite3_open((root_ / "pps.sqlite").string().c_str(), &db_) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "open failed";
    sqlite3_close(db_);
    throw Error("ArchiveError", msg);
  }
  sqlite3_busy_timeout(db_, 5000);
  exec("PRAGMA journal_mode=WAL");
  exec("PRAGMA foreign_keys=ON");
  exec(schema_sql());
}

Archive::~Archive() { sqlite3_close(db_); }

void Archive::exec(const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "?";
    sqlite3_free(err);
    throw Error("ArchiveError", msg);
  }
}

std::string Archive::write_blob(const std::string& bytes) {
  const std::string sha = sha256_hex(bytes);
  const fs::path p = root_ / "blobs" / sha.substr(0, 2) / sha;
  if (!fs::exists(p)) write_file_atomic(p, bytes);
  return sha;
}

void Archive::materialize(const std::string& batch_id, int revision, const std::string& name, const std::string& bytes) {
  write_file_atomic(root_ / batch_id / fmt::format("rev{}", revision) / name, bytes);
}

// ---- users --------------------------------------------------------------------

void Archive::put_user(const review::User& u, const std::string& token) {
  std::lock_guard lk(mu_);
  Stmt(db_,
       "INSERT INTO users(id,name,role,token,created_at,created_by) VALUES(?,?,?,?,?,'config') "
       "ON CONFLICT(id) DO UPDATE SET name=excluded.name, role=excluded.role, token=excluded.token")
      .bind(1, u.id)
      .bind(2, u.name)
      .bind(3, review::to_string(u.role))
      .bind(4, token)
      .bind(5, wall_now())
      .run();
}

std::optional<review::User> Archive::user_by_token(const std::string& token) {
  std::lock_guard lk(mu_);
  Stmt s(db_, "SELECT id,name,role FROM users WHERE token=?");
  s.bind(1, token);
  if (!s.step()) return std::nullopt;
  return review::User{s.text(0), s.text(1), review::role_from_string(s.text(2))};
}

std::optional<review::User> Archive::user(const std::string& id) {
  std::lock_guard lk(mu_);
  Stmt s(db_, "SELECT id,name,role FROM users WHERE id=?");
  s.bind(1, id);
  if (!s.step()) return std::nullopt;
  return review::User{s.text(0), s.text(1), review::role_from_string(s.text(2))};
}

// ---- batches ------------------------------------------------------------------

void Archive::create_batch(review::Batch& b, const std::string& bundle_zip) {
  std::lock_guard lk(mu_);
  if (!safe_component(b.id)) throw Error("InvalidBatchId", "batch id is not a plain name");
  {
    Stmt s(db_, "SELECT 1 FROM batches WHERE id=?");
    s.bind(1, b.id);
    if (s.step()) throw Error("DuplicateBatch", "batch " + b.id + " already exists");
  }
  const std::string sha = write_blob(bundle_zip);
  write_file_atomic(root_ / b.id / "bundle.zip", bundle_zip);
  Tx tx(db_);
  Stmt(db_, "INSERT OR IGNORE INTO blobs(sha256,size,created_at,created_by) VALUES(?,?,?,?)")
      .bind(1, sha)
      .bind(2, static_cast<std::int64_t>(bundle_zip.size()))
      .bind(3, b.uploaded_at)
      .bind(4, b.uploaded_by)
      .run();
  b.version = 1;
  Stmt(db_,
       "INSERT INTO batches(id,robot_id,start_time,state,returned_from_pm,approved_by,approved_at,revision,version,"
       "bundle_sha256,created_at,created_by) VALUES(?,?,?,?,0,NULL,NULL,0,1,?,?,?)")
      .bind(1, b.id)
      .bind(2, b.robot_id)
      .bind(3, b.start_time)
      .bind(4, review::to_string(b.state))
      .bind(5, sha)
      .bind(6, b.uploaded_at)
      .bind(7, b.uploaded_by)
      .run();
  int seq = 0;
  for (const auto& a : b.audit) {
    Stmt(db_, "INSERT INTO audit(batch_id,seq,action,detail,created_at,created_by) VALUES(?,?,?,?,?,?)")
        .bind(1, b.id)
        .bind(2, ++seq)
        .bind(3, a.action)
        .bind(4, a.detail)
        .bind(5, a.at)
        .bind(6, a.user)
        .run();
  }
  tx.commit();
}

std::optional<review::Batch> Archive::load(const std::string& id) {
  std::lock_guard lk(mu_);
  return load_locked(id);
}

std::optional<review::Batch> Archive::load_locked(const std::string& id) {
  review::Batch b;
  int revision = 0;
  {
    Stmt s(db_,
           "SELECT robot_id,start_time,state,returned_from_pm,approved_by,approved_at,revision,version,created_at,"
           "created_by FROM batches WHERE id=?");
    s.bind(1, id);
    if (!s.step()) return std::nullopt;
    b.id = id;
    b.robot_id = s.text(0);
    b.start_time = s.time(1);
    b.state = review::state_from_string(s.text(2));
    b.returned_from_pm = s.i64(3) != 0;
    if (!s.is_null(4)) b.approved_by = s.text(4);
    if (!s.is_null(5)) b.approved_at = s.time(5);
    revision = static_cast<int>(s.i64(6));
    b.version = s.i64(7);
    b.uploaded_at = s.time(8);
    b.uploaded_by = s.text(9);
  }
  if (revision > 0) {
    review::Revision rev;
    rev.number = revision;
    {
      Stmt s(db_,
             "SELECT results_json,replicate_json,replicate_note,created_at,created_by FROM revisions "
             "WHERE batch_id=? AND number=?");
      s.bind(1, id).bind(2, revision);
      if (!s.step()) throw Error("ArchiveError", fmt::format("batch {} lacks revision {}", id, revision));
      rev.result = pipeline::result_from_json(json::parse(s.text(0)));
      rev.created_at = s.time(3);
      rev.created_by = s.text(4);
    }
    {
      Stmt s(db_,
             "SELECT id,segment,code,severity,status,message,clearance_comment,cleared_by,cleared_at FROM flags "
             "WHERE batch_id=? AND revision=? ORDER BY id");
      s.bind(1, id).bind(2, revision);
      while (s.step()) {
        review::Flag f;
        f.id = static_cast<int>(s.i64(0));
        f.segment = static_cast<int>(s.i64(1));
        f.code = s.text(2);
        f.severity = s.text(3) == "invalidating" ? review::FlagSeverity::kInvalidating : review::FlagSeverity::kClearable;
        f.status = review::flag_status_from_string(s.text(4));
        f.message = s.text(5);
        if (!s.is_null(6)) f.clearance = review::Clearance{s.text(6), s.text(7), s.time(8)};
        rev.flags.push_back(std::move(f));
      }
    }
    {
      Stmt s(db_,
             "SELECT number,status,reason,created_at,created_by FROM segments WHERE batch_id=? AND revision=? "
             "ORDER BY number");
      s.bind(1, id).bind(2, revision);
      while (s.step()) {
        review::SegmentStatus st;
        st.number = static_cast<int>(s.i64(0));
        st.rejected = s.text(1) == "rejected";
        st.reason = s.text(2);
        st.at = s.time(3);
        st.user = s.text(4);
        rev.segments.push_back(std::move(st));
      }
    }
    // The replicate pair is a pure function of the stored result and the
    // rejections; the stored copy is for audit only.
    std::vector<int> rejected;
    for (const auto& st : rev.segments) {
      if (st.rejected) rejected.push_back(st.number);
    }
    try {
      rev.replicate = pipeline::replicate_for(rev.result, rejected);
    } catch (const Error& e) {
      rev.replicate_note = e.what();
    }
    b.revision = std::move(rev);
  }
  {
    Stmt s(db_, "SELECT id,segment,text,created_at,created_by FROM comments WHERE batch_id=? ORDER BY id");
    s.bind(1, id);
    while (s.step()) {
      b.comments.push_back({static_cast<int>(s.i64(0)), static_cast<int>(s.i64(1)), s.text(2), s.text(4), s.time(3)});
    }
  }
  {
    Stmt s(db_, "SELECT action,detail,created_at,created_by FROM audit WHERE batch_id=? ORDER BY seq");
    s.bind(1, id);
    while (s.step()) b.audit.push_back({s.text(0), s.text(3), s.time(2), s.text(1)});
  }
  return b;
}

std::vector<BatchListing> Archive::list() {
  std::lock_guard lk(mu_);
  std::vector<BatchListing> out;
  Stmt s(db_, "SELECT id,robot_id,state,revision,start_time,created_at FROM batches ORDER BY start_time, id");
  while (s.step()) {
    out.push_back({s.text(0), s.text(1), s.text(2), static_cast<int>(s.i64(3)), s.time(4), s.time(5)});
  }
  return out;
}

std::string Archive::bundle(const std::string& id) {
  std::string sha;
  {
    std::lock_guard lk(mu_);
    Stmt s(db_, "SELECT bundle_sha256 FROM batches WHERE id=?");
    s.bind(1, id);
    if (!s.step()) throw Error("UnknownBatch", "no batch " + id);
    sha = s.text(0);
  }
  return read_file(root_ / "blobs" / sha.substr(0, 2) / sha);
}

void Archive::save(review::Batch& b, const std::map<std::string, std::string>& artifacts) {
  std::lock_guard lk(mu_);
  save_locked(b, artifacts);
}

review::Batch Archive::update(const std::string& id, const std::function<void(review::Batch&)>& fn,
                              const std::map<std::string, std::string>& artifacts) {
  std::lock_guard lk(mu_);
  auto b = load_locked(id);
  if (!b) throw Error("UnknownBatch", "no batch " + id);
  fn(*b);
  save_locked(*b, artifacts);
  return *b;
}

void Archive::insert_artifact_row(const std::string& batch_id, int revision, const std::string& name,
                                  const std::string& sha, std::size_t size, const std::string& user, Timestamp at) {
  Stmt(db_, "INSERT OR IGNORE INTO blobs(sha256,size,created_at,created_by) VALUES(?,?,?,?)")
      .bind(1, sha)
      .bind(2, static_cast<std::int64_t>(size))
      .bind(3, at)
      .bind(4, user)
      .run();
  const std::string id = sha256_hex(fmt::format("{}/{}/{}", batch_id, revision, name)).substr(0, 24);
  Stmt(db_,
       "INSERT INTO artifacts(id,batch_id,revision,name,sha256,created_at,created_by) VALUES(?,?,?,?,?,?,?) "
       "ON CONFLICT(id) DO UPDATE SET sha256=excluded.sha256, created_at=excluded.created_at, "
       "created_by=excluded.created_by")
      .bind(1, id)
      .bind(2, batch_id)
      .bind(3, revision)
      .bind(4, name)
      .bind(5, sha)
      .bind(6, at)
      .bind(7, user)
      .run();
}

void Archive::save_locked(review::Batch& b, const std::map<std::string, std::string>& artifacts) {
  const int revision = b.revision ? b.revision->number : 0;
  if (!artifacts.empty() && revision == 0) throw Error("ArchiveError", "artifacts need a revision");
  for (const auto& [name, _] : artifacts) {
    if (!safe_component(name)) throw Error("ArchiveError", "artifact name is not a plain name: " + name);
  }
  // Blob files first so no committed row can point at a missing file.
  std::map<std::string, std::string> shas;
  for (const auto& [name, bytes] : artifacts) {
    shas[name] = write_blob(bytes);
    materialize(b.id, revision, name, bytes);
  }

  Tx tx(db_);
  {
    Stmt s(db_, "SELECT version FROM batches WHERE id=?");
    s.bind(1, b.id);
    if (!s.step()) throw Error("UnknownBatch", "no batch " + b.id);
    if (s.i64(0) != b.version) {
      throw Error("ConcurrentModification",
                  fmt::format("batch {} changed (stored version {}, expected {})", b.id, s.i64(0), b.version));
    }
  }
  const std::int64_t next_version = b.version + 1;
  {
    Stmt s(db_,
           "UPDATE batches SET state=?,returned_from_pm=?,approved_by=?,approved_at=?,revision=?,version=? "
           "WHERE id=?");
    s.bind(1, review::to_string(b.state)).bind(2, b.returned_from_pm ? 1 : 0);
    if (b.approved_by) s.bind(3, *b.approved_by); else s.null(3);
    if (b.approved_at) s.bind(4, *b.approved_at); else s.null(4);
    s.bind(5, revision).bind(6, next_version).bind(7, b.id);
    s.run();
  }
  if (b.revision) {
    const review::Revision& rev = *b.revision;
    {
      Stmt s(db_,
             "INSERT INTO revisions(batch_id,number,parameters_json,results_json,replicate_json,replicate_note,"
             "created_at,created_by) VALUES(?,?,?,?,?,?,?,?) ON CONFLICT(batch_id,number) DO UPDATE SET "
             "replicate_json=excluded.replicate_json, replicate_note=excluded.replicate_note");
      s.bind(1, b.id)
          .bind(2, rev.number)
          .bind(3, pipeline::to_json(rev.result.parameters).dump())
          .bind(4, pipeline::to_json(rev.result).dump());
      if (rev.replicate) {
        s.bind(5, json{{"total", pipeline::to_json(rev.replicate->total)},
                       {"max", pipeline::to_json(rev.replicate->max)}}
                      .dump());
      } else {
        s.null(5);
      }
      s.bind(6, rev.replicate_note).bind(7, rev.created_at).bind(8, rev.created_by).run();
    }
    Stmt(db_, "DELETE FROM flags WHERE batch_id=? AND revision=?").bind(1, b.id).bind(2, rev.number).run();
    for (const auto& f : rev.flags) {
      Stmt s(db_,
             "INSERT INTO flags(batch_id,revision,id,segment,code,severity,status,message,clearance_comment,"
             "cleared_by,cleared_at,created_at,created_by) VALUES(?,?,?,?,?,?,?,?,?,?,?,?,?)");
      s.bind(1, b.id)
          .bind(2, rev.number)
          .bind(3, f.id)
          .bind(4, f.segment)
          .bind(5, f.code)
          .bind(6, review::to_string(f.severity))
          .bind(7, review::to_string(f.status))
          .bind(8, f.message);
      if (f.clearance) {
        s.bind(9, f.clearance->comment).bind(10, f.clearance->user).bind(11, f.clearance->at);
      } else {
        s.null(9).null(10).null(11);
      }
      s.bind(12, rev.created_at).bind(13, rev.created_by).run();
    }
    Stmt(db_, "DELETE FROM segments WHERE batch_id=? AND revision=?").bind(1, b.id).bind(2, rev.number).run();
    for (const auto& st : rev.segments) {
      Stmt(db_,
           "INSERT INTO segments(batch_id,revision,number,status,reason,created_at,created_by) VALUES(?,?,?,?,?,?,?)")
          .bind(1, b.id)
          .bind(2, rev.number)
          .bind(3, st.number)
          .bind(4, st.rejected ? "rejected" : "reported")
          .bind(5, st.reason)
          .bind(6, st.rejected ? st.at : rev.created_at)
          .bind(7, st.rejected ? st.user : rev.created_by)
          .run();
    }
    Stmt(db_, "DELETE FROM qc_trend WHERE batch_id=?").bind(1, b.id).run();
    if (const auto& ob = rev.result.onboard) {
      const auto& m = rev.result.manifest;
      auto add = [&](const qc::QcResult& q, Timestamp t) {
        Stmt(db_,
             "INSERT INTO qc_trend(batch_id,robot_id,detector_id,timestamp,context,efficiency_cps,pass,created_at,"
             "created_by) VALUES(?,?,?,?,?,?,?,?,?)")
            .bind(1, b.id)
            .bind(2, m.robot_id)
            .bind(3, m.detector_id)
            .bind(4, t)
            .bind(5, qc::to_string(q.context))
            .bind(6, q.measured ? q.measured->gross_rate_cps : 0.0)
            .bind(7, q.pass ? 1 : 0)
            .bind(8, rev.created_at)
            .bind(9, rev.created_by)
            .run();
      };
      add(ob->pre, m.start_time);
      add(ob->post, m.start_time + rev.result.operations.run_duration_s);
    }
  }
  // Comments and audit are append-only; insert whatever is not stored yet.
  for (const auto& c : b.comments) {
    Stmt(db_, "INSERT OR IGNORE INTO comments(batch_id,id,segment,text,created_at,created_by) VALUES(?,?,?,?,?,?)")
        .bind(1, b.id)
        .bind(2, c.id)
        .bind(3, c.segment)
        .bind(4, c.text)
        .bind(5, c.at)
        .bind(6, c.user)
        .run();
  }
  int seq = 0;
  for (const auto& a : b.audit) {
    Stmt(db_, "INSERT OR IGNORE INTO audit(batch_id,seq,action,detail,created_at,created_by) VALUES(?,?,?,?,?,?)")
        .bind(1, b.id)
        .bind(2, ++seq)
        .bind(3, a.action)
        .bind(4, a.detail)
        .bind(5, a.at)
        .bind(6, a.user)
        .run();
  }
  const Timestamp at = b.revision ? b.revision->created_at : wall_now();
  const std::string by = b.revision ? b.revision->created_by : b.uploaded_by;
  for (const auto& [name, bytes] : artifacts) insert_artifact_row(b.id, revision, name, shas[name], bytes.size(), by, at);
  tx.commit();
  b.version = next_version;
}

// ---- artifacts ----------------------------------------------------------------

namespace {
ArtifactInfo info_from(const Stmt& s) {
  ArtifactInfo a;
  a.id = s.text(0);
  a.batch_id = s.text(1);
  a.revision = static_cast<int>(s.i64(2));
  a.name = s.text(3);
  a.sha256 = s.text(4);
  a.size = static_cast<std::size_t>(s.i64(5));
  a.content_type = content_type_for(a.name);
  return a;
}
constexpr const char* kArtifactCols =
    "SELECT a.id,a.batch_id,a.revision,a.name,a.sha256,b.size FROM artifacts a JOIN blobs b ON a.sha256=b.sha256 ";
}  // namespace

std::vector<ArtifactInfo> Archive::artifacts(const std::string& batch_id, int revision) {
  std::lock_guard lk(mu_);
  Stmt s(db_, (std::string(kArtifactCols) + "WHERE a.batch_id=? AND a.revision=? ORDER BY a.name").c_str());
  s.bind(1, batch_id).bind(2, revision);
  std::vector<ArtifactInfo> out;
  while (s.step()) out.push_back(info_from(s));
  return out;
}

std::optional<ArtifactInfo> Archive::artifact_info(const std::string& artifact_id) {
  std::lock_guard lk(mu_);
  Stmt s(db_, (std::string(kArtifactCols) + "WHERE a.id=?").c_str());
  s.bind(1, artifact_id);
  if (!s.step()) return std::nullopt;
  return info_from(s);
}

std::optional<ArtifactInfo> Archive::artifact_by_name(const std::string& batch_id, int revision,
                                                      const std::string& name) {
  std::lock_guard lk(mu_);
  Stmt s(db_, (std::string(kArtifactCols) + "WHERE a.batch_id=? AND a.revision=? AND a.name=?").c_str());
  s.bind(1, batch_id).bind(2, revision).bind(3, name);
  if (!s.step()) return std::nullopt;
  return info_from(s);
}

std::string Archive::artifact_bytes(const ArtifactInfo& info) {
  return read_file(root_ / "blobs" / info.sha256.substr(0, 2) / info.sha256);
}

ArtifactInfo Archive::attach(const std::string& batch_id, int revision, const std::string& name,
                             const std::string& bytes, const std::string& user) {
  if (!safe_component(name)) throw Error("ArchiveError", "artifact name is not a plain name: " + name);
  std::lock_guard lk(mu_);
  const std::string sha = write_blob(bytes);
  materialize(batch_id, revision, name, bytes);
  Tx tx(db_);
  insert_artifact_row(batch_id, revision, name, sha, bytes.size(), user, wall_now());
  tx.commit();
  Stmt s(db_, (std::string(kArtifactCols) + "WHERE a.batch_id=? AND a.revision=? AND a.name=?").c_str());
  s.bind(1, batch_id).bind(2, revision).bind(3, name);
  s.step();
  return info_from(s);
}

std::vector<qc::QcTrendEntry> Archive::qc_trend(const std::string& robot_id) {
  std::lock_guard lk(mu_);
  std::string sql =
      "SELECT batch_id,robot_id,detector_id,timestamp,context,efficiency_cps,pass FROM qc_trend ";
  if (!robot_id.empty()) sql += "WHERE robot_id=? ";
  sql += "ORDER BY timestamp, batch_id, context DESC";
  Stmt s(db_, sql.c_str());
  if (!robot_id.empty()) s.bind(1, robot_id);
  std::vector<qc::QcTrendEntry> out;
  while (s.step()) {
    qc::QcTrendEntry e;
    e.batch_id = s.text(0);
    e.robot_id = s.text(1);
    e.detector_id = s.text(2);
    e.timestamp = s.time(3);
    e.context = s.text(4) == "post" ? qc::Context::kPost : qc::Context::kPre;
    e.efficiency_cps = s.real(5);
    e.pass = s.i64(6) != 0;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace pps::archive
