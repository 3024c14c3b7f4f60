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

#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "pps/archive.hpp"
#include "pps/pipeline.hpp"
#include "pps/review.hpp"

namespace httplib {
class Server;
}

namespace pps::service {

struct UserEntry {
  review::User user;
  std::string token;
};

struct ServiceConfig {
  std::filesystem::path archive_root = "archive";
  pipeline::AnalysisConfig analysis = pipeline::default_config();
  pipeline::ProcessingParameters defaults;
  std::vector<UserEntry> users;
};

// Built-in demo accounts (technician, analyst, program_manager) used when a
// configuration names none.
std::vector<UserEntry> demo_users();

// {"archive": path, "users": [{id,name,role,token}], "analysis": {...},
//  "defaults": {...processing parameters}}. Throws InvalidConfig.
ServiceConfig config_from_json(const nlohmann::json& j);
ServiceConfig load_config(const std::filesystem::path& path);

enum class JobPhase { kQueued, kRunning, kDone, kFailed };
const char* to_string(JobPhase p);

struct JobStatus {
  std::string batch_id;
  JobPhase phase = JobPhase::kQueued;
  double progress = 0.0;
  std::string error;
  int revision = 0;
};
nlohmann::json to_json(const JobStatus& s);

struct Download {
  std::string content_type;
  std::string body;
  std::string artifact_id;
};

// HTTP status for an error code.
int http_status(const std::string& code);

// Transport-independent application layer. Methods throw pps::Error; the
// HTTP binding maps codes with http_status().
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  archive::Archive& archive() { return *archive_; }
  const ServiceConfig& config() const { return config_; }

  // Throws Unauthorized.
  review::User authenticate(const std::string& token);

  nlohmann::json upload(const std::string& bundle_zip, const review::User& user);
  nlohmann::json list();
  nlohmann::json batch(const std::string& id);
  nlohmann::json segment(const std::string& id, int n);

  // Validates and queues; the analysis runs on a worker thread. Throws
  // ForbiddenRole, WrongState, JobRunning, InvalidParameter.
  JobStatus process(const std::string& id, const nlohmann::json& params, const review::User& user);
  JobStatus process_sync(const std::string& id, const nlohmann::json& params, const review::User& user);
  JobStatus status(const std::string& id);
  JobStatus wait(const std::string& id);

  nlohmann::json clear_flag(const std::string& id, int flag, const std::string& comment, const review::User& user);
  nlohmann::json reject_segment(const std::string& id, int n, const std::string& reason, const review::User& user);
  nlohmann::json add_comment(const std::string& id, int segment, const std::string& text, const review::User& user);
  nlohmann::json transition(const std::string& id, review::Action action, const review::User& user);

  Download report(const std::string& id, bool draft);
  Download ncs(const std::string& id);
  Download conda(const std::string& id);
  nlohmann::json qc_trend(const std::string& robot_id);
  Download artifact(const std::string& artifact_id);

  // Resolved processing parameters for a request body (defaults + overrides).
  pipeline::ProcessingParameters resolve_parameters(const nlohmann::json& params) const;

 private:
  struct Job {
    JobStatus status;
    std::thread worker;
  };
  void run_job(const std::string& id, pipeline::ProcessingParameters params, review::User user);
  void set_status(const std::string& id, JobPhase phase, double progress, std::string error = {}, int revision = 0);
  review::Batch load(const std::string& id);
  nlohmann::json view(const review::Batch& b);

  ServiceConfig config_;
  std::unique_ptr<archive::Archive> archive_;
  std::mutex jobs_mu_;
  std::condition_variable jobs_cv_;
  std::map<std::string, Job> jobs_;
};

// Registers every /api route on `server`.
void mount(httplib::Server& server, Service& service);

}  // namespace pps::service
