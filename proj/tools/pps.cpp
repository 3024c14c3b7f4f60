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

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <fmt/format.h>

#include "pps/archive.hpp"
#include "pps/error.hpp"
#include "pps/service.hpp"
#include "pps/synth.hpp"

namespace {

using nlohmann::json;
using namespace pps;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("NotFound", "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("NotFound", "cannot write " + path);
  out << bytes;
}

void emit(const std::string& out_path, const std::string& bytes) {
  if (out_path.empty() || out_path == "-") {
    std::cout << bytes;
  } else {
    write_file(out_path, bytes);
  }
}

httplib::Server* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pipe profiling analysis: ingest, process, review and report robot runs"};
  app.require_subcommand(1);

  std::string config_path, archive_path, user_id;
  app.add_option("--config", config_path, "service configuration JSON");
  app.add_option("--archive", archive_path, "archive directory (overrides the configuration)");
  app.add_option("--user", user_id, "acting user id (defaults to the demo account for the command)");

  auto* ingest = app.add_subcommand("ingest", "upload a run bundle zip");
  std::string zip_path;
  ingest->add_option("zip", zip_path, "run bundle")->required()->check(CLI::ExistingFile);

  auto* process = app.add_subcommand("process", "analyze an uploaded batch");
  std::string batch_id;
  std::vector<std::string> overrides;
  process->add_option("batch", batch_id)->required();
  process->add_option("--param", overrides, "parameter override key=value (repeatable)");

  auto* report = app.add_subcommand("report", "render the batch report");
  bool draft = false;
  std::string out_path;
  report->add_option("batch", batch_id)->required();
  report->add_flag("--draft", draft, "watermarked draft of an unapproved batch");
  report->add_option("-o,--out", out_path, "output file (default stdout)");

  auto* serve = app.add_subcommand("serve", "run the HTTP API");
  int port = 8080;
  std::string host = "0.0.0.0";
  serve->add_option("--port", port)->check(CLI::Range(1, 65535));
  serve->add_option("--host", host);

  auto* gen = app.add_subcommand("gen", "generate a synthetic run bundle from a scenario");
  std::string scenario_path, truth_path;
  gen->add_option("scenario", scenario_path)->required()->check(CLI::ExistingFile);
  gen->add_option("-o,--out", out_path, "bundle zip (default <scenario name>.zip)");
  gen->add_option("--truth", truth_path, "ground truth JSON");

  auto* schema = app.add_subcommand("schema", "print the archive schema");

  CLI11_PARSE(app, argc, argv);

  try {
    if (schema->parsed()) {
      std::cout << archive::schema_sql();
      return 0;
    }
    if (gen->parsed()) {
      const auto scenario = synth::scenario_from_json(json::parse(read_file(scenario_path)));
      const auto run = synth::generate_run(scenario);
      const std::string zip = out_path.empty() ? scenario.name + ".zip" : out_path;
      write_file(zip, run.bundle_zip);
      if (!truth_path.empty()) write_file(truth_path, synth::to_json(run.truth).dump(2) + "\n");
      std::cerr << fmt::format("wrote {} ({} bytes)\n", zip, run.bundle_zip.size());
      return 0;
    }

    service::ServiceConfig cfg = config_path.empty() ? service::config_from_json(json::object())
                                                     : service::load_config(config_path);
    if (!archive_path.empty()) cfg.archive_root = archive_path;
    service::Service svc(cfg);

    auto acting = [&](const char* fallback) {
      const std::string id = user_id.empty() ? fallback : user_id;
      auto u = svc.archive().user(id);
      if (!u) throw Error("Unauthorized", "unknown user " + id);
      return *u;
    };

    if (ingest->parsed()) {
      const auto r = svc.upload(read_file(zip_path), acting("technician"));
      std::cout << r["id"].get<std::string>() << "\n";
      for (const auto& w : r["warnings"]) std::cerr << "warning: " << w.dump() << "\n";
    } else if (process->parsed()) {
      auto params = cfg.defaults;
      for (const auto& o : overrides) pipeline::apply_override(params, o);
      const auto status = svc.process_sync(batch_id, pipeline::to_json(params), acting("analyst"));
      if (status.phase != service::JobPhase::kDone) throw Error("ProcessingFailure", status.error);
      const auto b = svc.batch(batch_id);
      std::cout << fmt::format("{} revision {} {}\n", batch_id, b["revision"].get<int>(),
                               b["state"].get<std::string>());
      for (const auto& f : b["flags"]) {
        std::cout << fmt::format("  flag {} {} segment {}: {}\n", f["id"].get<int>(), f["code"].get<std::string>(),
                                 f["segment"].get<int>(), f["message"].get<std::string>());
      }
    } else if (report->parsed()) {
      emit(out_path, svc.report(batch_id, draft).body);
    } else if (serve->parsed()) {
      httplib::Server server;
      service::mount(server, svc);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << fmt::format("listening on {}:{} (archive {})\n", host, port, cfg.archive_root.string());
      if (!server.listen(host, port)) throw Error("ListenFailed", fmt::format("cannot bind {}:{}", host, port));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
