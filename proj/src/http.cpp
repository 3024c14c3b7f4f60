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

#include <httplib.h>

#include <fmt/format.h>

#include "pps/error.hpp"
#include "pps/service.hpp"

namespace pps::service {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const std::string& code, const std::string& message) {
  send_json(res, http_status(code), {{"error", code}, {"message", message}});
}

std::string token_of(const httplib::Request& req) {
  const auto auth = req.get_header_value("Authorization");
  constexpr std::string_view kBearer = "Bearer ";
  if (auth.size() > kBearer.size() && auth.compare(0, kBearer.size(), kBearer) == 0) {
    return auth.substr(kBearer.size());
  }
  // Plain links (report pages, images) cannot set headers.
  if (req.method == "GET" && req.has_param("access_token")) return req.get_param_value("access_token");
  return {};
}

json body_of(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error("InvalidPayload", std::string("request body is not JSON: ") + e.what());
  }
}

std::string text_field(const json& body, const char* key) {
  if (!body.contains(key)) return {};
  if (!body[key].is_string()) throw Error("InvalidPayload", fmt::format("'{}' must be a string", key));
  return body[key].get<std::string>();
}

int int_of(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error("InvalidPayload", fmt::format("bad {} '{}'", what, s));
}

using Handler = std::function<void(const httplib::Request&, httplib::Response&, const review::User&)>;

httplib::Server::Handler guarded(Service& svc, Handler fn) {
  return [&svc, fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto user = svc.authenticate(token_of(req));
      fn(req, res, user);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const std::exception& e) {
      send_error(res, "InternalError", e.what());
    }
  };
}

void send_download(httplib::Response& res, const Download& d) {
  res.status = 200;
  res.set_header("X-Artifact-Id", d.artifact_id);
  res.set_content(d.body, d.content_type);
}

}  // namespace

void mount(httplib::Server& server, Service& svc) {
  server.Post("/api/batches", guarded(svc, [&](const auto& req, auto& res, const auto& user) {
                std::string bytes = req.body;
                if (req.is_multipart_form_data()) {
                  if (!req.has_file("bundle")) throw Error("InvalidPayload", "multipart upload needs a 'bundle' part");
                  bytes = req.get_file_value("bundle").content;
                }
                send_json(res, 201, svc.upload(bytes, user));
              }));
  server.Get("/api/batches", guarded(svc, [&](const auto&, auto& res, const auto&) { send_json(res, 200, svc.list()); }));
  server.Get(R"(/api/batches/([^/]+))", guarded(svc, [&](const auto& req, auto& res, const auto&) {
               send_json(res, 200, svc.batch(req.matches[1]));
             }));
  server.Post(R"(/api/batches/([^/]+)/process)", guarded(svc, [&](const auto& req, auto& res, const auto& user) {
                const json body = body_of(req);
                const json params = body.contains("parameters") ? body["parameters"] : body;
                send_json(res, 202, to_json(svc.process(req.matches[1], params, user)));
              }));
  server.Get(R"(/api/batches/([^/]+)/status)", guarded(svc, [&](const auto& req, auto& res, const auto&) {
               send_json(res, 200, to_json(svc.status(req.matches[1])));
             }));
  server.Get(R"(/api/batches/([^/]+)/segments/([^/]+))", guarded(svc, [&](const auto& req, auto& res, const auto&) {
               send_json(res, 200, svc.segment(req.matches[1], int_of(req.matches[2], "segment")));
             }));
  server.Post(R"(/api/batches/([^/]+)/flags/([^/]+)/clear)",
              guarded(svc, [&](const auto& req, auto& res, const auto& user) {
                const json body = body_of(req);
                send_json(res, 200,
                          svc.clear_flag(req.matches[1], int_of(req.matches[2], "flag id"), text_field(body, "comment"),
                                         user));
              }));
  server.Post(R"(/api/batches/([^/]+)/segments/([^/]+)/reject)",
              guarded(svc, [&](const auto& req, auto& res, const auto& user) {
                const json body = body_of(req);
                send_json(res, 200,
                          svc.reject_segment(req.matches[1], int_of(req.matches[2], "segment"),
                                             text_field(body, "reason"), user));
              }));
  server.Post(R"(/api/batches/([^/]+)/comments)", guarded(svc, [&](const auto& req, auto& res, const auto& user) {
                const json body = body_of(req);
                int segment = 0;
                if (body.contains("segment") && !body["segment"].is_null()) {
                  if (!body["segment"].is_number_integer()) throw Error("InvalidPayload", "'segment' must be an integer");
                  segment = body["segment"].get<int>();
                }
                send_json(res, 201, svc.add_comment(req.matches[1], segment, text_field(body, "text"), user));
              }));
  for (const auto& [path, action] : {std::pair{"lock", review::Action::kLock},
                                     {"approve", review::Action::kApprove},
                                     {"return", review::Action::kReturn}}) {
    const review::Action a = action;
    server.Post(fmt::format(R"(/api/batches/([^/]+)/{})", path),
                guarded(svc, [&svc, a](const auto& req, auto& res, const auto& user) {
                  send_json(res, 200, svc.transition(req.matches[1], a, user));
                }));
  }
  server.Get(R"(/api/batches/([^/]+)/report)", guarded(svc, [&](const auto& req, auto& res, const auto&) {
               const auto d = req.get_param_value("draft");
               send_download(res, svc.report(req.matches[1], d == "true" || d == "1"));
             }));
  server.Get(R"(/api/batches/([^/]+)/ncs)", guarded(svc, [&](const auto& req, auto& res, const auto&) {
               send_download(res, svc.ncs(req.matches[1]));
             }));
  server.Get(R"(/api/batches/([^/]+)/conda)", guarded(svc, [&](const auto& req, auto& res, const auto&) {
               send_download(res, svc.conda(req.matches[1]));
             }));
  server.Get("/api/qc/trend", guarded(svc, [&](const auto& req, auto& res, const auto&) {
               send_json(res, 200, svc.qc_trend(req.get_param_value("robot")));
             }));
  server.Get(R"(/api/artifacts/([^/]+))", guarded(svc, [&](const auto& req, auto& res, const auto&) {
               send_download(res, svc.artifact(req.matches[1]));
             }));
}

}  // namespace pps::service
