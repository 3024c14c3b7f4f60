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

#include "pps/ingest.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

#include "pps/csv.hpp"
#include "pps/error.hpp"
#include "pps/zip.hpp"

namespace pps::ingest {

namespace {

using nlohmann::json;

const std::string* find_entry(const std::vector<zip::Entry>& entries, std::string_view name) {
  for (const auto& e : entries) {
    if (e.name == name) return &e.data;
  }
  return nullptr;
}

const std::string& require_entry(const std::vector<zip::Entry>& entries, std::string_view name) {
  const std::string* data = find_entry(entries, name);
  if (!data) throw Error("MissingStream", std::string(name));
  return *data;
}

json parse_json(const std::string& text, std::string_view stream) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error("MalformedRow", fmt::format("{}:{}: {}", stream, e.byte, e.what()));
  }
}

template <typename T>
T field(const json& j, const char* key, std::string_view stream) {
  if (!j.contains(key)) throw Error("MalformedRow", fmt::format("{}: missing field '{}'", stream, key));
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error("MalformedRow", fmt::format("{}: field '{}' has the wrong type", stream, key));
  }
}

template <typename T>
T field_or(const json& j, const char* key, T fallback, std::string_view stream) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return field<T>(j, key, stream);
}

// Text fields of the measurement request may arrive as numbers.
std::string text_field(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return {};
  const json& v = j.at(key);
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

Timestamp parse_time_field(const json& j, const char* key, std::string_view stream) {
  if (!j.contains(key)) throw Error("MalformedRow", fmt::format("{}: missing field '{}'", stream, key));
  const json& v = j.at(key);
  if (v.is_number()) return Timestamp::from_seconds(v.get<double>());
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.find('T') != std::string::npos) return Timestamp::parse_iso8601(s);
    return Timestamp::parse(s);
  }
  throw Error("MalformedRow", fmt::format("{}: field '{}' is not a time", stream, key));
}

std::optional<double> optional_number(const json& j, const char* key, std::string_view stream) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return field<double>(j, key, stream);
}

Manifest parse_manifest(const std::string& text) {
  constexpr std::string_view s = "manifest.json";
  const json j = parse_json(text, s);
  Manifest m;
  m.robot_id = field<std::string>(j, "robot_id", s);
  m.detector_id = field_or<std::string>(j, "detector_id", "default", s);
  m.fov_length_in = field<double>(j, "fov_length_in", s);
  m.pipe_diameter_in = field<int>(j, "pipe_diameter_in", s);
  m.start_time = parse_time_field(j, "start_time", s);
  m.channel_count = field_or<int>(j, "channel_count", kDefaultChannelCount, s);
  if (m.channel_count <= 0) throw Error("MalformedRow", "manifest.json: channel_count must be positive");
  if (j.contains("energy_cal")) {
    const json& cal = j.at("energy_cal");
    m.energy_cal.offset_kev = field<double>(cal, "offset_kev", s);
    m.energy_cal.slope_kev_per_channel = field<double>(cal, "slope_kev_per_channel", s);
  }
  m.qc_live_time_s = field_or<double>(j, "qc_live_time_s", 0.0, s);
  if (j.contains("sensor_offsets")) {
    const json& o = j.at("sensor_offsets");
    m.detector_offset_in = optional_number(o, "detector_fov_center_in", s);
    m.camera_offset_in = optional_number(o, "camera_view_in", s);
    m.lidar_along_in = optional_number(o, "lidar_along_in", s);
  }
  if (j.contains("robot_reported_qc")) m.robot_reported_qc = j.at("robot_reported_qc");
  return m;
}

MeasurementRequest parse_request(const std::string& text) {
  constexpr std::string_view s = "request.json";
  const json j = parse_json(text, s);
  MeasurementRequest r;
  r.job_id = text_field(j, "job_id");
  r.building = text_field(j, "building");
  r.unit = text_field(j, "unit");
  r.cell = text_field(j, "cell");
  r.pipe_item_id = text_field(j, "pipe_item_id");
  r.expected_length_ft = field_or<double>(j, "expected_length_ft", 0.0, s);
  r.operator_notes = text_field(j, "operator_notes");
  r.nearest_column_id = text_field(j, "nearest_column_id");
  return r;
}

void require_width(const csv::Table& t, std::size_t width, std::string_view stream) {
  if (t.header.size() != width) {
    throw Error("MalformedRow", fmt::format("{}:1:{} header has {} columns, expected {}", stream,
                                            t.header.size(), t.header.size(), width));
  }
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i].size() != width) {
      throw Error("MalformedRow", fmt::format("{}:{}:{} row has {} columns, expected {}", stream, i + 2,
                                              t.rows[i].size(), t.rows[i].size(), width));
    }
  }
}

Timestamp parse_time_cell(const std::string& cell, std::string_view stream, std::size_t line) {
  try {
    return Timestamp::parse(cell);
  } catch (const Error&) {
    throw Error("MalformedRow", fmt::format("{}:{}:1 bad timestamp '{}'", stream, line, cell));
  }
}

void check_increasing(Timestamp prev, Timestamp cur, std::string_view stream, std::size_t line) {
  if (!(cur > prev)) {
    throw Error("NonMonotonicTime",
                fmt::format("{}:{} timestamp {} does not follow {}", stream, line, cur.to_string(),
                            prev.to_string()));
  }
}

std::vector<OdometrySample> parse_odometry(const std::string& text) {
  constexpr std::string_view s = "odometry.csv";
  const csv::Table t = csv::parse(text, s);
  require_width(t, 3, s);
  const std::size_t ct = t.column("t", s), cdx = t.column("dx", s), csig = t.column("sigma", s);
  std::vector<OdometrySample> out;
  out.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const std::size_t line = i + 2;
    OdometrySample o{parse_time_cell(row[ct], s, line), csv::to_double(row[cdx], s, line, cdx + 1),
                     csv::to_double(row[csig], s, line, csig + 1)};
    if (!out.empty()) check_increasing(out.back().t, o.t, s, line);
    out.push_back(o);
  }
  return out;
}

// Shared by spectra.csv, qc_pre.csv and qc_post.csv.
std::vector<TimedSpectrum> parse_spectra(const std::string& text, std::string_view s, const Manifest& m,
                                         SpectrumLabel label) {
  const csv::Table t = csv::parse(text, s);
  const auto channels = static_cast<std::size_t>(m.channel_count);
  require_width(t, channels + 2, s);
  if (t.header[0] != "t" || t.header[1] != "live_time") {
    throw Error("MalformedRow", fmt::format("{}:1:1 expected header t,live_time,ch0..", s));
  }
  std::vector<TimedSpectrum> out;
  out.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const std::size_t line = i + 2;
    TimedSpectrum ts;
    ts.t = parse_time_cell(row[0], s, line);
    ts.spectrum.live_time_s = csv::to_double(row[1], s, line, 2);
    ts.spectrum.cal = m.energy_cal;
    ts.spectrum.label = label;
    ts.spectrum.counts.resize(channels);
    for (std::size_t c = 0; c < channels; ++c) {
      const std::int64_t v = csv::to_int(row[c + 2], s, line, c + 3);
      if (v < 0) throw Error("MalformedRow", fmt::format("{}:{}:{} negative count", s, line, c + 3));
      ts.spectrum.counts[c] = static_cast<std::uint64_t>(v);
    }
    if (!out.empty()) check_increasing(out.back().t, ts.t, s, line);
    out.push_back(std::move(ts));
  }
  return out;
}

std::optional<TimedSpectrum> parse_qc(const std::vector<zip::Entry>& entries, std::string_view name,
                                      const Manifest& m) {
  const std::string* text = find_entry(entries, name);
  if (!text) return std::nullopt;
  auto rows = parse_spectra(*text, name, m, SpectrumLabel::kQc);
  if (rows.size() != 1) {
    throw Error("MalformedRow", fmt::format("{}: expected exactly one spectrum row, got {}", name, rows.size()));
  }
  return std::move(rows.front());
}

std::vector<LidarScan> parse_lidar(const std::string& text) {
  constexpr std::string_view s = "lidar.csv";
  const csv::Table t = csv::parse(text, s);
  require_width(t, 3, s);
  const std::size_t ct = t.column("t", s), cth = t.column("theta", s), cr = t.column("r", s);
  std::vector<LidarScan> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const std::size_t line = i + 2;
    const Timestamp ts = parse_time_cell(row[ct], s, line);
    const LidarPoint p{csv::to_double(row[cth], s, line, cth + 1), csv::to_double(row[cr], s, line, cr + 1)};
    if (out.empty() || ts != out.back().t) {
      if (!out.empty()) check_increasing(out.back().t, ts, s, line);
      out.push_back({ts, {}});
    }
    out.back().points.push_back(p);
  }
  return out;
}

std::vector<ImageRef> parse_images(const std::string& text) {
  constexpr std::string_view s = "images.csv";
  const csv::Table t = csv::parse(text, s);
  require_width(t, 2, s);
  const std::size_t ct = t.column("t", s), cf = t.column("file", s);
  std::vector<ImageRef> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::size_t line = i + 2;
    ImageRef ref{parse_time_cell(t.rows[i][ct], s, line), t.rows[i][cf]};
    if (!out.empty()) check_increasing(out.back().t, ref.t, s, line);
    out.push_back(std::move(ref));
  }
  return out;
}

std::string spectra_csv(const std::vector<TimedSpectrum>& rows, int channel_count) {
  std::vector<std::string> header{"t", "live_time"};
  for (int c = 0; c < channel_count; ++c) header.push_back(fmt::format("ch{}", c));
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out.push_back(',');
    out += header[i];
  }
  out.push_back('\n');
  for (const auto& r : rows) {
    out += r.t.to_string();
    out.push_back(',');
    out += csv::format_double(r.spectrum.live_time_s);
    for (std::uint64_t v : r.spectrum.counts) {
      out.push_back(',');
      out += std::to_string(v);
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace

std::optional<std::size_t> first_decreasing_poll(const std::vector<TimedSpectrum>& spectra) {
  for (std::size_t i = 1; i < spectra.size(); ++i) {
    const auto& prev = spectra[i - 1].spectrum.counts;
    const auto& cur = spectra[i].spectrum.counts;
    for (std::size_t c = 0; c < std::min(prev.size(), cur.size()); ++c) {
      if (cur[c] < prev[c]) return i;
    }
  }
  return std::nullopt;
}

RunBundle unpack_run_bundle(std::string_view archive, const UnpackOptions& options) {
  const std::vector<zip::Entry> entries = zip::read(archive);
  RunBundle b;
  b.manifest = parse_manifest(require_entry(entries, "manifest.json"));
  b.request = parse_request(require_entry(entries, "request.json"));
  b.odometry = parse_odometry(require_entry(entries, "odometry.csv"));
  b.spectra = parse_spectra(require_entry(entries, "spectra.csv"), "spectra.csv", b.manifest,
                            SpectrumLabel::kAccumulated);
  if (options.require_monotone_accumulation) {
    if (const auto bad = first_decreasing_poll(b.spectra)) {
      const auto& prev = b.spectra[*bad - 1].spectrum.counts;
      const auto& cur = b.spectra[*bad].spectrum.counts;
      std::size_t c = 0;
      while (cur[c] >= prev[c]) ++c;
      throw Error("DecreasingAccumulation",
                  fmt::format("spectra.csv:{}:{} channel {} fell from {} to {}", *bad + 2, c + 3, c,
                              prev[c], cur[c]));
    }
  }
  b.qc_pre = parse_qc(entries, "qc_pre.csv", b.manifest);
  b.qc_post = parse_qc(entries, "qc_post.csv", b.manifest);
  if (const std::string* lidar = find_entry(entries, "lidar.csv")) b.lidar = parse_lidar(*lidar);
  if (const std::string* images = find_entry(entries, "images.csv")) b.images = parse_images(*images);
  for (const auto& e : entries) {
    if (e.name.rfind("images/", 0) == 0) b.image_files.emplace(e.name.substr(7), e.data);
  }
  return b;
}

std::string pack_run_bundle(const RunBundle& b) {
  std::vector<zip::Entry> entries;
  entries.push_back({"manifest.json", to_json(b.manifest).dump(2) + "\n"});
  entries.push_back({"request.json", to_json(b.request).dump(2) + "\n"});

  csv::Writer odo({"t", "dx", "sigma"});
  for (const auto& o : b.odometry) {
    odo.row({o.t.to_string(), csv::format_double(o.dx_in), csv::format_double(o.sigma_in)});
  }
  entries.push_back({"odometry.csv", odo.str()});
  entries.push_back({"spectra.csv", spectra_csv(b.spectra, b.manifest.channel_count)});
  if (b.qc_pre) entries.push_back({"qc_pre.csv", spectra_csv({*b.qc_pre}, b.manifest.channel_count)});
  if (b.qc_post) entries.push_back({"qc_post.csv", spectra_csv({*b.qc_post}, b.manifest.channel_count)});
  if (!b.lidar.empty()) {
    std::string out = "t,theta,r\n";
    for (const auto& scan : b.lidar) {
      const std::string t = scan.t.to_string();
      for (const auto& p : scan.points) {
        out += t;
        out.push_back(',');
        out += csv::format_double(p.theta_rad);
        out.push_back(',');
        out += csv::format_double(p.r_cm);
        out.push_back('\n');
      }
    }
    entries.push_back({"lidar.csv", std::move(out)});
  }
  if (!b.images.empty()) {
    csv::Writer img({"t", "file"});
    for (const auto& ref : b.images) img.row({ref.t.to_string(), ref.file});
    entries.push_back({"images.csv", img.str()});
  }
  for (const auto& [name, data] : b.image_files) entries.push_back({"images/" + name, data});
  return zip::write(entries);
}

BatchId make_batch_id(const std::string& robot_id, Timestamp start_time) {
  if (robot_id.empty()) throw Error("EmptyRobotId", "robot id must not be empty");
  return BatchId{robot_id, start_time, robot_id + "-" + start_time.compact()};
}

std::vector<IngestIssue> validate_bundle(const RunBundle& b) {
  std::vector<IngestIssue> issues;
  const auto fatal = [&](std::string code, std::string msg, std::string stream) {
    issues.push_back({Severity::kFatal, std::move(code), std::move(msg), std::move(stream)});
  };
  const auto warn = [&](std::string code, std::string msg, std::string stream) {
    issues.push_back({Severity::kWarning, std::move(code), std::move(msg), std::move(stream)});
  };
  const Manifest& m = b.manifest;

  if (m.robot_id.empty()) {
    fatal("EMPTY_ROBOT_ID", "manifest has no robot_id", "manifest");
  } else if (!std::all_of(m.robot_id.begin(), m.robot_id.end(), [](unsigned char c) {
               return std::isalnum(c) || c == '_' || c == '.' || c == '-';
             })) {
    fatal("INVALID_ROBOT_ID", "robot_id may only contain letters, digits, '_', '.', '-'", "manifest");
  }
  if (m.pipe_diameter_in != 30 && m.pipe_diameter_in != 42) {
    fatal("UNSUPPORTED_DIAMETER", fmt::format("pipe diameter {} in is not 30 or 42", m.pipe_diameter_in),
          "manifest");
  }
  if (!(m.fov_length_in > 0)) fatal("BAD_FOV", "fov_length_in must be positive", "manifest");
  if (!(m.energy_cal.slope_kev_per_channel > 0)) {
    fatal("BAD_ENERGY_CAL", "energy calibration slope must be positive", "manifest");
  }
  if (b.odometry.size() < 2) fatal("TOO_FEW_ODOMETRY", "need at least two odometry samples", "odometry");
  if (b.spectra.size() < 2) fatal("TOO_FEW_SPECTRA", "need at least two spectrum polls", "spectra");

  for (const auto& [qc, code, stream] :
       {std::tuple{&b.qc_pre, "MISSING_PRE_QC", "qc_pre"}, std::tuple{&b.qc_post, "MISSING_POST_QC", "qc_post"}}) {
    if (!qc->has_value()) {
      fatal(code, std::string(stream) + ".csv is absent", stream);
      continue;
    }
    const double lt = (*qc)->spectrum.live_time_s;
    if (!(lt > 0)) fatal("QC_LIVE_TIME", std::string(stream) + " live time must be positive", stream);
    if (m.qc_live_time_s > 0 && std::abs(lt - m.qc_live_time_s) > 1e-6) {
      warn("QC_LIVE_TIME_MISMATCH",
           fmt::format("{} row live time {} differs from manifest {}", stream, lt, m.qc_live_time_s), stream);
    }
  }

  if (const auto bad = first_decreasing_poll(b.spectra)) {
    warn("ACCUMULATION_DECREASE",
         fmt::format("accumulated counts drop at poll {}; processing will invalidate the batch", *bad), "spectra");
  }
  for (std::size_t i = 1; i < b.spectra.size(); ++i) {
    if (b.spectra[i].spectrum.live_time_s < b.spectra[i - 1].spectrum.live_time_s) {
      warn("LIVE_TIME_DECREASE", fmt::format("cumulative live time drops at poll {}", i), "spectra");
      break;
    }
  }

  if (!b.odometry.empty() && !b.spectra.empty()) {
    const Timestamp t0 = b.odometry.front().t, t1 = b.odometry.back().t;
    std::size_t outside = 0;
    for (const auto& s : b.spectra) outside += (s.t < t0 || s.t > t1);
    if (outside) {
      warn("SPECTRA_TIME_RANGE", fmt::format("{} spectrum polls lie outside the odometry span", outside),
           "spectra");
    }
    for (const auto& img : b.images) {
      if (img.t < t0 || img.t > t1) {
        warn("IMAGE_TIME_RANGE", fmt::format("image {} at {} is outside the run", img.file, img.t.to_string()),
             "images");
      }
    }
  }
  for (const auto& img : b.images) {
    if (!b.image_files.count(img.file)) {
      warn("IMAGE_FILE_MISSING", fmt::format("images/{} is listed but absent", img.file), "images");
    }
  }
  if (b.lidar.empty()) warn("NO_LIDAR", "no LiDAR scans; surface models will be skipped", "lidar");
  return issues;
}

bool has_fatal(const std::vector<IngestIssue>& issues) {
  return std::any_of(issues.begin(), issues.end(),
                     [](const IngestIssue& i) { return i.severity == Severity::kFatal; });
}

nlohmann::json to_json(const Manifest& m) {
  json j;
  j["robot_id"] = m.robot_id;
  j["detector_id"] = m.detector_id;
  j["fov_length_in"] = m.fov_length_in;
  j["pipe_diameter_in"] = m.pipe_diameter_in;
  j["start_time"] = m.start_time.to_string();
  j["channel_count"] = m.channel_count;
  j["energy_cal"] = {{"offset_kev", m.energy_cal.offset_kev},
                     {"slope_kev_per_channel", m.energy_cal.slope_kev_per_channel}};
  j["qc_live_time_s"] = m.qc_live_time_s;
  if (m.detector_offset_in || m.camera_offset_in || m.lidar_along_in) {
    json o = json::object();
    if (m.detector_offset_in) o["detector_fov_center_in"] = *m.detector_offset_in;
    if (m.camera_offset_in) o["camera_view_in"] = *m.camera_offset_in;
    if (m.lidar_along_in) o["lidar_along_in"] = *m.lidar_along_in;
    j["sensor_offsets"] = o;
  }
  if (!m.robot_reported_qc.is_null()) j["robot_reported_qc"] = m.robot_reported_qc;
  return j;
}

nlohmann::json to_json(const MeasurementRequest& r) {
  return {{"job_id", r.job_id},
          {"building", r.building},
          {"unit", r.unit},
          {"cell", r.cell},
          {"pipe_item_id", r.pipe_item_id},
          {"expected_length_ft", r.expected_length_ft},
          {"operator_notes", r.operator_notes},
          {"nearest_column_id", r.nearest_column_id}};
}

Manifest manifest_from_json(const nlohmann::json& j) { return parse_manifest(j.dump()); }

MeasurementRequest request_from_json(const nlohmann::json& j) { return parse_request(j.dump()); }

nlohmann::json to_json(const IngestIssue& issue) {
  return {{"severity", issue.severity == Severity::kFatal ? "fatal" : "warning"},
          {"code", issue.code},
          {"message", issue.message},
          {"stream", issue.stream}};
}

}  // namespace pps::ingest
