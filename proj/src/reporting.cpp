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

#include "pps/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "pps/csv.hpp"
#include "pps/error.hpp"

namespace pps::reporting {

using review::Batch;

std::string grams(double g) {
  std::string s = fmt::format("{:.3f}", g);
  return s == "-0.000" ? "0.000" : s;
}

std::string feet(double ft) {
  std::string s = fmt::format("{:.1f}", ft);
  return s == "-0.0" ? "0.0" : s;
}

namespace {

std::string escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* yes_no(bool v) { return v ? "Yes" : "No"; }

void require_revision(const Batch& b) {
  if (!b.revision) throw Error("NotProcessed", "batch " + b.id + " has no analysis revision");
}

std::string qc_detail(const std::optional<qc::QcResult>& q) {
  if (!q) return "not available";
  if (!q->measured) return q->note.empty() ? "no peak found" : q->note;
  std::string s = fmt::format("centroid {:.2f} keV, FWHM {:.2f} keV, rate {:.1f} cps", q->measured->centroid_kev,
                              q->measured->fwhm_kev, q->measured->gross_rate_cps);
  if (!q->note.empty()) s += "; " + q->note;
  return s;
}

Curve parse_curve(const std::string& text, const char* xcol, const char* ycol, double xscale) {
  Curve c;
  if (text.empty()) return c;
  const auto t = csv::parse(text, xcol);
  const auto xi = t.column(xcol, "curve");
  const auto yi = t.column(ycol, "curve");
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    c.x.push_back(csv::to_double(t.rows[i][xi], "curve", i + 2, xi + 1) * xscale);
    c.y.push_back(csv::to_double(t.rows[i][yi], "curve", i + 2, yi + 1));
  }
  return c;
}

std::string segment_status(const pipeline::SegmentOutcome& s, bool rejected) {
  if (rejected) return "REJECTED";
  if (!s.reported) return "NO_DATA";
  if (s.reported->mass_g < s.reported->mda_g) return "BELOW_MDA";
  return "REPORTED";
}

}  // namespace

std::vector<NdaRow> nda_rows(const Batch& b) {
  require_revision(b);
  std::vector<NdaRow> rows;
  for (const auto& s : b.revision->result.segments) {
    NdaRow r;
    r.segment = s.number;
    r.start_ft = s.start_in / 12.0;
    r.end_ft = s.end_in / 12.0;
    r.kind = localize::to_string(s.kind);
    r.rejected = b.segment_rejected(s.number);
    r.status = segment_status(s, r.rejected);
    if (!r.rejected && s.reported) {
      r.mass_g = s.reported->mass_g;
      r.tmu_g = s.reported->tmu_g;
      r.mda_g = s.reported->mda_g;
      r.density_g_per_ft = s.reported->density_at_max_g_per_ft;
    }
    rows.push_back(std::move(r));
  }
  std::sort(rows.begin(), rows.end(), [](const NdaRow& a, const NdaRow& c) { return a.segment < c.segment; });
  return rows;
}

const std::vector<std::string>& ReportDocument::section_titles() {
  static const std::vector<std::string> titles{
      "Cover Page",
      "Table of Contents",
      "Operational Parameters",
      "Batch Data Report",
      "Technical Review",
      "NDA Measurement Data Report",
      "Segment Comments",
      "Batch Comments",
      "Replicate Check",
      "QC Trend",
      "Pre- and Post-Run QC",
      "Supplementary Exhibits",
  };
  return titles;
}

ReportDocument build_report(const Batch& b, bool draft, const ReportInputs& in) {
  require_revision(b);
  if (!draft && b.state != review::BatchState::kApproved) {
    throw Error("NotApproved", fmt::format("final report needs an APPROVED batch; {} is {}", b.id, to_string(b.state)));
  }
  const auto& rev = *b.revision;
  const auto& r = rev.result;
  const auto& ops = r.operations;

  ReportDocument d;
  d.draft = draft;
  d.title = "Pipe Holdup NDA Measurement Report";
  d.batch_id = b.id;
  d.revision = rev.number;
  d.approved_by = b.approved_by;
  d.approved_at = b.approved_at;
  d.artifact_ids = in.artifact_ids;

  d.cover = {
      {"Batch", b.id},
      {"Report status", draft ? "DRAFT" : "FINAL"},
      {"Batch state", to_string(b.state)},
      {"Analysis revision", std::to_string(rev.number)},
      {"Robot", r.manifest.robot_id},
      {"Detector", r.manifest.detector_id},
      {"Job", r.request.job_id},
      {"Building", r.request.building},
      {"Unit", r.request.unit},
      {"Cell", r.request.cell},
      {"Pipe item ID", r.request.pipe_item_id},
      {"Measured on", r.manifest.start_time.iso8601()},
      {"Approved by", b.approved_by.value_or("")},
      {"Approved on", b.approved_at ? b.approved_at->iso8601() : ""},
  };

  d.operational = {
      {"Pipe diameter (in)", std::to_string(r.manifest.pipe_diameter_in)},
      {"Expected length (ft)", feet(r.request.expected_length_ft)},
      {"Measured length (ft)", feet(ops.measured_length_in / 12.0)},
      {"Farthest datum position (ft)", feet(ops.max_position_in / 12.0)},
      {"Forward driving speed (in/s)", fmt::format("{:.3f}", ops.forward_speed_in_s)},
      {"Reverse driving speed (in/s)", fmt::format("{:.3f}", ops.reverse_speed_in_s)},
      {"Run duration (s)", fmt::format("{:.1f}", ops.run_duration_s)},
      {"Dwell at far end (s)", fmt::format("{:.1f}", ops.dwell_duration_s)},
      {"Odometry closure (in)", fmt::format("{:.2f}", ops.odometry_closure_in)},
      {"Spectrum polls", std::to_string(ops.polls)},
      {"LiDAR scans", std::to_string(ops.lidar_scans)},
      {"Camera frames", std::to_string(ops.images)},
      {"Detector field of view (in)", fmt::format("{:.1f}", ops.fov_length_in)},
      {"Moving window length (in)", fmt::format("{:.1f}", ops.window_length_in)},
      {"Deposit material", r.parameters.material},
      {"QC bounds set", r.parameters.qc_bounds_set},
      {"Nearest column ID", r.request.nearest_column_id},
      {"Operator notes", r.request.operator_notes},
      {"Processing notes", r.parameters.notes},
  };

  d.batch_data = {
      {"Batch ID", b.id},
      {"Robot ID", b.robot_id},
      {"Detector ID", r.manifest.detector_id},
      {"Run start", r.manifest.start_time.iso8601()},
      {"Uploaded by", b.uploaded_by},
      {"Uploaded on", b.uploaded_at.iso8601()},
      {"Processed by", rev.created_by},
      {"Processed on", rev.created_at.iso8601()},
      {"Calibration file", r.calibration_file},
      {"Calibration date", r.calibrated_on.iso8601()},
      {"QC spectrum live time (s)", fmt::format("{:.1f}", r.manifest.qc_live_time_s)},
      {"Spectrum channels", std::to_string(r.manifest.channel_count)},
  };

  // Technical review.
  auto& tr = d.technical_review;
  tr.push_back({"Pre-run QC check acceptable", r.onboard && r.onboard->pre.pass,
                qc_detail(r.onboard ? std::optional(r.onboard->pre) : std::nullopt)});
  tr.push_back({"Post-run QC check acceptable", r.onboard && r.onboard->post.pass,
                qc_detail(r.onboard ? std::optional(r.onboard->post) : std::nullopt)});
  tr.push_back({"Contamination check acceptable", r.contamination && r.contamination->pass,
                r.contamination ? fmt::format("change {} g", grams(r.contamination->delta_g)) : "not available"});
  tr.push_back({"Full pipe spectrum check acceptable", r.full_pipe && r.full_pipe->pass, qc_detail(r.full_pipe)});
  tr.push_back({"Replicate check acceptable", rev.replicate && rev.replicate->total.pass && rev.replicate->max.pass,
                rev.replicate ? "Total and Max" : rev.replicate_note});
  tr.push_back({"Localization closure acceptable", !r.localization_closure_failed,
                fmt::format("{:.2f} in", ops.odometry_closure_in)});
  tr.push_back({"Detector accumulation continuous", !r.detector_reset_poll,
                r.detector_reset_poll ? fmt::format("reset at poll {}", *r.detector_reset_poll) : ""});
  {
    const double age_days = (r.manifest.start_time - r.calibrated_on) / 86400.0;
    const bool current = age_days >= 0 && age_days <= in.calibration_validity_days;
    tr.push_back({"Calibration current", current,
                  fmt::format("{} dated {}, {:.0f} days before the run (limit {})", r.calibration_file,
                              r.calibrated_on.iso8601(), age_days, in.calibration_validity_days)});
  }
  {
    std::size_t open = 0, cleared = 0, superseded = 0;
    for (const auto& f : rev.flags) {
      open += f.status == review::FlagStatus::kOpen;
      cleared += f.status == review::FlagStatus::kCleared;
      superseded += f.status == review::FlagStatus::kSuperseded;
    }
    tr.push_back({"No flags thrown", rev.flags.empty(),
                  fmt::format("{} raised: {} cleared, {} superseded, {} open", rev.flags.size(), cleared, superseded,
                              open)});
    tr.push_back({"All flags resolved", open == 0, ""});
  }
  d.flags = rev.flags;

  const auto rows = nda_rows(b);
  for (std::size_t i = 0; i < rows.size(); i += kNdaRowsPerPage) {
    d.nda_pages.emplace_back(rows.begin() + static_cast<std::ptrdiff_t>(i),
                             rows.begin() + static_cast<std::ptrdiff_t>(std::min(rows.size(), i + kNdaRowsPerPage)));
  }
  if (d.nda_pages.empty()) d.nda_pages.emplace_back();
  for (const auto& row : rows) d.total_g += row.mass_g.value_or(0.0);

  for (const auto& c : b.comments) (c.segment ? d.segment_comments : d.batch_comments).push_back(c);
  std::stable_sort(d.segment_comments.begin(), d.segment_comments.end(),
                   [](const review::Comment& x, const review::Comment& y) { return x.segment < y.segment; });

  d.replicate = rev.replicate;
  d.replicate_note = rev.replicate_note;
  d.trend = in.trend;
  if (r.onboard) {
    d.qc_pre = r.onboard->pre;
    d.qc_post = r.onboard->post;
  }
  d.qc_pre_spectrum = parse_curve(in.qc_pre_spectrum_csv, "energy_kev", "counts", 1.0);
  d.qc_post_spectrum = parse_curve(in.qc_post_spectrum_csv, "energy_kev", "counts", 1.0);
  d.mass_fwd = parse_curve(in.mass_curve_fwd_csv, "position_in", "g_per_ft", 1.0 / 12.0);
  d.mass_rev = parse_curve(in.mass_curve_rev_csv, "position_in", "g_per_ft", 1.0 / 12.0);

  auto seg_file = [](int n, const char* what) { return fmt::format("seg_{:03d}_{}", n, what); };
  for (const auto& s : r.segments) {
    for (const auto& img : s.images) d.exhibits.push_back({s.number, "Image " + img, pipeline::image_artifact_name(img)});
    d.exhibits.push_back({s.number, "Surface heat map", seg_file(s.number, "heatmap.png")});
    d.exhibits.push_back({s.number, "Surface mesh (OFF)", seg_file(s.number, "mesh.off")});
    d.exhibits.push_back({s.number, "Spectrum (forward)", seg_file(s.number, "spectrum_fwd.csv")});
    d.exhibits.push_back({s.number, "Spectrum (reverse)", seg_file(s.number, "spectrum_rev.csv")});
  }
  return d;
}

// ---- rendering ----------------------------------------------------------------

namespace {

constexpr const char* kStyle = R"css(
body { font-family: "DejaVu Sans", Arial, sans-serif; font-size: 10pt; margin: 2em; }
section { page-break-after: always; }
h1 { font-size: 18pt; } h2 { font-size: 14pt; border-bottom: 1px solid #444; }
table { border-collapse: collapse; margin: 0.5em 0; }
th, td { border: 1px solid #888; padding: 2px 6px; }
td.num { text-align: right; font-family: monospace; }
td.rejected { text-align: center; font-weight: bold; }
.fail { color: #a00; font-weight: bold; }
.watermark { position: fixed; top: 40%; left: 15%; font-size: 120pt; color: rgba(200,0,0,0.15);
  transform: rotate(-30deg); z-index: -1; }
@media print { .watermark { position: fixed; } }
)css";

std::string kv_table(const std::vector<KeyValue>& kv) {
  std::string s = "<table>\n";
  for (const auto& [k, v] : kv) s += fmt::format("<tr><th>{}</th><td>{}</td></tr>\n", escape(k), escape(v));
  return s + "</table>\n";
}

std::string num_or_dash(const std::optional<double>& v) { return v ? grams(*v) : std::string("&#8212;"); }

std::string fmt_axis(double v) {
  std::string s = fmt::format("{:.3g}", v);
  return s == "-0" ? "0" : s;
}

// Minimal deterministic line chart.
std::string svg_plot(const std::vector<std::pair<const Curve*, const char*>>& series, const std::string& xlabel,
                     const std::string& ylabel) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = 0.0, y1 = -x0;
  for (const auto& [c, _] : series) {
    for (double x : c->x) x0 = std::min(x0, x), x1 = std::max(x1, x);
    for (double y : c->y) y0 = std::min(y0, y), y1 = std::max(y1, y);
  }
  if (!std::isfinite(x0)) return "<p>No data.</p>\n";
  if (x1 <= x0) x1 = x0 + 1.0;
  if (y1 <= y0) y1 = y0 + 1.0;
  const double w = 640, h = 240, ml = 60, mb = 36, mt = 10, mr = 10;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (w - ml - mr); };
  auto py = [&](double y) { return mt + (1.0 - (y - y0) / (y1 - y0)) * (h - mt - mb); };
  std::string s = fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">)",
                              w, h, w, h);
  s += "\n";
  s += fmt::format(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444"/>)", ml, mt, w - ml - mr,
                   h - mt - mb);
  s += "\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    s += fmt::format(R"(<text x="{:.1f}" y="{:.1f}" font-size="9" text-anchor="middle">{}</text>)", px(xv), h - mb + 12,
                     fmt_axis(xv));
    s += fmt::format(R"(<text x="{:.1f}" y="{:.1f}" font-size="9" text-anchor="end">{}</text>)", ml - 4, py(yv) + 3,
                     fmt_axis(yv));
    s += "\n";
  }
  s += fmt::format(R"(<text x="{:.1f}" y="{:.1f}" font-size="10" text-anchor="middle">{}</text>)", (ml + w - mr) / 2,
                   h - 6, escape(xlabel));
  s += fmt::format(R"x(<text x="12" y="{:.1f}" font-size="10" transform="rotate(-90 12 {:.1f})" text-anchor="middle">{}</text>)x",
                   (mt + h - mb) / 2, (mt + h - mb) / 2, escape(ylabel));
  s += "\n";
  for (const auto& [c, color] : series) {
    if (c->x.empty()) continue;
    s += fmt::format(R"(<polyline fill="none" stroke="{}" stroke-width="1" points=")", color);
    for (std::size_t i = 0; i < c->x.size(); ++i) {
      s += fmt::format("{}{:.1f},{:.1f}", i ? " " : "", px(c->x[i]), py(c->y[i]));
    }
    s += "\"/>\n";
  }
  return s + "</svg>\n";
}

std::string artifact_link(const ReportDocument& d, const std::string& name, const std::string& label) {
  auto it = d.artifact_ids.find(name);
  if (it == d.artifact_ids.end()) return escape(label) + " (not available)";
  if (name.size() > 4 && name.compare(name.size() - 4, 4, ".png") == 0) {
    return fmt::format(R"(<figure><img src="/api/artifacts/{0}" alt="{1}"><figcaption>{1}</figcaption></figure>)",
                       escape(it->second), escape(label));
  }
  return fmt::format(R"(<a href="/api/artifacts/{}">{}</a>)", escape(it->second), escape(label));
}

std::string replicate_row(const qc::ReplicateResult& r, const char* name) {
  return fmt::format(
      "<tr><td>{}</td><td class=\"num\">{}</td><td class=\"num\">{} &#177; {}</td><td class=\"num\">{} &#177; {}</td>"
      "<td class=\"num\">{}</td><td class=\"num\">{}</td><td>{}</td></tr>\n",
      name, r.segment ? std::to_string(r.segment) : std::string("all"), grams(r.forward_g), grams(r.forward_sigma_g),
      grams(r.reverse_g), grams(r.reverse_sigma_g), r.rpd_percent ? fmt::format("{:.1f}%", *r.rpd_percent) : "n/a",
      grams(r.two_sigma_bound_g), r.pass ? "Pass" : "<span class=\"fail\">Fail</span>");
}

std::string qc_table(const std::optional<qc::QcResult>& q) {
  if (!q) return "<p>Not available.</p>\n";
  std::string s = "<table>\n<tr><th>Criterion</th><th>Measured</th><th>Bound</th><th>Result</th></tr>\n";
  for (const auto& c : q->criteria) {
    s += fmt::format("<tr><td>{}</td><td class=\"num\">{:.3f}</td><td class=\"num\">{:.3f}</td><td>{}</td></tr>\n",
                     escape(c.name), c.measured, c.bound, c.pass ? "Pass" : "<span class=\"fail\">Fail</span>");
  }
  s += fmt::format("<tr><th>Overall</th><td colspan=\"3\">{}{}</td></tr>\n</table>\n", q->pass ? "Pass" : "Fail",
                   q->note.empty() ? "" : " (" + escape(q->note) + ")");
  return s;
}

}  // namespace

std::string render_report(const ReportDocument& d) {
  const auto& titles = ReportDocument::section_titles();
  std::string h;
  h += "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n";
  h += fmt::format("<title>{}{} {}</title>\n", d.draft ? "DRAFT " : "", escape(d.title), escape(d.batch_id));
  h += fmt::format("<style>{}</style>\n</head>\n<body>\n", kStyle);
  if (d.draft) h += "<div class=\"watermark\">DRAFT</div>\n";

  auto open = [&](int i) { h += fmt::format("<section id=\"sec-{}\">\n<h2>{}. {}</h2>\n", i + 1, i + 1, titles[i]); };
  auto close = [&] { h += "</section>\n"; };

  // 1. Cover.
  h += "<section id=\"sec-1\">\n";
  h += fmt::format("<h1>{}</h1>\n", escape(d.title));
  if (d.draft) h += "<p class=\"fail\">DRAFT: not approved for release.</p>\n";
  h += kv_table(d.cover);
  close();

  open(1);
  h += "<ol>\n";
  for (std::size_t i = 0; i < titles.size(); ++i) {
    h += fmt::format("<li><a href=\"#sec-{}\">{}</a></li>\n", i + 1, escape(titles[i]));
  }
  h += "</ol>\n";
  close();

  open(2);
  h += kv_table(d.operational);
  close();

  open(3);
  h += kv_table(d.batch_data);
  close();

  open(4);
  h += "<table>\n<tr><th>Check</th><th>Acceptable</th><th>Detail</th></tr>\n";
  for (const auto& c : d.technical_review) {
    h += fmt::format("<tr><td>{}</td><td>{}</td><td>{}</td></tr>\n", escape(c.name),
                     c.ok ? "Yes" : "<span class=\"fail\">No</span>", escape(c.detail));
  }
  h += "</table>\n";
  if (!d.flags.empty()) {
    h += "<h3>Flags</h3>\n<table>\n<tr><th>ID</th><th>Scope</th><th>Code</th><th>Severity</th><th>Status</th>"
         "<th>Message</th><th>Clearance</th></tr>\n";
    for (const auto& f : d.flags) {
      h += fmt::format("<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>\n", f.id,
                       f.segment ? fmt::format("Segment {}", f.segment) : "Batch", escape(f.code),
                       to_string(f.severity), to_string(f.status), escape(f.message),
                       f.clearance ? escape(fmt::format("{} ({}, {})", f.clearance->comment, f.clearance->user,
                                                        f.clearance->at.iso8601()))
                                   : "");
    }
    h += "</table>\n";
  }
  h += fmt::format("<p>Approved by: {} &#160; Approved on: {}</p>\n", escape(d.approved_by.value_or("(pending)")),
                   d.approved_at ? d.approved_at->iso8601() : "(pending)");
  close();

  open(5);
  for (std::size_t p = 0; p < d.nda_pages.size(); ++p) {
    if (d.nda_pages.size() > 1) h += fmt::format("<h3>Page {} of {}</h3>\n", p + 1, d.nda_pages.size());
    h += "<table>\n<tr><th>Segment</th><th>Start (ft)</th><th>End (ft)</th><th>Type</th><th>U-235 (g)</th>"
         "<th>TMU (g)</th><th>MDA (g)</th><th>Density at max (g/ft)</th><th>Status</th></tr>\n";
    for (const auto& r : d.nda_pages[p]) {
      h += fmt::format("<tr><td class=\"num\">{}</td><td class=\"num\">{}</td><td class=\"num\">{}</td><td>{}</td>",
                       r.segment, feet(r.start_ft), feet(r.end_ft), escape(r.kind));
      if (r.rejected) {
        h += "<td class=\"rejected\" colspan=\"4\">REJECTED</td>";
      } else {
        h += fmt::format("<td class=\"num\">{}</td><td class=\"num\">{}</td><td class=\"num\">{}</td><td class=\"num\">{}</td>",
                         num_or_dash(r.mass_g), num_or_dash(r.tmu_g), num_or_dash(r.mda_g),
                         num_or_dash(r.density_g_per_ft));
      }
      h += fmt::format("<td>{}</td></tr>\n", r.status);
    }
    h += "</table>\n";
  }
  h += fmt::format("<p>Total U-235 over reported segments: <b>{} g</b></p>\n", grams(d.total_g));
  close();

  open(6);
  if (d.segment_comments.empty()) h += "<p>No segment comments.</p>\n";
  for (const auto& c : d.segment_comments) {
    h += fmt::format("<p><b>Segment {}</b> ({}, {}): {}</p>\n", c.segment, escape(c.user), c.at.iso8601(),
                     escape(c.text));
  }
  close();

  open(7);
  if (d.batch_comments.empty()) h += "<p>No batch comments.</p>\n";
  for (const auto& c : d.batch_comments) {
    h += fmt::format("<p>({}, {}): {}</p>\n", escape(c.user), c.at.iso8601(), escape(c.text));
  }
  close();

  open(8);
  if (d.replicate) {
    h += "<table>\n<tr><th>Check</th><th>Segment</th><th>Forward (g)</th><th>Reverse (g)</th><th>RPD</th>"
         "<th>2&#963; bound (g)</th><th>Result</th></tr>\n";
    h += replicate_row(d.replicate->total, "Total");
    h += replicate_row(d.replicate->max, "Max");
    h += "</table>\n";
  } else {
    h += fmt::format("<p>Replicate check not evaluated: {}</p>\n", escape(d.replicate_note));
  }
  close();

  open(9);
  if (d.trend.empty()) {
    h += "<p>No QC history.</p>\n";
  } else {
    Curve pre, post;
    for (const auto& e : d.trend) {
      Curve& c = e.context == qc::Context::kPre ? pre : post;
      c.x.push_back(e.timestamp.seconds() / 86400.0);
      c.y.push_back(e.efficiency_cps);
    }
    h += svg_plot({{&pre, "#1f4e9a"}, {&post, "#b85c00"}}, "Unix day", "Am-241 peak rate (cps)");
    h += "<table>\n<tr><th>Time</th><th>Batch</th><th>Robot</th><th>Detector</th><th>Check</th><th>Rate (cps)</th>"
         "<th>Result</th></tr>\n";
    for (const auto& e : d.trend) {
      h += fmt::format("<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td class=\"num\">{:.1f}</td>"
                       "<td>{}</td></tr>\n",
                       e.timestamp.iso8601(), escape(e.batch_id), escape(e.robot_id), escape(e.detector_id),
                       qc::to_string(e.context), e.efficiency_cps, e.pass ? "Pass" : "Fail");
    }
    h += "</table>\n";
  }
  close();

  open(10);
  h += "<h3>Pre-run QC</h3>\n" + qc_table(d.qc_pre);
  if (!d.qc_pre_spectrum.x.empty()) h += svg_plot({{&d.qc_pre_spectrum, "#1f4e9a"}}, "Energy (keV)", "Counts");
  h += "<h3>Post-run QC</h3>\n" + qc_table(d.qc_post);
  if (!d.qc_post_spectrum.x.empty()) h += svg_plot({{&d.qc_post_spectrum, "#b85c00"}}, "Energy (keV)", "Counts");
  close();

  open(11);
  h += "<h3>Mass per distance</h3>\n";
  h += svg_plot({{&d.mass_fwd, "#1f4e9a"}, {&d.mass_rev, "#b85c00"}}, "Distance from entrance (ft)",
                "U-235 (g/ft)");
  h += "<p>Forward traversal in blue, reverse in orange.</p>\n";
  int current = -1;
  for (const auto& e : d.exhibits) {
    if (e.segment != current) {
      if (current != -1) h += "</ul>\n";
      current = e.segment;
      h += fmt::format("<h3>Segment {}</h3>\n<ul>\n", current);
    }
    h += "<li>" + artifact_link(d, e.artifact, e.label) + "</li>\n";
  }
  if (current != -1) h += "</ul>\n";
  close();

  h += "</body>\n</html>\n";
  return h;
}

// ---- NCS ------------------------------------------------------------------------

std::vector<NcsRow> build_ncs_table(const Batch& b, double threshold_g) {
  std::vector<NcsRow> out;
  for (const auto& r : nda_rows(b)) {
    NcsRow n;
    n.segment = r.segment;
    n.threshold_g = threshold_g;
    n.status = r.status;
    if (!r.rejected && r.mass_g) {
      n.mass_g = r.mass_g;
      n.tmu_g = r.tmu_g;
      n.below_threshold = *r.mass_g + r.tmu_g.value_or(0.0) < threshold_g;
    }
    out.push_back(n);
  }
  return out;
}

std::string render_ncs(const Batch& b, const std::vector<NcsRow>& rows) {
  std::string h = "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n";
  h += fmt::format("<title>NCS Table {}</title>\n<style>{}</style>\n</head>\n<body>\n", escape(b.id), kStyle);
  h += fmt::format("<h1>NCS Table</h1>\n<p>Batch {}. Threshold {} g U-235, compared against mass plus TMU.</p>\n",
                   escape(b.id), rows.empty() ? grams(100.0) : grams(rows.front().threshold_g));
  h += "<table>\n<tr><th>Segment</th><th>U-235 (g)</th><th>TMU (g)</th><th>Below threshold</th><th>Status</th></tr>\n";
  for (const auto& r : rows) {
    h += fmt::format("<tr><td class=\"num\">{}</td>", r.segment);
    if (r.status == "REJECTED") {
      h += "<td class=\"rejected\" colspan=\"3\">REJECTED</td>";
    } else {
      h += fmt::format("<td class=\"num\">{}</td><td class=\"num\">{}</td><td>{}</td>", num_or_dash(r.mass_g),
                       num_or_dash(r.tmu_g), r.below_threshold ? yes_no(*r.below_threshold) : "&#8212;");
    }
    h += fmt::format("<td>{}</td></tr>\n", r.status);
  }
  h += "</table>\n</body>\n</html>\n";
  return h;
}

// ---- CONDA ----------------------------------------------------------------------

const std::vector<std::string>& conda_header() {
  static const std::vector<std::string> h{"batch_id",  "job_id",   "building",     "unit",        "cell",
                                          "pipe_item_id", "segment_number", "start_ft", "end_ft", "u235_g",
                                          "tmu_g",     "mda_g",    "status",       "measured_on", "approved_by",
                                          "approved_on"};
  return h;
}

std::vector<CondaRow> conda_rows(const Batch& b) {
  if (b.state != review::BatchState::kApproved) {
    throw Error("NotApproved", fmt::format("CONDA export needs an APPROVED batch; {} is {}", b.id, to_string(b.state)));
  }
  const auto& r = b.revision->result;
  std::vector<CondaRow> out;
  for (const auto& n : nda_rows(b)) {
    CondaRow c;
    c.batch_id = b.id;
    c.job_id = r.request.job_id;
    c.building = r.request.building;
    c.unit = r.request.unit;
    c.cell = r.request.cell;
    c.pipe_item_id = r.request.pipe_item_id;
    c.segment_number = n.segment;
    c.start_ft = feet(n.start_ft);
    c.end_ft = feet(n.end_ft);
    if (n.mass_g) {
      c.u235_g = grams(*n.mass_g);
      c.tmu_g = grams(*n.tmu_g);
      c.mda_g = grams(*n.mda_g);
    }
    c.status = n.status;
    c.measured_on = r.manifest.start_time.iso8601();
    c.approved_by = b.approved_by.value_or("");
    c.approved_on = b.approved_at ? b.approved_at->iso8601() : "";
    out.push_back(std::move(c));
  }
  return out;
}

std::string build_conda_export(const Batch& b) {
  csv::Writer w(conda_header());
  for (const auto& c : conda_rows(b)) {
    w.row({c.batch_id, c.job_id, c.building, c.unit, c.cell, c.pipe_item_id, std::to_string(c.segment_number),
           c.start_ft, c.end_ft, c.u235_g, c.tmu_g, c.mda_g, c.status, c.measured_on, c.approved_by, c.approved_on});
  }
  return w.str();
}

std::vector<CondaRow> parse_conda_export(const std::string& text) {
  const auto t = csv::parse(text, "conda.csv");
  if (t.header != conda_header()) throw Error("MalformedRow", "conda.csv: unexpected header");
  std::vector<CondaRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& f = t.rows[i];
    if (f.size() != conda_header().size()) {
      throw Error("MalformedRow", fmt::format("conda.csv:{}: expected {} fields", i + 2, conda_header().size()));
    }
    CondaRow c{f[0], f[1], f[2], f[3], f[4], f[5],
               static_cast<int>(csv::to_int(f[6], "conda.csv", i + 2, 7)),
               f[7], f[8], f[9], f[10], f[11], f[12], f[13], f[14], f[15]};
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace pps::reporting
