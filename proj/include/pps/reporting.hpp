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

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pps/qc.hpp"
#include "pps/review.hpp"

namespace pps::reporting {

// Fixed-precision number text used everywhere a value reaches a document:
// grams with three decimals, feet with one. Values that round to zero print
// without a sign.
std::string grams(double g);
std::string feet(double ft);

struct NdaRow {
  int segment = 0;
  double start_ft = 0.0;
  double end_ft = 0.0;
  std::string kind;
  bool rejected = false;
  std::optional<double> mass_g;
  std::optional<double> tmu_g;
  std::optional<double> mda_g;
  std::optional<double> density_g_per_ft;
  std::string status;  // REPORTED, BELOW_MDA, NO_DATA, REJECTED
};

struct NcsRow {
  int segment = 0;
  std::optional<double> mass_g;
  std::optional<double> tmu_g;
  std::optional<bool> below_threshold;  // absent for rejected or unmeasured segments
  double threshold_g = 100.0;
  std::string status;
};

struct ReviewCheck {
  std::string name;
  bool ok = false;
  std::string detail;
};

struct Exhibit {
  int segment = 0;
  std::string label;
  std::string artifact;  // artifact name inside the revision
};

// Data the report needs beyond the batch record, all read from the archive.
struct ReportInputs {
  std::vector<qc::QcTrendEntry> trend;
  std::map<std::string, std::string> artifact_ids;  // artifact name -> opaque id
  std::string mass_curve_fwd_csv;
  std::string mass_curve_rev_csv;
  std::string qc_pre_spectrum_csv;
  std::string qc_post_spectrum_csv;
  double ncs_threshold_g = 100.0;
  int calibration_validity_days = 365;
};

struct KeyValue {
  std::string key;
  std::string value;
};

struct Curve {
  std::vector<double> x;
  std::vector<double> y;
};

struct ReportDocument {
  bool draft = true;
  std::string title;
  std::string batch_id;
  int revision = 0;
  std::vector<KeyValue> cover;
  std::vector<KeyValue> operational;
  std::vector<KeyValue> batch_data;
  std::vector<ReviewCheck> technical_review;
  std::vector<review::Flag> flags;
  std::vector<std::vector<NdaRow>> nda_pages;
  double total_g = 0.0;
  std::vector<review::Comment> segment_comments;
  std::vector<review::Comment> batch_comments;
  std::optional<qc::ReplicatePair> replicate;
  std::string replicate_note;
  std::vector<qc::QcTrendEntry> trend;
  std::optional<qc::QcResult> qc_pre;
  std::optional<qc::QcResult> qc_post;
  Curve qc_pre_spectrum;
  Curve qc_post_spectrum;
  Curve mass_fwd;  // x in ft, y in g/ft
  Curve mass_rev;
  std::vector<Exhibit> exhibits;
  std::map<std::string, std::string> artifact_ids;
  std::optional<std::string> approved_by;
  std::optional<Timestamp> approved_at;

  // The twelve section titles in document order.
  static const std::vector<std::string>& section_titles();
};

inline constexpr int kNdaRowsPerPage = 25;

// Throws NotProcessed (no revision), NotApproved (final on an unapproved batch).
ReportDocument build_report(const review::Batch& batch, bool draft, const ReportInputs& inputs = {});

// Pure: identical documents give identical bytes.
std::string render_report(const ReportDocument& doc);

std::vector<NdaRow> nda_rows(const review::Batch& batch);

// Throws NotProcessed.
std::vector<NcsRow> build_ncs_table(const review::Batch& batch, double threshold_g = 100.0);
std::string render_ncs(const review::Batch& batch, const std::vector<NcsRow>& rows);

struct CondaRow {
  std::string batch_id, job_id, building, unit, cell, pipe_item_id;
  int segment_number = 0;
  std::string start_ft, end_ft, u235_g, tmu_g, mda_g, status;
  std::string measured_on, approved_by, approved_on;

  bool operator==(const CondaRow&) const = default;
};

const std::vector<std::string>& conda_header();
std::vector<CondaRow> conda_rows(const review::Batch& batch);  // throws NotApproved
std::string build_conda_export(const review::Batch& batch);    // throws NotApproved
std::vector<CondaRow> parse_conda_export(const std::string& csv_text);  // throws MalformedRow

}  // namespace pps::reporting
