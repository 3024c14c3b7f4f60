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

#include <gtest/gtest.h>

#include <deque>
#include <functional>
#include <numeric>
#include <set>
#include <thread>

#include <unistd.h>

#include <fmt/format.h>

#include "fixtures.hpp"
#include "model_check.hpp"
#include "pps/archive.hpp"
#include "pps/error.hpp"
#include "pps/review.hpp"

namespace pps::review {
namespace {

using testing::FakeRun;
using testing::fake_result;

const User kTech{"tina", "Tina Tech", Role::kTechnician};
const User kAnalyst{"alex", "Alex Analyst", Role::kAnalyst};
const User kPm{"pat", "Pat Manager", Role::kProgramManager};
const Timestamp kNow = Timestamp::parse_iso8601("2018-07-11T09:00:00Z");

std::string code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

Batch uploaded() {
  Batch b;
  b.id = "RP001-20180710T140322Z";
  b.robot_id = "RP001";
  b.start_time = Timestamp::parse_iso8601("2018-07-10T14:03:22Z");
  b.uploaded_by = kTech.id;
  b.uploaded_at = kNow;
  return b;
}

// Three segments with one batch flag (pre QC), one segment QC flag on 2 and a
// geometry flag on 3. Segment 1 dominates the totals, so rejecting it leaves
// a replicate disagreement behind.
FakeRun flagged_run() {
  FakeRun f;
  f.segments = 3;
  f.masses = {{1, {100.0, 100.0}}, {2, {5.0, 8.0}}, {3, {1.0, 1.0}}};
  f.pre_qc_fail = true;
  f.seg_qc_fwd_fail = {2};
  f.geometry = {3};
  return f;
}

Batch processed(const FakeRun& f) {
  Batch b = uploaded();
  record_revision(b, fake_result(f), kAnalyst, kNow);
  return b;
}

int flag_id(const Batch& b, const std::string& code) {
  for (const auto& f : b.revision->flags) {
    if (f.code == code) return f.id;
  }
  return -1;
}

TEST(Flags, CleanRunRaisesNothing) {
  auto r = fake_result(FakeRun{});
  auto rep = pipeline::replicate_for(r, {});
  EXPECT_TRUE(raise_flags(r, {}, rep).empty());
}

TEST(Flags, CatalogScopesAndSeverities) {
  FakeRun f;
  f.pre_qc_fail = f.post_qc_fail = f.contamination = f.detector_reset = f.full_pipe_fail = f.closure_fail = true;
  f.seg_qc_fwd_fail = {1};
  f.seg_qc_rev_fail = {2};
  f.geometry = {3};
  f.lumps = {4};
  f.masses = {{5, {10.0, 30.0}}};
  auto r = fake_result(f);
  auto flags = raise_flags(r, {}, pipeline::replicate_for(r, {}));
  std::map<std::string, std::pair<int, FlagSeverity>> got;
  for (const auto& x : flags) got[x.code] = {x.segment, x.severity};
  const std::map<std::string, std::pair<int, FlagSeverity>> want{
      {"PRE_QC_FAIL", {0, FlagSeverity::kClearable}},
      {"POST_QC_FAIL", {0, FlagSeverity::kClearable}},
      {"CONTAMINATION", {0, FlagSeverity::kInvalidating}},
      {"DETECTOR_RESET", {0, FlagSeverity::kInvalidating}},
      {"FULL_PIPE_SPECTRUM", {0, FlagSeverity::kClearable}},
      {"LOCALIZATION_CLOSURE", {0, FlagSeverity::kClearable}},
      {"REPLICATE_TOTAL", {0, FlagSeverity::kInvalidating}},
      {"REPLICATE_MAX", {0, FlagSeverity::kInvalidating}},
      {"SEG_QC_FWD", {1, FlagSeverity::kClearable}},
      {"SEG_QC_REV", {2, FlagSeverity::kClearable}},
      {"SEG_GEOMETRY_DEVIATION", {3, FlagSeverity::kClearable}},
      {"SEG_LUMP_SELF_ATTENUATION", {4, FlagSeverity::kClearable}},
  };
  EXPECT_EQ(got, want);
  EXPECT_EQ(flags.size(), want.size());
}

TEST(Flags, RejectedSegmentsRaiseNoSegmentFlags) {
  FakeRun f;
  f.geometry = {3};
  auto r = fake_result(f);
  EXPECT_TRUE(raise_flags(r, {3}, std::nullopt).empty());
}

TEST(Workflow, ContaminationInvalidatesImmediately) {
  FakeRun f;
  f.contamination = true;
  Batch b = processed(f);
  EXPECT_EQ(b.state, BatchState::kInvalid);
  EXPECT_EQ(code_of([&] { transition(b, Action::kLock, kAnalyst, kNow); }), "InvalidatedBatch");
  EXPECT_EQ(code_of([&] { record_revision(b, fake_result(FakeRun{}), kAnalyst, kNow); }), "InvalidatedBatch");
}

TEST(Workflow, LockNeedsAllFlagsCleared) {
  Batch b = processed(flagged_run());
  ASSERT_EQ(b.state, BatchState::kProcessed);
  ASSERT_EQ(b.revision->flags.size(), 3u);
  EXPECT_EQ(code_of([&] { transition(b, Action::kLock, kAnalyst, kNow); }), "OpenFlags");
  clear_flag(b, flag_id(b, "PRE_QC_FAIL"), "source re-checked after the run", kAnalyst, kNow);
  clear_flag(b, flag_id(b, "SEG_GEOMETRY_DEVIATION"), "known vacuum spool", kAnalyst, kNow);
  EXPECT_EQ(code_of([&] { transition(b, Action::kLock, kAnalyst, kNow); }), "OpenFlags");
  clear_flag(b, flag_id(b, "SEG_QC_FWD"), "peak shift within tolerance on review", kAnalyst, kNow);
  EXPECT_EQ(transition(b, Action::kLock, kAnalyst, kNow), BatchState::kLocked);
  const Flag* g = b.flag(flag_id(b, "SEG_GEOMETRY_DEVIATION"));
  ASSERT_TRUE(g->clearance);
  EXPECT_EQ(g->clearance->comment, "known vacuum spool");
  EXPECT_EQ(g->clearance->user, "alex");
}

TEST(Workflow, ApproveIsProgramManagerOnly) {
  Batch b = processed(FakeRun{});
  transition(b, Action::kLock, kAnalyst, kNow);
  EXPECT_EQ(code_of([&] { transition(b, Action::kApprove, kAnalyst, kNow); }), "ForbiddenRole");
  EXPECT_EQ(b.state, BatchState::kLocked);
  const Timestamp at = kNow + 3600.0;
  EXPECT_EQ(transition(b, Action::kApprove, kPm, at), BatchState::kApproved);
  EXPECT_EQ(b.approved_by, "Pat Manager");
  EXPECT_EQ(b.approved_at, at);
}

TEST(Workflow, ApprovedIsImmutable) {
  Batch b = processed(FakeRun{});
  transition(b, Action::kLock, kAnalyst, kNow);
  transition(b, Action::kApprove, kPm, kNow);
  EXPECT_NE(code_of([&] { add_comment(b, 0, "late note", kPm, kNow); }), "");
  EXPECT_NE(code_of([&] { reject_segment(b, 1, "x", kAnalyst, kNow); }), "");
  EXPECT_NE(code_of([&] { transition(b, Action::kReturn, kPm, kNow); }), "");
  EXPECT_NE(code_of([&] { record_revision(b, fake_result(FakeRun{}), kAnalyst, kNow); }), "");
  EXPECT_TRUE(b.comments.empty());
}

TEST(Workflow, ClearGuards) {
  Batch b = processed(flagged_run());
  const int geo = flag_id(b, "SEG_GEOMETRY_DEVIATION");
  EXPECT_EQ(code_of([&] { clear_flag(b, geo, "", kAnalyst, kNow); }), "EmptyComment");
  EXPECT_EQ(code_of([&] { clear_flag(b, geo, "   ", kAnalyst, kNow); }), "EmptyComment");
  EXPECT_EQ(code_of([&] { clear_flag(b, geo, "ok", kPm, kNow); }), "ForbiddenRole");
  EXPECT_EQ(code_of([&] { clear_flag(b, 99, "ok", kAnalyst, kNow); }), "UnknownFlag");
  clear_flag(b, geo, "known vacuum spool", kAnalyst, kNow);
  EXPECT_EQ(code_of([&] { clear_flag(b, geo, "again", kAnalyst, kNow); }), "FlagNotOpen");
  EXPECT_EQ(b.flag(geo)->status, FlagStatus::kCleared);
}

TEST(Workflow, InvalidatingFlagCannotBeCleared) {
  FakeRun f;
  f.masses = {{2, {10.0, 30.0}}};
  Batch b = processed(f);
  ASSERT_EQ(b.state, BatchState::kInvalid);
  const int id = flag_id(b, "REPLICATE_TOTAL");
  ASSERT_GT(id, 0);
  EXPECT_EQ(code_of([&] { clear_flag(b, id, "looks fine", kAnalyst, kNow); }), "InvalidatingFlag");
  EXPECT_EQ(b.flag(id)->status, FlagStatus::kOpen);
}

TEST(Workflow, RejectSupersedesSegmentFlagsAndDropsFromReplicate) {
  Batch b = processed(flagged_run());
  reject_segment(b, 2, "expansion joint", kAnalyst, kNow);
  EXPECT_EQ(b.state, BatchState::kProcessed);
  EXPECT_TRUE(b.segment_rejected(2));
  EXPECT_EQ(b.flag(flag_id(b, "SEG_QC_FWD"))->status, FlagStatus::kSuperseded);
  ASSERT_TRUE(b.revision->replicate);
  EXPECT_DOUBLE_EQ(b.revision->replicate->total.forward_g, 101.0);
  EXPECT_DOUBLE_EQ(b.revision->replicate->total.reverse_g, 101.0);
  EXPECT_EQ(code_of([&] { reject_segment(b, 9, "x", kAnalyst, kNow); }), "UnknownSegment");
  EXPECT_EQ(code_of([&] { reject_segment(b, 1, "x", kTech, kNow); }), "ForbiddenRole");
}

TEST(Workflow, RejectionThatBreaksReplicateInvalidates) {
  Batch b = processed(flagged_run());
  ASSERT_TRUE(b.revision->replicate->total.pass);
  reject_segment(b, 1, "wrong pipe", kAnalyst, kNow);
  EXPECT_EQ(b.state, BatchState::kInvalid);
  EXPECT_GT(flag_id(b, "REPLICATE_TOTAL"), 0);
}

TEST(Workflow, RejectAllSegmentsBlocksLock) {
  Batch b = processed(FakeRun{.segments = 3});
  for (int n = 1; n <= 3; ++n) reject_segment(b, n, "all bad", kAnalyst, kNow);
  EXPECT_FALSE(b.revision->replicate);
  EXPECT_EQ(code_of([&] { transition(b, Action::kLock, kAnalyst, kNow); }), "NoSegments");
  EXPECT_EQ(b.state, BatchState::kProcessed);
}

TEST(Workflow, UnmeasuredSegmentMustBeRejectedBeforeLock) {
  FakeRun f;
  f.unmeasured = {4};
  Batch b = processed(f);
  EXPECT_EQ(code_of([&] { transition(b, Action::kLock, kAnalyst, kNow); }), "OpenFlags");
  reject_segment(b, 4, "no data", kAnalyst, kNow);
  EXPECT_EQ(transition(b, Action::kLock, kAnalyst, kNow), BatchState::kLocked);
}

TEST(Workflow, ReprocessResetsRejectionsAndClearances) {
  Batch b = processed(flagged_run());
  reject_segment(b, 2, "joint", kAnalyst, kNow);
  clear_flag(b, flag_id(b, "PRE_QC_FAIL"), "ok", kAnalyst, kNow);
  add_comment(b, 0, "batch note", kAnalyst, kNow);
  record_revision(b, fake_result(flagged_run()), kAnalyst, kNow);
  EXPECT_EQ(b.revision->number, 2);
  EXPECT_TRUE(b.rejected_segments().empty());
  for (const auto& f : b.revision->flags) EXPECT_EQ(f.status, FlagStatus::kOpen);
  EXPECT_EQ(b.comments.size(), 1u);
}

TEST(Workflow, ReturnKeepsClearances) {
  Batch b = processed(flagged_run());
  for (const auto& f : std::vector<Flag>(b.revision->flags)) clear_flag(b, f.id, "reviewed", kAnalyst, kNow);
  transition(b, Action::kLock, kAnalyst, kNow);
  EXPECT_EQ(transition(b, Action::kReturn, kPm, kNow), BatchState::kProcessed);
  EXPECT_TRUE(b.returned_from_pm);
  EXPECT_TRUE(b.blocking_flags().empty());
  EXPECT_EQ(transition(b, Action::kLock, kAnalyst, kNow), BatchState::kLocked);
  EXPECT_FALSE(b.returned_from_pm);
}

TEST(Workflow, CommentsKeepOrder) {
  Batch b = processed(FakeRun{});
  for (int i = 0; i < 10; ++i) add_comment(b, i % 2 ? 4 : 0, fmt::format("note {}", i), i % 3 ? kAnalyst : kPm, kNow + i);
  ASSERT_EQ(b.comments.size(), 10u);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(b.comments[i].text, fmt::format("note {}", i));
    EXPECT_EQ(b.comments[i].id, i + 1);
  }
  EXPECT_EQ(code_of([&] { add_comment(b, 0, " ", kAnalyst, kNow); }), "EmptyComment");
  EXPECT_EQ(code_of([&] { add_comment(b, 17, "x", kAnalyst, kNow); }), "UnknownSegment");
}

TEST(Workflow, ProcessGuards) {
  Batch b = uploaded();
  EXPECT_EQ(code_of([&] { record_revision(b, fake_result(FakeRun{}), kTech, kNow); }), "ForbiddenRole");
  record_revision(b, fake_result(FakeRun{}), kAnalyst, kNow);
  transition(b, Action::kLock, kAnalyst, kNow);
  EXPECT_EQ(code_of([&] { record_revision(b, fake_result(FakeRun{}), kAnalyst, kNow); }), "WrongState");
  EXPECT_EQ(code_of([&] { transition(b, Action::kLock, kAnalyst, kNow); }), "InvalidTransition");
}

TEST(ModelCheck, AllSequencesUpToSixActions) {
  const auto out = testing::model::explore(6);
  EXPECT_EQ(out.violation, "");
  EXPECT_TRUE(out.reached.count(BatchState::kApproved));
  EXPECT_TRUE(out.reached.count(BatchState::kInvalid));
  EXPECT_TRUE(out.reached.count(BatchState::kLocked));
  EXPECT_GT(out.edges, 1000u);
}

// ---- archive --------------------------------------------------------------------

class ArchiveTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = std::filesystem::temp_directory_path() /
          fmt::format("pps_archive_{}_{}", ::testing::UnitTest::GetInstance()->current_test_info()->name(), ::getpid());
    std::filesystem::remove_all(dir);
  }
  void TearDown() override { std::filesystem::remove_all(dir); }
  std::filesystem::path dir;
};

TEST_F(ArchiveTest, RoundTripsWorkflowState) {
  archive::Archive a(dir);
  Batch b = uploaded();
  a.create_batch(b, "zipbytes");
  EXPECT_EQ(code_of([&] {
              Batch c = uploaded();
              a.create_batch(c, "zipbytes");
            }),
            "DuplicateBatch");
  record_revision(b, fake_result(flagged_run()), kAnalyst, kNow);
  a.save(b, {{"segments.csv", "a,b\n"}, {"seg_001_heatmap.png", "png"}});
  reject_segment(b, 2, "joint", kAnalyst, kNow);
  clear_flag(b, flag_id(b, "PRE_QC_FAIL"), "ok per source log", kAnalyst, kNow);
  add_comment(b, 3, "spool", kAnalyst, kNow);
  a.save(b);

  archive::Archive again(dir);
  auto loaded = again.load(b.id);
  ASSERT_TRUE(loaded);
  EXPECT_EQ(testing::model::key(*loaded), testing::model::key(b));
  EXPECT_EQ(summary_json(*loaded), summary_json(b));
  EXPECT_EQ(loaded->version, b.version);
  EXPECT_EQ(loaded->audit.size(), b.audit.size());
  EXPECT_EQ(again.bundle(b.id), "zipbytes");
  EXPECT_TRUE(std::filesystem::exists(dir / b.id / "bundle.zip"));
  EXPECT_TRUE(std::filesystem::exists(dir / b.id / "rev1" / "segments.csv"));

  auto arts = again.artifacts(b.id, 1);
  ASSERT_EQ(arts.size(), 2u);
  for (const auto& art : arts) {
    EXPECT_EQ(art.id.find('/'), std::string::npos);
    EXPECT_EQ(art.id.find(dir.string()), std::string::npos);
  }
  auto csv = again.artifact_by_name(b.id, 1, "segments.csv");
  ASSERT_TRUE(csv);
  EXPECT_EQ(csv->content_type, "text/csv");
  EXPECT_EQ(again.artifact_bytes(*again.artifact_info(csv->id)), "a,b\n");
  EXPECT_TRUE(std::filesystem::exists(dir / "blobs" / csv->sha256.substr(0, 2) / csv->sha256));
}

TEST_F(ArchiveTest, CompareAndSetRejectsStaleWriters) {
  archive::Archive a(dir);
  Batch b = uploaded();
  a.create_batch(b, "zip");
  Batch stale = *a.load(b.id);
  record_revision(b, fake_result(FakeRun{}), kAnalyst, kNow);
  a.save(b);
  record_revision(stale, fake_result(FakeRun{}), kAnalyst, kNow);
  EXPECT_EQ(code_of([&] { a.save(stale); }), "ConcurrentModification");
  EXPECT_EQ(a.load(b.id)->revision->number, 1);
}

TEST_F(ArchiveTest, ConcurrentUpdatesSerialize) {
  archive::Archive a(dir);
  Batch b = uploaded();
  a.create_batch(b, "zip");
  a.update(b.id, [](Batch& x) { record_revision(x, fake_result(FakeRun{}), kAnalyst, kNow); });
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 5; ++i) {
        a.update(b.id, [&](Batch& x) { add_comment(x, 0, fmt::format("t{} c{}", t, i), kAnalyst, kNow); });
      }
    });
  }
  for (auto& th : threads) th.join();
  auto loaded = a.load(b.id);
  EXPECT_EQ(loaded->comments.size(), 40u);
  std::set<int> ids;
  for (const auto& c : loaded->comments) ids.insert(c.id);
  EXPECT_EQ(ids.size(), 40u);
}

TEST_F(ArchiveTest, FailedUpdateSavesNothing) {
  archive::Archive a(dir);
  Batch b = uploaded();
  a.create_batch(b, "zip");
  const auto v = a.load(b.id)->version;
  EXPECT_EQ(code_of([&] { a.update(b.id, [](Batch& x) { transition(x, Action::kLock, kAnalyst, kNow); }); }),
            "InvalidTransition");
  EXPECT_EQ(a.load(b.id)->version, v);
  EXPECT_EQ(code_of([&] { a.update("nope", [](Batch&) {}); }), "UnknownBatch");
}

TEST_F(ArchiveTest, QcTrendPerRobot) {
  archive::Archive a(dir);
  for (int i = 0; i < 3; ++i) {
    Batch b = uploaded();
    b.id = fmt::format("RP00{}-X{}", i % 2 + 1, i);
    b.robot_id = fmt::format("RP00{}", i % 2 + 1);
    a.create_batch(b, "zip");
    auto r = fake_result(FakeRun{});
    r.manifest.robot_id = b.robot_id;
    r.manifest.start_time = Timestamp::parse_iso8601("2018-07-10T14:03:22Z") + 86400.0 * (3 - i);
    record_revision(b, r, kAnalyst, kNow);
    a.save(b);
  }
  auto all = a.qc_trend();
  EXPECT_EQ(all.size(), 6u);
  EXPECT_TRUE(std::is_sorted(all.begin(), all.end(),
                             [](const auto& x, const auto& y) { return x.timestamp < y.timestamp; }));
  auto one = a.qc_trend("RP001");
  ASSERT_EQ(one.size(), 4u);
  for (const auto& e : one) EXPECT_EQ(e.robot_id, "RP001");
  EXPECT_EQ(one.front().context, qc::Context::kPre);
  EXPECT_DOUBLE_EQ(one.front().efficiency_cps, 200.0);
}

TEST_F(ArchiveTest, UsersByToken) {
  archive::Archive a(dir);
  a.put_user(kPm, "tok-pm");
  auto u = a.user_by_token("tok-pm");
  ASSERT_TRUE(u);
  EXPECT_EQ(u->role, Role::kProgramManager);
  EXPECT_FALSE(a.user_by_token("nope"));
}

}  // namespace
}  // namespace pps::review
