/* Copyright 2026 The bigraph Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "test_support.hpp"

namespace bigraph {
namespace {

const WorkerLane kCompute{"h", 0, 0};
const WorkerLane kCompute2{"h", 1, 0};
const WorkerLane kCopyLane{"h", 0, 2};

TraceRecord rec(const WorkerLane& lane, std::int64_t start, std::int64_t end, std::uint64_t it = 0,
                std::string name = "op") {
  TraceRecord r;
  r.name = std::move(name);
  r.lane = lane;
  r.start = start;
  r.end = end;
  r.iteration = it;
  return r;
}

LaneClassifier classes() { return classify_by_thread(2, {Location{"h", 0}, Location{"h", 1}}); }

TEST(Overlap, ContainmentDisjointPartial) {
  EXPECT_DOUBLE_EQ(overlap_fraction({rec(kCopyLane, 10, 20), rec(kCompute, 0, 100)}, classes()), 1.0);
  EXPECT_DOUBLE_EQ(overlap_fraction({rec(kCopyLane, 100, 110), rec(kCompute, 0, 50)}, classes()), 0.0);
  EXPECT_DOUBLE_EQ(overlap_fraction({rec(kCopyLane, 0, 10), rec(kCompute, 5, 30)}, classes()), 0.5);
}

TEST(Overlap, NoCopiesIsError) {
  EXPECT_THROW(overlap_fraction({rec(kCompute, 0, 5)}, classes()), RunError);
}

TEST(Overlap, UnionNotSumOfComputeIntervals) {
  // Two compute lanes covering the same stretch count once.
  const std::vector<TraceRecord> t = {rec(kCopyLane, 0, 100), rec(kCompute, 0, 50), rec(kCompute2, 0, 50)};
  EXPECT_DOUBLE_EQ(overlap_fraction(t, classes()), 0.5);
}

TEST(Overlap, Properties) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<TraceRecord> t;
    const int n = 1 + static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) {
      const std::int64_t s = static_cast<std::int64_t>(rng() % 1000);
      t.push_back(rec(rng() % 2 ? kCopyLane : kCompute, s, s + 1 + static_cast<std::int64_t>(rng() % 300)));
    }
    t.push_back(rec(kCopyLane, 0, 10));
    const double f = overlap_fraction(t, classes());
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
    // Translation.
    auto shifted = t;
    for (auto& r : shifted) {
      r.start += 12345;
      r.end += 12345;
    }
    EXPECT_DOUBLE_EQ(overlap_fraction(shifted, classes()), f);
    // Splitting a compute interval into abutting halves.
    auto split = t;
    for (std::size_t i = 0; i < split.size(); ++i) {
      if (split[i].lane == kCompute && split[i].end - split[i].start >= 2) {
        const auto mid = (split[i].start + split[i].end) / 2;
        auto second = split[i];
        second.start = mid;
        split[i].end = mid;
        split.push_back(second);
        break;
      }
    }
    EXPECT_DOUBLE_EQ(overlap_fraction(split, classes()), f);
    // Adding compute never lowers overlap.
    auto more = t;
    const std::int64_t s = static_cast<std::int64_t>(rng() % 1000);
    more.push_back(rec(kCompute2, s, s + 50));
    EXPECT_GE(overlap_fraction(more, classes()), f);
  }
}

TEST(Gap, BackToBackIsZero) {
  const std::vector<TraceRecord> t = {rec(kCompute, 0, 10, 0), rec(kCompute, 10, 20, 1)};
  EXPECT_EQ(iteration_gap(t, classes()), (std::vector<std::int64_t>{0}));
}

TEST(Gap, PerBoundary) {
  const std::vector<TraceRecord> t = {rec(kCompute, 0, 10, 0), rec(kCopyLane, 10, 17, 0),
                                      rec(kCompute, 17, 20, 1), rec(kCompute, 25, 30, 2)};
  EXPECT_EQ(iteration_gap(t, classes()), (std::vector<std::int64_t>{7, 5}));
}

TEST(Gap, NeedsTwoIterations) {
  EXPECT_THROW(iteration_gap({rec(kCompute, 0, 1, 0)}, classes()), RunError);
}

TEST(Gap, SerialModeGapCoversBoundaryCopies) {
  // One worker: copies between iterations cannot hide behind compute.
  ::setenv("PURINE_LANES", "1", 1);
  BiGraph g;
  const Location h0{"h", 0}, srv{"h", -1};
  g.add_tensor("x", {1}, h0);
  g.add_tensor("y", {1}, h0);
  g.add_tensor("y_srv", {1}, srv);
  g.add_op("compute", testing::kTouch, {"x"}, {"y"}, h0, 0, {{"delay_us", 2000}});
  g.add_op("ship", std::string(kinds::kCopy), {"y"}, {"y_srv"}, h0, 2, {{"delay_us", 3000}});
  TensorStore store = testing::sources_store(g);
  const auto reports = run_sequence(GraphSequence{{g}, 2}, store, testing::touch_registry());
  ::unsetenv("PURINE_LANES");
  const auto trace = flatten(reports);
  std::int64_t copy_ns = 0;
  for (const auto& r : trace) {
    if (r.name == "ship" && r.iteration == 0) copy_ns = r.end - r.start;
  }
  const auto gaps = iteration_gap(trace, classify_by_thread(2, {h0}));
  ASSERT_EQ(gaps.size(), 1u);
  EXPECT_GE(gaps[0], copy_ns);
  EXPECT_DOUBLE_EQ(overlap_fraction(trace, classify_by_thread(2, {h0})), 0.0);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("bigraph_" + std::to_string(::getpid()) + "_" + name)).string();
}

TEST(TraceExport, GoldenRecord) {
  TraceRecord r = rec(kCompute, 0, 1500, 0, "fc1");
  const auto j = trace_events({r});
  EXPECT_EQ(j.dump(), R"([{"args":{"iteration":0},"dur":1,"name":"fc1","ph":"X","pid":0,"tid":0,"ts":0}])");
}

TEST(TraceExport, EmptyTrace) {
  EXPECT_EQ(trace_events({}).dump(), "[]");
  const auto path = temp_path("empty.json");
  export_trace({}, path);
  EXPECT_TRUE(parse_trace(path).empty());
  std::filesystem::remove(path);
}

TEST(TraceExport, RoundTripPreservesRecords) {
  std::mt19937_64 rng(42);
  std::vector<TraceRecord> t;
  for (int i = 0; i < 100; ++i) {
    const std::int64_t s = static_cast<std::int64_t>(rng() % 1'000'000);
    t.push_back(rec(i % 3 ? kCompute : kCopyLane, s, s + static_cast<std::int64_t>(rng() % 90'000), i % 4,
                    "op" + std::to_string(i)));
  }
  const auto path = temp_path("trace.json");
  export_trace(t, path, 3);
  const auto back = parse_trace(path);
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(back[i].name, t[i].name);
    EXPECT_EQ(back[i].ts, t[i].start / 1000);
    EXPECT_GE(back[i].dur, 0);
    EXPECT_EQ(back[i].pid, 3);
    EXPECT_EQ(back[i].iteration, t[i].iteration);
    EXPECT_EQ(back[i].tid, t[i].lane == kCompute ? 0 : 1);
  }
  std::filesystem::remove(path);
}

TEST(TraceExport, UnwritablePath) {
  EXPECT_THROW(export_trace({}, "/nonexistent_dir/x/trace.json"), RunError);
}

}  // namespace
}  // namespace bigraph
