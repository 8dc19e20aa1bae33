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

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bigraph/dispatcher.hpp"
#include "bigraph/error.hpp"
#include "bigraph/location.hpp"

namespace bigraph {

enum class LaneClass { kCompute, kCopy, kTransport, kOther };

using LaneClassifier = std::function<LaneClass(const WorkerLane&)>;

/// Threads at or above `copy_thread_base` are copy lanes; thread 0 on a
/// location listed in `compute_locations` is a compute lane.
inline LaneClassifier classify_by_thread(int copy_thread_base, std::set<Location> compute_locations) {
  return [=](const WorkerLane& lane) {
    if (lane.thread >= copy_thread_base) return LaneClass::kCopy;
    if (lane.thread == 0 && compute_locations.contains(lane.location())) return LaneClass::kCompute;
    return LaneClass::kOther;
  };
}

namespace detail {

using Interval = std::pair<std::int64_t, std::int64_t>;

inline std::vector<Interval> union_of(std::vector<Interval> iv) {
  std::sort(iv.begin(), iv.end());
  std::vector<Interval> out;
  for (const auto& [s, e] : iv) {
    if (e <= s) continue;
    if (!out.empty() && s <= out.back().second) {
      out.back().second = std::max(out.back().second, e);
    } else {
      out.emplace_back(s, e);
    }
  }
  return out;
}

inline std::int64_t covered(const std::vector<Interval>& merged, Interval x) {
  std::int64_t total = 0;
  auto it = std::upper_bound(merged.begin(), merged.end(), Interval{x.first, INT64_MAX});
  if (it != merged.begin()) --it;
  for (; it != merged.end() && it->first < x.second; ++it) {
    const auto lo = std::max(it->first, x.first);
    const auto hi = std::min(it->second, x.second);
    if (hi > lo) total += hi - lo;
  }
  return total;
}

}  // namespace detail

/// Share of communication time (copy and transport lanes) during which at
/// least one compute lane was busy.
inline double overlap_fraction(const std::vector<TraceRecord>& trace, const LaneClassifier& classes) {
  std::vector<detail::Interval> compute;
  std::vector<detail::Interval> comm;
  for (const auto& r : trace) {
    switch (classes(r.lane)) {
      case LaneClass::kCompute: compute.emplace_back(r.start, r.end); break;
      case LaneClass::kCopy:
      case LaneClass::kTransport: comm.emplace_back(r.start, r.end); break;
      case LaneClass::kOther: break;
    }
  }
  if (comm.empty()) throw RunError("profiler", "overlap_fraction: trace has no copy records");
  const auto merged = detail::union_of(std::move(compute));
  std::int64_t total = 0, hit = 0;
  for (const auto& c : comm) {
    total += std::max<std::int64_t>(0, c.second - c.first);
    hit += detail::covered(merged, c);
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

/// For each pair of consecutive iterations: first compute start of the later
/// one minus last compute end of the earlier one (ns, may be negative if
/// iterations overlap).
inline std::vector<std::int64_t> iteration_gap(const std::vector<TraceRecord>& trace,
                                               const LaneClassifier& classes) {
  std::map<std::uint64_t, std::pair<std::int64_t, std::int64_t>> span;  // iteration -> first start, last end
  for (const auto& r : trace) {
    if (classes(r.lane) != LaneClass::kCompute) continue;
    auto [it, fresh] = span.try_emplace(r.iteration, r.start, r.end);
    if (!fresh) {
      it->second.first = std::min(it->second.first, r.start);
      it->second.second = std::max(it->second.second, r.end);
    }
  }
  if (span.size() < 2) throw RunError("profiler", "iteration_gap: need compute records from >= 2 iterations");
  std::vector<std::int64_t> gaps;
  for (auto it = span.begin(); std::next(it) != span.end(); ++it) {
    gaps.push_back(std::next(it)->second.first - it->second.second);
  }
  return gaps;
}

/// Trace Event Format: complete events, microseconds truncated from ns.
/// Lanes are numbered by sorted (host, device, thread) as tids.
inline nlohmann::json trace_events(const std::vector<TraceRecord>& trace, int pid = 0) {
  std::set<WorkerLane> lanes;
  for (const auto& r : trace) lanes.insert(r.lane);
  std::map<WorkerLane, int> tid;
  for (const auto& l : lanes) tid.emplace(l, static_cast<int>(tid.size()));
  auto us = [](std::int64_t ns) { return ns >= 0 ? ns / 1000 : -((-ns + 999) / 1000); };
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : trace) {
    out.push_back({{"name", r.name},
                   {"ph", "X"},
                   {"ts", us(r.start)},
                   {"dur", us(r.end - r.start)},
                   {"pid", pid},
                   {"tid", tid.at(r.lane)},
                   {"args", {{"iteration", r.iteration}}}});
  }
  return out;
}

inline void export_trace(const std::vector<TraceRecord>& trace, const std::string& path, int pid = 0) {
  std::ofstream os(path);
  if (!os) throw RunError("profiler", "cannot open trace file '" + path + "'");
  os << trace_events(trace, pid).dump() << '\n';
  if (!os) throw RunError("profiler", "failed writing trace file '" + path + "'");
}

struct TraceEvent {
  std::string name;
  std::int64_t ts = 0;
  std::int64_t dur = 0;
  int pid = 0;
  int tid = 0;
  std::uint64_t iteration = 0;
};

/// Reads back a file written by export_trace.
inline std::vector<TraceEvent> parse_trace(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw RunError("profiler", "cannot open trace file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw RunError("profiler", std::string("trace file is not JSON: ") + e.what());
  }
  if (!j.is_array()) throw RunError("profiler", "trace file must hold an array");
  std::vector<TraceEvent> out;
  for (const auto& e : j) {
    if (e.value("ph", "") != "X") throw RunError("profiler", "unexpected event phase");
    out.push_back({e.at("name").get<std::string>(), e.at("ts").get<std::int64_t>(),
                   e.at("dur").get<std::int64_t>(), e.at("pid").get<int>(), e.at("tid").get<int>(),
                   e.at("args").at("iteration").get<std::uint64_t>()});
  }
  return out;
}

}  // namespace bigraph
