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

#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bigraph/dispatcher.hpp"
#include "bigraph/error.hpp"
#include "bigraph/graph.hpp"
#include "bigraph/kinds.hpp"
#include "bigraph/schedule.hpp"

namespace bigraph {

/// Virtual seconds for one execution of `op`.
using CostFn = std::function<double(const OperatorVertex& op, const BiGraph& graph)>;

struct CostModel {
  std::map<std::string, CostFn> by_kind;
  std::map<std::string, double> by_name;  // per-operator overrides
  /// Use an operator's `delay_us` attr (as seconds) when present.
  bool injected_delays = false;
  /// Copies, sends and receives cost latency + bytes / bandwidth when > 0.
  double bandwidth = 0.0;  // bytes per virtual second
  double latency = 0.0;
  double per_image_compute = 0.0;  // a
  double overhead = 0.0;           // c, per iteration

  static CostFn constant(double seconds) {
    return [seconds](const OperatorVertex&, const BiGraph&) { return seconds; };
  }

  double cost(const OperatorVertex& op, const BiGraph& graph) const {
    double d = -1.0;
    if (auto it = by_name.find(op.name); it != by_name.end()) {
      d = it->second;
    } else if (injected_delays && op.attrs.contains("delay_us")) {
      d = op.attrs.at("delay_us").get<double>() * 1e-6;
    } else if (bandwidth > 0.0 && (op.kind == kinds::kCopy || op.kind == kinds::kSend ||
                                   op.kind == kinds::kRecv)) {
      const auto t = op.inputs.empty() ? op.outputs.front() : op.inputs.front();
      d = latency + 4.0 * static_cast<double>(num_elements(graph.tensor(t).shape)) / bandwidth;
    } else if (auto k = by_kind.find(op.kind); k != by_kind.end()) {
      d = k->second(op, graph);
    } else if (injected_delays) {
      d = 0.0;
    } else {
      throw RunError(op.name, "cost model has no entry for kind '" + op.kind + "'");
    }
    if (!(d >= 0.0) || !std::isfinite(d)) {
      throw RunError(op.name, "cost model returned invalid duration " + std::to_string(d));
    }
    return d;
  }
};

struct SimOptions {
  std::optional<std::uint64_t> iterations;  // overrides GraphSequence::iterations
  double images_per_iteration = 0.0;
};

struct SimReport {
  double makespan = 0.0;  // virtual seconds
  std::vector<TraceRecord> trace;  // virtual nanoseconds
  double throughput = 0.0;  // images per virtual second, 0 if images unknown
  std::vector<double> iteration_times;
};

namespace detail {

inline std::int64_t to_ns(double s) { return std::llround(s * 1e9); }

// Runs one graph starting at virtual time `t0`; returns the finish time.
inline double simulate_graph(const BiGraph& graph, const CostModel& costs, double t0,
                             std::uint64_t iteration, std::size_t graph_index,
                             std::vector<TraceRecord>& trace) {
  ReadinessState state(graph);
  LaneTable lanes(graph);
  std::vector<std::deque<VertexId>> queue(lanes.lanes.size());
  std::vector<bool> busy(lanes.lanes.size(), false);
  using Event = std::pair<double, std::size_t>;  // (end time, op index)
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
  std::vector<double> started(graph.num_operators(), 0.0);
  double now = t0;
  double finish = t0;

  auto enqueue = [&](const std::vector<VertexId>& ready) {
    for (auto id : ready) queue[lanes.op_lane[graph.op_index(id)]].push_back(id);
  };
  auto start_idle = [&] {
    for (std::size_t l = 0; l < queue.size(); ++l) {
      if (busy[l] || queue[l].empty()) continue;
      const auto id = queue[l].front();
      queue[l].pop_front();
      const auto idx = graph.op_index(id);
      busy[l] = true;
      started[idx] = now;
      events.emplace(now + costs.cost(graph.op(id), graph), idx);
    }
  };

  enqueue(state.begin());
  start_idle();
  while (!events.empty()) {
    auto [t, idx] = events.top();
    events.pop();
    now = t;
    finish = std::max(finish, t);
    const auto& op = graph.operators()[idx];
    busy[lanes.op_lane[idx]] = false;
    trace.push_back({op.id, op.name, op.kind, op.lane(), to_ns(started[idx]), to_ns(t), iteration,
                     graph_index});
    enqueue(state.complete(op.id));
    start_idle();
  }
  if (!state.finished()) throw RunError("simulate", "simulation stalled before all operators ran");
  return finish;
}

}  // namespace detail

/// Discrete-event execution in virtual time with the dispatcher's readiness
/// and lane rules. Each graph of each iteration starts when the previous one
/// has finished; `overhead` is added once per iteration.
inline SimReport simulate(const GraphSequence& seq, const CostModel& costs, const SimOptions& opts = {}) {
  for (std::size_t g = 0; g < seq.graphs.size(); ++g) {
    auto report = validate(seq.graphs[g]);
    if (!report.ok) {
      throw GraphError("simulate: graph " + std::to_string(g) + " is invalid: " + report.violations.front());
    }
  }
  SimReport out;
  const std::uint64_t iterations = opts.iterations.value_or(seq.iterations);
  double t = 0.0;
  for (std::uint64_t it = 0; it < iterations; ++it) {
    const double begin = t;
    for (std::size_t g = 0; g < seq.graphs.size(); ++g) {
      t = detail::simulate_graph(seq.graphs[g], costs, t, it, g, out.trace);
    }
    t += costs.overhead;
    out.iteration_times.push_back(t - begin);
  }
  out.makespan = t;
  if (opts.images_per_iteration > 0.0 && t > 0.0) {
    out.throughput = opts.images_per_iteration * static_cast<double>(iterations) / t;
  }
  return out;
}

inline SimReport simulate(const BiGraph& graph, const CostModel& costs, const SimOptions& opts = {}) {
  GraphSequence seq;
  seq.graphs.push_back(graph);
  return simulate(seq, costs, opts);
}

/// Images per second for `peers` peers of `batch` images each, when per-image
/// compute `a` runs in parallel and only `c` per iteration is not overlapped.
inline double throughput_model(std::size_t peers, std::size_t batch, double a, double c) {
  if (peers < 1 || batch < 1 || !(a > 0.0) || c < 0.0) {
    throw ConfigError("throughput_model: need peers >= 1, batch >= 1, a > 0, c >= 0");
  }
  const double b = static_cast<double>(batch);
  return static_cast<double>(peers) * b / (a * b + c);
}

/// Speedup of `peers` peers at `batch` over one peer at `reference_batch`.
inline double acceleration_ratio(std::size_t peers, std::size_t batch, std::size_t reference_batch,
                                 double a, double c) {
  return throughput_model(peers, batch, a, c) / throughput_model(1, reference_batch, a, c);
}

struct FitPoint {
  std::size_t batch = 0;
  double images_per_sec = 0.0;
};

struct FitResult {
  double a = 0.0;
  double c = 0.0;
  std::size_t reference_batch = 0;  // largest batch in the table
  /// (predicted - measured) / measured for every row, in table order.
  std::vector<double> residuals;
};

/// Solves a*B + c = N*B/T exactly on the smallest and largest batch rows.
inline FitResult fit_two_point(const std::vector<FitPoint>& table, std::size_t peers) {
  if (table.size() < 2) throw ConfigError("fit: need at least two rows");
  if (peers < 1) throw ConfigError("fit: peers must be >= 1");
  std::map<std::size_t, double> rows;
  for (const auto& p : table) {
    if (p.batch < 1 || !(p.images_per_sec > 0.0)) throw ConfigError("fit: rows need batch >= 1 and positive rate");
    if (!rows.emplace(p.batch, p.images_per_sec).second) {
      throw ConfigError("fit: duplicate batch " + std::to_string(p.batch));
    }
  }
  const auto lo = *rows.begin();
  const auto hi = *rows.rbegin();
  const double n = static_cast<double>(peers);
  auto time_per_iter = [&](const std::pair<const std::size_t, double>& r) {
    return n * static_cast<double>(r.first) / r.second;
  };
  FitResult fit;
  fit.a = (time_per_iter(hi) - time_per_iter(lo)) / static_cast<double>(hi.first - lo.first);
  fit.c = time_per_iter(lo) - fit.a * static_cast<double>(lo.first);
  fit.reference_batch = hi.first;
  if (!(fit.a > 0.0) || fit.c < 0.0) {
    throw ConfigError("fit: table implies a <= 0 or c < 0");
  }
  for (const auto& p : table) {
    fit.residuals.push_back(throughput_model(peers, p.batch, fit.a, fit.c) / p.images_per_sec - 1.0);
  }
  return fit;
}

/// Rows `batch,images_per_sec`; blank lines, `#` comments and a
/// non-numeric header row are skipped.
inline std::vector<FitPoint> read_fit_table(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open fit table '" + path + "'");
  std::vector<FitPoint> rows;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const bool header_allowed = std::exchange(first, false);
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'B,rate'");
    try {
      std::size_t used = 0;
      const long long b = std::stoll(line.substr(0, comma), &used);
      const double rate = std::stod(line.substr(comma + 1));
      if (b < 1) throw ConfigError(path + ":" + std::to_string(lineno) + ": batch must be >= 1");
      rows.push_back({static_cast<std::size_t>(b), rate});
    } catch (const std::logic_error&) {
      if (header_allowed) continue;  // header
      throw ConfigError(path + ":" + std::to_string(lineno) + ": not a number");
    }
  }
  return rows;
}

}  // namespace bigraph
