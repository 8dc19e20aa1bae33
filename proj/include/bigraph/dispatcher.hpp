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

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "bigraph/error.hpp"
#include "bigraph/graph.hpp"
#include "bigraph/registry.hpp"
#include "bigraph/schedule.hpp"
#include "bigraph/tensor.hpp"

namespace bigraph {

/// One operator execution interval. Times are nanoseconds from the run's epoch.
struct TraceRecord {
  VertexId op;
  std::string name;
  std::string kind;
  WorkerLane lane;
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::uint64_t iteration = 0;
  std::size_t graph_index = 0;
};

struct RunReport {
  std::vector<TraceRecord> trace;
  std::chrono::nanoseconds elapsed{0};
  std::uint64_t iteration = 0;
  std::size_t graph_index = 0;
};

struct RunOptions {
  std::uint64_t iteration = 0;
  std::size_t graph_index = 0;
  /// Upper bound on worker threads; 0 means PURINE_LANES or one per lane.
  std::size_t max_workers = 0;
  /// Time origin of trace records; defaults to the start of the run.
  std::optional<std::chrono::steady_clock::time_point> epoch;
  /// Extra latency for copies whose endpoints sit in different locations.
  std::chrono::microseconds copy_latency{0};
  /// Sleep for an operator's `delay_us` attr after its kernel returns.
  bool honor_delays = true;
  bool validate = true;
};

/// Worker cap from the PURINE_LANES environment variable (0 = uncapped).
inline std::size_t lanes_from_env() {
  const char* v = std::getenv("PURINE_LANES");
  if (v == nullptr || *v == '\0') return 0;
  char* end = nullptr;
  long n = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || n < 1) {
    throw ConfigError(std::string("PURINE_LANES must be a positive integer, got '") + v + "'");
  }
  return static_cast<std::size_t>(n);
}

/// Executes every operator of `graph` exactly once and returns after all
/// sinks are reached.
///
/// Each lane's operators run serially on one worker thread; distinct lanes
/// run concurrently (unless the worker cap folds several lanes onto one
/// worker). When an operator finishes, its outputs become ready and any
/// consumer whose inputs are all ready is queued on its lane, FIFO by
/// readiness with ties broken by insertion order. The first failure aborts
/// the run: operators already executing finish, queued ones are dropped, and
/// the error is rethrown as RunError naming the operator.
inline RunReport run(const BiGraph& graph, TensorStore& store, const OperatorRegistry& registry,
                     const RunOptions& opts = {}) {
  using Clock = std::chrono::steady_clock;
  if (opts.validate) {
    auto report = validate(graph);
    if (!report.ok) throw GraphError("run: invalid graph: " + report.violations.front());
  }

  const std::size_t n_ops = graph.num_operators();
  std::vector<const KernelFn*> fns(n_ops);
  for (const auto& o : graph.operators()) {
    fns[graph.op_index(o.id)] = registry.find(o.kind);
    if (!fns[graph.op_index(o.id)]) throw RunError(o.name, "unknown operator kind '" + o.kind + "'");
  }

  std::vector<Tensor*> slot(graph.num_tensors());
  for (const auto& t : graph.tensors()) {
    Tensor* p = store.find(t.name);
    if (p == nullptr) {
      if (!graph.producer(t.id) && !graph.consumers(t.id).empty()) {
        throw GraphError("run: source tensor '" + t.name + "' has no buffer in the store");
      }
      p = &store.set(t.name, Tensor(t.shape));
    } else if (p->shape() != t.shape) {
      throw GraphError("run: store tensor '" + t.name + "' has shape " + shape_str(p->shape()) +
                       ", graph expects " + shape_str(t.shape));
    }
    slot[graph.tensor_index(t.id)] = p;
  }
  std::vector<std::vector<Tensor*>> in_ptrs(n_ops), out_ptrs(n_ops);
  for (const auto& o : graph.operators()) {
    const auto i = graph.op_index(o.id);
    for (auto t : o.inputs) in_ptrs[i].push_back(slot[graph.tensor_index(t)]);
    for (auto t : o.outputs) out_ptrs[i].push_back(slot[graph.tensor_index(t)]);
  }

  const auto run_start = Clock::now();
  const auto epoch = opts.epoch.value_or(run_start);
  RunReport result;
  result.iteration = opts.iteration;
  result.graph_index = opts.graph_index;
  if (n_ops == 0) return result;

  LaneTable lanes(graph);
  std::size_t cap = opts.max_workers != 0 ? opts.max_workers : lanes_from_env();
  const std::size_t n_workers = cap == 0 ? lanes.lanes.size() : std::min(cap, lanes.lanes.size());
  auto worker_of = [&](std::size_t op_idx) { return lanes.op_lane[op_idx] % n_workers; };

  std::mutex mu;
  std::condition_variable cv;
  std::vector<std::deque<std::size_t>> queues(n_workers);
  std::size_t remaining = n_ops;
  bool aborted = false;
  std::exception_ptr error;
  ReadinessState state(graph);
  result.trace.reserve(n_ops);

  for (auto id : state.begin()) {
    const auto i = graph.op_index(id);
    queues[worker_of(i)].push_back(i);
  }

  auto since_epoch = [&](Clock::time_point t) {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(t - epoch).count();
  };

  auto worker = [&](std::size_t w) {
    std::unique_lock lock(mu);
    for (;;) {
      cv.wait(lock, [&] { return aborted || remaining == 0 || !queues[w].empty(); });
      if (aborted || remaining == 0) return;
      const std::size_t i = queues[w].front();
      queues[w].pop_front();
      lock.unlock();

      const auto& o = graph.operators()[i];
      std::exception_ptr failure;
      const auto t0 = Clock::now();
      try {
        KernelContext ctx{o, in_ptrs[i], out_ptrs[i], opts.iteration};
        (*fns[i])(ctx);
        if (opts.copy_latency.count() > 0 && o.kind == kinds::kCopy &&
            graph.tensor(o.inputs[0]).location != graph.tensor(o.outputs[0]).location) {
          std::this_thread::sleep_for(opts.copy_latency);
        }
        if (opts.honor_delays) {
          if (auto d = ctx.attr<std::int64_t>("delay_us", 0); d > 0) {
            std::this_thread::sleep_for(std::chrono::microseconds(d));
          }
        }
      } catch (const std::exception& e) {
        failure = std::make_exception_ptr(RunError(o.name, e.what()));
      } catch (...) {
        failure = std::make_exception_ptr(RunError(o.name, "unknown exception"));
      }
      auto t1 = Clock::now();
      while (t1 <= t0) t1 = Clock::now();

      lock.lock();
      result.trace.push_back(
          {o.id, o.name, o.kind, o.lane(), since_epoch(t0), since_epoch(t1), opts.iteration,
           opts.graph_index});
      if (failure) {
        if (!error) error = failure;
        aborted = true;
        cv.notify_all();
        continue;
      }
      for (auto next : state.complete(o.id)) {
        const auto j = graph.op_index(next);
        queues[worker_of(j)].push_back(j);
      }
      --remaining;
      cv.notify_all();
    }
  };

  {
    std::vector<std::jthread> threads;
    threads.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker, w);
  }
  result.elapsed = Clock::now() - run_start;
  if (error) std::rethrow_exception(error);
  return result;
}

using IterationHook = std::function<void(std::uint64_t iteration, TensorStore& store)>;

/// Runs the graphs of `seq` in order, `seq.iterations` times. Each run is a
/// synchronization point: graph i+1 starts only after every sink of graph i
/// is reached. `before_iteration` runs ahead of each iteration (data feeding).
/// All trace records share the sequence start as their epoch.
inline std::vector<RunReport> run_sequence(const GraphSequence& seq, TensorStore& store,
                                           const OperatorRegistry& registry, RunOptions opts = {},
                                           const IterationHook& before_iteration = {}) {
  for (std::size_t g = 0; g < seq.graphs.size(); ++g) {
    auto report = validate(seq.graphs[g]);
    if (!report.ok) {
      throw GraphError("run_sequence: graph " + std::to_string(g) +
                       " is invalid: " + report.violations.front());
    }
  }
  if (!opts.epoch) opts.epoch = std::chrono::steady_clock::now();
  opts.validate = false;
  std::vector<RunReport> reports;
  reports.reserve(seq.graphs.size() * seq.iterations);
  for (std::uint64_t it = 0; it < seq.iterations; ++it) {
    if (before_iteration) before_iteration(it, store);
    for (std::size_t g = 0; g < seq.graphs.size(); ++g) {
      opts.iteration = it;
      opts.graph_index = g;
      reports.push_back(run(seq.graphs[g], store, registry, opts));
    }
  }
  return reports;
}

/// All records of a set of reports, concatenated.
inline std::vector<TraceRecord> flatten(const std::vector<RunReport>& reports) {
  std::vector<TraceRecord> all;
  for (const auto& r : reports) all.insert(all.end(), r.trace.begin(), r.trace.end());
  return all;
}

}  // namespace bigraph
