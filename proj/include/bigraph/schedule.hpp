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
#include <unordered_map>
#include <vector>

#include "bigraph/error.hpp"
#include "bigraph/graph.hpp"
#include "bigraph/location.hpp"

namespace bigraph {

/// Event-driven readiness bookkeeping shared by the threaded dispatcher and
/// the virtual-time simulator.
///
/// A tensor is ready once its producer has completed (source tensors are
/// ready at start). An operator becomes ready when all of its input edges are
/// ready; repeated inputs count once per edge.
class ReadinessState {
 public:
  explicit ReadinessState(const BiGraph& graph) : graph_(&graph) { rearm(); }

  /// Starts a run and returns the operators ready immediately, in insertion order.
  std::vector<VertexId> begin() {
    if (running_) throw GraphError("readiness: run already in flight");
    running_ = true;
    std::vector<VertexId> ready;
    for (const auto& t : graph_->tensors()) {
      if (pending_producers_[graph_->tensor_index(t.id)] == 0) mark_tensor_ready(t.id, ready);
    }
    for (const auto& o : graph_->operators()) {
      if (o.inputs.empty()) ready.push_back(o.id);
    }
    return finish_batch(ready);
  }

  /// Records completion of `op` and returns operators that became ready as a
  /// consequence, in insertion order.
  std::vector<VertexId> complete(VertexId op) {
    const std::size_t idx = graph_->op_index(op);
    if (!running_) throw GraphError("readiness: complete() outside a run");
    if (!dispatched_[idx] || completed_[idx]) {
      throw GraphError("readiness: operator '" + graph_->op(op).name + "' completed twice or early");
    }
    completed_[idx] = true;
    ++completed_ops_;
    if (graph_->op(op).outputs.empty()) ++completed_sinks_;
    std::vector<VertexId> ready;
    for (auto t : graph_->op(op).outputs) {
      if (--pending_producers_[graph_->tensor_index(t)] == 0) mark_tensor_ready(t, ready);
    }
    auto out = finish_batch(ready);
    if (completed_ops_ == graph_->num_operators()) running_ = false;
    return out;
  }

  bool finished() const { return completed_ops_ == graph_->num_operators(); }
  bool running() const { return running_; }
  std::size_t completed_ops() const { return completed_ops_; }
  std::size_t completed_sinks() const { return completed_sinks_; }
  std::uint32_t pending_inputs(VertexId op) const { return pending_inputs_[graph_->op_index(op)]; }
  std::uint32_t pending_producers(VertexId t) const {
    return pending_producers_[graph_->tensor_index(t)];
  }

  /// Restores structural in-degrees. Not allowed while a run is in flight.
  void reset() {
    if (running_) throw GraphError("readiness: reset() called mid-run");
    rearm();
  }

  friend bool operator==(const ReadinessState& a, const ReadinessState& b) {
    return a.graph_ == b.graph_ && a.pending_inputs_ == b.pending_inputs_ &&
           a.pending_producers_ == b.pending_producers_ && a.dispatched_ == b.dispatched_ &&
           a.completed_ == b.completed_ && a.completed_ops_ == b.completed_ops_ &&
           a.completed_sinks_ == b.completed_sinks_ && a.running_ == b.running_;
  }

 private:
  void rearm() {
    const auto& g = *graph_;
    pending_inputs_.assign(g.num_operators(), 0);
    pending_producers_.assign(g.num_tensors(), 0);
    for (const auto& o : g.operators()) {
      pending_inputs_[g.op_index(o.id)] = static_cast<std::uint32_t>(o.inputs.size());
      for (auto t : o.outputs) ++pending_producers_[g.tensor_index(t)];
    }
    dispatched_.assign(g.num_operators(), false);
    completed_.assign(g.num_operators(), false);
    completed_ops_ = 0;
    completed_sinks_ = 0;
    running_ = false;
  }

  void mark_tensor_ready(VertexId t, std::vector<VertexId>& ready) {
    if (graph_->consumers(t).empty()) ++completed_sinks_;
    for (auto c : graph_->consumers(t)) {
      if (--pending_inputs_[graph_->op_index(c)] == 0) ready.push_back(c);
    }
  }

  std::vector<VertexId> finish_batch(std::vector<VertexId>& ready) {
    std::sort(ready.begin(), ready.end(), [&](VertexId a, VertexId b) {
      return graph_->op_index(a) < graph_->op_index(b);
    });
    for (auto id : ready) {
      auto idx = graph_->op_index(id);
      if (dispatched_[idx]) throw GraphError("readiness: double dispatch");
      dispatched_[idx] = true;
    }
    if (graph_->num_operators() == 0) running_ = false;
    return std::move(ready);
  }

  const BiGraph* graph_;
  std::vector<std::uint32_t> pending_inputs_;
  std::vector<std::uint32_t> pending_producers_;
  std::vector<bool> dispatched_;
  std::vector<bool> completed_;
  std::size_t completed_ops_ = 0;
  std::size_t completed_sinks_ = 0;
  bool running_ = false;
};

/// Distinct lanes of a graph, numbered by first appearance in insertion order.
struct LaneTable {
  std::vector<WorkerLane> lanes;
  std::vector<std::size_t> op_lane;  // by op index

  explicit LaneTable(const BiGraph& graph) {
    std::unordered_map<WorkerLane, std::size_t, WorkerLaneHash> index;
    op_lane.reserve(graph.num_operators());
    for (const auto& o : graph.operators()) {
      auto [it, inserted] = index.emplace(o.lane(), lanes.size());
      if (inserted) lanes.push_back(o.lane());
      op_lane.push_back(it->second);
    }
  }
};

}  // namespace bigraph
