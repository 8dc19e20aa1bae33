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
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bigraph/error.hpp"
#include "bigraph/kinds.hpp"
#include "bigraph/location.hpp"

namespace bigraph {

using Shape = std::vector<std::size_t>;

inline std::size_t num_elements(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Graph-local vertex handle. Tensors and operators draw from one id space.
struct VertexId {
  std::uint32_t value = 0;
  friend auto operator<=>(const VertexId&, const VertexId&) = default;
};

struct TensorVertex {
  VertexId id;
  std::string name;
  Shape shape;
  Location location;
};

struct OperatorVertex {
  VertexId id;
  std::string name;
  std::string kind;
  std::vector<VertexId> inputs;
  std::vector<VertexId> outputs;
  Location location;
  int thread = 0;
  nlohmann::json attrs = nlohmann::json::object();

  WorkerLane lane() const { return WorkerLane(location, thread); }
};

struct ValidationReport {
  std::vector<VertexId> sources;
  std::vector<VertexId> sinks;
  bool ok = true;
  std::vector<std::string> violations;
};

/// Directed bipartite graph of tensor and operator vertices.
///
/// Edges only ever run tensor -> operator (an input) or operator -> tensor
/// (an output), so bipartiteness holds by construction. Every mutation keeps
/// the graph acyclic and each tensor produced by at most one operator; a
/// rejected mutation leaves the graph untouched.
class BiGraph {
 public:
  VertexId add_tensor(std::string name, Shape shape, Location location) {
    if (tensor_names_.contains(name)) throw GraphError("duplicate tensor name '" + name + "'");
    if (shape.empty() || shape.size() > 4) {
      throw GraphError("tensor '" + name + "': shape must have 1-4 dimensions, got " +
                       shape_str(shape));
    }
    for (auto d : shape) {
      if (d < 1) throw GraphError("tensor '" + name + "': invalid shape " + shape_str(shape));
    }
    location.check();
    VertexId id{static_cast<std::uint32_t>(slots_.size())};
    slots_.push_back({true, static_cast<std::uint32_t>(tensors_.size())});
    tensor_names_.emplace(name, id);
    tensors_.push_back({id, std::move(name), std::move(shape), std::move(location)});
    producer_.emplace_back();
    consumers_.emplace_back();
    return id;
  }

  VertexId add_operator(std::string name, std::string kind, std::vector<VertexId> inputs,
                        std::vector<VertexId> outputs, Location location, int thread = 0,
                        nlohmann::json attrs = nlohmann::json::object()) {
    auto fail = [&](const std::string& why) -> GraphError {
      return GraphError("operator '" + name + "' (" + kind + "): " + why);
    };
    if (op_names_.contains(name)) throw GraphError("duplicate operator name '" + name + "'");
    if (kind.empty()) throw fail("empty kind");
    if (thread < 0) throw fail("thread must be >= 0");
    location.check();
    for (auto id : inputs) {
      if (!is_tensor(id)) throw fail("unknown tensor id " + std::to_string(id.value));
    }
    for (auto id : outputs) {
      if (!is_tensor(id)) throw fail("unknown tensor id " + std::to_string(id.value));
    }
    if (auto arity = builtin_arity(kind); arity && !arity->accepts(inputs.size(), outputs.size())) {
      throw fail("arity mismatch: got " + std::to_string(inputs.size()) + " inputs, " +
                 std::to_string(outputs.size()) + " outputs");
    }
    std::set<VertexId> out_set(outputs.begin(), outputs.end());
    if (out_set.size() != outputs.size()) throw fail("duplicate output tensor");
    for (auto id : inputs) {
      if (out_set.contains(id)) {
        throw fail("tensor '" + tensor(id).name + "' is both input and output");
      }
    }
    if (kind == kinds::kCopy) {
      if (tensor(inputs[0]).shape != tensor(outputs[0]).shape) {
        throw fail("copy shape mismatch " + shape_str(tensor(inputs[0]).shape) + " vs " +
                   shape_str(tensor(outputs[0]).shape));
      }
    } else {
      for (const auto* ids : {&inputs, &outputs}) {
        for (auto id : *ids) {
          if (tensor(id).location != location) {
            throw fail("location mismatch: tensor '" + tensor(id).name + "' is on " +
                       tensor(id).location.str() + ", operator on " + location.str());
          }
        }
      }
    }
    for (auto id : outputs) {
      if (auto p = producer(id)) {
        throw fail("tensor '" + tensor(id).name + "' already produced by '" + op(*p).name + "'");
      }
    }
    if (auto cycle = find_cycle(name, inputs, outputs)) throw fail("cycle: " + *cycle);

    VertexId id{static_cast<std::uint32_t>(slots_.size())};
    slots_.push_back({false, static_cast<std::uint32_t>(ops_.size())});
    op_names_.emplace(name, id);
    for (auto t : inputs) consumers_[slots_[t.value].index].push_back(id);
    for (auto t : outputs) producer_[slots_[t.value].index] = id;
    if (attrs.is_null()) attrs = nlohmann::json::object();
    ops_.push_back({id, std::move(name), std::move(kind), std::move(inputs), std::move(outputs),
                    std::move(location), thread, std::move(attrs)});
    return id;
  }

  /// Name-based convenience over add_operator.
  VertexId add_op(std::string name, std::string kind, const std::vector<std::string>& inputs,
                  const std::vector<std::string>& outputs, Location location, int thread = 0,
                  nlohmann::json attrs = nlohmann::json::object()) {
    auto resolve = [&](const std::vector<std::string>& names) {
      std::vector<VertexId> ids;
      ids.reserve(names.size());
      for (const auto& n : names) {
        auto id = find_tensor(n);
        if (!id) throw GraphError("operator '" + name + "': unknown tensor '" + n + "'");
        ids.push_back(*id);
      }
      return ids;
    };
    return add_operator(std::move(name), std::move(kind), resolve(inputs), resolve(outputs),
                        std::move(location), thread, std::move(attrs));
  }

  /// Merges `patch` into an operator's attrs (builders use this to inject costs).
  void update_attrs(VertexId id, const nlohmann::json& patch) {
    if (!is_operator(id)) throw GraphError("update_attrs: not an operator");
    ops_[slots_[id.value].index].attrs.update(patch);
  }

  bool contains(VertexId id) const { return id.value < slots_.size(); }
  bool is_tensor(VertexId id) const { return contains(id) && slots_[id.value].is_tensor; }
  bool is_operator(VertexId id) const { return contains(id) && !slots_[id.value].is_tensor; }

  const TensorVertex& tensor(VertexId id) const {
    if (!is_tensor(id)) throw GraphError("not a tensor id: " + std::to_string(id.value));
    return tensors_[slots_[id.value].index];
  }
  const TensorVertex& tensor(std::string_view name) const {
    auto id = find_tensor(name);
    if (!id) throw GraphError("unknown tensor '" + std::string(name) + "'");
    return tensor(*id);
  }
  const OperatorVertex& op(VertexId id) const {
    if (!is_operator(id)) throw GraphError("not an operator id: " + std::to_string(id.value));
    return ops_[slots_[id.value].index];
  }
  const OperatorVertex& op(std::string_view name) const {
    auto id = find_operator(name);
    if (!id) throw GraphError("unknown operator '" + std::string(name) + "'");
    return op(*id);
  }

  std::optional<VertexId> find_tensor(std::string_view name) const {
    auto it = tensor_names_.find(std::string(name));
    if (it == tensor_names_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<VertexId> find_operator(std::string_view name) const {
    auto it = op_names_.find(std::string(name));
    if (it == op_names_.end()) return std::nullopt;
    return it->second;
  }

  /// Tensors in creation order.
  std::span<const TensorVertex> tensors() const { return tensors_; }
  /// Operators in insertion order.
  std::span<const OperatorVertex> operators() const { return ops_; }

  std::vector<VertexId> insertion_order() const {
    std::vector<VertexId> ids;
    ids.reserve(ops_.size());
    for (const auto& o : ops_) ids.push_back(o.id);
    return ids;
  }

  /// Position of an operator in insertion order; dense in [0, num_operators()).
  std::size_t op_index(VertexId id) const {
    if (!is_operator(id)) throw GraphError("not an operator id: " + std::to_string(id.value));
    return slots_[id.value].index;
  }
  /// Position of a tensor in creation order; dense in [0, num_tensors()).
  std::size_t tensor_index(VertexId id) const {
    if (!is_tensor(id)) throw GraphError("not a tensor id: " + std::to_string(id.value));
    return slots_[id.value].index;
  }

  std::optional<VertexId> producer(VertexId tensor_id) const {
    return producer_[tensor_index(tensor_id)];
  }
  /// Consuming operators, one entry per edge (an operator reading a tensor
  /// twice appears twice).
  const std::vector<VertexId>& consumers(VertexId tensor_id) const {
    return consumers_[tensor_index(tensor_id)];
  }

  std::size_t num_tensors() const { return tensors_.size(); }
  std::size_t num_operators() const { return ops_.size(); }
  std::size_t num_vertices() const { return slots_.size(); }
  bool empty() const { return slots_.empty(); }

  /// Kahn's algorithm over operators with insertion-order tie breaking.
  /// Returns nullopt if the operator dependency relation has a cycle.
  std::optional<std::vector<VertexId>> topological_order() const {
    std::vector<std::size_t> indegree(ops_.size(), 0);
    for (const auto& o : ops_) {
      for (auto t : o.inputs) {
        if (producer(t)) ++indegree[slots_[o.id.value].index];
      }
    }
    std::set<std::size_t> ready;
    for (std::size_t i = 0; i < ops_.size(); ++i) {
      if (indegree[i] == 0) ready.insert(i);
    }
    std::vector<VertexId> order;
    while (!ready.empty()) {
      std::size_t i = *ready.begin();
      ready.erase(ready.begin());
      order.push_back(ops_[i].id);
      for (auto t : ops_[i].outputs) {
        for (auto c : consumers(t)) {
          if (--indegree[slots_[c.value].index] == 0) ready.insert(slots_[c.value].index);
        }
      }
    }
    if (order.size() != ops_.size()) return std::nullopt;
    return order;
  }

 private:
  struct Slot {
    bool is_tensor;
    std::uint32_t index;
  };

  // Adding an operator reading `inputs` and writing `outputs` closes a cycle
  // iff some output already reaches some input. Returns the cycle as text.
  std::optional<std::string> find_cycle(const std::string& name,
                                        const std::vector<VertexId>& inputs,
                                        const std::vector<VertexId>& outputs) const {
    std::set<VertexId> targets(inputs.begin(), inputs.end());
    std::map<VertexId, VertexId> came_from;  // tensor -> operator, operator -> tensor
    std::vector<VertexId> stack;
    std::set<VertexId> seen;
    for (auto o : outputs) {
      stack.push_back(o);
      seen.insert(o);
    }
    while (!stack.empty()) {
      VertexId t = stack.back();
      stack.pop_back();
      if (targets.contains(t)) {
        std::vector<std::string> path{tensor(t).name};
        VertexId cur = t;
        while (came_from.contains(cur)) {
          cur = came_from.at(cur);
          path.push_back(is_tensor(cur) ? tensor(cur).name : op(cur).name);
        }
        std::string text = name;
        for (auto it = path.rbegin(); it != path.rend(); ++it) text += " -> " + *it;
        return text + " -> " + name;
      }
      for (auto c : consumers(t)) {
        if (!seen.insert(c).second) continue;
        came_from[c] = t;
        for (auto next : op(c).outputs) {
          if (!seen.insert(next).second) continue;
          came_from[next] = c;
          stack.push_back(next);
        }
      }
    }
    return std::nullopt;
  }

  std::vector<Slot> slots_;
  std::vector<TensorVertex> tensors_;
  std::vector<OperatorVertex> ops_;
  std::vector<std::optional<VertexId>> producer_;
  std::vector<std::vector<VertexId>> consumers_;
  std::unordered_map<std::string, VertexId> tensor_names_;
  std::unordered_map<std::string, VertexId> op_names_;
};

/// Graphs executed in order, `iterations` times, against one shared tensor
/// store. Tensors are matched across graphs by name.
struct GraphSequence {
  std::vector<BiGraph> graphs;
  std::size_t iterations = 1;
};

/// Recomputes every structural invariant from scratch and lists sources
/// (no in-edges) and sinks (no out-edges) in id order.
inline ValidationReport validate(const BiGraph& graph) {
  ValidationReport report;
  auto violate = [&](std::string v) {
    report.ok = false;
    report.violations.push_back(std::move(v));
  };
  std::set<std::string> tensor_names;
  for (const auto& t : graph.tensors()) {
    if (!tensor_names.insert(t.name).second) violate("duplicate tensor name '" + t.name + "'");
    if (t.shape.empty() || t.shape.size() > 4 ||
        std::any_of(t.shape.begin(), t.shape.end(), [](auto d) { return d < 1; })) {
      violate("tensor '" + t.name + "' has invalid shape " + shape_str(t.shape));
    }
    if (t.location.host.empty() || t.location.device < -1) {
      violate("tensor '" + t.name + "' has invalid location");
    }
  }
  std::vector<int> producers(graph.num_tensors(), 0);
  std::set<std::string> op_names;
  for (const auto& o : graph.operators()) {
    if (!op_names.insert(o.name).second) violate("duplicate operator name '" + o.name + "'");
    bool refs_ok = true;
    for (const auto* ids : {&o.inputs, &o.outputs}) {
      for (auto id : *ids) {
        if (!graph.is_tensor(id)) {
          violate("operator '" + o.name + "' references unknown tensor");
          refs_ok = false;
        }
      }
    }
    if (!refs_ok) continue;
    for (auto id : o.outputs) ++producers[graph.tensor_index(id)];
    for (auto in : o.inputs) {
      if (std::find(o.outputs.begin(), o.outputs.end(), in) != o.outputs.end()) {
        violate("operator '" + o.name + "' reads and writes '" + graph.tensor(in).name + "'");
      }
    }
    if (auto arity = builtin_arity(o.kind);
        arity && !arity->accepts(o.inputs.size(), o.outputs.size())) {
      violate("operator '" + o.name + "' has wrong arity for kind " + o.kind);
    }
    if (o.kind == kinds::kCopy) {
      if (o.inputs.size() == 1 && o.outputs.size() == 1 &&
          graph.tensor(o.inputs[0]).shape != graph.tensor(o.outputs[0]).shape) {
        violate("copy '" + o.name + "' has mismatched shapes");
      }
    } else {
      for (const auto* ids : {&o.inputs, &o.outputs}) {
        for (auto id : *ids) {
          if (graph.tensor(id).location != o.location) {
            violate("operator '" + o.name + "' is not co-located with '" +
                    graph.tensor(id).name + "'");
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < producers.size(); ++i) {
    if (producers[i] > 1) {
      violate("tensor '" + graph.tensors()[i].name + "' has " + std::to_string(producers[i]) +
              " producers");
    }
  }
  if (!graph.topological_order()) violate("graph contains a cycle");

  for (VertexId id{0}; id.value < graph.num_vertices(); ++id.value) {
    if (graph.is_tensor(id)) {
      if (!graph.producer(id)) report.sources.push_back(id);
      if (graph.consumers(id).empty()) report.sinks.push_back(id);
    } else {
      const auto& o = graph.op(id);
      if (o.inputs.empty()) report.sources.push_back(id);
      if (o.outputs.empty()) report.sinks.push_back(id);
    }
  }
  return report;
}

namespace detail {

inline std::string vertex_name(const BiGraph& g, VertexId id) {
  return g.is_tensor(id) ? g.tensor(id).name : g.op(id).name;
}

// Copies `src` into `dst`, renaming tensors through `tensor_name` (which may
// map two source tensors onto one destination tensor) and operators through
// `op_name`. Tensors whose mapped name already exists in `dst` are reused.
template <typename TensorRename, typename OpRename>
void append_graph(BiGraph& dst, const BiGraph& src, TensorRename tensor_name, OpRename op_name) {
  for (const auto& t : src.tensors()) {
    std::string name = tensor_name(t.name);
    if (auto existing = dst.find_tensor(name)) {
      const auto& e = dst.tensor(*existing);
      if (e.shape != t.shape) {
        throw GraphError("binding '" + name + "' <-> '" + t.name + "': shape mismatch " +
                         shape_str(e.shape) + " vs " + shape_str(t.shape));
      }
      if (e.location != t.location) {
        throw GraphError("binding '" + name + "' <-> '" + t.name + "': location mismatch " +
                         e.location.str() + " vs " + t.location.str());
      }
      continue;
    }
    dst.add_tensor(name, t.shape, t.location);
  }
  for (const auto& o : src.operators()) {
    std::vector<std::string> in, out;
    for (auto id : o.inputs) in.push_back(tensor_name(src.tensor(id).name));
    for (auto id : o.outputs) out.push_back(tensor_name(src.tensor(id).name));
    dst.add_op(op_name(o.name), o.kind, in, out, o.location, o.thread, o.attrs);
  }
}

inline std::string unique_name(const std::string& base, const std::set<std::string>& taken) {
  std::string name = base;
  while (taken.contains(name)) name += "'";
  return name;
}

}  // namespace detail

/// Union of two graphs. Each `bind` entry (name in `a` -> name in `b`) fuses
/// the two tensors into one vertex named as in `a`; the pair must agree on
/// shape and location. Unbound names of `b` that collide with names in `a`
/// are suffixed with `'` until unique.
inline BiGraph merge(const BiGraph& a, const BiGraph& b,
                     const std::map<std::string, std::string>& bind = {}) {
  std::map<std::string, std::string> b_to_a;
  for (const auto& [an, bn] : bind) {
    if (!a.find_tensor(an)) throw GraphError("merge: unknown tensor '" + an + "' in first graph");
    if (!b.find_tensor(bn)) throw GraphError("merge: unknown tensor '" + bn + "' in second graph");
    if (!b_to_a.emplace(bn, an).second) throw GraphError("merge: '" + bn + "' bound twice");
  }
  std::set<std::string> taken_tensors, taken_ops;
  for (const auto& t : a.tensors()) taken_tensors.insert(t.name);
  for (const auto& o : a.operators()) taken_ops.insert(o.name);

  std::map<std::string, std::string> tensor_rename;
  for (const auto& t : b.tensors()) {
    if (auto it = b_to_a.find(t.name); it != b_to_a.end()) {
      tensor_rename[t.name] = it->second;
    } else {
      auto name = detail::unique_name(t.name, taken_tensors);
      taken_tensors.insert(name);
      tensor_rename[t.name] = name;
    }
  }
  std::map<std::string, std::string> op_rename;
  for (const auto& o : b.operators()) {
    auto name = detail::unique_name(o.name, taken_ops);
    taken_ops.insert(name);
    op_rename[o.name] = name;
  }

  BiGraph out;
  auto same = [](const std::string& n) { return n; };
  detail::append_graph(out, a, same, same);
  detail::append_graph(
      out, b, [&](const std::string& n) { return tensor_rename.at(n); },
      [&](const std::string& n) { return op_rename.at(n); });
  return out;
}

/// Fuses tensors inside one graph: every `drop` tensor is removed and its
/// consumers rewired to `keep`. `drop` must have no producer.
inline BiGraph bind_tensors(const BiGraph& graph,
                            const std::vector<std::pair<std::string, std::string>>& keep_drop) {
  std::map<std::string, std::string> rename;
  for (const auto& [keep, drop] : keep_drop) {
    const auto& k = graph.tensor(keep);
    const auto& d = graph.tensor(drop);
    if (graph.producer(d.id)) {
      throw GraphError("bind: '" + drop + "' has a producer and cannot be fused away");
    }
    if (k.shape != d.shape) {
      throw GraphError("bind '" + keep + "' <- '" + drop + "': shape mismatch " +
                       shape_str(k.shape) + " vs " + shape_str(d.shape));
    }
    if (k.location != d.location) {
      throw GraphError("bind '" + keep + "' <- '" + drop + "': location mismatch");
    }
    rename[drop] = keep;
  }
  BiGraph out;
  for (const auto& t : graph.tensors()) {
    if (!rename.contains(t.name)) out.add_tensor(t.name, t.shape, t.location);
  }
  for (const auto& o : graph.operators()) {
    std::vector<std::string> in, outs;
    for (auto id : o.inputs) {
      const auto& n = graph.tensor(id).name;
      auto it = rename.find(n);
      in.push_back(it == rename.end() ? n : it->second);
    }
    for (auto id : o.outputs) outs.push_back(graph.tensor(id).name);
    out.add_op(o.name, o.kind, in, outs, o.location, o.thread, o.attrs);
  }
  return out;
}

/// Expands `{i}` in a suffix pattern with the replica index.
inline std::string replica_suffix(std::string_view pattern, std::size_t index) {
  std::string out;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern.substr(i, 3) == "{i}") {
      out += std::to_string(index);
      i += 2;
    } else {
      out += pattern[i];
    }
  }
  return out;
}

/// k disjoint copies of the graph. Every operator and every tensor outside
/// `shared` is renamed with the expanded suffix; shared tensors appear once
/// and are read by all replicas. Shared tensors must not have producers.
inline BiGraph replicate(const BiGraph& graph, std::size_t k, std::string_view suffix_pattern,
                         const std::set<std::string>& shared = {}) {
  if (k < 1) throw GraphError("replicate: k must be >= 1");
  for (const auto& name : shared) {
    auto id = graph.find_tensor(name);
    if (!id) throw GraphError("replicate: unknown shared tensor '" + name + "'");
    if (graph.producer(*id)) {
      throw GraphError("replicate: shared tensor '" + name + "' has a producer");
    }
  }
  BiGraph out;
  for (const auto& t : graph.tensors()) {
    if (shared.contains(t.name)) out.add_tensor(t.name, t.shape, t.location);
  }
  for (std::size_t r = 0; r < k; ++r) {
    const std::string suffix = replica_suffix(suffix_pattern, r);
    detail::append_graph(
        out, graph,
        [&](const std::string& n) { return shared.contains(n) ? n : n + suffix; },
        [&](const std::string& n) { return n + suffix; });
  }
  return out;
}

/// Canonical text form keyed by names: equal forms mean the graphs are
/// isomorphic under the name correspondence (ids are ignored).
inline std::string canonical_form(const BiGraph& graph) {
  std::vector<std::string> lines;
  for (const auto& t : graph.tensors()) {
    lines.push_back("T " + t.name + " " + shape_str(t.shape) + " " + t.location.str());
  }
  for (const auto& o : graph.operators()) {
    std::string line = "O " + o.name + " " + o.kind + " " + o.location.str() + "/" +
                       std::to_string(o.thread) + " in(";
    for (auto id : o.inputs) line += graph.tensor(id).name + ",";
    line += ") out(";
    for (auto id : o.outputs) line += graph.tensor(id).name + ",";
    lines.push_back(line + ")");
  }
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

}  // namespace bigraph
