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
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "bigraph/dispatcher.hpp"
#include "bigraph/error.hpp"
#include "bigraph/graph.hpp"
#include "bigraph/kernels.hpp"
#include "bigraph/kinds.hpp"
#include "bigraph/tensor.hpp"

namespace bigraph {

struct LayerSpec {
  enum class Kind { kFc, kConv, kRelu };
  Kind kind = Kind::kFc;
  std::size_t out = 0;  // fc units or conv filters
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 0;

  bool has_params() const { return kind != Kind::kRelu; }
};

/// A feed-forward net trained with mean softmax cross-entropy.
struct NetSpec {
  Shape input;  // per-sample dims
  std::size_t classes = 2;
  std::vector<LayerSpec> layers;
  std::size_t batch = 1;  // per peer / per micro-batch
  float lr = 0.1f;

  /// Activation shapes a0 (input) .. aL (logits) for a batch of `n`.
  std::vector<Shape> activation_shapes(std::size_t n) const {
    if (input.empty() || input.size() > 3) throw GraphError("net: input must have 1-3 dims");
    std::vector<Shape> shapes;
    Shape cur{n};
    cur.insert(cur.end(), input.begin(), input.end());
    shapes.push_back(cur);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      switch (L.kind) {
        case LayerSpec::Kind::kFc:
          if (L.out == 0) throw GraphError("net: fc layer " + std::to_string(l + 1) + " has 0 units");
          cur = {n, L.out};
          break;
        case LayerSpec::Kind::kConv: {
          if (cur.size() != 4) {
            throw GraphError("net: conv layer " + std::to_string(l + 1) + " needs a [C,H,W] input");
          }
          if (L.out == 0 || L.kernel == 0) throw GraphError("net: conv layer with zero size");
          kernels::ConvParams p{L.stride, L.pad};
          try {
            cur = {n, L.out, kernels::conv_out_dim(cur[2], L.kernel, p),
                   kernels::conv_out_dim(cur[3], L.kernel, p)};
          } catch (const KernelError& e) {
            throw GraphError("net: layer " + std::to_string(l + 1) + ": " + e.what());
          }
          break;
        }
        case LayerSpec::Kind::kRelu:
          break;
      }
      shapes.push_back(cur);
    }
    return shapes;
  }

  void check() const {
    if (layers.empty()) throw GraphError("net: no layers");
    if (batch < 1) throw GraphError("net: batch must be >= 1");
    if (classes < 2) throw GraphError("net: need at least 2 classes");
    auto shapes = activation_shapes(batch);
    if (shapes.back() != Shape{batch, classes}) {
      throw GraphError("net: last layer must produce [batch, classes], got " +
                       shape_str(shapes.back()));
    }
  }
};

struct ParamInfo {
  std::string name;  // "w<l>" or "b<l>", l counted from 1 over all layers
  Shape shape;
  std::size_t fan_in = 1;
};

/// Parameter tensors in layer order (weight before bias).
inline std::vector<ParamInfo> parameters(const NetSpec& net) {
  auto shapes = net.activation_shapes(1);
  std::vector<ParamInfo> out;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& L = net.layers[l];
    const std::string id = std::to_string(l + 1);
    if (L.kind == LayerSpec::Kind::kFc) {
      const std::size_t d = num_elements(shapes[l]);
      out.push_back({"w" + id, {d, L.out}, d});
      out.push_back({"b" + id, {L.out}, d});
    } else if (L.kind == LayerSpec::Kind::kConv) {
      const std::size_t c = shapes[l][1];
      const std::size_t fan = c * L.kernel * L.kernel;
      out.push_back({"w" + id, {L.out, c, L.kernel, L.kernel}, fan});
      out.push_back({"b" + id, {L.out}, fan});
    }
  }
  return out;
}

/// Sleep durations attached to operators as `delay_us` attrs. Real runs sleep
/// for them; the simulator can read them as virtual costs.
struct InjectedCosts {
  std::int64_t forward_us = 0;   // per layer forward operator
  std::int64_t backward_us = 0;  // per parameterized layer backward operator
  std::int64_t grad_copy_us = 0; // per weight-gradient copy towards the server
};

struct StageSpec {
  std::size_t first_layer = 0;  // 0-based, inclusive
  std::size_t last_layer = 0;   // inclusive
  Location location;
};

struct ParallelPlan {
  enum class Scheme { kSingle, kData, kModel };
  Scheme scheme = Scheme::kSingle;
  std::vector<Location> peers;  // data scheme; single scheme uses peers[0]
  Location server;              // data scheme
  std::vector<StageSpec> stages;  // model scheme
  std::size_t replicas = 1;       // model scheme
  int copy_thread_base = 2;
};

/// Thread ids used by builders on each location.
inline constexpr int kComputeThread = 0;
inline constexpr int kControlThread = 1;

/// A built sequence plus what the caller must provide before running it.
struct Program {
  GraphSequence sequence;
  NetSpec net;
  ParallelPlan plan;
  std::vector<ParamInfo> params;
  /// For each entry of `params`: every tensor that must start with its initial value.
  std::vector<std::vector<std::string>> param_copies;
  /// Per peer (or micro-batch) input/label/loss/logits tensor names.
  std::vector<std::string> data_inputs;
  std::vector<std::string> label_inputs;
  std::vector<std::string> losses;
  std::vector<std::string> logits;
  /// Source tensors that start zero-filled (pipeline ordering tokens).
  std::vector<std::pair<std::string, Shape>> zero_sources;

  /// Deterministic parameter initialization: weights ~ N(0, 2/fan_in), biases 0.
  void initialize(TensorStore& store, std::uint64_t seed) const {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& p = params[i];
      Tensor t(p.shape);
      if (p.name[0] == 'w') {
        std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + i + 1);
        std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(p.fan_in)));
        for (auto& v : t.data()) v = dist(rng);
      }
      for (const auto& name : param_copies[i]) store.set(name, t);
    }
    for (const auto& [name, shape] : zero_sources) store.set(name, Tensor(shape));
  }
};

namespace detail {

inline std::string layer_id(std::size_t l) { return std::to_string(l); }

struct ReplicaTensors {
  std::string data, label, loss, logits;
};

// Forward, loss and (optionally) backward operators of one net replica.
// Activations are `<pfx>a<l>`, gradients `<pfx>da<l>`, `<pfx>dw<l>`, `<pfx>db<l>`;
// parameter tensors are named by `param` and created if missing.
inline ReplicaTensors add_replica(BiGraph& g, const NetSpec& net, const std::string& pfx,
                                  const Location& loc, int thread,
                                  const std::function<std::string(const std::string&)>& param,
                                  const InjectedCosts& costs, bool with_backward) {
  const auto shapes = net.activation_shapes(net.batch);
  const std::size_t n_layers = net.layers.size();
  auto act = [&](std::size_t l) { return l == 0 ? pfx + "data" : pfx + "a" + layer_id(l); };
  auto grad = [&](std::size_t l) { return l == 0 ? pfx + "ddata" : pfx + "da" + layer_id(l); };
  auto delay = [](std::int64_t us) {
    nlohmann::json j = nlohmann::json::object();
    if (us > 0) j["delay_us"] = us;
    return j;
  };
  auto ensure = [&](const std::string& name, const Shape& shape) {
    if (!g.find_tensor(name)) g.add_tensor(name, shape, loc);
  };

  for (std::size_t l = 0; l <= n_layers; ++l) ensure(act(l), shapes[l]);
  ensure(pfx + "label", {net.batch});
  ensure(pfx + "loss", {1});
  for (const auto& p : parameters(net)) ensure(param(p.name), p.shape);

  for (std::size_t l = 1; l <= n_layers; ++l) {
    const auto& L = net.layers[l - 1];
    const std::string id = layer_id(l);
    nlohmann::json attrs = delay(costs.forward_us);
    switch (L.kind) {
      case LayerSpec::Kind::kFc:
        g.add_op(pfx + "fwd" + id, std::string(kinds::kFcForward),
                 {act(l - 1), param("w" + id), param("b" + id)}, {act(l)}, loc, thread, attrs);
        break;
      case LayerSpec::Kind::kConv:
        attrs["stride"] = L.stride;
        attrs["pad"] = L.pad;
        g.add_op(pfx + "fwd" + id, std::string(kinds::kConvForward),
                 {act(l - 1), param("w" + id), param("b" + id)}, {act(l)}, loc, thread, attrs);
        break;
      case LayerSpec::Kind::kRelu:
        g.add_op(pfx + "fwd" + id, std::string(kinds::kReluForward), {act(l - 1)}, {act(l)}, loc,
                 thread, attrs);
        break;
    }
  }
  ReplicaTensors out{act(0), pfx + "label", pfx + "loss", act(n_layers)};
  if (!with_backward) {
    ensure(grad(n_layers), shapes[n_layers]);
    g.add_op(pfx + "loss", std::string(kinds::kSoftmaxXent), {act(n_layers), pfx + "label"},
             {pfx + "loss", grad(n_layers)}, loc, thread);
    return out;
  }
  for (std::size_t l = 0; l <= n_layers; ++l) ensure(grad(l), shapes[l]);
  g.add_op(pfx + "loss", std::string(kinds::kSoftmaxXent), {act(n_layers), pfx + "label"},
           {pfx + "loss", grad(n_layers)}, loc, thread);
  for (std::size_t l = n_layers; l >= 1; --l) {
    const auto& L = net.layers[l - 1];
    const std::string id = layer_id(l);
    switch (L.kind) {
      case LayerSpec::Kind::kFc:
      case LayerSpec::Kind::kConv: {
        ensure(pfx + "dw" + id, g.tensor(param("w" + id)).shape);
        ensure(pfx + "db" + id, g.tensor(param("b" + id)).shape);
        nlohmann::json attrs = delay(costs.backward_us);
        if (L.kind == LayerSpec::Kind::kConv) {
          attrs["stride"] = L.stride;
          attrs["pad"] = L.pad;
        }
        g.add_op(pfx + "bwd" + id,
                 std::string(L.kind == LayerSpec::Kind::kFc ? kinds::kFcBackward
                                                            : kinds::kConvBackward),
                 {act(l - 1), param("w" + id), grad(l)},
                 {grad(l - 1), pfx + "dw" + id, pfx + "db" + id}, loc, thread, attrs);
        break;
      }
      case LayerSpec::Kind::kRelu:
        g.add_op(pfx + "bwd" + id, std::string(kinds::kReluBackward), {act(l - 1), grad(l)},
                 {grad(l - 1)}, loc, thread);
        break;
    }
  }
  return out;
}

inline BiGraph swap_graph(const std::vector<std::pair<std::string, Location>>& params,
                          const std::string& pfx, const BiGraph& shapes_from, int thread) {
  BiGraph g;
  for (const auto& [name, loc] : params) {
    const auto& shape = shapes_from.tensor(pfx + name).shape;
    g.add_tensor(pfx + name, shape, loc);
    g.add_tensor(pfx + name + "_new", shape, loc);
    g.add_op(pfx + "swap_" + name, std::string(kinds::kSwap), {},
             {pfx + name, pfx + name + "_new"}, loc, thread);
  }
  return g;
}

}  // namespace detail

/// SGD as two graphs iterated in order: the DNN graph computes updated
/// parameters into `<p>_new` tensors, the swap graph exchanges each `<p>` with
/// `<p>_new` buffer handles.
inline Program build_sgd_iteration(const NetSpec& net, const Location& placement,
                                   const InjectedCosts& costs = {}) {
  net.check();
  placement.check();
  Program prog;
  prog.net = net;
  prog.plan.scheme = ParallelPlan::Scheme::kSingle;
  prog.plan.peers = {placement};
  prog.params = parameters(net);

  BiGraph dnn;
  auto same = [](const std::string& n) { return n; };
  auto io = detail::add_replica(dnn, net, "", placement, kComputeThread, same, costs, true);
  nlohmann::json lr{{"lr", net.lr}};
  for (const auto& p : prog.params) {
    dnn.add_tensor(p.name + "_new", p.shape, placement);
    dnn.add_op("update_" + p.name, std::string(kinds::kSgdUpdate), {p.name, "d" + p.name},
               {p.name + "_new"}, placement, kComputeThread, lr);
    prog.param_copies.push_back({p.name});
  }
  std::vector<std::pair<std::string, Location>> swap_params;
  for (const auto& p : prog.params) swap_params.emplace_back(p.name, placement);
  BiGraph swaps = detail::swap_graph(swap_params, "", dnn, kComputeThread);

  prog.sequence.graphs = {std::move(dnn), std::move(swaps)};
  prog.data_inputs = {io.data};
  prog.label_inputs = {io.label};
  prog.losses = {io.loss};
  prog.logits = {io.logits};
  return prog;
}

/// Synchronous data parallelism through a parameter server.
///
/// Peer k runs a full replica (tensors prefixed `p<k>/`) on its location. As
/// soon as a layer's backward finishes, its gradients are copied to the
/// server on the peer's upstream copy thread, so exchange of higher layers
/// overlaps backward of lower ones. The server averages the peers' gradients
/// in rank order, applies SGD into `<p>_new`, and broadcasts the new values
/// to every peer on per-peer downstream copy threads. A swap graph then
/// exchanges old and new buffers on the server and on every peer.
inline Program build_data_parallel(const NetSpec& net, const ParallelPlan& plan,
                                   const InjectedCosts& costs = {}) {
  net.check();
  if (plan.scheme != ParallelPlan::Scheme::kData) throw GraphError("data parallel: plan scheme must be data");
  if (plan.peers.empty()) throw GraphError("data parallel: no peers");
  if (plan.copy_thread_base <= kControlThread) {
    throw GraphError("data parallel: copy_thread_base must exceed " + std::to_string(kControlThread));
  }
  plan.server.check();
  for (const auto& p : plan.peers) p.check();

  Program prog;
  prog.net = net;
  prog.plan = plan;
  prog.params = parameters(net);
  const std::size_t n_peers = plan.peers.size();
  auto peer_pfx = [](std::size_t k) { return "p" + std::to_string(k) + "/"; };
  auto up_thread = [&](std::size_t k) { return plan.copy_thread_base + static_cast<int>(2 * k); };
  auto down_thread = [&](std::size_t k) { return up_thread(k) + 1; };

  BiGraph dnn;
  for (const auto& p : prog.params) {
    dnn.add_tensor(p.name, p.shape, plan.server);
    dnn.add_tensor(p.name + "_new", p.shape, plan.server);
    dnn.add_tensor("srv/d" + p.name, p.shape, plan.server);
  }
  for (std::size_t k = 0; k < n_peers; ++k) {
    const std::string pfx = peer_pfx(k);
    auto io = detail::add_replica(
        dnn, net, pfx, plan.peers[k], kComputeThread,
        [&](const std::string& n) { return pfx + n; }, costs, true);
    prog.data_inputs.push_back(io.data);
    prog.label_inputs.push_back(io.label);
    prog.losses.push_back(io.loss);
    prog.logits.push_back(io.logits);
  }
  // Gradient exchange. Operators are inserted top layer first so that ties in
  // readiness favour the layers whose gradients are produced first.
  for (auto it = prog.params.rbegin(); it != prog.params.rend(); ++it) {
    const auto& p = *it;
    std::vector<std::string> parts;
    for (std::size_t k = 0; k < n_peers; ++k) {
      const std::string pfx = peer_pfx(k);
      const std::string dst = "srv/" + pfx + "d" + p.name;
      dnn.add_tensor(dst, p.shape, plan.server);
      nlohmann::json attrs = nlohmann::json::object();
      if (p.name[0] == 'w' && costs.grad_copy_us > 0) attrs["delay_us"] = costs.grad_copy_us;
      dnn.add_op(pfx + "push_d" + p.name, std::string(kinds::kCopy), {pfx + "d" + p.name}, {dst},
                 plan.peers[k], up_thread(k), attrs);
      parts.push_back(dst);
    }
    dnn.add_op("srv/aggregate_d" + p.name, std::string(kinds::kAggregate), parts,
               {"srv/d" + p.name}, plan.server, kComputeThread, {{"mode", "mean"}});
    dnn.add_op("srv/update_" + p.name, std::string(kinds::kSgdUpdate), {p.name, "srv/d" + p.name},
               {p.name + "_new"}, plan.server, kComputeThread, {{"lr", net.lr}});
    for (std::size_t k = 0; k < n_peers; ++k) {
      const std::string pfx = peer_pfx(k);
      dnn.add_tensor(pfx + p.name + "_new", p.shape, plan.peers[k]);
      dnn.add_op(pfx + "pull_" + p.name, std::string(kinds::kCopy), {p.name + "_new"},
                 {pfx + p.name + "_new"}, plan.server, down_thread(k));
    }
  }
  for (const auto& p : prog.params) {
    std::vector<std::string> copies{p.name};
    for (std::size_t k = 0; k < n_peers; ++k) copies.push_back(peer_pfx(k) + p.name);
    prog.param_copies.push_back(copies);
  }

  std::vector<std::pair<std::string, Location>> server_params;
  for (const auto& p : prog.params) server_params.emplace_back(p.name, plan.server);
  BiGraph swaps = detail::swap_graph(server_params, "", dnn, kControlThread);
  for (std::size_t k = 0; k < n_peers; ++k) {
    std::vector<std::pair<std::string, Location>> peer_params;
    for (const auto& p : prog.params) peer_params.emplace_back(p.name, plan.peers[k]);
    swaps = merge(swaps, detail::swap_graph(peer_params, peer_pfx(k), dnn, kControlThread));
  }
  prog.sequence.graphs = {std::move(dnn), std::move(swaps)};
  return prog;
}

/// Pipelined model parallelism. The net is cut into contiguous stages, each on
/// its own location, with copies at stage boundaries. `replicas` micro-batches
/// are instantiated with `replicate` (parameters shared), and replica r's
/// stage s is gated on replica r-1's stage s output, so stage resources are
/// used in order and the replicas form a staircase schedule. Forward and loss
/// only; tensors of replica r carry the suffix `_r<r>`.
inline Program build_model_parallel_pipeline(const NetSpec& net, const ParallelPlan& plan,
                                             const InjectedCosts& costs = {}) {
  net.check();
  if (plan.scheme != ParallelPlan::Scheme::kModel) throw GraphError("pipeline: plan scheme must be model");
  if (plan.stages.empty()) throw GraphError("pipeline: no stages");
  if (plan.replicas < 1) throw GraphError("pipeline: replicas must be >= 1");
  std::size_t expect_first = 0;
  for (const auto& s : plan.stages) {
    if (s.first_layer != expect_first || s.last_layer < s.first_layer) {
      throw GraphError("pipeline: stages must partition the layers contiguously (stage starting at " +
                       std::to_string(s.first_layer) + ", expected " + std::to_string(expect_first) + ")");
    }
    s.location.check();
    expect_first = s.last_layer + 1;
  }
  if (expect_first != net.layers.size()) {
    throw GraphError("pipeline: stages cover " + std::to_string(expect_first) + " of " +
                     std::to_string(net.layers.size()) + " layers");
  }

  Program prog;
  prog.net = net;
  prog.plan = plan;
  prog.params = parameters(net);
  const auto shapes = net.activation_shapes(net.batch);
  const std::size_t n_stages = plan.stages.size();
  auto act = [](std::size_t l) { return l == 0 ? std::string("data") : "a" + std::to_string(l); };

  BiGraph one;
  std::set<std::string> shared;
  std::vector<std::string> stage_out(n_stages);
  for (std::size_t s = 0; s < n_stages; ++s) {
    const auto& st = plan.stages[s];
    const Location& loc = st.location;
    // Stage input as seen on this stage's location.
    std::string input = act(st.first_layer);
    if (s == 0) {
      one.add_tensor(input, shapes[0], loc);
    } else {
      const std::string remote = act(st.first_layer);
      input = remote + "@s" + std::to_string(s);
      one.add_tensor(input, shapes[st.first_layer], loc);
      one.add_op("send_" + remote + "_s" + std::to_string(s), std::string(kinds::kCopy), {remote},
                 {input}, plan.stages[s - 1].location, plan.copy_thread_base);
    }
    const std::string gated = "s" + std::to_string(s) + "/in";
    const std::string prev = "s" + std::to_string(s) + "/prev";
    const bool last = s + 1 == n_stages;
    const Shape out_shape = last ? Shape{1} : shapes[st.last_layer + 1];
    one.add_tensor(gated, shapes[st.first_layer], loc);
    one.add_tensor(prev, out_shape, loc);
    one.add_op("s" + std::to_string(s) + "/gate", std::string(kinds::kDepend), {input, prev},
               {gated}, loc, kComputeThread);

    for (std::size_t l = st.first_layer; l <= st.last_layer; ++l) {
      const auto& L = net.layers[l];
      const std::string id = std::to_string(l + 1);
      const std::string x = l == st.first_layer ? gated : act(l);
      one.add_tensor(act(l + 1), shapes[l + 1], loc);
      nlohmann::json attrs = nlohmann::json::object();
      if (costs.forward_us > 0) attrs["delay_us"] = costs.forward_us;
      if (L.kind == LayerSpec::Kind::kRelu) {
        one.add_op("fwd" + id, std::string(kinds::kReluForward), {x}, {act(l + 1)}, loc,
                   kComputeThread, attrs);
        continue;
      }
      for (const auto& p : prog.params) {
        if (p.name == "w" + id || p.name == "b" + id) {
          one.add_tensor(p.name, p.shape, loc);
          shared.insert(p.name);
        }
      }
      if (L.kind == LayerSpec::Kind::kConv) {
        attrs["stride"] = L.stride;
        attrs["pad"] = L.pad;
      }
      one.add_op("fwd" + id,
                 std::string(L.kind == LayerSpec::Kind::kFc ? kinds::kFcForward : kinds::kConvForward),
                 {x, "w" + id, "b" + id}, {act(l + 1)}, loc, kComputeThread, attrs);
    }
    if (last) {
      const std::string logits = act(net.layers.size());
      one.add_tensor("label", {net.batch}, loc);
      one.add_tensor("loss", {1}, loc);
      one.add_tensor("dlogits", shapes.back(), loc);
      one.add_op("loss", std::string(kinds::kSoftmaxXent), {logits, "label"}, {"loss", "dlogits"},
                 loc, kComputeThread);
      stage_out[s] = "loss";
    } else {
      stage_out[s] = act(st.last_layer + 1);
    }
  }

  BiGraph all = replicate(one, plan.replicas, "_r{i}", shared);
  std::vector<std::pair<std::string, std::string>> chain;
  for (std::size_t r = 1; r < plan.replicas; ++r) {
    for (std::size_t s = 0; s < n_stages; ++s) {
      chain.emplace_back(stage_out[s] + "_r" + std::to_string(r - 1),
                         "s" + std::to_string(s) + "/prev_r" + std::to_string(r));
    }
  }
  if (!chain.empty()) all = bind_tensors(all, chain);

  for (const auto& p : prog.params) prog.param_copies.push_back({p.name});
  for (std::size_t r = 0; r < plan.replicas; ++r) {
    const std::string sfx = "_r" + std::to_string(r);
    prog.data_inputs.push_back("data" + sfx);
    prog.label_inputs.push_back("label" + sfx);
    prog.losses.push_back("loss" + sfx);
    prog.logits.push_back(act(net.layers.size()) + sfx);
  }
  for (std::size_t s = 0; s < n_stages; ++s) {
    const bool last = s + 1 == n_stages;
    prog.zero_sources.emplace_back("s" + std::to_string(s) + "/prev_r0",
                                   last ? Shape{1} : shapes[plan.stages[s].last_layer + 1]);
  }
  prog.sequence.graphs = {std::move(all)};
  return prog;
}

inline Program build(const NetSpec& net, const ParallelPlan& plan, const InjectedCosts& costs = {}) {
  switch (plan.scheme) {
    case ParallelPlan::Scheme::kSingle:
      if (plan.peers.empty()) throw GraphError("single scheme needs one placement in peers");
      return build_sgd_iteration(net, plan.peers.front(), costs);
    case ParallelPlan::Scheme::kData:
      return build_data_parallel(net, plan, costs);
    case ParallelPlan::Scheme::kModel:
      return build_model_parallel_pipeline(net, plan, costs);
  }
  throw GraphError("unknown scheme");
}

/// Supplies consecutive labelled samples; sample i is a pure function of i.
class DataSource {
 public:
  virtual ~DataSource() = default;
  /// Fills `x` rows and `labels` with samples first, first+1, ...
  virtual void fill(std::uint64_t first, Tensor& x, Tensor& labels) const = 0;
};

/// Seeded Gaussian clusters, one per class. Sample i is a pure function of
/// (seed, i), so any split of a batch across peers sees the same samples.
/// With a finite `train_size`, sample indices wrap around a fixed training set.
class SyntheticClusters final : public DataSource {
 public:
  SyntheticClusters(Shape sample_shape, std::size_t classes, std::uint64_t seed,
                    float spread = 1.0f, std::size_t train_size = 0)
      : dims_(num_elements(sample_shape)), classes_(classes), seed_(seed), spread_(spread),
        train_size_(train_size) {
    std::mt19937_64 rng(mix(seed_, 0xc1a55e5ULL));
    std::normal_distribution<float> normal(0.0f, 1.0f);
    centers_.resize(classes_ * dims_);
    for (auto& v : centers_) v = normal(rng);
  }

  std::size_t dims() const { return dims_; }
  std::size_t classes() const { return classes_; }

  std::size_t sample(std::uint64_t index, std::span<float> x) const {
    if (train_size_ > 0) index %= train_size_;
    std::mt19937_64 rng(mix(seed_, index + 1));
    const std::size_t label = static_cast<std::size_t>(rng() % classes_);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    for (std::size_t d = 0; d < dims_; ++d) x[d] = centers_[label * dims_ + d] + spread_ * normal(rng);
    return label;
  }

  void fill(std::uint64_t first, Tensor& x, Tensor& labels) const override {
    const std::size_t n = x.dim(0);
    if (x.size() != n * dims_ || labels.size() != n) throw KernelError("synthetic data: shape mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<float>(sample(first + i, x.data().subspan(i * dims_, dims_)));
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e5ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::size_t dims_;
  std::size_t classes_;
  std::uint64_t seed_;
  float spread_;
  std::size_t train_size_;
  std::vector<float> centers_;
};

/// Hook filling every input of `prog` before an iteration. The global batch
/// of iteration i covers samples [i*P*B, (i+1)*P*B); input k takes the k-th
/// slice of B samples.
/// Samples and labels held in memory, indexed modulo the sample count.
class TensorDataset final : public DataSource {
 public:
  TensorDataset(Tensor inputs, Tensor labels) : inputs_(std::move(inputs)), labels_(std::move(labels)) {
    if (inputs_.rank() < 2 || labels_.rank() != 1 || labels_.dim(0) != inputs_.dim(0)) {
      throw KernelError("dataset: inputs must be [S, ...] and labels [S], got " +
                        shape_str(inputs_.shape()) + " and " + shape_str(labels_.shape()));
    }
    row_ = inputs_.size() / inputs_.dim(0);
  }

  std::size_t size() const { return inputs_.dim(0); }

  void fill(std::uint64_t first, Tensor& x, Tensor& labels) const override {
    const std::size_t n = x.dim(0);
    if (x.size() != n * row_ || labels.size() != n) {
      throw KernelError("dataset: batch shape " + shape_str(x.shape()) + " does not match samples");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t s = static_cast<std::size_t>((first + i) % size());
      auto src = inputs_.data().subspan(s * row_, row_);
      std::copy(src.begin(), src.end(), x.data().begin() + static_cast<std::ptrdiff_t>(i * row_));
      labels[i] = labels_[s];
    }
  }

 private:
  Tensor inputs_;
  Tensor labels_;
  std::size_t row_ = 0;
};

inline IterationHook make_feed(const Program& prog, const DataSource& data) {
  const std::size_t b = prog.net.batch;
  const std::size_t parts = prog.data_inputs.size();
  Shape x_shape{b};
  x_shape.insert(x_shape.end(), prog.net.input.begin(), prog.net.input.end());
  return [=, &data](std::uint64_t it, TensorStore& store) {
    for (std::size_t k = 0; k < parts; ++k) {
      Tensor x(x_shape), y(Shape{b});
      data.fill(it * parts * b + k * b, x, y);
      store.set(prog.data_inputs[k], std::move(x));
      store.set(prog.label_inputs[k], std::move(y));
    }
  };
}

}  // namespace bigraph
