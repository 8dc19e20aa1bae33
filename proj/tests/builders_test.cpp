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

#include <cmath>
#include <random>

#include "test_support.hpp"

namespace bigraph {
namespace {

NetSpec mlp(std::vector<std::size_t> widths, std::size_t batch, bool relu = true) {
  NetSpec net;
  net.input = {widths.front()};
  net.classes = widths.back();
  net.batch = batch;
  net.lr = 0.1f;
  for (std::size_t i = 1; i < widths.size(); ++i) {
    net.layers.push_back({LayerSpec::Kind::kFc, widths[i]});
    if (relu && i + 1 < widths.size()) net.layers.push_back({LayerSpec::Kind::kRelu});
  }
  return net;
}

ParallelPlan data_plan(std::size_t peers) {
  ParallelPlan plan;
  plan.scheme = ParallelPlan::Scheme::kData;
  plan.server = {"local", -1};
  for (std::size_t k = 0; k < peers; ++k) plan.peers.push_back({"local", static_cast<int>(k)});
  return plan;
}

TensorStore train(const Program& prog, const DataSource& data, std::uint64_t seed, std::size_t iterations,
                  std::vector<float>* losses = nullptr) {
  TensorStore store;
  prog.initialize(store, seed);
  GraphSequence seq = prog.sequence;
  seq.iterations = iterations;
  const auto feed = make_feed(prog, data);
  const auto reg = builtin_registry();
  run_sequence(seq, store, reg, {}, [&](std::uint64_t it, TensorStore& s) {
    if (losses && it > 0) losses->push_back(s.at(prog.losses[0])[0]);
    feed(it, s);
  });
  if (losses && iterations > 0) losses->push_back(store.at(prog.losses[0])[0]);
  return store;
}

TEST(SgdIteration, OperatorCounts) {
  const auto prog = build_sgd_iteration(mlp({6, 5, 3}, 4, false), {"h", -1});
  ASSERT_EQ(prog.sequence.graphs.size(), 2u);
  const auto& dnn = prog.sequence.graphs[0];
  const auto& swaps = prog.sequence.graphs[1];
  std::map<std::string, int> kinds_seen;
  for (const auto& o : dnn.operators()) ++kinds_seen[o.kind];
  EXPECT_EQ(kinds_seen[std::string(kinds::kFcForward)], 2);
  EXPECT_EQ(kinds_seen[std::string(kinds::kSoftmaxXent)], 1);
  EXPECT_EQ(kinds_seen[std::string(kinds::kFcBackward)], 2);
  EXPECT_EQ(kinds_seen[std::string(kinds::kSgdUpdate)], 4);
  EXPECT_EQ(dnn.num_operators(), 9u);
  EXPECT_EQ(swaps.num_operators(), 4u);
  for (const auto& g : prog.sequence.graphs) EXPECT_TRUE(validate(g).ok);
  // Parameters are read but never written by the DNN graph.
  for (const auto& p : prog.params) EXPECT_FALSE(dnn.producer(*dnn.find_tensor(p.name)).has_value());
}

TEST(SgdIteration, RejectsInvalidNets) {
  NetSpec net = mlp({4, 3}, 2);
  net.batch = 0;
  EXPECT_THROW(build_sgd_iteration(net, {"h", -1}), GraphError);
  net = mlp({4, 3, 5}, 2);
  net.classes = 4;
  EXPECT_THROW(build_sgd_iteration(net, {"h", -1}), GraphError);
  net.layers.clear();
  EXPECT_THROW(build_sgd_iteration(net, {"h", -1}), GraphError);
}

// Softmax regression trained with plain loops.
struct LinearReference {
  std::size_t d, k;
  std::vector<float> w, b;

  float step(const Tensor& x, const Tensor& y, float lr) {
    const std::size_t n = x.dim(0);
    std::vector<double> gw(d * k, 0.0), gb(k, 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> z(k);
      for (std::size_t j = 0; j < k; ++j) {
        z[j] = b[j];
        for (std::size_t q = 0; q < d; ++q) z[j] += static_cast<double>(x[i * d + q]) * w[q * k + j];
      }
      const double m = *std::max_element(z.begin(), z.end());
      double s = 0.0;
      for (auto& v : z) s += std::exp(v - m);
      const auto label = static_cast<std::size_t>(y[i]);
      loss += -(z[label] - m - std::log(s));
      for (std::size_t j = 0; j < k; ++j) {
        const double g = (std::exp(z[j] - m) / s - (j == label ? 1.0 : 0.0)) / static_cast<double>(n);
        gb[j] += g;
        for (std::size_t q = 0; q < d; ++q) gw[q * k + j] += g * x[i * d + q];
      }
    }
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= static_cast<float>(lr * gw[i]);
    for (std::size_t j = 0; j < k; ++j) b[j] -= static_cast<float>(lr * gb[j]);
    return static_cast<float>(loss / static_cast<double>(n));
  }
};

TEST(SgdIteration, MatchesReferenceAndLossDecreases) {
  NetSpec net = mlp({5, 3}, 16);
  net.lr = 0.2f;
  const auto prog = build_sgd_iteration(net, {"h", -1});
  SyntheticClusters data(net.input, net.classes, 4, 1.0f, 16);
  std::vector<float> losses;
  const auto store = train(prog, data, 4, 10, &losses);

  TensorStore init;
  prog.initialize(init, 4);
  LinearReference ref{5, 3, {}, {}};
  ref.w.assign(init.at("w1").data().begin(), init.at("w1").data().end());
  ref.b.assign(init.at("b1").data().begin(), init.at("b1").data().end());
  std::vector<float> ref_losses;
  for (std::uint64_t it = 0; it < 10; ++it) {
    Tensor x({16, 5}), y({16});
    data.fill(it * 16, x, y);
    ref_losses.push_back(ref.step(x, y, net.lr));
  }
  ASSERT_EQ(losses.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(losses[i], ref_losses[i], 1e-5);
  for (std::size_t i = 1; i < 10; ++i) EXPECT_LT(losses[i], losses[i - 1]);
  for (std::size_t i = 0; i < ref.w.size(); ++i) EXPECT_NEAR(store.at("w1")[i], ref.w[i], 1e-5);
}

TEST(SgdIteration, ZeroIterationsLeaveParameters) {
  const auto prog = build_sgd_iteration(mlp({4, 3}, 2), {"h", -1});
  SyntheticClusters data({4}, 3, 1);
  TensorStore init;
  prog.initialize(init, 1);
  const auto store = train(prog, data, 1, 0);
  for (const auto& p : prog.params) EXPECT_TRUE(store.at(p.name).bitwise_equal(init.at(p.name)));
}

TEST(DataParallel, OnePeerIsBitIdenticalToSgd) {
  const NetSpec net = mlp({8, 6, 3}, 8);
  SyntheticClusters data(net.input, net.classes, 9);
  const auto single = train(build_sgd_iteration(net, {"local", 0}), data, 9, 10);
  const auto dp_prog = build_data_parallel(net, data_plan(1));
  const auto dp = train(dp_prog, data, 9, 10);
  for (const auto& p : dp_prog.params) {
    EXPECT_TRUE(dp.at(p.name).bitwise_equal(single.at(p.name))) << p.name;
    EXPECT_TRUE(dp.at("p0/" + p.name).bitwise_equal(single.at(p.name))) << p.name;
  }
}

TEST(DataParallel, TwoPeersEqualDoubleBatch) {
  NetSpec net = mlp({8, 6, 3}, 6);
  SyntheticClusters data(net.input, net.classes, 10);
  const auto dp_prog = build_data_parallel(net, data_plan(2));
  const auto dp = train(dp_prog, data, 10, 10);
  net.batch = 12;
  const auto single = train(build_sgd_iteration(net, {"local", 0}), data, 10, 10);
  for (const auto& p : dp_prog.params) {
    EXPECT_LE(testing::norm_rel_diff(dp.at(p.name), single.at(p.name)), 1e-5) << p.name;
  }
}

TEST(DataParallel, StructureAndThreads) {
  const auto prog = build_data_parallel(mlp({4, 4, 2}, 2), data_plan(2));
  const auto& dnn = prog.sequence.graphs[0];
  EXPECT_TRUE(validate(dnn).ok);
  EXPECT_TRUE(validate(prog.sequence.graphs[1]).ok);
  EXPECT_EQ(dnn.op("p0/push_dw1").thread, 2);
  EXPECT_EQ(dnn.op("p0/pull_w1").thread, 3);
  EXPECT_EQ(dnn.op("p1/push_dw1").thread, 4);
  EXPECT_EQ(dnn.op("p1/pull_w1").thread, 5);
  const auto& agg = dnn.op("srv/aggregate_dw1");
  ASSERT_EQ(agg.inputs.size(), 2u);
  EXPECT_EQ(dnn.tensor(agg.inputs[0]).name, "srv/p0/dw1");
  EXPECT_EQ(dnn.tensor(agg.inputs[1]).name, "srv/p1/dw1");
  // swaps on server + each peer
  EXPECT_EQ(prog.sequence.graphs[1].num_operators(), 3u * prog.params.size());
}

TEST(DataParallel, PlanErrors) {
  const NetSpec net = mlp({4, 2}, 2);
  auto plan = data_plan(0);
  EXPECT_THROW(build_data_parallel(net, plan), GraphError);
  plan = data_plan(1);
  plan.copy_thread_base = 1;
  EXPECT_THROW(build_data_parallel(net, plan), GraphError);
  plan = data_plan(1);
  plan.server = {"", -1};
  EXPECT_THROW(build_data_parallel(net, plan), GraphError);
}

TEST(DataParallel, GradientCopiesOverlapLowerBackward) {
  const NetSpec net = mlp({6, 6, 6, 6, 3}, 2, false);
  InjectedCosts costs;
  costs.backward_us = 20000;
  costs.grad_copy_us = 15000;
  const auto prog = build_data_parallel(net, data_plan(2), costs);
  SyntheticClusters data(net.input, net.classes, 3);
  TensorStore store;
  prog.initialize(store, 3);
  make_feed(prog, data)(0, store);
  const auto report = run(prog.sequence.graphs[0], store, builtin_registry());
  std::map<std::string, TraceRecord> rec;
  for (const auto& r : report.trace) rec[r.name] = r;
  for (int k = 0; k < 2; ++k) {
    const std::string p = "p" + std::to_string(k) + "/";
    for (int l = 1; l < 4; ++l) {
      const auto& copy_up = rec.at(p + "push_dw" + std::to_string(l + 1));
      const auto& bwd = rec.at(p + "bwd" + std::to_string(l));
      EXPECT_LT(copy_up.start, bwd.end) << p << " layer " << l;
    }
  }
}

std::vector<std::vector<float>> forward_reference(const NetSpec& net, const TensorStore& params, const Tensor& x) {
  Tensor cur = x;
  const auto shapes = net.activation_shapes(x.dim(0));
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Tensor next(shapes[l + 1]);
    const auto& L = net.layers[l];
    const std::string id = std::to_string(l + 1);
    if (L.kind == LayerSpec::Kind::kFc) kernels::fc_forward(cur, params.at("w" + id), params.at("b" + id), next);
    if (L.kind == LayerSpec::Kind::kRelu) kernels::relu_forward(cur, next);
    if (L.kind == LayerSpec::Kind::kConv) {
      kernels::conv2d_forward(cur, params.at("w" + id), params.at("b" + id), next, {L.stride, L.pad});
    }
    cur = std::move(next);
  }
  return {std::vector<float>(cur.data().begin(), cur.data().end())};
}

ParallelPlan pipeline_plan(std::vector<std::pair<std::size_t, std::size_t>> ranges, std::size_t replicas) {
  ParallelPlan plan;
  plan.scheme = ParallelPlan::Scheme::kModel;
  plan.replicas = replicas;
  int dev = 0;
  for (auto [a, b] : ranges) plan.stages.push_back({a, b, {"local", dev++}});
  return plan;
}

TEST(Pipeline, OutputsMatchUnpipelinedForward) {
  const NetSpec net = mlp({6, 5, 4, 3}, 4);  // fc relu fc relu fc
  const auto prog = build_model_parallel_pipeline(net, pipeline_plan({{0, 1}, {2, 3}, {4, 4}}, 3));
  ASSERT_EQ(prog.sequence.graphs.size(), 1u);
  EXPECT_TRUE(validate(prog.sequence.graphs[0]).ok);
  SyntheticClusters data(net.input, net.classes, 5);
  TensorStore store;
  prog.initialize(store, 5);
  make_feed(prog, data)(0, store);
  run(prog.sequence.graphs[0], store, builtin_registry());
  for (std::size_t r = 0; r < 3; ++r) {
    const auto expect = forward_reference(net, store, store.at(prog.data_inputs[r]))[0];
    const auto& got = store.at(prog.logits[r]);
    ASSERT_EQ(got.size(), expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
      EXPECT_EQ(std::bit_cast<std::uint32_t>(got[i]), std::bit_cast<std::uint32_t>(expect[i]));
    }
  }
}

TEST(Pipeline, DependencySoundness) {
  const NetSpec net = mlp({4, 4, 4, 2}, 2, false);
  InjectedCosts costs;
  costs.forward_us = 3000;
  const auto prog = build_model_parallel_pipeline(net, pipeline_plan({{0, 0}, {1, 1}, {2, 2}}, 3), costs);
  SyntheticClusters data(net.input, net.classes, 6);
  TensorStore store;
  prog.initialize(store, 6);
  make_feed(prog, data)(0, store);
  const auto report = run(prog.sequence.graphs[0], store, builtin_registry());
  std::map<std::string, TraceRecord> rec;
  for (const auto& r : report.trace) rec[r.name] = r;
  auto fwd = [&](std::size_t s, std::size_t r) { return rec.at("fwd" + std::to_string(s + 1) + "_r" + std::to_string(r)); };
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t s = 0; s < 3; ++s) {
      if (s > 0) EXPECT_GE(fwd(s, r).start, fwd(s - 1, r).end);
      if (r > 0) EXPECT_GE(fwd(s, r).start, fwd(s, r - 1).end);
    }
  }
}

TEST(Pipeline, OneStageOneReplicaIsPlainForward) {
  const NetSpec net = mlp({5, 3}, 3);
  const auto prog = build_model_parallel_pipeline(net, pipeline_plan({{0, 0}}, 1));
  SyntheticClusters data(net.input, net.classes, 7);
  TensorStore store;
  prog.initialize(store, 7);
  make_feed(prog, data)(0, store);
  run(prog.sequence.graphs[0], store, builtin_registry());
  const auto expect = forward_reference(net, store, store.at(prog.data_inputs[0]))[0];
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_EQ(store.at(prog.logits[0])[i], expect[i]);
}

TEST(Pipeline, StageErrors) {
  const NetSpec net = mlp({4, 4, 2}, 2);  // 3 layers
  EXPECT_THROW(build_model_parallel_pipeline(net, pipeline_plan({{0, 0}, {2, 2}}, 1)), GraphError);
  EXPECT_THROW(build_model_parallel_pipeline(net, pipeline_plan({{0, 1}}, 1)), GraphError);
  EXPECT_THROW(build_model_parallel_pipeline(net, pipeline_plan({{0, 2}}, 0)), GraphError);
  EXPECT_NO_THROW(build_model_parallel_pipeline(net, pipeline_plan({{0, 2}}, 2)));
}

TEST(Builders, ConvNetTrains) {
  NetSpec net;
  net.input = {1, 6, 6};
  net.classes = 2;
  net.batch = 4;
  net.lr = 0.05f;
  net.layers = {{LayerSpec::Kind::kConv, 2, 3, 1, 1}, {LayerSpec::Kind::kRelu}, {LayerSpec::Kind::kFc, 2}};
  const auto prog = build_sgd_iteration(net, {"h", -1});
  SyntheticClusters data(net.input, net.classes, 8, 1.0f, 8);
  std::vector<float> losses;
  train(prog, data, 8, 30, &losses);
  EXPECT_LT(losses.back(), losses.front());
}

TEST(Synthetic, DeterministicAndSplittable) {
  SyntheticClusters a({3}, 4, 42), b({3}, 4, 42);
  Tensor x1({6, 3}), y1({6}), x2({3, 3}), y2({3});
  a.fill(10, x1, y1);
  b.fill(13, x2, y2);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(x1[9 + i], x2[i]);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(y1[3 + i], y2[i]);
  SyntheticClusters wrap({3}, 4, 42, 1.0f, 5);
  Tensor x3({1, 3}), y3({1}), x4({1, 3}), y4({1});
  wrap.fill(2, x3, y3);
  wrap.fill(7, x4, y4);
  EXPECT_TRUE(x3.bitwise_equal(x4));
}

TEST(Config, ParsesAndBuilds) {
  const auto j = nlohmann::json::parse(R"({
    "net": {"input": [20], "classes": 4, "batch": 8, "lr": 0.5,
            "layers": [{"kind": "fc", "out": 16}, {"kind": "relu"}, {"kind": "fc", "out": 4}]},
    "plan": {"scheme": "data", "server": {"host": "A"},
             "peers": [{"host": "A", "device": 0}, {"host": "B", "device": 0}]},
    "iterations": 5, "seed": 3, "data": {"kind": "synthetic", "spread": 0.5},
    "costs": {"backward_us": 10}
  })");
  const auto cfg = parse_config(j);
  EXPECT_EQ(cfg.net.layers.size(), 3u);
  EXPECT_EQ(cfg.plan.peers.size(), 2u);
  EXPECT_EQ(cfg.iterations, 5u);
  EXPECT_EQ(images_per_iteration(cfg), 16u);
  EXPECT_EQ(cfg.costs.backward_us, 10);
  const auto prog = build(cfg.net, cfg.plan, cfg.costs);
  EXPECT_EQ(prog.data_inputs.size(), 2u);
  auto bad = j;
  bad["net"]["layers"][0]["kind"] = "lstm";
  EXPECT_THROW(parse_config(bad), ConfigError);
  bad = j;
  bad["iterations"] = 0;
  EXPECT_THROW(parse_config(bad), ConfigError);
  bad = j;
  bad["net"].erase("input");
  EXPECT_THROW(parse_config(bad), ConfigError);
}

}  // namespace
}  // namespace bigraph
