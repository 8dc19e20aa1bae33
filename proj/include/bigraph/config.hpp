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

#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "bigraph/builders.hpp"
#include "bigraph/error.hpp"
#include "bigraph/graph_json.hpp"
#include "bigraph/tensor.hpp"

namespace bigraph {

struct DataConfig {
  enum class Kind { kSynthetic, kFile };
  Kind kind = Kind::kSynthetic;
  float spread = 1.0f;
  std::size_t train_size = 0;  // 0: one global batch per iteration, fixed
  std::string inputs;          // tensor files for kFile
  std::string labels;
};

struct ExperimentConfig {
  NetSpec net;
  ParallelPlan plan;
  std::uint64_t iterations = 1;
  std::uint64_t seed = 0;
  DataConfig data;
  InjectedCosts costs;
  std::optional<std::string> trace_out;
  std::optional<std::string> dump_tensors;
};

namespace detail {

inline LayerSpec layer_from(const nlohmann::json& j) {
  LayerSpec l;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "fc") {
    l.kind = LayerSpec::Kind::kFc;
    l.out = j.at("out").get<std::size_t>();
  } else if (kind == "conv") {
    l.kind = LayerSpec::Kind::kConv;
    l.out = j.at("out").get<std::size_t>();
    l.kernel = j.value("kernel", std::size_t{3});
    l.stride = j.value("stride", std::size_t{1});
    l.pad = j.value("pad", std::size_t{0});
  } else if (kind == "relu") {
    l.kind = LayerSpec::Kind::kRelu;
  } else {
    throw ConfigError("unknown layer kind '" + kind + "'");
  }
  return l;
}

inline ParallelPlan plan_from(const nlohmann::json& j) {
  ParallelPlan p;
  const auto scheme = j.value("scheme", std::string("single"));
  if (scheme == "single") {
    p.scheme = ParallelPlan::Scheme::kSingle;
  } else if (scheme == "data") {
    p.scheme = ParallelPlan::Scheme::kData;
  } else if (scheme == "model") {
    p.scheme = ParallelPlan::Scheme::kModel;
  } else {
    throw ConfigError("unknown scheme '" + scheme + "'");
  }
  for (const auto& peer : j.value("peers", nlohmann::json::array())) {
    p.peers.push_back(location_from(peer, "peer"));
  }
  if (p.peers.empty() && p.scheme == ParallelPlan::Scheme::kSingle) p.peers.push_back({"local", -1});
  if (j.contains("server")) p.server = location_from(j.at("server"), "server");
  for (const auto& s : j.value("stages", nlohmann::json::array())) {
    const auto layers = s.at("layers").get<std::vector<std::size_t>>();
    if (layers.size() != 2) throw ConfigError("stage 'layers' must be [first, last]");
    p.stages.push_back({layers[0], layers[1], location_from(s, "stage")});
  }
  p.replicas = j.value("replicas", std::size_t{1});
  p.copy_thread_base = j.value("copy_thread_base", 2);
  return p;
}

}  // namespace detail

/// Parses and checks a config; builds nothing.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    const auto& net = j.at("net");
    cfg.net.input = net.at("input").get<Shape>();
    cfg.net.classes = net.at("classes").get<std::size_t>();
    cfg.net.batch = net.value("batch", std::size_t{1});
    cfg.net.lr = net.value("lr", 0.1f);
    for (const auto& l : net.at("layers")) cfg.net.layers.push_back(detail::layer_from(l));
    cfg.plan = detail::plan_from(j.value("plan", nlohmann::json::object()));
    const auto iterations = j.value("iterations", std::int64_t{1});
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    cfg.iterations = static_cast<std::uint64_t>(iterations);
    cfg.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("data")) {
      const auto& d = j.at("data");
      const auto kind = d.value("kind", std::string("synthetic"));
      if (kind == "synthetic") {
        cfg.data.spread = d.value("spread", 1.0f);
        cfg.data.train_size = d.value("train_size", std::size_t{0});
      } else if (kind == "file") {
        cfg.data.kind = DataConfig::Kind::kFile;
        cfg.data.inputs = d.at("inputs").get<std::string>();
        cfg.data.labels = d.at("labels").get<std::string>();
      } else {
        throw ConfigError("unknown data kind '" + kind + "'");
      }
    }
    if (j.contains("costs")) {
      const auto& c = j.at("costs");
      cfg.costs.forward_us = c.value("forward_us", std::int64_t{0});
      cfg.costs.backward_us = c.value("backward_us", std::int64_t{0});
      cfg.costs.grad_copy_us = c.value("grad_copy_us", std::int64_t{0});
    }
    if (j.contains("trace_out")) cfg.trace_out = j.at("trace_out").get<std::string>();
    if (j.contains("dump_tensors")) cfg.dump_tensors = j.at("dump_tensors").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

/// Number of samples consumed per iteration across all peers or micro-batches.
inline std::size_t images_per_iteration(const ExperimentConfig& cfg) {
  std::size_t parts = 1;
  if (cfg.plan.scheme == ParallelPlan::Scheme::kData) parts = cfg.plan.peers.size();
  if (cfg.plan.scheme == ParallelPlan::Scheme::kModel) parts = cfg.plan.replicas;
  return parts * cfg.net.batch;
}

/// The data source a config describes. File datasets are tensor dumps.
inline std::unique_ptr<DataSource> make_data_source(const ExperimentConfig& cfg) {
  if (cfg.data.kind == DataConfig::Kind::kFile) {
    auto load = [](const std::string& path) {
      std::ifstream is(path, std::ios::binary);
      if (!is) throw ConfigError("cannot open dataset file '" + path + "'");
      return read_tensor(is);
    };
    return std::make_unique<TensorDataset>(load(cfg.data.inputs), load(cfg.data.labels));
  }
  const std::size_t train = cfg.data.train_size ? cfg.data.train_size : images_per_iteration(cfg);
  return std::make_unique<SyntheticClusters>(cfg.net.input, cfg.net.classes, cfg.seed,
                                             cfg.data.spread, train);
}

}  // namespace bigraph
