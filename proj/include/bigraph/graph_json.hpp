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

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bigraph/error.hpp"
#include "bigraph/graph.hpp"
#include "bigraph/tensor.hpp"

namespace bigraph {

/// A graph read from the graph-spec JSON, with optional initial values.
///
///   {"tensors":   [{"name", "shape", "host", "device", "values"?}],
///    "operators": [{"name", "kind", "inputs", "outputs", "host", "device", "thread", "attrs"}],
///    "iterations": 1}
///
/// `values` is a flat row-major array used to seed the store. A top-level
/// "sequence" array of such objects describes a GraphSequence instead.
struct GraphSpec {
  GraphSequence sequence;
  TensorStore initial;
};

namespace detail {

inline Location location_from(const nlohmann::json& j, const std::string& what) {
  if (!j.contains("host")) throw ConfigError(what + ": missing 'host'");
  Location loc{j.at("host").get<std::string>(), j.value("device", -1)};
  try {
    loc.check();
  } catch (const GraphError& e) {
    throw ConfigError(what + ": " + e.what());
  }
  return loc;
}

inline BiGraph graph_from(const nlohmann::json& j, TensorStore& initial) {
  if (!j.is_object()) throw ConfigError("graph spec must be an object");
  BiGraph g;
  for (const auto& t : j.value("tensors", nlohmann::json::array())) {
    const auto name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<Shape>();
    g.add_tensor(name, shape, location_from(t, "tensor '" + name + "'"));
    if (t.contains("values")) {
      auto values = t.at("values").get<std::vector<float>>();
      if (values.size() != num_elements(shape)) {
        throw ConfigError("tensor '" + name + "': " + std::to_string(values.size()) +
                          " values for shape " + shape_str(shape));
      }
      initial.set(name, Tensor(shape, std::move(values)));
    }
  }
  for (const auto& o : j.value("operators", nlohmann::json::array())) {
    const auto name = o.at("name").get<std::string>();
    g.add_op(name, o.at("kind").get<std::string>(),
             o.value("inputs", std::vector<std::string>{}),
             o.value("outputs", std::vector<std::string>{}),
             location_from(o, "operator '" + name + "'"), o.value("thread", 0),
             o.value("attrs", nlohmann::json::object()));
  }
  return g;
}

}  // namespace detail

/// Structural errors (cycles, placement, arity) surface as GraphError;
/// malformed documents as ConfigError.
inline GraphSpec parse_graph_spec(const nlohmann::json& j) {
  GraphSpec spec;
  try {
    if (j.contains("sequence")) {
      for (const auto& g : j.at("sequence")) {
        spec.sequence.graphs.push_back(detail::graph_from(g, spec.initial));
      }
    } else {
      spec.sequence.graphs.push_back(detail::graph_from(j, spec.initial));
    }
    const auto iterations = j.value("iterations", 1);
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    spec.sequence.iterations = static_cast<std::size_t>(iterations);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("graph spec: ") + e.what());
  }
  return spec;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Inverse of parse_graph_spec for a single graph (no values).
inline nlohmann::json to_graph_spec(const BiGraph& g) {
  nlohmann::json j;
  j["tensors"] = nlohmann::json::array();
  for (const auto& t : g.tensors()) {
    j["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"host", t.location.host},
                            {"device", t.location.device}});
  }
  j["operators"] = nlohmann::json::array();
  for (auto id : g.insertion_order()) {
    const auto& o = g.op(id);
    std::vector<std::string> in, out;
    for (auto t : o.inputs) in.push_back(g.tensor(t).name);
    for (auto t : o.outputs) out.push_back(g.tensor(t).name);
    j["operators"].push_back({{"name", o.name}, {"kind", o.kind}, {"inputs", in}, {"outputs", out},
                              {"host", o.location.host}, {"device", o.location.device},
                              {"thread", o.thread}, {"attrs", o.attrs}});
  }
  return j;
}

}  // namespace bigraph
