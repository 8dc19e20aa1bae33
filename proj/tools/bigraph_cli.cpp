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

// Command-line driver: validate, train, simulate and run graph specs.
// Exit codes: 0 success, 1 validation/runtime failure, 2 usage or parse error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bigraph.hpp"

namespace {

using namespace bigraph;
using json = nlohmann::json;

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> iterations;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> trace_out;
  std::optional<std::string> dump_tensors;
  std::int64_t copy_latency_us = 0;
};

struct NetFlags {
  std::string host_id;
  std::string peers;
  double timeout_s = 30.0;
};

/// "4", "1..4" or "1,2,8" -> values.
std::vector<std::size_t> parse_range(const std::string& text, const char* flag) {
  std::vector<std::size_t> out;
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used != s.size() || s.empty() || v == 0) {
      throw UsageError(std::string(flag) + ": expected positive integers, got '" + text + "'");
    }
    return static_cast<std::size_t>(v);
  };
  if (auto dots = text.find(".."); dots != std::string::npos) {
    const auto lo = number(text.substr(0, dots));
    const auto hi = number(text.substr(dots + 2));
    if (hi < lo) throw UsageError(std::string(flag) + ": empty range '" + text + "'");
    for (auto v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    out.push_back(number(text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string dump_file_name(std::string name) {
  std::string out;
  for (char ch : name) {
    if (ch == '/') {
      out += "%2F";
    } else if (ch == '%') {
      out += "%25";
    } else {
      out += ch;
    }
  }
  return out + ".bin";
}

void dump_store(const TensorStore& store, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, tensor] : store) {
    const auto path = std::filesystem::path(dir) / dump_file_name(name);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw RunError("dump", "cannot write '" + path.string() + "'");
    write_tensor(os, tensor);
  }
}

bool is_graph_spec(const json& j) {
  return j.is_object() && (j.contains("tensors") || j.contains("operators") || j.contains("sequence"));
}

void print_validation(const GraphSequence& seq) {
  bool ok = true;
  for (std::size_t g = 0; g < seq.graphs.size(); ++g) {
    const auto& graph = seq.graphs[g];
    const auto report = validate(graph);
    json line{{"graph", g},
              {"operators", graph.num_operators()},
              {"tensors", graph.num_tensors()},
              {"sources", report.sources.size()},
              {"sinks", report.sinks.size()},
              {"ok", report.ok}};
    if (!report.ok) line["violations"] = report.violations;
    std::cout << line.dump() << '\n';
    ok = ok && report.ok;
  }
  if (!ok) throw GraphError("validation failed");
}

int cmd_validate(const std::string& path) {
  const json j = read_json_file(path);
  if (is_graph_spec(j)) {
    print_validation(parse_graph_spec(j).sequence);
  } else {
    const auto cfg = parse_config(j);
    print_validation(build(cfg.net, cfg.plan, cfg.costs).sequence);
  }
  std::cout << "valid\n";
  return kOk;
}

int host_index(const Endpoints& endpoints, const std::string& host) {
  int i = 0;
  for (const auto& [name, ep] : endpoints) {
    if (name == host) return i;
    ++i;
  }
  return 0;
}

int cmd_train(const CommonFlags& flags, const NetFlags& net) {
  auto cfg = parse_config(read_json_file(flags.config));
  if (flags.iterations) cfg.iterations = *flags.iterations;
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.trace_out) cfg.trace_out = flags.trace_out;
  if (flags.dump_tensors) cfg.dump_tensors = flags.dump_tensors;
  if (cfg.iterations < 1) throw UsageError("--iterations must be >= 1");

  const Program prog = build(cfg.net, cfg.plan, cfg.costs);
  TensorStore store;
  prog.initialize(store, cfg.seed);
  const auto data = make_data_source(cfg);
  const auto feed = make_feed(prog, *data);
  const double images = static_cast<double>(images_per_iteration(cfg));

  GraphSequence seq = prog.sequence;
  OperatorRegistry registry = builtin_registry();
  std::unique_ptr<TcpTransport> transport;
  int pid = 0;
  if (!net.host_id.empty() || !net.peers.empty()) {
    if (net.host_id.empty() || net.peers.empty()) throw UsageError("--host-id and --peers go together");
    const auto endpoints = parse_peers(net.peers);
    auto parts = partition_sequence(seq);
    for (const auto& [host, part] : parts) {
      if (!endpoints.contains(host)) throw ConfigError("plan uses host '" + host + "' missing from --peers");
    }
    auto mine = parts.find(net.host_id);
    if (mine == parts.end()) throw ConfigError("host '" + net.host_id + "' has no work in this plan");
    seq = std::move(mine->second);
    transport = std::make_unique<TcpTransport>(
        net.host_id, endpoints,
        std::chrono::milliseconds(static_cast<std::int64_t>(net.timeout_s * 1000.0)));
    registry = with_transport(std::move(registry), *transport);
    pid = host_index(endpoints, net.host_id);
  }
  for (std::size_t g = 0; g < seq.graphs.size(); ++g) {
    const auto report = validate(seq.graphs[g]);
    if (!report.ok) throw GraphError("graph " + std::to_string(g) + ": " + report.violations.front());
  }

  RunOptions opts;
  opts.validate = false;
  opts.copy_latency = std::chrono::microseconds(flags.copy_latency_us);
  opts.epoch = std::chrono::steady_clock::now();
  std::vector<TraceRecord> trace;
  for (std::uint64_t it = 0; it < cfg.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    feed(it, store);
    opts.iteration = it;
    for (std::size_t g = 0; g < seq.graphs.size(); ++g) {
      opts.graph_index = g;
      auto report = run(seq.graphs[g], store, registry, opts);
      if (cfg.trace_out) trace.insert(trace.end(), report.trace.begin(), report.trace.end());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json line{{"iteration", it}};
    json losses = json::object();
    double sum = 0.0;
    for (const auto& name : prog.losses) {
      if (const Tensor* t = store.find(name); t && seq.graphs.front().find_tensor(name)) {
        losses[name] = (*t)[0];
        sum += (*t)[0];
      }
    }
    line["loss"] = losses.empty() ? json(nullptr) : json(sum / static_cast<double>(losses.size()));
    line["losses"] = losses;
    line["images_per_sec"] = secs > 0.0 ? images / secs : 0.0;
    std::cout << line.dump() << std::endl;
  }
  if (cfg.trace_out) export_trace(trace, *cfg.trace_out, pid);
  if (cfg.dump_tensors) dump_store(store, *cfg.dump_tensors);
  return kOk;
}

int cmd_run(const CommonFlags& flags) {
  auto spec = parse_graph_spec(read_json_file(flags.config));
  if (flags.iterations) spec.sequence.iterations = *flags.iterations;
  TensorStore store = std::move(spec.initial);
  RunOptions opts;
  opts.copy_latency = std::chrono::microseconds(flags.copy_latency_us);
  const auto t0 = std::chrono::steady_clock::now();
  auto reports = run_sequence(spec.sequence, store, builtin_registry(), opts);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  std::size_t ops = 0;
  for (const auto& r : reports) ops += r.trace.size();
  std::cout << json{{"runs", reports.size()}, {"operators_executed", ops}, {"elapsed_ms", ms}}.dump()
            << '\n';
  if (flags.trace_out) export_trace(flatten(reports), *flags.trace_out);
  if (flags.dump_tensors) dump_store(store, *flags.dump_tensors);
  return kOk;
}

struct SimFlags {
  std::string peers = "1";
  std::string batch;
  std::string fit;
  std::optional<double> a;
  std::optional<double> c;
};

// Virtual-time trace of one data-parallel iteration of a 4-layer fc net whose
// per-layer forward and backward costs split a*B evenly and whose weight
// gradient copies cost c each.
void simulate_trace(std::size_t peers, std::size_t batch, double a, double c, const std::string& path) {
  NetSpec net;
  net.input = {16};
  net.classes = 4;
  net.batch = batch;
  for (int l = 0; l < 3; ++l) net.layers.push_back({LayerSpec::Kind::kFc, 16});
  net.layers.push_back({LayerSpec::Kind::kFc, 4});
  ParallelPlan plan;
  plan.scheme = ParallelPlan::Scheme::kData;
  plan.server = {"server", -1};
  for (std::size_t k = 0; k < peers; ++k) plan.peers.push_back({"local", static_cast<int>(k)});
  InjectedCosts costs;
  const double per_op_us = a * static_cast<double>(batch) / 8.0 * 1e6;
  costs.forward_us = static_cast<std::int64_t>(per_op_us);
  costs.backward_us = static_cast<std::int64_t>(per_op_us);
  costs.grad_copy_us = static_cast<std::int64_t>(c * 1e6);
  const Program prog = build_data_parallel(net, plan, costs);
  CostModel model;
  model.injected_delays = true;
  const auto report = simulate(prog.sequence, model);
  export_trace(report.trace, path);
  std::cout << json{{"trace", path}, {"virtual_iteration_s", report.makespan}}.dump() << '\n';
}

int cmd_simulate(const SimFlags& flags, const CommonFlags& common) {
  const bool have_ac = flags.a.has_value() || flags.c.has_value();
  if (flags.fit.empty() == !have_ac) throw UsageError("simulate needs either --fit or both --a and --c");
  if (have_ac && !(flags.a && flags.c)) throw UsageError("--a and --c go together");
  const auto peers = parse_range(flags.peers, "--peers");

  double a = 0.0, c = 0.0;
  std::vector<std::size_t> batches;
  std::size_t reference = 0;
  if (!flags.fit.empty()) {
    const auto table = read_fit_table(flags.fit);
    const auto fit = fit_two_point(table, peers.back());
    a = fit.a;
    c = fit.c;
    reference = fit.reference_batch;
    std::cout << json{{"a", a}, {"c", c}, {"fit_peers", peers.back()}, {"reference_batch", reference}}.dump()
              << '\n';
    for (std::size_t i = 0; i < table.size(); ++i) {
      std::cout << json{{"batch", table[i].batch},
                        {"measured", table[i].images_per_sec},
                        {"residual", fit.residuals[i]}}.dump()
                << '\n';
    }
    if (flags.batch.empty()) {
      for (const auto& row : table) batches.push_back(row.batch);
    }
  } else {
    a = *flags.a;
    c = *flags.c;
    if (!(a > 0.0) || c < 0.0) throw UsageError("need --a > 0 and --c >= 0");
  }
  if (!flags.batch.empty()) batches = parse_range(flags.batch, "--batch");
  if (batches.empty()) throw UsageError("--batch is required without --fit");

  std::printf("%6s %6s %16s %12s %12s\n", "peers", "batch", "images_per_sec", "speedup", "accel_ratio");
  for (auto n : peers) {
    for (auto b : batches) {
      const double tput = throughput_model(n, b, a, c);
      const double speedup = tput / throughput_model(1, b, a, c);
      const double accel = acceleration_ratio(n, b, reference ? reference : b, a, c);
      std::printf("%6zu %6zu %16.3f %12.4f %12.4f\n", n, b, tput, speedup, accel);
    }
  }
  if (common.trace_out) simulate_trace(peers.back(), batches.front(), a, c, *common.trace_out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-graph dataflow engine: build, validate, train and simulate graphs"};
  app.require_subcommand(1);
  CommonFlags common;
  NetFlags net;
  SimFlags sim;
  std::string positional;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    sub->add_option("file", positional, "Config or graph-spec JSON file");
    sub->add_option("--config", common.config, "Config or graph-spec JSON file");
    sub->add_option("--iterations", common.iterations, "Override the iteration count");
    sub->add_option("--trace-out", common.trace_out, "Write a Trace Event Format JSON file");
    sub->add_option("--dump-tensors", common.dump_tensors, "Directory for final tensor dumps");
    sub->add_option("--copy-latency-us", common.copy_latency_us, "Extra latency per cross-location copy")
        ->check(CLI::NonNegativeNumber);
    if (!config_required) return;
    sub->callback([&] {
      if (common.config.empty()) common.config = positional;
      if (common.config.empty()) throw UsageError("a config file is required");
    });
  };

  auto* validate_cmd = app.add_subcommand("validate", "Build and validate every graph of a config or graph spec");
  add_common(validate_cmd, true);

  auto* train = app.add_subcommand("train", "Run the training sequence described by a config");
  add_common(train, true);
  train->add_option("--seed", common.seed, "Override the config seed");
  train->add_option("--host-id", net.host_id, "This process's host name in distributed mode");
  train->add_option("--peers", net.peers, "name=addr:port,... for every host");
  train->add_option("--net-timeout", net.timeout_s, "Transport timeout in seconds")->check(CLI::PositiveNumber);

  auto* run_cmd = app.add_subcommand("run", "Execute a graph-spec JSON file");
  add_common(run_cmd, true);

  auto* simulate_cmd = app.add_subcommand("simulate", "Throughput and acceleration-ratio table from the cost model");
  simulate_cmd->add_option("--peers", sim.peers, "Peer counts: N, A..B or A,B,C");
  simulate_cmd->add_option("--batch", sim.batch, "Batch sizes per peer: N, A..B or A,B,C");
  simulate_cmd->add_option("--fit", sim.fit, "CSV of batch,images_per_sec measured at the largest --peers");
  simulate_cmd->add_option("--a", sim.a, "Per-image compute seconds");
  simulate_cmd->add_option("--c", sim.c, "Non-overlapped seconds per iteration");
  simulate_cmd->add_option("--trace-out", common.trace_out, "Write a virtual-time trace of one iteration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*validate_cmd) return cmd_validate(common.config);
    if (*train) return cmd_train(common, net);
    if (*run_cmd) return cmd_run(common);
    if (*simulate_cmd) return cmd_simulate(sim, common);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
