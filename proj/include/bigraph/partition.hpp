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
#include <map>
#include <set>
#include <string>
#include <vector>

#include "bigraph/error.hpp"
#include "bigraph/graph.hpp"

namespace bigraph {

/// One end of a cross-host channel.
struct ChannelEnd {
  std::string tensor;
  std::string peer_host;
  std::uint64_t channel = 0;
};

/// The subgraph one host's dispatcher runs. Cross-host copies appear as a
/// `send` sink here and a matching `recv` source on the peer.
struct HostPartition {
  std::string host;
  BiGraph subgraph;
  std::vector<ChannelEnd> sends;
  std::vector<ChannelEnd> recvs;
};

namespace detail {
inline const char* const kPartitionKeys[] = {"channel", "peer", "copy_name", "copy_host",
                                             "copy_device", "copy_thread"};
}

/// Lanes reserved for transport. Sends to the i-th host (in name order) run on
/// kSendThreadBase + i; each recv gets a lane of its own starting at
/// kRecvThreadBase, because a recv blocks its lane until the frame arrives.
inline constexpr int kSendThreadBase = 1 << 20;
inline constexpr int kRecvThreadBase = 1 << 21;

/// Splits a graph by host. Vertices keep their names; each cross-host copy
/// becomes `<copy>/send` on the source host and `<copy>/recv` on the
/// destination host, sharing a fresh channel id (allocated from
/// `first_channel` in copy insertion order). Partitions are ordered by host name.
inline std::vector<HostPartition> partition_by_host(const BiGraph& graph,
                                                    std::uint64_t first_channel = 0) {
  auto report = validate(graph);
  if (!report.ok) throw GraphError("partition: invalid graph: " + report.violations.front());

  std::set<std::string> hosts;
  for (const auto& t : graph.tensors()) hosts.insert(t.location.host);
  for (const auto& o : graph.operators()) hosts.insert(o.location.host);

  std::map<std::string, HostPartition> parts;
  for (const auto& h : hosts) parts[h].host = h;
  for (const auto& t : graph.tensors()) parts[t.location.host].subgraph.add_tensor(t.name, t.shape, t.location);

  std::map<std::string, int> host_index;
  for (const auto& h : hosts) host_index.emplace(h, static_cast<int>(host_index.size()));
  std::map<std::string, int> recv_count;
  std::uint64_t next_channel = first_channel;
  for (const auto& o : graph.operators()) {
    std::vector<std::string> in, out;
    std::set<std::string> touched{o.location.host};
    for (auto id : o.inputs) {
      in.push_back(graph.tensor(id).name);
      touched.insert(graph.tensor(id).location.host);
    }
    for (auto id : o.outputs) {
      out.push_back(graph.tensor(id).name);
      touched.insert(graph.tensor(id).location.host);
    }
    if (touched.size() == 1) {
      parts[o.location.host].subgraph.add_op(o.name, o.kind, in, out, o.location, o.thread, o.attrs);
      continue;
    }
    if (o.kind != kinds::kCopy) {
      throw GraphError("partition: operator '" + o.name + "' (" + o.kind +
                       ") spans hosts; only copy may cross a host boundary");
    }
    const auto& src = graph.tensor(o.inputs[0]);
    const auto& dst = graph.tensor(o.outputs[0]);
    const std::uint64_t channel = next_channel++;
    nlohmann::json common = o.attrs;
    common["channel"] = channel;
    common["copy_name"] = o.name;
    common["copy_host"] = o.location.host;
    common["copy_device"] = o.location.device;
    common["copy_thread"] = o.thread;

    nlohmann::json send_attrs = common;
    send_attrs["peer"] = dst.location.host;
    parts[src.location.host].subgraph.add_op(o.name + "/send", std::string(kinds::kSend),
                                             {src.name}, {}, src.location,
                                             kSendThreadBase + host_index.at(dst.location.host), send_attrs);
    parts[src.location.host].sends.push_back({src.name, dst.location.host, channel});

    nlohmann::json recv_attrs = common;
    recv_attrs["peer"] = src.location.host;
    recv_attrs.erase("delay_us");
    parts[dst.location.host].subgraph.add_op(o.name + "/recv", std::string(kinds::kRecv), {},
                                             {dst.name}, dst.location,
                                             kRecvThreadBase + recv_count[dst.location.host]++, recv_attrs);
    parts[dst.location.host].recvs.push_back({dst.name, src.location.host, channel});
  }

  std::vector<HostPartition> result;
  for (auto& [h, p] : parts) result.push_back(std::move(p));
  return result;
}

/// Inverse of partition_by_host: fuses each send/recv pair back into the copy
/// it came from.
inline BiGraph recompose(const std::vector<HostPartition>& parts) {
  BiGraph out;
  for (const auto& p : parts) {
    for (const auto& t : p.subgraph.tensors()) out.add_tensor(t.name, t.shape, t.location);
  }
  std::map<std::uint64_t, const OperatorVertex*> recv_by_channel;
  std::map<std::uint64_t, const BiGraph*> recv_graph;
  for (const auto& p : parts) {
    for (const auto& o : p.subgraph.operators()) {
      if (o.kind == kinds::kRecv) {
        recv_by_channel[o.attrs.at("channel").get<std::uint64_t>()] = &o;
        recv_graph[o.attrs.at("channel").get<std::uint64_t>()] = &p.subgraph;
      }
    }
  }
  for (const auto& p : parts) {
    for (const auto& o : p.subgraph.operators()) {
      if (o.kind == kinds::kRecv) continue;
      std::vector<std::string> in, outs;
      for (auto id : o.inputs) in.push_back(p.subgraph.tensor(id).name);
      for (auto id : o.outputs) outs.push_back(p.subgraph.tensor(id).name);
      if (o.kind != kinds::kSend) {
        out.add_op(o.name, o.kind, in, outs, o.location, o.thread, o.attrs);
        continue;
      }
      const auto channel = o.attrs.at("channel").get<std::uint64_t>();
      auto it = recv_by_channel.find(channel);
      if (it == recv_by_channel.end()) {
        throw GraphError("recompose: send on channel " + std::to_string(channel) + " has no recv");
      }
      const auto& recv = *it->second;
      nlohmann::json attrs = o.attrs;
      for (const char* key : detail::kPartitionKeys) attrs.erase(key);
      Location loc{o.attrs.at("copy_host").get<std::string>(), o.attrs.at("copy_device").get<int>()};
      out.add_op(o.attrs.at("copy_name").get<std::string>(), std::string(kinds::kCopy), in,
                 {recv_graph.at(channel)->tensor(recv.outputs[0]).name}, loc,
                 o.attrs.at("copy_thread").get<int>(), attrs);
    }
  }
  return out;
}

}  // namespace bigraph
