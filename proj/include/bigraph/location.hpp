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

#include <compare>
#include <cstddef>
#include <functional>
#include <string>

#include "bigraph/error.hpp"

namespace bigraph {

/// Placement of a vertex: a machine plus a device context on that machine.
/// Device -1 is the host CPU context, device >= 0 an (emulated) accelerator.
struct Location {
  std::string host;
  int device = -1;

  friend auto operator<=>(const Location&, const Location&) = default;

  void check() const {
    if (host.empty()) throw GraphError("location host must be non-empty");
    if (device < -1) {
      throw GraphError("location device must be >= -1, got " + std::to_string(device));
    }
  }

  std::string str() const { return host + ":" + std::to_string(device); }
};

/// Serial execution queue. Operators mapped to the same lane never overlap.
struct WorkerLane {
  std::string host;
  int device = -1;
  int thread = 0;

  WorkerLane() = default;
  WorkerLane(const Location& loc, int thread_id)
      : host(loc.host), device(loc.device), thread(thread_id) {}
  WorkerLane(std::string h, int d, int t) : host(std::move(h)), device(d), thread(t) {}

  Location location() const { return {host, device}; }

  friend auto operator<=>(const WorkerLane&, const WorkerLane&) = default;

  std::string str() const {
    return host + ":" + std::to_string(device) + "/" + std::to_string(thread);
  }
};

struct WorkerLaneHash {
  std::size_t operator()(const WorkerLane& lane) const noexcept {
    std::size_t h = std::hash<std::string>{}(lane.host);
    h ^= std::hash<int>{}(lane.device) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h ^= std::hash<int>{}(lane.thread) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
  }
};

}  // namespace bigraph
