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

#include <stdexcept>
#include <string>

namespace bigraph {

/// Structural errors: bad shapes, unknown ids, cycles, placement violations.
class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical kernel rejected its inputs or produced non-finite values.
class KernelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the dispatcher; carries the name of the failing operator.
class RunError : public std::runtime_error {
 public:
  RunError(std::string op_name, const std::string& what)
      : std::runtime_error("operator '" + op_name + "': " + what), op_(std::move(op_name)) {}
  const std::string& op_name() const noexcept { return op_; }

 private:
  std::string op_;
};

/// Wire-level failures: truncated frames, connection loss, timeouts, protocol violations.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed configuration or graph-spec input.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bigraph
