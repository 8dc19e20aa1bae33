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

#include <optional>
#include <string_view>

namespace bigraph {

/// Operator kind tags understood by the builtin registry.
namespace kinds {
inline constexpr std::string_view kFcForward = "fc_forward";
inline constexpr std::string_view kFcBackward = "fc_backward";
inline constexpr std::string_view kFcBackwardData = "fc_backward_data";
inline constexpr std::string_view kFcBackwardWeight = "fc_backward_weight";
inline constexpr std::string_view kFcBackwardBias = "fc_backward_bias";
inline constexpr std::string_view kConvForward = "conv_forward";
inline constexpr std::string_view kConvBackward = "conv_backward";
inline constexpr std::string_view kConvBackwardData = "conv_backward_data";
inline constexpr std::string_view kConvBackwardWeight = "conv_backward_weight";
inline constexpr std::string_view kConvBackwardBias = "conv_backward_bias";
inline constexpr std::string_view kReluForward = "relu_forward";
inline constexpr std::string_view kReluBackward = "relu_backward";
inline constexpr std::string_view kSoftmaxXent = "softmax_xent";
inline constexpr std::string_view kSgdUpdate = "sgd_update";
inline constexpr std::string_view kAggregate = "aggregate";
inline constexpr std::string_view kSwap = "swap";
inline constexpr std::string_view kCopy = "copy";
inline constexpr std::string_view kSend = "send";
inline constexpr std::string_view kRecv = "recv";
inline constexpr std::string_view kDepend = "depend";
}  // namespace kinds

/// Input/output arity of a kind. `max_inputs` < 0 means unbounded.
struct Arity {
  int min_inputs;
  int max_inputs;
  int outputs;

  bool accepts(std::size_t in, std::size_t out) const {
    if (static_cast<int>(in) < min_inputs) return false;
    if (max_inputs >= 0 && static_cast<int>(in) > max_inputs) return false;
    return static_cast<int>(out) == outputs;
  }
};

/// Arity of a builtin kind, or nullopt for kinds the graph layer does not know
/// (custom kinds registered by users are checked only at run time).
inline std::optional<Arity> builtin_arity(std::string_view kind) {
  using namespace kinds;
  struct Entry {
    std::string_view kind;
    Arity arity;
  };
  static constexpr Entry kTable[] = {
      {kFcForward, {3, 3, 1}},         {kFcBackward, {3, 3, 3}},
      {kFcBackwardData, {2, 2, 1}},    {kFcBackwardWeight, {2, 2, 1}},
      {kFcBackwardBias, {1, 1, 1}},    {kConvForward, {3, 3, 1}},
      {kConvBackward, {3, 3, 3}},      {kConvBackwardData, {2, 2, 1}},
      {kConvBackwardWeight, {2, 2, 1}}, {kConvBackwardBias, {1, 1, 1}},
      {kReluForward, {1, 1, 1}},       {kReluBackward, {2, 2, 1}},
      {kSoftmaxXent, {2, 2, 2}},       {kSgdUpdate, {2, 2, 1}},
      {kAggregate, {1, -1, 1}},        {kSwap, {0, 0, 2}},
      {kCopy, {1, 1, 1}},              {kSend, {1, 1, 0}},
      {kRecv, {0, 0, 1}},              {kDepend, {1, -1, 1}},
  };
  for (const auto& e : kTable) {
    if (e.kind == kind) return e.arity;
  }
  return std::nullopt;
}

}  // namespace bigraph
