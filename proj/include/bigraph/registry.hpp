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
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bigraph/graph.hpp"
#include "bigraph/kernels.hpp"
#include "bigraph/kinds.hpp"
#include "bigraph/tensor.hpp"

namespace bigraph {

/// What a kernel sees while executing one operator.
struct KernelContext {
  const OperatorVertex& op;
  std::span<Tensor* const> inputs;
  std::span<Tensor* const> outputs;
  std::uint64_t iteration = 0;

  Tensor& in(std::size_t i) const { return *inputs[i]; }
  Tensor& out(std::size_t i) const { return *outputs[i]; }

  template <typename T>
  T attr(std::string_view key, T fallback) const {
    auto it = op.attrs.find(std::string(key));
    if (it == op.attrs.end() || it->is_null()) return fallback;
    return it->template get<T>();
  }
};

using KernelFn = std::function<void(const KernelContext&)>;

/// Maps operator kinds to kernels.
class OperatorRegistry {
 public:
  void add(std::string kind, KernelFn fn) { kernels_.insert_or_assign(std::move(kind), std::move(fn)); }
  const KernelFn* find(std::string_view kind) const {
    auto it = kernels_.find(std::string(kind));
    return it == kernels_.end() ? nullptr : &it->second;
  }
  bool contains(std::string_view kind) const { return find(kind) != nullptr; }

 private:
  std::map<std::string, KernelFn> kernels_;
};

inline kernels::ConvParams conv_params(const KernelContext& ctx) {
  return {ctx.attr<std::size_t>("stride", 1), ctx.attr<std::size_t>("pad", 0)};
}

/// Registry holding every builtin numeric and data-movement kind. The
/// transport kinds (`send`, `recv`) are added by the distributed runtime.
inline OperatorRegistry builtin_registry() {
  namespace k = kernels;
  using kinds::kAggregate;
  OperatorRegistry reg;
  reg.add(std::string(kinds::kFcForward),
          [](const KernelContext& c) { k::fc_forward(c.in(0), c.in(1), c.in(2), c.out(0)); });
  reg.add(std::string(kinds::kFcBackward), [](const KernelContext& c) {
    k::fc_backward(c.in(0), c.in(1), c.in(2), c.out(0), c.out(1), c.out(2));
  });
  reg.add(std::string(kinds::kFcBackwardData),
          [](const KernelContext& c) { k::fc_backward_data(c.in(0), c.in(1), c.out(0)); });
  reg.add(std::string(kinds::kFcBackwardWeight),
          [](const KernelContext& c) { k::fc_backward_weight(c.in(0), c.in(1), c.out(0)); });
  reg.add(std::string(kinds::kFcBackwardBias),
          [](const KernelContext& c) { k::fc_backward_bias(c.in(0), c.out(0)); });
  reg.add(std::string(kinds::kConvForward), [](const KernelContext& c) {
    k::conv2d_forward(c.in(0), c.in(1), c.in(2), c.out(0), conv_params(c));
  });
  reg.add(std::string(kinds::kConvBackward), [](const KernelContext& c) {
    k::conv2d_backward(c.in(0), c.in(1), c.in(2), c.out(0), c.out(1), c.out(2), conv_params(c));
  });
  reg.add(std::string(kinds::kConvBackwardData), [](const KernelContext& c) {
    k::conv2d_backward_data(c.in(0), c.in(1), c.out(0), conv_params(c));
  });
  reg.add(std::string(kinds::kConvBackwardWeight), [](const KernelContext& c) {
    k::conv2d_backward_weight(c.in(0), c.in(1), c.out(0), conv_params(c));
  });
  reg.add(std::string(kinds::kConvBackwardBias),
          [](const KernelContext& c) { k::conv2d_backward_bias(c.in(0), c.out(0)); });
  reg.add(std::string(kinds::kReluForward),
          [](const KernelContext& c) { k::relu_forward(c.in(0), c.out(0)); });
  reg.add(std::string(kinds::kReluBackward),
          [](const KernelContext& c) { k::relu_backward(c.in(0), c.in(1), c.out(0)); });
  reg.add(std::string(kinds::kSoftmaxXent), [](const KernelContext& c) {
    k::softmax_xent(c.in(0), c.in(1), c.out(0), c.out(1));
  });
  reg.add(std::string(kinds::kSgdUpdate), [](const KernelContext& c) {
    k::sgd_update(c.in(0), c.in(1), c.attr<float>("lr", 0.01f), c.out(0));
  });
  reg.add(std::string(kAggregate), [](const KernelContext& c) {
    const auto mode = c.attr<std::string>("mode", "mean");
    if (mode != "mean" && mode != "sum") throw KernelError("aggregate: unknown mode '" + mode + "'");
    std::vector<const Tensor*> parts(c.inputs.begin(), c.inputs.end());
    k::aggregate(parts, mode == "sum" ? k::AggregateMode::kSum : k::AggregateMode::kMean, c.out(0));
  });
  reg.add(std::string(kinds::kSwap),
          [](const KernelContext& c) { swap_storage(c.out(0), c.out(1)); });
  reg.add(std::string(kinds::kCopy), [](const KernelContext& c) { k::copy(c.in(0), c.out(0)); });
  // Pass-through of input 0; the remaining inputs only order execution.
  reg.add(std::string(kinds::kDepend), [](const KernelContext& c) { k::copy(c.in(0), c.out(0)); });
  return reg;
}

}  // namespace bigraph
