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

#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bigraph/error.hpp"
#include "bigraph/graph.hpp"

namespace bigraph {

/// Shaped, row-major float32 buffer. Copies are deep; `swap_storage`
/// exchanges buffers without touching elements, so `storage_id()` follows
/// the buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f)
      : shape_(std::move(shape)), data_(num_elements(shape_), fill) {}
  Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != num_elements(shape_)) {
      throw KernelError("tensor buffer length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_str(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  const void* storage_id() const { return data_.data(); }

  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

  bool bitwise_equal(const Tensor& other) const {
    if (shape_ != other.shape_) return false;
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (std::bit_cast<std::uint32_t>(data_[i]) != std::bit_cast<std::uint32_t>(other.data_[i])) {
        return false;
      }
    }
    return true;
  }

  friend void swap_storage(Tensor& a, Tensor& b) {
    if (a.shape_ != b.shape_) {
      throw KernelError("swap shape mismatch " + shape_str(a.shape_) + " vs " +
                        shape_str(b.shape_));
    }
    a.data_.swap(b.data_);
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Named tensors shared by all graphs of a run. Entries have stable
/// addresses, so the dispatcher resolves pointers once before a run.
class TensorStore {
 public:
  Tensor& set(const std::string& name, Tensor t) {
    auto [it, inserted] = tensors_.insert_or_assign(name, std::move(t));
    return it->second;
  }
  bool contains(const std::string& name) const { return tensors_.contains(name); }
  Tensor& at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw KernelError("tensor store has no entry '" + name + "'");
    return it->second;
  }
  const Tensor& at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw KernelError("tensor store has no entry '" + name + "'");
    return it->second;
  }
  Tensor* find(const std::string& name) {
    auto it = tensors_.find(name);
    return it == tensors_.end() ? nullptr : &it->second;
  }
  std::size_t size() const { return tensors_.size(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

 private:
  std::map<std::string, Tensor> tensors_;
};

// Tensor dump format: u32 rank, u32 per dim, then raw float32 values; all
// little-endian.

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}
inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw KernelError("tensor file truncated");
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
         (std::uint32_t{b[3]} << 24);
}
}  // namespace detail

inline void write_tensor(std::ostream& os, const Tensor& t) {
  detail::put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) detail::put_u32(os, static_cast<std::uint32_t>(d));
  for (float v : t.data()) detail::put_u32(os, std::bit_cast<std::uint32_t>(v));
  if (!os) throw KernelError("failed writing tensor");
}

inline Tensor read_tensor(std::istream& is) {
  std::uint32_t rank = detail::get_u32(is);
  if (rank == 0 || rank > 4) throw KernelError("tensor file has invalid rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) {
    d = detail::get_u32(is);
    if (d == 0) throw KernelError("tensor file has zero dimension");
  }
  std::vector<float> values(num_elements(shape));
  for (auto& v : values) v = std::bit_cast<float>(detail::get_u32(is));
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace bigraph
