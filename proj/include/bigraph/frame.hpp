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
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bigraph/error.hpp"
#include "bigraph/tensor.hpp"

namespace bigraph {

/// Wire unit of the host transport:
///
///   channel u64 | iteration u64 | payload_len u32 | payload (float32 values)
///
/// All fields little-endian. `payload_len` counts bytes.
struct Frame {
  std::uint64_t channel = 0;
  std::uint64_t iteration = 0;
  std::vector<float> payload;

  friend bool operator==(const Frame& a, const Frame& b) {
    if (a.channel != b.channel || a.iteration != b.iteration) return false;
    if (a.payload.size() != b.payload.size()) return false;
    for (std::size_t i = 0; i < a.payload.size(); ++i) {
      if (std::bit_cast<std::uint32_t>(a.payload[i]) != std::bit_cast<std::uint32_t>(b.payload[i])) {
        return false;
      }
    }
    return true;
  }
};

inline constexpr std::size_t kFrameHeaderSize = 20;

struct FrameHeader {
  std::uint64_t channel = 0;
  std::uint64_t iteration = 0;
  std::uint32_t payload_len = 0;
};

namespace detail {
inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}
inline std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t{in[at + i]} << (8 * i);
  return v;
}
}  // namespace detail

inline std::vector<std::uint8_t> encode_frame(std::uint64_t channel, std::uint64_t iteration,
                                              std::span<const float> payload) {
  const std::uint64_t len = payload.size() * sizeof(float);
  if (len > 0xffffffffULL) throw TransportError("frame payload exceeds 4 GiB");
  std::vector<std::uint8_t> out;
  out.reserve(kFrameHeaderSize + len);
  detail::put_le(out, channel, 8);
  detail::put_le(out, iteration, 8);
  detail::put_le(out, len, 4);
  for (float v : payload) detail::put_le(out, std::bit_cast<std::uint32_t>(v), 4);
  return out;
}

inline std::vector<std::uint8_t> encode_frame(std::uint64_t channel, std::uint64_t iteration,
                                              const Tensor& tensor) {
  return encode_frame(channel, iteration, tensor.data());
}

inline std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  return encode_frame(frame.channel, frame.iteration, frame.payload);
}

inline FrameHeader decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameHeaderSize) {
    throw TransportError("truncated frame header: " + std::to_string(bytes.size()) + " of " +
                         std::to_string(kFrameHeaderSize) + " bytes");
  }
  FrameHeader h;
  h.channel = detail::get_le(bytes, 0, 8);
  h.iteration = detail::get_le(bytes, 8, 8);
  h.payload_len = static_cast<std::uint32_t>(detail::get_le(bytes, 16, 4));
  if (h.payload_len % sizeof(float) != 0) {
    throw TransportError("frame payload length " + std::to_string(h.payload_len) +
                         " is not a multiple of 4");
  }
  return h;
}

/// Decodes one complete frame. With `expected_payload_len` set, a frame
/// whose payload length differs (the channel's tensor size) is rejected.
inline Frame decode_frame(std::span<const std::uint8_t> bytes,
                          std::optional<std::uint32_t> expected_payload_len = std::nullopt) {
  const FrameHeader h = decode_header(bytes);
  if (expected_payload_len && h.payload_len != *expected_payload_len) {
    throw TransportError("frame on channel " + std::to_string(h.channel) + " carries " +
                         std::to_string(h.payload_len) + " payload bytes, expected " +
                         std::to_string(*expected_payload_len));
  }
  if (bytes.size() < kFrameHeaderSize + h.payload_len) {
    throw TransportError("truncated frame payload: " +
                         std::to_string(bytes.size() - kFrameHeaderSize) + " of " +
                         std::to_string(h.payload_len) + " bytes");
  }
  if (bytes.size() > kFrameHeaderSize + h.payload_len) {
    throw TransportError("trailing bytes after frame payload");
  }
  Frame f{h.channel, h.iteration, std::vector<float>(h.payload_len / sizeof(float))};
  for (std::size_t i = 0; i < f.payload.size(); ++i) {
    f.payload[i] = std::bit_cast<float>(
        static_cast<std::uint32_t>(detail::get_le(bytes, kFrameHeaderSize + 4 * i, 4)));
  }
  return f;
}

}  // namespace bigraph
