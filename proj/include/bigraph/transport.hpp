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

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "bigraph/dispatcher.hpp"
#include "bigraph/error.hpp"
#include "bigraph/frame.hpp"
#include "bigraph/graph.hpp"
#include "bigraph/kinds.hpp"
#include "bigraph/partition.hpp"
#include "bigraph/registry.hpp"

namespace bigraph {

struct Endpoint {
  std::string address;
  std::uint16_t port = 0;
};

using Endpoints = std::map<std::string, Endpoint>;

/// Parses `name=addr:port,name=addr:port,...`.
inline Endpoints parse_peers(std::string_view text) {
  Endpoints out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    auto item = text.substr(pos, comma == std::string_view::npos ? text.size() - pos : comma - pos);
    pos = comma == std::string_view::npos ? text.size() + 1 : comma + 1;
    if (item.empty()) continue;
    auto eq = item.find('=');
    auto colon = item.rfind(':');
    if (eq == std::string_view::npos || colon == std::string_view::npos || colon < eq) {
      throw ConfigError("bad peer entry '" + std::string(item) + "', expected name=addr:port");
    }
    std::string name(item.substr(0, eq));
    std::string addr(item.substr(eq + 1, colon - eq - 1));
    std::string port(item.substr(colon + 1));
    char* end = nullptr;
    long p = std::strtol(port.c_str(), &end, 10);
    if (name.empty() || addr.empty() || end == port.c_str() || *end != '\0' || p < 1 || p > 65535) {
      throw ConfigError("bad peer entry '" + std::string(item) + "'");
    }
    if (!out.emplace(name, Endpoint{addr, static_cast<std::uint16_t>(p)}).second) {
      throw ConfigError("peer '" + name + "' listed twice");
    }
  }
  if (out.empty()) throw ConfigError("peer list is empty");
  return out;
}

namespace detail {

inline sockaddr_in resolve(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  if (inet_pton(AF_INET, ep.address.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(ep.address.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw TransportError("cannot resolve host '" + ep.address + "'");
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

inline bool read_exact(int fd, std::uint8_t* buf, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r == 0) return false;
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

inline void write_all(int fd, const std::uint8_t* buf, std::size_t n) {
  std::size_t sent = 0;
  while (sent < n) {
    ssize_t r = ::send(fd, buf + sent, n - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("send failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(r);
  }
}

}  // namespace detail

/// Framed TCP transport for one host. Listens on its own endpoint; opens one
/// outgoing connection per destination host on first use, multiplexing all
/// channels on it. Incoming frames are queued per channel until a `recv`
/// operator claims them.
class TcpTransport {
 public:
  TcpTransport(std::string self, Endpoints endpoints,
               std::chrono::milliseconds timeout = std::chrono::seconds(30))
      : self_(std::move(self)), endpoints_(std::move(endpoints)), timeout_(timeout) {
    auto it = endpoints_.find(self_);
    if (it == endpoints_.end()) throw ConfigError("host '" + self_ + "' missing from peer list");
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw TransportError("socket() failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = detail::resolve(it->second);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(listen_fd_, 16) != 0) {
      int err = errno;
      ::close(listen_fd_);
      throw TransportError("cannot listen on " + it->second.address + ":" +
                           std::to_string(it->second.port) + ": " + std::strerror(err));
    }
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  ~TcpTransport() {
    stopping_ = true;
    if (acceptor_.joinable()) acceptor_.join();
    ::close(listen_fd_);
    {
      std::lock_guard lock(conn_mu_);
      for (auto& [host, conn] : outgoing_) {
        if (conn->fd >= 0) ::close(conn->fd);
      }
      for (int fd : incoming_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    for (auto& t : readers_) t.join();
    for (int fd : incoming_fds_) ::close(fd);
  }

  const std::string& host() const { return self_; }
  std::chrono::milliseconds timeout() const { return timeout_; }

  void send(const std::string& dest, std::uint64_t channel, std::uint64_t iteration,
            std::span<const float> payload) {
    auto bytes = encode_frame(channel, iteration, payload);
    Connection& conn = connection(dest);
    std::lock_guard lock(conn.mu);
    detail::write_all(conn.fd, bytes.data(), bytes.size());
  }

  /// Blocks until the next frame of `channel` arrives. The frame must carry
  /// `iteration`; anything else means the peers' loops are out of step.
  Frame receive(std::uint64_t channel, std::uint64_t iteration, std::uint32_t payload_bytes) {
    std::unique_lock lock(mail_mu_);
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    auto& box = mailbox_[channel];
    if (!mail_cv_.wait_until(lock, deadline, [&] { return !box.empty() || !reader_error_.empty(); })) {
      throw TransportError("timed out after " + std::to_string(timeout_.count()) +
                           " ms waiting for channel " + std::to_string(channel) + " iteration " +
                           std::to_string(iteration));
    }
    if (box.empty()) throw TransportError(reader_error_);
    Frame f = std::move(box.front());
    box.pop_front();
    if (f.iteration != iteration) {
      throw TransportError("protocol violation on channel " + std::to_string(channel) +
                           ": expected iteration " + std::to_string(iteration) + ", got " +
                           std::to_string(f.iteration));
    }
    if (f.payload.size() * sizeof(float) != payload_bytes) {
      throw TransportError("frame on channel " + std::to_string(channel) + " carries " +
                           std::to_string(f.payload.size() * sizeof(float)) +
                           " payload bytes, expected " + std::to_string(payload_bytes));
    }
    return f;
  }

 private:
  struct Connection {
    std::mutex mu;
    int fd = -1;
  };

  Connection& connection(const std::string& dest) {
    std::unique_lock lock(conn_mu_);
    auto& slot = outgoing_[dest];
    if (!slot) slot = std::make_unique<Connection>();
    Connection& conn = *slot;
    lock.unlock();

    std::lock_guard conn_lock(conn.mu);
    if (conn.fd >= 0) return conn;
    auto it = endpoints_.find(dest);
    if (it == endpoints_.end()) throw TransportError("unknown destination host '" + dest + "'");
    const sockaddr_in addr = detail::resolve(it->second);
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
      int fd = ::socket(AF_INET, SOCK_STREAM, 0);
      if (fd < 0) throw TransportError("socket() failed");
      if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) == 0) {
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        conn.fd = fd;
        return conn;
      }
      ::close(fd);
      if (std::chrono::steady_clock::now() >= deadline) {
        throw TransportError("timed out connecting to '" + dest + "' at " + it->second.address +
                             ":" + std::to_string(it->second.port));
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }

  void accept_loop() {
    while (!stopping_) {
      pollfd p{listen_fd_, POLLIN, 0};
      int r = ::poll(&p, 1, 50);
      if (r <= 0 || !(p.revents & POLLIN)) continue;
      int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) continue;
      std::lock_guard lock(conn_mu_);
      incoming_fds_.push_back(fd);
      readers_.emplace_back([this, fd] { read_loop(fd); });
    }
  }

  void read_loop(int fd) {
    std::vector<std::uint8_t> buf(kFrameHeaderSize);
    for (;;) {
      buf.resize(kFrameHeaderSize);
      if (!detail::read_exact(fd, buf.data(), kFrameHeaderSize)) return;
      FrameHeader h;
      try {
        h = decode_header(buf);
      } catch (const TransportError& e) {
        fail_readers(e.what());
        return;
      }
      buf.resize(kFrameHeaderSize + h.payload_len);
      if (!detail::read_exact(fd, buf.data() + kFrameHeaderSize, h.payload_len)) return;
      Frame f = decode_frame(buf);
      {
        std::lock_guard lock(mail_mu_);
        mailbox_[f.channel].push_back(std::move(f));
      }
      mail_cv_.notify_all();
    }
  }

  void fail_readers(const std::string& why) {
    {
      std::lock_guard lock(mail_mu_);
      if (reader_error_.empty()) reader_error_ = why;
    }
    mail_cv_.notify_all();
  }

  std::string self_;
  Endpoints endpoints_;
  std::chrono::milliseconds timeout_;
  int listen_fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;

  std::mutex conn_mu_;
  std::map<std::string, std::unique_ptr<Connection>> outgoing_;
  std::vector<int> incoming_fds_;
  std::vector<std::thread> readers_;

  std::mutex mail_mu_;
  std::condition_variable mail_cv_;
  std::map<std::uint64_t, std::deque<Frame>> mailbox_;
  std::string reader_error_;
};

/// `registry` plus `send`/`recv` kernels bound to `transport`. A recv is a
/// zero-input operator whose kernel blocks until its frame arrives.
inline OperatorRegistry with_transport(OperatorRegistry registry, TcpTransport& transport) {
  registry.add(std::string(kinds::kSend), [&transport](const KernelContext& c) {
    transport.send(c.attr<std::string>("peer", ""), c.attr<std::uint64_t>("channel", 0),
                   c.iteration, c.in(0).data());
  });
  registry.add(std::string(kinds::kRecv), [&transport](const KernelContext& c) {
    Tensor& dst = c.out(0);
    Frame f = transport.receive(c.attr<std::uint64_t>("channel", 0), c.iteration,
                                static_cast<std::uint32_t>(dst.size() * sizeof(float)));
    std::copy(f.payload.begin(), f.payload.end(), dst.data().begin());
  });
  return registry;
}

/// Partitions every graph of a sequence by host. Channel ids are unique
/// across the sequence: graph g allocates from g << 32.
inline std::map<std::string, GraphSequence> partition_sequence(const GraphSequence& seq) {
  std::map<std::string, GraphSequence> per_host;
  std::set<std::string> hosts;
  std::vector<std::vector<HostPartition>> parts;
  for (std::size_t g = 0; g < seq.graphs.size(); ++g) {
    parts.push_back(partition_by_host(seq.graphs[g], static_cast<std::uint64_t>(g) << 32));
    for (const auto& p : parts.back()) hosts.insert(p.host);
  }
  for (const auto& h : hosts) {
    auto& hs = per_host[h];
    hs.iterations = seq.iterations;
    for (auto& graph_parts : parts) {
      BiGraph sub;
      for (auto& p : graph_parts) {
        if (p.host == h) sub = std::move(p.subgraph);
      }
      hs.graphs.push_back(std::move(sub));
    }
  }
  return per_host;
}

/// Runs this host's share of a partitioned sequence. Every host must run the
/// same number of iterations; frames are tagged with the iteration so a
/// de-synchronized peer is detected at the first mismatching frame.
inline std::vector<RunReport> run_distributed(const GraphSequence& host_seq, TcpTransport& transport,
                                              TensorStore& store, const OperatorRegistry& registry,
                                              RunOptions opts = {},
                                              const IterationHook& before_iteration = {}) {
  const auto reg = with_transport(registry, transport);
  return run_sequence(host_seq, store, reg, opts, before_iteration);
}

}  // namespace bigraph
