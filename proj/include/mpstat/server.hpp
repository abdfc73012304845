// Copyright 2026 The mpstat-twin Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <atomic>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "mpstat/device.hpp"
#include "mpstat/protocol.hpp"
#include "mpstat/wire.hpp"

namespace mpstat {

/// A device plus its protocol slot: the thing the wire commands act on.
/// Not thread-safe; the Server serializes access.
class Instrument {
 public:
  explicit Instrument(Device device, std::filesystem::path protocol_dir = {});

  /// Applies one decoded command. Never throws for device-level errors;
  /// they become ERR replies.
  Reply execute(const Request& req);
  /// One tick: advances a running protocol, then samples every channel.
  void tick();
  /// Ticks until the simulated clock reaches t.
  void advance_to(double t);

  bool running() const { return runner_.has_value(); }
  Device& device() { return device_; }
  const Device& device() const { return device_; }
  std::string info() const;

 private:
  Reply start(const std::string& name);

  Device device_;
  std::filesystem::path protocol_dir_;
  std::optional<ProtocolRunner> runner_;
};

struct ServerOptions {
  std::string bind_address = "0.0.0.0";
  std::uint16_t port = kDefaultPort;  ///< 0 picks an ephemeral port
  /// Lockstep: commands apply on receipt and the clock only moves through
  /// advance_to(). Otherwise the server ticks in real time (scaled by the
  /// device's time factor) and applies commands at tick boundaries.
  bool lockstep = false;
};

class Server {
 public:
  Server(Instrument& instrument, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t port() const { return port_; }

  /// Receive loop; returns once `stop` is raised.
  void serve(const std::atomic<bool>& stop);

  /// Decode, apply and encode one datagram synchronously.
  std::string handle(std::string_view datagram);

  /// Lockstep clock control, safe to call while serve() runs.
  void advance_to(double t);

  template <typename F>
  auto with_instrument(F&& f) {
    std::lock_guard lock(mu_);
    return f(instrument_);
  }

  std::uint64_t datagrams_received() const { return received_; }
  std::uint64_t replies_sent() const { return sent_; }

 private:
  void send_to(const std::string& bytes, const void* addr, unsigned addr_len);

  Instrument& instrument_;
  ServerOptions options_;
  int fd_ = -1;
  std::uint16_t port_ = 0;
  double time_factor_ = 1.0;
  std::mutex mu_;
  CommandQueue queue_;
  std::atomic<std::uint64_t> received_{0};
  std::atomic<std::uint64_t> sent_{0};
};

}  // namespace mpstat
