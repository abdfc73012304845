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


#include "mpstat/server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <iostream>
#include <vector>

#include "mpstat/errors.hpp"

namespace mpstat {

Instrument::Instrument(Device device, std::filesystem::path protocol_dir)
    : device_(std::move(device)), protocol_dir_(std::move(protocol_dir)) {}

std::string Instrument::info() const {
  const auto& c = device_.config();
  const auto& p = c.chain;
  std::string s = "channels=" + std::to_string(device_.channel_count());
  s += " boards=" + std::to_string(c.n_boards);
  s += " rate_mHz=" + std::to_string(std::llround(device_.sample_rate() * 1000.0));
  s += std::string(" mode=") + to_string(c.mode);
  s += " range_pA=" + std::to_string(p.full_scale_counts() * kPicoampsPerCount);
  s += " rated_pA=" + std::to_string(std::llround(p.rated_current_A * 1e12));
  s += " lsb_pA=" + std::to_string(kPicoampsPerCount);
  s += " drive_mV=" + std::to_string(std::lround(p.drive_min_V() * 1000.0)) + ".." +
       std::to_string(static_cast<long>(std::floor(p.drive_max_V() * 1000.0)));
  s += std::string(" running=") + (runner_ ? "1" : "0");
  s += " fw=mpstat-twin/1.0.0";
  return s;
}

Reply Instrument::execute(const Request& req) {
  auto record = encode(req);
  record.pop_back();
  device_.log_command(record);
  const bool needs_channel = req.verb == Verb::Set || req.verb == Verb::Sw || req.verb == Verb::GetI ||
                             req.verb == Verb::GetV;
  if (needs_channel && (req.channel < 0 || req.channel >= device_.channel_count()))
    return Reply::error(ErrorCode::Range, "channel");

  switch (req.verb) {
    case Verb::Ping:
      return Reply::success("PONG");
    case Verb::Info:
      return Reply::success(info());
    case Verb::Set:
      if (runner_) return Reply::error(ErrorCode::State, "busy");
      try {
        device_.set_voltage(req.channel, req.value);
      } catch (const RangeError&) {
        return Reply::error(ErrorCode::Range, "mv");
      }
      return Reply::success();
    case Verb::Sw:
      if (runner_) return Reply::error(ErrorCode::State, "busy");
      device_.set_switch(req.channel, req.value != 0);
      return Reply::success();
    case Verb::GetI:
      return Reply::success(std::to_string(device_.current_pA(req.channel)));
    case Verb::GetV:
      return Reply::success(std::to_string(drive_readback_mV(device_.channel(req.channel).dac_code,
                                                             device_.config().chain)));
    case Verb::Cal:
      if (runner_) return Reply::error(ErrorCode::State, "busy");
      device_.calibrate();
      return Reply::success();
    case Verb::Run:
      if (runner_) return Reply::error(ErrorCode::State, "busy");
      return start(req.name);
    case Verb::Stop:
      if (!runner_) return Reply::error(ErrorCode::State, "idle");
      runner_.reset();
      device_.set_busy(false);
      device_.log_command("ABORT");
      return Reply::success();
  }
  return Reply::error(ErrorCode::Unsupported, "unknown-command");
}

Reply Instrument::start(const std::string& name) {
  if (protocol_dir_.empty()) return Reply::error(ErrorCode::Unsupported, "no-protocols");
  const auto path = protocol_dir_ / (name + ".csv");
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) return Reply::error(ErrorCode::Range, "protocol");
  try {
    auto protocol = load_protocol(path, device_.channel_count());
    device_.set_sample_rate(protocol.sample_rate_Hz);
    runner_.emplace(std::move(protocol), 0.0);
    device_.set_busy(true);
  } catch (const Error&) {
    return Reply::error(ErrorCode::Parse, "protocol");
  }
  return Reply::success();
}

void Instrument::tick() {
  if (runner_ && !runner_->prepare_tick(device_)) {
    runner_.reset();
    device_.set_busy(false);
    device_.log_command("END");
  }
  device_.sample_all();
}

void Instrument::advance_to(double t) {
  // Half a tick of slack absorbs the rounding in the clock arithmetic.
  while (device_.time() + 0.5 * device_.tick_period() < t) tick();
}

Server::Server(Instrument& instrument, ServerOptions options)
    : instrument_(instrument), options_(std::move(options)) {
  const double f = instrument_.device().config().time_mode.factor;
  time_factor_ = f > 0 ? f : 1.0;
  instrument_.device().set_time_mode(TimeMode::accelerated(0.0));

  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw IoError(std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(options_.port);
  if (::inet_pton(AF_INET, options_.bind_address.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw IoError("bad bind address " + options_.bind_address);
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd_);
    throw IoError("bind " + options_.bind_address + ":" + std::to_string(options_.port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

Server::~Server() {
  if (fd_ >= 0) ::close(fd_);
}

std::string Server::handle(std::string_view datagram) {
  const auto decoded = decode_request(datagram);
  if (!decoded.request) return encode(decoded.error);
  std::lock_guard lock(mu_);
  return encode(instrument_.execute(*decoded.request));
}

void Server::advance_to(double t) {
  std::lock_guard lock(mu_);
  instrument_.advance_to(t);
}

void Server::send_to(const std::string& bytes, const void* addr, unsigned addr_len) {
  const auto n = ::sendto(fd_, bytes.data(), bytes.size(), 0, static_cast<const sockaddr*>(addr), addr_len);
  if (n < 0) {
    std::cerr << "mpstat: sendto failed: " << std::strerror(errno) << '\n';
    return;
  }
  ++sent_;
}

void Server::serve(const std::atomic<bool>& stop) {
  using clock = std::chrono::steady_clock;
  const auto wall_start = clock::now();
  const double sim_start = instrument_.device().time();
  auto due_at = [&](double sim_t) {
    return wall_start + std::chrono::duration_cast<clock::duration>(
                            std::chrono::duration<double>((sim_t - sim_start) / time_factor_));
  };

  std::vector<char> buf(4 * kMaxDatagram);
  while (!stop.load(std::memory_order_relaxed)) {
    auto timeout = std::chrono::milliseconds(50);
    if (!options_.lockstep) {
      const auto next = due_at(instrument_.device().time() + instrument_.device().tick_period());
      const auto now = clock::now();
      timeout = next > now ? std::min(timeout, std::chrono::duration_cast<std::chrono::milliseconds>(next - now))
                           : std::chrono::milliseconds(0);
    }
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (ready < 0 && errno != EINTR) std::cerr << "mpstat: poll failed: " << std::strerror(errno) << '\n';

    if (ready > 0 && (pfd.revents & POLLIN)) {
      for (;;) {
        sockaddr_storage peer{};
        socklen_t peer_len = sizeof peer;
        const auto n = ::recvfrom(fd_, buf.data(), buf.size(), MSG_DONTWAIT | MSG_TRUNC,
                                  reinterpret_cast<sockaddr*>(&peer), &peer_len);
        if (n < 0) {
          if (errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR)
            std::cerr << "mpstat: recvfrom failed: " << std::strerror(errno) << '\n';
          break;
        }
        ++received_;
        const auto size = static_cast<std::size_t>(n);
        const std::string_view datagram(buf.data(), std::min(size, buf.size()));
        // Oversized frames are rejected before the truncated bytes are looked at.
        const auto decoded = size > kMaxDatagram ? decode_request(std::string(kMaxDatagram + 1, ' '))
                                                 : decode_request(datagram);
        if (!decoded.request) {
          send_to(encode(decoded.error), &peer, peer_len);
          continue;
        }
        if (options_.lockstep) {
          std::string reply;
          {
            std::lock_guard lock(mu_);
            reply = encode(instrument_.execute(*decoded.request));
          }
          send_to(reply, &peer, peer_len);
        } else {
          queue_.push([this, req = *decoded.request, peer, peer_len] {
            const auto reply = encode(instrument_.execute(req));
            send_to(reply, &peer, peer_len);
          });
        }
      }
    }

    if (!options_.lockstep) {
      const auto now = clock::now();
      std::lock_guard lock(mu_);
      if (due_at(instrument_.device().time() + instrument_.device().tick_period()) <= now) {
        queue_.drain();
        instrument_.tick();
      }
    }
  }
  std::lock_guard lock(mu_);
  queue_.drain();
  instrument_.device().close_log();
}

}  // namespace mpstat
