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


#include "mpstat/client.hpp"

#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <sstream>
#include <thread>

namespace mpstat {

Client::Client(const std::string& host, std::uint16_t port, ClientOptions options) : options_(options) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_DGRAM;
  addrinfo* res = nullptr;
  const auto service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0)
    throw IoError("resolve " + host + ": " + ::gai_strerror(rc));
  addr_.assign(reinterpret_cast<unsigned char*>(res->ai_addr),
               reinterpret_cast<unsigned char*>(res->ai_addr) + res->ai_addrlen);
  fd_ = ::socket(res->ai_family, res->ai_socktype, 0);
  ::freeaddrinfo(res);
  if (fd_ < 0) throw IoError(std::string("socket: ") + std::strerror(errno));
}

Client::~Client() {
  if (fd_ >= 0) ::close(fd_);
}

Reply Client::call(const Request& req) {
  std::lock_guard lock(mu_);
  const auto bytes = encode(req);
  char buf[2 * kMaxDatagram];
  for (int attempt = 0; attempt < options_.retries; ++attempt) {
    // Drop late replies to earlier, timed-out attempts.
    while (::recv(fd_, buf, sizeof buf, MSG_DONTWAIT) >= 0) {
    }
    ::sendto(fd_, bytes.data(), bytes.size(), 0, reinterpret_cast<const sockaddr*>(addr_.data()),
             static_cast<socklen_t>(addr_.size()));
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(options_.timeout_ms);
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline -
                                                                              std::chrono::steady_clock::now());
      if (left.count() <= 0) break;
      pollfd pfd{fd_, POLLIN, 0};
      if (::poll(&pfd, 1, static_cast<int>(left.count())) <= 0) continue;
      const auto n = ::recv(fd_, buf, sizeof buf, MSG_DONTWAIT);
      if (n <= 0) continue;
      if (auto reply = decode_reply(std::string_view(buf, static_cast<std::size_t>(n)))) return *reply;
    }
  }
  throw TimeoutError("no reply to " + std::string(to_string(req.verb)) + " after " +
                     std::to_string(options_.retries) + " x " + std::to_string(options_.timeout_ms) + " ms");
}

Reply Client::checked(const Request& req) {
  auto reply = call(req);
  if (!reply.ok) throw RemoteError(reply.code, reply.text);
  return reply;
}

namespace {

long long payload_int(const Reply& r) {
  long long v = 0;
  const auto& s = r.payload;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw IoError("malformed reply payload '" + s + "'");
  return v;
}

}  // namespace

void Client::ping() {
  if (checked(Request::ping()).payload != "PONG") throw IoError("unexpected PING reply");
}

std::string Client::info() { return checked(Request::info()).payload; }

void Client::set_voltage(int ch, int mv) { checked(Request::set(ch, mv)); }

void Client::set_switch(int ch, bool closed) { checked(Request::sw(ch, closed)); }

std::int64_t Client::get_current_pA(int ch) { return payload_int(checked(Request::get_current(ch))); }

int Client::get_voltage_mV(int ch) { return static_cast<int>(payload_int(checked(Request::get_voltage(ch)))); }

void Client::calibrate() { checked(Request::calibrate()); }

void Client::run(const std::string& protocol) { checked(Request::run(protocol)); }

void Client::stop() { checked(Request::stop()); }

double control_step(ControllerState& s, double target, double measured, double dt) {
  const double e = target - measured;
  s.integral = std::clamp(s.integral + s.k_i * e * dt, s.u_min, s.u_max);
  return std::clamp(s.k_p * e + s.integral, s.u_min, s.u_max);
}

FileTailSensor::FileTailSensor(std::filesystem::path path, int timeout_ms, int poll_ms)
    : path_(std::move(path)), timeout_ms_(timeout_ms), poll_ms_(poll_ms) {}

double FileTailSensor::read(double /*t*/) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms_);
  for (;;) {
    if (!in_.is_open()) in_.open(path_, std::ios::binary);
    if (in_.is_open()) {
      std::string chunk;
      char c;
      while (in_.get(c)) {
        if (c == '\n') {
          const std::string line = partial_ + chunk;
          partial_.clear();
          chunk.clear();
          double v = 0;
          const auto [p, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
          if (ec != std::errc{} || p != line.data() + line.size() || !std::isfinite(v))
            throw IoError("sensor file: bad intensity line '" + line + "'");
          return v;
        }
        chunk += c;
      }
      partial_ += chunk;
      in_.clear();  // keep following the file after EOF
    }
    if (std::chrono::steady_clock::now() >= deadline)
      throw TimeoutError("no sensor sample in " + path_.string());
    std::this_thread::sleep_for(std::chrono::milliseconds(poll_ms_));
  }
}

void write_trace_row(std::ostream& out, const TracePoint& p) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.6f,%.17g,%.17g,%d\n", p.t, p.target, p.measured, p.u_mV);
  out << buf;
}

std::vector<TracePoint> read_trace(std::istream& in) {
  std::vector<TracePoint> out;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kTraceHeader) throw IoError("trace: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    TracePoint p;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%d", &p.t, &p.target, &p.measured, &p.u_mV) != 4)
      throw IoError("trace: bad row '" + line + "'");
    out.push_back(p);
  }
  return out;
}

std::vector<TracePoint> run_closed_loop(ControlPort& port, const std::function<double(double)>& target,
                                        FluorescenceSensor& sensor, const ClosedLoopOptions& options,
                                        ControllerState controller, std::ostream* trace) {
  if (!(options.period_s > 0)) throw RangeError("period must be > 0");
  std::vector<TracePoint> points;
  if (trace) *trace << kTraceHeader << '\n';
  try {
    port.set_switch(options.channel, true);
    const auto steps = static_cast<long long>(std::floor(options.duration_s / options.period_s + 1e-9));
    for (long long k = 0; k <= steps; ++k) {
      TracePoint p;
      p.t = static_cast<double>(k) * options.period_s;
      p.measured = sensor.read(p.t);
      p.target = target(p.t);
      const double u = control_step(controller, p.target, p.measured, options.period_s);
      p.u_mV = static_cast<int>(std::lround(options.polarity * u * 1000.0));
      port.set_voltage(options.channel, p.u_mV);
      points.push_back(p);
      if (trace) write_trace_row(*trace, p);
    }
  } catch (const TimeoutError&) {
    if (trace) trace->flush();
    throw;
  }
  if (trace) trace->flush();
  return points;
}

std::function<double(double)> parse_target_spec(const std::string& spec) {
  std::map<double, double> points;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("target spec item '" + item + "' lacks ':'");
    double t = 0;
    double v = 0;
    try {
      t = std::stod(item.substr(0, colon));
      v = std::stod(item.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("target spec item '" + item + "' is not numeric");
    }
    if (v < 0 || v > 1) throw ConfigError("target intensity must be within [0, 1]");
    points[t] = v;
  }
  if (points.empty() || points.begin()->first != 0.0) throw ConfigError("target spec must start at t=0");
  return [points](double t) {
    auto it = points.upper_bound(t);
    if (it != points.begin()) --it;
    return it->second;
  };
}

}  // namespace mpstat
