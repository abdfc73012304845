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


// Client side of the control plane and the closed-loop harness that steers
// an ion pump's fluorescence proxy toward a target trajectory.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include "mpstat/errors.hpp"
#include "mpstat/wire.hpp"

namespace mpstat {

/// The subset of instrument control the closed loop needs.
class ControlPort {
 public:
  virtual ~ControlPort() = default;
  virtual void set_voltage(int ch, int mv) = 0;
  virtual void set_switch(int ch, bool closed) = 0;
};

/// An ERR reply surfaced as an exception by the typed Client calls.
class RemoteError : public Error {
 public:
  RemoteError(ErrorCode code, const std::string& text)
      : Error("remote error " + std::to_string(static_cast<int>(code)) + ": " + text), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct ClientOptions {
  int timeout_ms = 200;
  int retries = 3;  ///< total attempts per call
};

/// UDP client. Each call sends one datagram and waits for one reply,
/// resending up to `retries` times. Calls from several threads are
/// serialized internally.
class Client : public ControlPort {
 public:
  Client(const std::string& host, std::uint16_t port, ClientOptions options = {});
  ~Client() override;
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  /// Throws TimeoutError once every attempt has timed out.
  Reply call(const Request& req);

  void ping();
  std::string info();
  void set_voltage(int ch, int mv) override;
  void set_switch(int ch, bool closed) override;
  std::int64_t get_current_pA(int ch);
  int get_voltage_mV(int ch);
  void calibrate();
  void run(const std::string& protocol);
  void stop();

 private:
  Reply checked(const Request& req);

  int fd_ = -1;
  std::vector<unsigned char> addr_;
  ClientOptions options_;
  std::mutex mu_;
};

/// PI controller with output and integral clamping.
struct ControllerState {
  double k_p = 10.0;  ///< V per unit intensity error
  double k_i = 0.2;   ///< V/s per unit intensity error
  double integral = 0.0;
  double u_min = -1.4;
  double u_max = 1.4;
};

/// e = target - measured; integral += k_i*e*dt (clamped); u = clamp(k_p*e + integral).
double control_step(ControllerState& state, double target, double measured, double dt);

class FluorescenceSensor {
 public:
  virtual ~FluorescenceSensor() = default;
  /// Intensity at simulated/experiment time t; may block until available.
  virtual double read(double t) = 0;
};

/// Wraps any callable, e.g. the twin's fluorescence proxy.
class CallbackSensor : public FluorescenceSensor {
 public:
  explicit CallbackSensor(std::function<double(double)> fn) : fn_(std::move(fn)) {}
  double read(double t) override { return fn_(t); }

 private:
  std::function<double(double)> fn_;
};

/// Follows a text file that an external sensor appends to, one decimal
/// intensity per LF-terminated line.
class FileTailSensor : public FluorescenceSensor {
 public:
  explicit FileTailSensor(std::filesystem::path path, int timeout_ms = 10'000, int poll_ms = 20);
  double read(double t) override;

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::string partial_;
  int timeout_ms_;
  int poll_ms_;
};

struct ClosedLoopOptions {
  int channel = 0;
  double duration_s = 300.0;
  double period_s = 2.0;  ///< microscope frame interval
  /// Drive = polarity * u. Negative drive raises fluorescence, so a
  /// positive intensity error needs a negative drive.
  double polarity = -1.0;
};

struct TracePoint {
  double t = 0.0;
  double target = 0.0;
  double measured = 0.0;
  int u_mV = 0;  ///< drive actually sent
};

inline constexpr const char* kTraceHeader = "t_s,target,measured,u_mV";

void write_trace_row(std::ostream& out, const TracePoint& p);
std::vector<TracePoint> read_trace(std::istream& in);

/// Every period: read the sensor, step the controller, send the drive and
/// log a trace row. A TimeoutError aborts the loop after flushing the rows
/// written so far.
std::vector<TracePoint> run_closed_loop(ControlPort& port, const std::function<double(double)>& target,
                                        FluorescenceSensor& sensor, const ClosedLoopOptions& options,
                                        ControllerState controller = {}, std::ostream* trace = nullptr);

/// Piecewise-constant target from "t0:value,t1:value,...", t0 must be 0.
std::function<double(double)> parse_target_spec(const std::string& spec);

}  // namespace mpstat
