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


// The virtual instrument: a base unit with 1..8 stackable boards of eight
// channels each, a monotonic simulated clock and the CSV run log.

#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mpstat/cell_models.hpp"
#include "mpstat/signal_chain.hpp"

namespace mpstat {

inline constexpr int kChannelsPerBoard = 8;
inline constexpr int kMaxBoards = 8;
inline constexpr const char* kFirmwareVersion = "mpstat-twin 1.0.0";

enum class Mode { Ideal, Noisy };

/// Pacing of the tick loop. factor 1 is real time, factor N runs N times
/// faster than real time, factor 0 runs unpaced.
struct TimeMode {
  double factor = 0.0;

  static TimeMode realtime() { return {1.0}; }
  static TimeMode accelerated(double factor) { return {factor}; }
  bool paced() const { return factor > 0.0; }
};

struct DeviceConfig {
  int n_boards = 1;
  double sample_rate_Hz = 15.0;
  Mode mode = Mode::Ideal;
  TimeMode time_mode{};
  std::uint64_t seed = 1;
  SignalChainParams chain{};

  int channels() const { return n_boards * kChannelsPerBoard; }
  /// Throws ConfigError when out of range.
  void validate() const;
  std::string describe() const;
};

const char* to_string(Mode m);
Mode parse_mode(const std::string& s);

/// Metadata written as `#` lines at the top of a run log.
struct LogMeta {
  std::string start_utc;
  std::string note;
};

/// Current UTC time as ISO-8601, or SOURCE_DATE_EPOCH when that is set.
std::string utc_now_string();

/// CSV writer for samples and command records.
class RunLog {
 public:
  static constexpr const char* kHeader = "t_s,channel,set_mV,switch,current_pA";

  explicit RunLog(std::ostream& out) : out_(&out) {}
  explicit RunLog(const std::string& path);

  void write_meta(const std::string& line);
  void write_header();
  void write_sample(const Sample& s);
  void write_command(double t, const std::string& text);
  void flush();
  const std::string& path() const { return path_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* out_;
  std::string path_;
};

/// Thread-safe FIFO of deferred device operations, drained by the tick
/// owner at tick boundaries.
class CommandQueue {
 public:
  using Command = std::function<void()>;

  void push(Command c);
  /// Runs every queued command in arrival order; returns how many ran.
  std::size_t drain();
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::deque<Command> items_;
};

/// Default no-load conversions per channel for calibrate(). Sized so the
/// baseline error stays under one reading LSB at the default noise level.
inline constexpr int kCalibrationSamples = 4000;

class Device {
 public:
  explicit Device(DeviceConfig config);  ///< create_device

  Device(Device&&) noexcept;
  Device& operator=(Device&&) noexcept;
  ~Device();

  const DeviceConfig& config() const { return config_; }
  int channel_count() const { return static_cast<int>(channels_.size()); }
  const ChannelState& channel(int ch) const;

  void set_voltage(int ch, int mv);
  /// Quantized drive readback in mV.
  double get_voltage_mV(int ch) const;
  void set_switch(int ch, bool closed);
  void bind_cell(int ch, CellModel cell);
  const std::optional<CellModel>& cell(int ch) const;
  std::optional<CellModel>& cell(int ch);
  /// Amplifier input offset for a channel (a calibration target).
  void inject_offset(int ch, double amps);

  /// Opens every switch, averages n no-load conversions per channel, stores
  /// the baselines and leaves the switches open. The conversions run as a
  /// burst with the cells detached; the run clock does not move.
  /// Returns the baselines in nA.
  std::vector<double> calibrate(int n_samples = kCalibrationSamples);

  /// One tick: advances every channel by one sample period.
  const std::vector<Sample>& sample_all();
  const std::vector<Sample>& last_samples() const { return samples_; }
  std::int64_t current_pA(int ch) const;

  double time() const;
  double tick_period() const { return 1.0 / rate_; }
  double sample_rate() const { return rate_; }
  void set_sample_rate(double hz);
  std::uint64_t ticks() const { return ticks_total_; }

  void set_time_mode(TimeMode mode);

  void set_busy(bool busy) { busy_ = busy; }
  bool busy() const { return busy_; }

  /// Starts a run log; the clock restarts at zero.
  void open_log(std::unique_ptr<RunLog> log, const LogMeta& meta);
  void close_log();
  RunLog* log() { return log_.get(); }
  /// Records an executed command in the log (no-op without a log).
  void log_command(const std::string& text);

 private:
  void check_channel(int ch) const;
  void pace();

  DeviceConfig config_;
  std::vector<ChannelState> channels_;
  std::vector<std::optional<CellModel>> cells_;
  std::vector<NoiseSource> noise_;
  std::vector<Sample> samples_;
  std::unique_ptr<RunLog> log_;

  double rate_;
  double t_base_ = 0.0;  ///< clock value at the last rate change
  std::uint64_t ticks_since_base_ = 0;
  std::uint64_t ticks_total_ = 0;
  bool busy_ = false;
  std::optional<std::chrono::steady_clock::time_point> wall_start_;
  double sim_at_wall_start_ = 0.0;
};

}  // namespace mpstat
