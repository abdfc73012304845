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


// Standalone protocols: a CSV schedule of HOLD / RAMP / OPEN / LOOP steps
// executed against the device's simulated clock.
//
// CSV schema (header row required, LF or CRLF line endings):
//
//   step,channel,action,v1_mV,v2_mV,duration_s,repeat
//
//   step        dense 0-based index
//   channel     0-based channel or ALL
//   HOLD        close the switch and hold v1 for duration
//   RAMP        close the switch and sweep v1 -> v2 linearly over duration
//   OPEN        open the switch for duration (0 is an instantaneous change)
//   LOOP        jump back to step v1 `repeat` more times; duration unused
//   repeat      passes of HOLD/RAMP/OPEN, or jump count of LOOP (default 1)
//
// Optional leading `# name: ...` and `# sample_rate_Hz: ...` lines set the
// protocol name and its default sample rate.

#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mpstat/device.hpp"

namespace mpstat {

enum class Action { Hold, Ramp, Open, Loop };

inline constexpr int kAllChannels = -1;
inline constexpr double kDefaultProtocolRate_Hz = 15.0;

const char* to_string(Action a);

struct ProtocolStep {
  int index = 0;
  int channel = 0;  ///< or kAllChannels
  Action action = Action::Hold;
  int v1_mV = 0;
  int v2_mV = 0;
  double duration_s = 0.0;
  int loop_to = 0;
  int repeat = 1;

  bool operator==(const ProtocolStep&) const = default;
};

struct Protocol {
  std::string name;
  std::vector<ProtocolStep> steps;
  double sample_rate_Hz = kDefaultProtocolRate_Hz;

  /// Total scheduled time with loops unrolled.
  double duration_s() const;
};

/// Parses and validates protocol CSV. Channels are checked against
/// `n_channels`. Throws ParseError or ValidationError.
Protocol parse_protocol(std::string_view csv, int n_channels = kMaxBoards * kChannelsPerBoard,
                        std::string name = {});
Protocol load_protocol(const std::filesystem::path& path, int n_channels = kMaxBoards * kChannelsPerBoard);
std::string to_csv(const Protocol& p);

/// Semantic checks shared by the parser and the builders.
void validate(const Protocol& p, int n_channels, const SignalChainParams& chain = {});

/// Triangular sweep v_lo -> v_hi -> v_lo, repeated `cycles` times.
Protocol make_cv(int channel, int v_lo_mV, int v_hi_mV, double rate_mV_per_s, int cycles = 1);

/// Square wave of +-amp on one electrode at a time, every other channel
/// open. Channels in `skip` are left open for the whole run.
Protocol make_electrode_cycle(const std::vector<int>& channels, int amp_mV, double period_s,
                              const std::set<int>& skip = {});

/// Steps a protocol one tick at a time against a device. Used both by
/// run_protocol and by the remote RUN command.
class ProtocolRunner {
 public:
  ProtocolRunner(Protocol protocol, double sample_rate_Hz);

  /// Applies the setpoints for the next tick. Returns false when finished.
  bool prepare_tick(Device& device);
  bool done() const { return pc_ >= protocol_.steps.size(); }
  const Protocol& protocol() const { return protocol_; }
  int current_step() const { return static_cast<int>(pc_); }

 private:
  bool enter(Device& device);
  void apply_tick(Device& device);
  template <typename F>
  void for_channels(const Device& device, int ch, F&& f);

  Protocol protocol_;
  double rate_;
  std::size_t pc_ = 0;
  bool entered_ = false;
  long long pass_ticks_ = 0;
  long long step_ticks_ = 0;
  long long tick_in_step_ = 0;
  std::vector<int> loop_counts_;
};

struct RunOptions {
  double sample_rate_Hz = 0.0;  ///< 0 uses the protocol's own rate
  std::string log_path;         ///< empty runs without a log file
  LogMeta meta{};
  const std::atomic<bool>* abort = nullptr;
  std::function<void(const Device&, const std::vector<Sample>&)> on_tick;
};

/// Executes a protocol to completion. Throws BusyError if the device is
/// running something else, AbortError when `abort` is raised (the log is
/// flushed first). Returns the log path.
std::string run_protocol(Device& device, const Protocol& protocol, const RunOptions& options = {});

}  // namespace mpstat
