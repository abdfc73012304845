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


#include "mpstat/protocol.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "mpstat/errors.hpp"

namespace mpstat {
namespace {

constexpr std::string_view kCsvHeader = "step,channel,action,v1_mV,v2_mV,duration_s,repeat";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<long long> to_int(std::string_view s) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> to_double(std::string_view s) {
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

int int_field(std::string_view s, int line, const char* what, std::optional<int> fallback) {
  if (s.empty()) {
    if (fallback) return *fallback;
    throw ParseError(line, std::string("missing ") + what);
  }
  const auto v = to_int(s);
  if (!v || *v < INT32_MIN || *v > INT32_MAX) throw ParseError(line, std::string("bad integer in ") + what);
  return static_cast<int>(*v);
}

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

long long ticks_for(double seconds, double rate) { return std::llround(seconds * rate); }

}  // namespace

const char* to_string(Action a) {
  switch (a) {
    case Action::Hold:
      return "HOLD";
    case Action::Ramp:
      return "RAMP";
    case Action::Open:
      return "OPEN";
    case Action::Loop:
      return "LOOP";
  }
  return "?";
}

double Protocol::duration_s() const {
  // Walk the program the same way the runner does, without a device.
  double total = 0.0;
  std::vector<int> counts(steps.size(), 0);
  std::size_t pc = 0;
  while (pc < steps.size()) {
    const auto& s = steps[pc];
    if (s.action == Action::Loop) {
      if (counts[pc] < s.repeat) {
        ++counts[pc];
        pc = static_cast<std::size_t>(s.loop_to);
      } else {
        counts[pc] = 0;
        ++pc;
      }
      continue;
    }
    total += s.duration_s * s.repeat;
    ++pc;
  }
  return total;
}

void validate(const Protocol& p, int n_channels, const SignalChainParams& chain) {
  const int lo = static_cast<int>(std::lround(chain.drive_min_V() * 1000.0));
  const int hi = static_cast<int>(std::floor(chain.drive_max_V() * 1000.0));
  if (!(p.sample_rate_Hz > 0)) throw ValidationError(0, "sample rate must be > 0");
  for (std::size_t i = 0; i < p.steps.size(); ++i) {
    const auto& s = p.steps[i];
    const int idx = static_cast<int>(i);
    if (s.index != idx) throw ValidationError(s.index, "step indices must be dense from 0");
    if (s.repeat < 1) throw ValidationError(idx, "repeat must be >= 1");
    if (s.action == Action::Loop) {
      if (s.loop_to < 0 || s.loop_to >= idx) throw ValidationError(idx, "LOOP target must precede the LOOP");
      continue;
    }
    if (s.channel != kAllChannels && (s.channel < 0 || s.channel >= n_channels))
      throw ValidationError(idx, "channel " + std::to_string(s.channel) + " out of range");
    if (!std::isfinite(s.duration_s)) throw ValidationError(idx, "duration must be finite");
    if (s.action == Action::Open) {
      if (s.duration_s < 0) throw ValidationError(idx, "OPEN duration must be >= 0");
      continue;
    }
    if (!(s.duration_s > 0)) throw ValidationError(idx, "duration must be > 0");
    auto in_range = [&](int mv) { return mv >= lo && mv <= hi; };
    if (!in_range(s.v1_mV) || (s.action == Action::Ramp && !in_range(s.v2_mV)))
      throw ValidationError(idx, "voltage outside drive range");
  }
}

Protocol parse_protocol(std::string_view csv, int n_channels, std::string name) {
  Protocol p;
  p.name = std::move(name);
  bool header_seen = false;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    auto end = csv.find('\n', pos);
    if (end == std::string_view::npos) end = csv.size();
    const auto line = trim(csv.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto body = trim(line.substr(1));
      const auto colon = body.find(':');
      if (colon == std::string_view::npos) continue;
      const auto key = trim(body.substr(0, colon));
      const auto value = trim(body.substr(colon + 1));
      if (key == "name") {
        p.name = std::string(value);
      } else if (key == "sample_rate_Hz") {
        const auto r = to_double(value);
        if (!r || !(*r > 0)) throw ParseError(line_no, "bad sample_rate_Hz");
        p.sample_rate_Hz = *r;
      }
      continue;
    }
    if (!header_seen) {
      if (line != kCsvHeader) throw ParseError(line_no, "expected header '" + std::string(kCsvHeader) + "'");
      header_seen = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 7) throw ParseError(line_no, "expected 7 fields, got " + std::to_string(f.size()));

    ProtocolStep s;
    s.index = int_field(f[0], line_no, "step", std::nullopt);
    if (f[1] == "ALL") {
      s.channel = kAllChannels;
    } else {
      s.channel = int_field(f[1], line_no, "channel", std::nullopt);
    }
    if (f[2] == "HOLD") {
      s.action = Action::Hold;
    } else if (f[2] == "RAMP") {
      s.action = Action::Ramp;
    } else if (f[2] == "OPEN") {
      s.action = Action::Open;
    } else if (f[2] == "LOOP") {
      s.action = Action::Loop;
    } else {
      throw ParseError(line_no, "unknown action '" + std::string(f[2]) + "'");
    }
    const bool needs_v1 = s.action != Action::Open;
    s.v1_mV = int_field(f[3], line_no, "v1_mV", needs_v1 ? std::nullopt : std::optional<int>(0));
    s.v2_mV = int_field(f[4], line_no, "v2_mV", s.action == Action::Ramp ? std::nullopt : std::optional<int>(0));
    if (s.action == Action::Loop) {
      s.loop_to = s.v1_mV;
      s.v1_mV = 0;
    }
    if (f[5].empty()) {
      if (s.action != Action::Loop) throw ParseError(line_no, "missing duration_s");
    } else {
      const auto d = to_double(f[5]);
      if (!d) throw ParseError(line_no, "bad duration_s");
      s.duration_s = *d;
    }
    s.repeat = int_field(f[6], line_no, "repeat", 1);
    p.steps.push_back(s);
  }
  if (!header_seen) throw ParseError(line_no, "missing header");
  validate(p, n_channels);
  return p;
}

Protocol load_protocol(const std::filesystem::path& path, int n_channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open protocol " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_protocol(ss.str(), n_channels, path.stem().string());
}

std::string to_csv(const Protocol& p) {
  std::string out;
  if (!p.name.empty()) out += "# name: " + p.name + "\n";
  out += "# sample_rate_Hz: " + format_double(p.sample_rate_Hz) + "\n";
  out += kCsvHeader;
  out += '\n';
  for (const auto& s : p.steps) {
    out += std::to_string(s.index) + ',';
    out += s.channel == kAllChannels ? std::string("ALL") : std::to_string(s.channel);
    out += ',';
    out += to_string(s.action);
    out += ',';
    switch (s.action) {
      case Action::Hold:
        out += std::to_string(s.v1_mV) + ",," + format_double(s.duration_s);
        break;
      case Action::Ramp:
        out += std::to_string(s.v1_mV) + ',' + std::to_string(s.v2_mV) + ',' + format_double(s.duration_s);
        break;
      case Action::Open:
        out += ",," + format_double(s.duration_s);
        break;
      case Action::Loop:
        out += std::to_string(s.loop_to) + ",,";
        break;
    }
    out += ',' + std::to_string(s.repeat) + '\n';
  }
  return out;
}

Protocol make_cv(int channel, int v_lo_mV, int v_hi_mV, double rate_mV_per_s, int cycles) {
  if (v_lo_mV >= v_hi_mV) throw RangeError("CV needs v_lo < v_hi");
  if (!(rate_mV_per_s > 0)) throw RangeError("CV scan rate must be > 0");
  if (cycles < 1) throw RangeError("CV needs at least one cycle");
  if (channel < 0) throw RangeError("channel must be >= 0");
  const double leg = (v_hi_mV - v_lo_mV) / rate_mV_per_s;

  Protocol p;
  p.name = "cv_" + format_double(rate_mV_per_s);
  auto add = [&](ProtocolStep s) {
    s.index = static_cast<int>(p.steps.size());
    p.steps.push_back(s);
  };
  add({.channel = kAllChannels, .action = Action::Open});
  add({.channel = channel, .action = Action::Ramp, .v1_mV = v_lo_mV, .v2_mV = v_hi_mV, .duration_s = leg});
  add({.channel = channel, .action = Action::Ramp, .v1_mV = v_hi_mV, .v2_mV = v_lo_mV, .duration_s = leg});
  if (cycles > 1) add({.action = Action::Loop, .loop_to = 1, .repeat = cycles - 1});
  add({.channel = channel, .action = Action::Open});
  try {
    validate(p, channel + 1);
  } catch (const ValidationError& e) {
    throw RangeError(e.what());
  }
  return p;
}

Protocol make_electrode_cycle(const std::vector<int>& channels, int amp_mV, double period_s,
                              const std::set<int>& skip) {
  if (channels.empty()) throw RangeError("electrode cycle needs at least one channel");
  if (!(period_s > 0)) throw RangeError("period must be > 0");
  Protocol p;
  p.name = "electrode_cycle";
  auto add = [&](ProtocolStep s) {
    s.index = static_cast<int>(p.steps.size());
    p.steps.push_back(s);
  };
  add({.channel = kAllChannels, .action = Action::Open});
  int max_ch = 0;
  for (int ch : channels) {
    if (ch < 0) throw RangeError("channel must be >= 0");
    max_ch = std::max(max_ch, ch);
    if (skip.count(ch)) continue;
    add({.channel = ch, .action = Action::Hold, .v1_mV = amp_mV, .duration_s = period_s / 2});
    add({.channel = ch, .action = Action::Hold, .v1_mV = -amp_mV, .duration_s = period_s / 2});
    add({.channel = ch, .action = Action::Open});
  }
  if (p.steps.size() == 1) throw ValidationError(0, "every electrode is skipped");
  try {
    validate(p, max_ch + 1);
  } catch (const ValidationError& e) {
    throw RangeError(e.what());
  }
  return p;
}

ProtocolRunner::ProtocolRunner(Protocol protocol, double sample_rate_Hz)
    : protocol_(std::move(protocol)),
      rate_(sample_rate_Hz > 0 ? sample_rate_Hz : protocol_.sample_rate_Hz),
      loop_counts_(protocol_.steps.size(), 0) {}

template <typename F>
void ProtocolRunner::for_channels(const Device& device, int ch, F&& f) {
  if (ch == kAllChannels) {
    for (int i = 0; i < device.channel_count(); ++i) f(i);
  } else {
    f(ch);
  }
}

bool ProtocolRunner::enter(Device& device) {
  const auto& s = protocol_.steps[pc_];
  if (s.action == Action::Loop) {
    if (loop_counts_[pc_] < s.repeat) {
      ++loop_counts_[pc_];
      device.log_command("step " + std::to_string(s.index) + " LOOP -> " + std::to_string(s.loop_to));
      pc_ = static_cast<std::size_t>(s.loop_to);
    } else {
      loop_counts_[pc_] = 0;
      ++pc_;
    }
    return false;
  }
  entered_ = true;
  tick_in_step_ = 0;
  pass_ticks_ = ticks_for(s.duration_s, rate_);
  step_ticks_ = pass_ticks_ * s.repeat;

  std::string record = "step " + std::to_string(s.index) + ' ' + to_string(s.action) + " ch=" +
                       (s.channel == kAllChannels ? std::string("ALL") : std::to_string(s.channel));
  switch (s.action) {
    case Action::Hold:
      for_channels(device, s.channel, [&](int ch) {
        device.set_voltage(ch, s.v1_mV);
        device.set_switch(ch, true);
      });
      record += " mV=" + std::to_string(s.v1_mV);
      break;
    case Action::Ramp:
      for_channels(device, s.channel, [&](int ch) {
        device.set_voltage(ch, s.v1_mV);
        device.set_switch(ch, true);
      });
      record += " mV=" + std::to_string(s.v1_mV) + ".." + std::to_string(s.v2_mV);
      break;
    case Action::Open:
      for_channels(device, s.channel, [&](int ch) { device.set_switch(ch, false); });
      break;
    case Action::Loop:
      break;
  }
  record += " ticks=" + std::to_string(step_ticks_);
  device.log_command(record);
  return true;
}

void ProtocolRunner::apply_tick(Device& device) {
  const auto& s = protocol_.steps[pc_];
  if (s.action != Action::Ramp || pass_ticks_ == 0) return;
  const long long j = tick_in_step_ % pass_ticks_;
  const double v = s.v1_mV + static_cast<double>(s.v2_mV - s.v1_mV) * static_cast<double>(j) /
                                 static_cast<double>(pass_ticks_);
  const int mv = static_cast<int>(std::lround(v));
  for_channels(device, s.channel, [&](int ch) { device.set_voltage(ch, mv); });
}

bool ProtocolRunner::prepare_tick(Device& device) {
  while (pc_ < protocol_.steps.size()) {
    if (!entered_ && !enter(device)) continue;
    if (tick_in_step_ < step_ticks_) {
      apply_tick(device);
      ++tick_in_step_;
      return true;
    }
    entered_ = false;
    ++pc_;
  }
  return false;
}

std::string run_protocol(Device& device, const Protocol& protocol, const RunOptions& options) {
  if (device.busy()) throw BusyError("a protocol is already running");
  validate(protocol, device.channel_count(), device.config().chain);

  struct BusyGuard {
    Device& d;
    explicit BusyGuard(Device& dev) : d(dev) { d.set_busy(true); }
    ~BusyGuard() {
      d.set_busy(false);
      d.close_log();
    }
  } guard(device);

  ProtocolRunner runner(protocol, options.sample_rate_Hz);
  const double rate = options.sample_rate_Hz > 0 ? options.sample_rate_Hz : protocol.sample_rate_Hz;
  device.set_sample_rate(rate);
  if (!options.log_path.empty()) {
    LogMeta meta = options.meta;
    if (meta.note.empty()) meta.note = "protocol: " + protocol.name;
    device.open_log(std::make_unique<RunLog>(options.log_path), meta);
  }
  while (runner.prepare_tick(device)) {
    if (options.abort && options.abort->load(std::memory_order_relaxed)) {
      device.log_command("ABORT");
      device.close_log();
      throw AbortError("protocol '" + protocol.name + "' aborted");
    }
    const auto& batch = device.sample_all();
    if (options.on_tick) options.on_tick(device, batch);
  }
  device.log_command("END");
  return options.log_path;
}

}  // namespace mpstat
