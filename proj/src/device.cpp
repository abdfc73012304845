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


#include "mpstat/device.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <sstream>
#include <thread>

#include "mpstat/errors.hpp"

namespace mpstat {
namespace {

// Fixed six-decimal timestamps keep logs byte-stable.
char* format_time(char* first, char* last, double t) {
  return std::to_chars(first, last, t, std::chars_format::fixed, 6).ptr;
}

}  // namespace

const char* to_string(Mode m) { return m == Mode::Ideal ? "ideal" : "noisy"; }

Mode parse_mode(const std::string& s) {
  if (s == "ideal") return Mode::Ideal;
  if (s == "noisy") return Mode::Noisy;
  throw ConfigError("mode must be ideal or noisy, got '" + s + "'");
}

void DeviceConfig::validate() const {
  if (n_boards < 1 || n_boards > kMaxBoards)
    throw ConfigError("board count must be 1.." + std::to_string(kMaxBoards) + ", got " +
                      std::to_string(n_boards));
  if (!(sample_rate_Hz > 0) || sample_rate_Hz > chain.max_sample_rate_Hz)
    throw ConfigError("sample rate must be in (0, " + std::to_string(chain.max_sample_rate_Hz) + "] Hz");
  if (chain.noise_sigma_A < 0) throw ConfigError("noise sigma must be >= 0");
  if (time_mode.factor < 0) throw ConfigError("time factor must be >= 0");
}

std::string DeviceConfig::describe() const {
  std::ostringstream os;
  os << "boards=" << n_boards << " channels=" << channels() << " rate_Hz=" << sample_rate_Hz
     << " mode=" << to_string(mode) << " noise_sigma_A=" << chain.noise_sigma_A
     << " stage_offset_V=" << chain.stage_offset_V;
  return os.str();
}

std::string utc_now_string() {
  std::time_t now{};
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
    now = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  } else {
    now = std::time(nullptr);
  }
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunLog::RunLog(const std::string& path)
    : file_(std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc)),
      out_(file_.get()),
      path_(path) {
  if (!*file_) throw IoError("cannot open log file " + path);
}

void RunLog::write_meta(const std::string& line) { *out_ << "# " << line << '\n'; }

void RunLog::write_header() { *out_ << kHeader << '\n'; }

void RunLog::write_sample(const Sample& s) {
  char buf[128];
  // Numeric fields stop short of the end so the separators always fit.
  char* const limit = buf + sizeof buf - 8;
  char* p = format_time(buf, limit, s.t);
  *p++ = ',';
  p = std::to_chars(p, limit, s.channel).ptr;
  *p++ = ',';
  p = std::to_chars(p, limit, s.set_mV).ptr;
  *p++ = ',';
  *p++ = s.switch_closed ? '1' : '0';
  *p++ = ',';
  p = std::to_chars(p, limit, s.current_pA).ptr;
  *p++ = '\n';
  out_->write(buf, p - buf);
}

void RunLog::write_command(double t, const std::string& text) {
  char buf[32];
  char* p = format_time(buf, buf + sizeof buf, t);
  *out_ << "# cmd t=" << std::string_view(buf, p - buf) << ' ' << text << '\n';
}

void RunLog::flush() {
  out_->flush();
  if (file_ && !*file_) throw IoError("write failed on " + path_);
}

void CommandQueue::push(Command c) {
  std::lock_guard lock(mu_);
  items_.push_back(std::move(c));
}

std::size_t CommandQueue::drain() {
  std::deque<Command> batch;
  {
    std::lock_guard lock(mu_);
    batch.swap(items_);
  }
  for (auto& c : batch) c();
  return batch.size();
}

std::size_t CommandQueue::size() const {
  std::lock_guard lock(mu_);
  return items_.size();
}

Device::Device(DeviceConfig config) : config_(std::move(config)), rate_(config_.sample_rate_Hz) {
  config_.validate();
  const int n = config_.channels();
  const int zero_code = code_for_drive(0.0, config_.chain);
  channels_.resize(n);
  cells_.resize(n);
  samples_.resize(n);
  noise_.reserve(n);
  const double sigma_V = config_.chain.noise_sigma_A * config_.chain.transimpedance_V_per_A();
  for (int i = 0; i < n; ++i) {
    channels_[i].index = i;
    channels_[i].dac_code = zero_code;
    noise_.emplace_back(config_.seed, i, sigma_V);
  }
}

Device::Device(Device&&) noexcept = default;
Device& Device::operator=(Device&&) noexcept = default;
Device::~Device() {
  if (log_) log_->flush();
}

void Device::check_channel(int ch) const {
  if (ch < 0 || ch >= channel_count())
    throw RangeError("channel " + std::to_string(ch) + " out of range 0.." +
                     std::to_string(channel_count() - 1));
}

const ChannelState& Device::channel(int ch) const {
  check_channel(ch);
  return channels_[ch];
}

void Device::set_voltage(int ch, int mv) {
  check_channel(ch);
  const auto& p = config_.chain;
  const int lo = static_cast<int>(std::lround(p.drive_min_V() * 1000.0));
  const int hi = static_cast<int>(std::floor(p.drive_max_V() * 1000.0));
  if (mv < lo || mv > hi)
    throw RangeError("drive " + std::to_string(mv) + " mV out of range " + std::to_string(lo) + ".." +
                     std::to_string(hi));
  channels_[ch].set_mV = mv;
  channels_[ch].dac_code = code_for_drive(mv / 1000.0, p);
}

double Device::get_voltage_mV(int ch) const {
  check_channel(ch);
  return drive_from_code(channels_[ch].dac_code, config_.chain) * 1000.0;
}

void Device::set_switch(int ch, bool closed) {
  check_channel(ch);
  channels_[ch].switch_closed = closed;
}

void Device::bind_cell(int ch, CellModel cell) {
  check_channel(ch);
  validate(cell);
  cells_[ch] = std::move(cell);
}

const std::optional<CellModel>& Device::cell(int ch) const {
  check_channel(ch);
  return cells_[ch];
}

std::optional<CellModel>& Device::cell(int ch) {
  check_channel(ch);
  return cells_[ch];
}

void Device::inject_offset(int ch, double amps) {
  check_channel(ch);
  channels_[ch].offset_A = amps;
}

std::vector<double> Device::calibrate(int n_samples) {
  if (busy_) throw BusyError("cannot calibrate while a protocol is running");
  if (n_samples < 1) throw RangeError("calibration needs at least one sample");
  for (auto& ch : channels_) {
    ch.switch_closed = false;
    ch.filter.initialized = false;
  }

  const double dt = tick_period();
  const bool noisy = config_.mode == Mode::Noisy;
  std::vector<std::int64_t> sums(channels_.size(), 0);
  for (int k = 0; k < n_samples; ++k) {
    for (std::size_t i = 0; i < channels_.size(); ++i)
      sums[i] += chain_convert(config_.chain, channels_[i], nullptr, dt, noisy ? &noise_[i] : nullptr).raw_counts;
  }

  std::vector<double> baselines_nA;
  std::string record = "CAL n=" + std::to_string(n_samples) + " baselines_pA=";
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    auto& ch = channels_[i];
    ch.baseline_counts = std::llround(static_cast<double>(sums[i]) / n_samples);
    baselines_nA.push_back(static_cast<double>(ch.baseline_counts) * 0.125);
    if (i) record += ';';
    record += std::to_string(ch.baseline_counts * kPicoampsPerCount);
  }
  log_command(record);
  return baselines_nA;
}

const std::vector<Sample>& Device::sample_all() {
  pace();
  ++ticks_since_base_;
  ++ticks_total_;
  const double t = time();
  const double dt = tick_period();
  const bool noisy = config_.mode == Mode::Noisy;
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    CellModel* cell = cells_[i] ? &*cells_[i] : nullptr;
    samples_[i] = chain_step(config_.chain, channels_[i], cell, dt, noisy ? &noise_[i] : nullptr, t);
  }
  if (log_)
    for (const auto& s : samples_) log_->write_sample(s);
  return samples_;
}

std::int64_t Device::current_pA(int ch) const {
  check_channel(ch);
  return channels_[ch].last_counts * kPicoampsPerCount;
}

double Device::time() const { return t_base_ + static_cast<double>(ticks_since_base_) / rate_; }

void Device::set_sample_rate(double hz) {
  if (!(hz > 0) || hz > config_.chain.max_sample_rate_Hz)
    throw ConfigError("sample rate must be in (0, " + std::to_string(config_.chain.max_sample_rate_Hz) +
                      "] Hz");
  if (hz == rate_) return;
  t_base_ = time();
  ticks_since_base_ = 0;
  rate_ = hz;
}

void Device::set_time_mode(TimeMode mode) {
  config_.time_mode = mode;
  wall_start_.reset();
}

void Device::pace() {
  if (!config_.time_mode.paced()) return;
  const double next = time() + tick_period();
  const auto now = std::chrono::steady_clock::now();
  if (!wall_start_) {
    wall_start_ = now;
    sim_at_wall_start_ = time();
  }
  const auto due = *wall_start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                      std::chrono::duration<double>((next - sim_at_wall_start_) /
                                                                    config_.time_mode.factor));
  if (due > now) std::this_thread::sleep_until(due);
}

void Device::open_log(std::unique_ptr<RunLog> log, const LogMeta& meta) {
  close_log();
  log_ = std::move(log);
  t_base_ = 0.0;
  ticks_since_base_ = 0;
  wall_start_.reset();
  log_->write_meta(std::string("firmware: ") + kFirmwareVersion);
  log_->write_meta("start_utc: " + meta.start_utc);
  log_->write_meta("config: " + config_.describe());
  log_->write_meta("seed: " + std::to_string(config_.seed));
  std::string baselines = "baselines_pA: ";
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    if (i) baselines += ';';
    baselines += std::to_string(channels_[i].baseline_counts * kPicoampsPerCount);
  }
  log_->write_meta(baselines);
  if (!meta.note.empty()) log_->write_meta(meta.note);
  log_->write_header();
}

void Device::close_log() {
  if (!log_) return;
  log_->flush();
  log_.reset();
}

void Device::log_command(const std::string& text) {
  if (log_) log_->write_command(time(), text);
}

}  // namespace mpstat
