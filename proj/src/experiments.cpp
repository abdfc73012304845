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


#include "mpstat/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <thread>

#include <json.hpp>

#include "mpstat/analysis.hpp"
#include "mpstat/errors.hpp"
#include "mpstat/protocol.hpp"
#include "mpstat/server.hpp"

namespace mpstat {
namespace {

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// Collects CSV text and writes it in one go; registers the file name.
class CsvFile {
 public:
  CsvFile(const std::filesystem::path& dir, std::string name, std::vector<std::string>& files,
          const std::string& header)
      : dir_(dir), name_(std::move(name)), files_(files) {
    text_ = header + '\n';
  }
  template <typename... T>
  void row(const T&... cells) {
    bool first = true;
    ((text_ += (first ? "" : ","), text_ += cell(cells), first = false), ...);
    text_ += '\n';
  }
  void commit() {
    if (dir_.empty()) return;
    const auto path = dir_ / name_;
    std::ofstream out(path, std::ios::binary);
    out << text_;
    if (!out) throw IoError("cannot write " + path.string());
    files_.push_back(name_);
  }

 private:
  static std::string cell(double v) { return num(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(long long v) { return std::to_string(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }

  std::filesystem::path dir_;
  std::string name_;
  std::vector<std::string>& files_;
  std::string text_;
};

void ensure_dir(const std::filesystem::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

double mean_current_nA(Device& dev, int ch, int ticks) {
  double sum = 0.0;
  for (int k = 0; k < ticks; ++k) {
    dev.sample_all();
    sum += static_cast<double>(dev.current_pA(ch)) * 1e-3;
  }
  return sum / ticks;
}

}  // namespace

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["subcommand"] = subcommand;
  j["config"] = config_path;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["files"] = files;
  return j.dump(2) + "\n";
}

void RunManifest::write() const {
  const auto path = std::filesystem::path(out_dir) / "manifest.json";
  std::ofstream out(path, std::ios::binary);
  out << to_json();
  if (!out) throw IoError("cannot write " + path.string());
}

CharacterizeResult characterize(const DeviceConfig& config, const CharacterizeOptions& o,
                                const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  CharacterizeResult res;
  const auto& chain = config.chain;
  const bool noisy = config.mode == Mode::Noisy;

  // (a) Output: every DAC code read back by a bench meter.
  {
    std::seed_seq meter_seed{config.seed, std::uint64_t{0x6d65746572}};
    std::mt19937_64 meter(meter_seed);
    std::normal_distribution<double> meter_noise(0.0, o.meter_sigma_V);
    std::vector<double> code, v;
    for (int c = 0; c <= chain.dac_max_code(); ++c) {
      code.push_back(c);
      v.push_back(drive_from_code(c, chain) + (noisy ? meter_noise(meter) : 0.0));
    }
    const auto fit = fit_line(code, v);
    const double span = chain.drive_max_V() - chain.drive_min_V();
    res.output_error_fs = fit.max_abs_residual / span;
    CsvFile f(out_dir, "output_sweep.csv", res.files, "code,v_out_V,v_fit_V,residual_V");
    for (std::size_t k = 0; k < code.size(); ++k) {
      const double vf = fit.slope * code[k] + fit.intercept;
      f.row(static_cast<int>(code[k]), v[k], vf, v[k] - vf);
    }
    f.commit();
  }

  // (b) Input: a known current forced into the amplifier of channel 0.
  {
    Device dev(config);
    dev.set_sample_rate(o.load_rate_Hz);
    std::vector<double> i_in, v_adc;
    const int limit = static_cast<int>(std::lround(chain.amp_rail_V() / chain.transimpedance_V_per_A() * 1e9));
    for (int i = -limit; i <= limit; i += o.input_step_nA) {
      dev.inject_offset(0, i * 1e-9);
      mean_current_nA(dev, 0, o.settle_ticks);
      const double reading = mean_current_nA(dev, 0, o.average_ticks);
      i_in.push_back(i);
      v_adc.push_back(chain.input_shift_V + reading * 1e-9 * chain.transimpedance_V_per_A());
    }
    const auto fit = fit_line(i_in, v_adc);
    res.input_error_fs = fit.max_abs_residual / chain.adc_range_V;
    CsvFile f(out_dir, "input_transfer.csv", res.files, "i_in_nA,v_adc_V,v_fit_V,residual_V");
    for (std::size_t k = 0; k < i_in.size(); ++k) {
      const double vf = fit.slope * i_in[k] + fit.intercept;
      f.row(i_in[k], v_adc[k], vf, v_adc[k] - vf);
    }
    f.commit();
  }

  // (c) Load: a resistor swept across the current range.
  {
    Device dev(config);
    dev.set_sample_rate(o.load_rate_Hz);
    dev.bind_cell(0, Resistor{o.load_ohm});
    dev.set_switch(0, true);
    const int rail_mV = static_cast<int>(std::lround(chain.amp_rail_V() * 1000));
    std::vector<double> v, i;
    for (int mv = -rail_mV; mv <= rail_mV; mv += o.load_step_mV) {
      dev.set_voltage(0, mv);
      mean_current_nA(dev, 0, o.settle_ticks);
      i.push_back(mean_current_nA(dev, 0, o.average_ticks) * 1e-9);
      v.push_back(dev.get_voltage_mV(0) * 1e-3 - chain.stage_offset_V);
    }
    const auto fit = fit_line(v, i);
    res.fitted_load_ohm = 1.0 / fit.slope;
    CsvFile f(out_dir, "load_test.csv", res.files, "v_V,i_nA,i_fit_nA");
    for (std::size_t k = 0; k < v.size(); ++k) f.row(v[k], i[k] * 1e9, (fit.slope * v[k] + fit.intercept) * 1e9);
    f.commit();
  }

  CsvFile s(out_dir, "characterize_summary.csv", res.files, "metric,value");
  s.row("output_error_pct_fs", res.output_error_fs * 100);
  s.row("input_error_pct_fs", res.input_error_fs * 100);
  s.row("load_configured_ohm", o.load_ohm);
  s.row("load_fitted_ohm", res.fitted_load_ohm);
  s.commit();
  return res;
}

std::vector<CvPeak> detect_cv_peaks(const std::vector<double>& v_V, const std::vector<double>& i_nA,
                                    const std::vector<int>& direction) {
  const auto smooth = moving_average(i_nA, 5);
  double max_abs = 0.0;
  for (double x : smooth) max_abs = std::max(max_abs, std::abs(x));
  std::vector<CvPeak> out;
  for (const auto& e : find_extrema(smooth, 0.05 * max_abs)) {
    if (e.is_max != (e.value > 0)) continue;
    const auto dir = direction[e.index] >= 0 ? ScanDirection::Anodic : ScanDirection::Cathodic;
    out.push_back({v_V[e.index], e.value, dir});
  }
  return out;
}

CvResult run_cv(const DeviceConfig& config, const CellModel& cell, const CvOptions& o,
                const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  const auto protocol = make_cv(o.channel, o.v_lo_mV, o.v_hi_mV, o.rate_mV_per_s, o.cycles);
  DeviceConfig cfg = config;
  cfg.n_boards = std::max(cfg.n_boards, o.channel / kChannelsPerBoard + 1);
  Device dev(cfg);
  dev.bind_cell(o.channel, cell);

  CvResult res;
  res.duration_s = protocol.duration_s();
  RunOptions ro;
  ro.sample_rate_Hz = o.sample_rate_Hz;
  ro.on_tick = [&](const Device&, const std::vector<Sample>& samples) {
    const auto& s = samples[static_cast<std::size_t>(o.channel)];
    if (!s.switch_closed) return;
    res.t_s.push_back(s.t);
    res.v_V.push_back(s.set_mV * 1e-3);
    res.i_nA.push_back(static_cast<double>(s.current_pA) * 1e-3);
  };
  run_protocol(dev, protocol, ro);

  // Direction from the drive trend; flat stretches inherit the previous one.
  const std::size_t n = res.v_V.size();
  res.direction.assign(n, 1);
  for (std::size_t k = 1; k < n; ++k) {
    const double dv = res.v_V[k] - res.v_V[k - 1];
    res.direction[k] = dv > 0 ? 1 : dv < 0 ? -1 : res.direction[k - 1];
  }
  if (n > 1) res.direction[0] = res.direction[1];
  res.peaks = detect_cv_peaks(res.v_V, res.i_nA, res.direction);

  const std::string stem = "cv_" + num(o.rate_mV_per_s);
  CsvFile iv(out_dir, stem + "_iv.csv", res.files, "t_s,v_V,i_nA,direction");
  for (std::size_t k = 0; k < n; ++k) iv.row(res.t_s[k], res.v_V[k], res.i_nA[k], res.direction[k]);
  iv.commit();
  CsvFile pk(out_dir, stem + "_peaks.csv", res.files, "v_V,i_nA,direction");
  for (const auto& p : res.peaks)
    pk.row(p.v_V, p.i_nA, p.direction == ScanDirection::Anodic ? "anodic" : "cathodic");
  pk.commit();
  return res;
}

IonPumpResult run_ionpump(const DeviceConfig& config, const std::vector<CellModel>& cells,
                          const IonPumpOptions& o, const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  if (static_cast<int>(cells.size()) < o.electrodes) throw ConfigError("one cell per electrode is required");
  DeviceConfig cfg = config;
  cfg.n_boards = std::max(cfg.n_boards, (o.electrodes + kChannelsPerBoard - 1) / kChannelsPerBoard);
  if (cfg.n_boards > kMaxBoards) throw ConfigError("too many electrodes");
  Device dev(cfg);
  std::vector<int> channels;
  for (int e = 0; e < o.electrodes; ++e) {
    dev.bind_cell(e, cells[static_cast<std::size_t>(e)]);
    channels.push_back(e);
  }
  const auto protocol = make_electrode_cycle(channels, o.amp_mV, o.period_s, o.skip);

  auto fluor_of = [&](const Device& d, int e) { return fluorescence(d.cell(e)->get_if<IonPump>()->chem); };

  // Per-tick record of the closed electrode (or -1), its drive, its current
  // and every electrode's fluorescence.
  struct Tick {
    double t;
    int closed;
    int set_mV;
    double i_nA;
    std::size_t n_closed;
  };
  std::vector<Tick> ticks;
  std::vector<std::vector<double>> fluor;  // [tick][electrode]
  std::vector<double> initial;
  for (int e = 0; e < o.electrodes; ++e) initial.push_back(fluor_of(dev, e));

  IonPumpResult res;
  CsvFile current(out_dir, "ionpump_current.csv", res.files, "t_s,electrode,set_mV,current_nA");
  RunOptions ro;
  ro.on_tick = [&](const Device& d, const std::vector<Sample>& samples) {
    Tick t{samples.front().t, -1, 0, 0.0, 0};
    for (int e = 0; e < o.electrodes; ++e) {
      const auto& s = samples[static_cast<std::size_t>(e)];
      if (!s.switch_closed) continue;
      ++t.n_closed;
      t.closed = e;
      t.set_mV = s.set_mV;
      t.i_nA = static_cast<double>(s.current_pA) * 1e-3;
    }
    ticks.push_back(t);
    std::vector<double> f;
    for (int e = 0; e < o.electrodes; ++e) f.push_back(fluor_of(d, e));
    fluor.push_back(std::move(f));
    if (t.closed >= 0) current.row(t.t, t.closed, t.set_mV, t.i_nA);
  };
  run_protocol(dev, protocol, ro);
  current.commit();

  for (const auto& t : ticks) res.max_closed_per_tick = std::max(res.max_closed_per_tick, t.n_closed);

  for (std::size_t k = 0; k < ticks.size(); ++k) {
    const auto& t = ticks[k];
    if (t.closed < 0) continue;
    const int sign = t.set_mV > 0 ? 1 : t.set_mV < 0 ? -1 : 0;
    auto* last = res.half_phases.empty() ? nullptr : &res.half_phases.back();
    if (last && last->channel == t.closed && last->sign == sign && last->first_tick + last->ticks == k) {
      ++last->ticks;
      last->mean_current_nA += t.i_nA;
    } else {
      res.half_phases.push_back({t.closed, sign, k, 1, t.i_nA, 0.0});
    }
  }
  std::vector<double> x, y;
  for (auto& h : res.half_phases) {
    h.mean_current_nA /= static_cast<double>(h.ticks);
    const auto e = static_cast<std::size_t>(h.channel);
    const double before = h.first_tick == 0 ? initial[e] : fluor[h.first_tick - 1][e];
    h.fluorescence_change = fluor[h.first_tick + h.ticks - 1][e] - before;
    x.push_back(h.mean_current_nA);
    y.push_back(h.fluorescence_change);
    if (res.active_electrodes.empty() || res.active_electrodes.back() != h.channel) {
      res.active_electrodes.push_back(h.channel);
      res.samples_per_phase.push_back(0);
    }
    res.samples_per_phase.back() += h.ticks;
  }
  res.spearman_rho = x.size() > 1 ? spearman(x, y) : 0.0;

  // Microscope frames.
  std::string header = "t_s";
  for (int e = 0; e < o.electrodes; ++e) header += ",electrode_" + std::to_string(e);
  CsvFile frames(out_dir, "ionpump_fluorescence.csv", res.files, header);
  const double rate = protocol.sample_rate_Hz;
  const auto every = static_cast<std::size_t>(std::llround(rate / o.frame_rate_Hz));
  {
    std::string line = "0";
    for (double f : initial) line += "," + num(f);
    frames.row(line);
  }
  for (std::size_t k = every - 1; k < ticks.size(); k += every) {
    std::string line = num(ticks[k].t);
    for (double f : fluor[k]) line += "," + num(f);
    frames.row(line);
  }
  frames.commit();

  CsvFile ph(out_dir, "ionpump_phases.csv", res.files,
             "electrode,polarity,t_start_s,t_end_s,samples,mean_current_nA,fluorescence_change");
  for (const auto& h : res.half_phases)
    ph.row(h.channel, h.sign, ticks[h.first_tick].t - 1.0 / rate, ticks[h.first_tick + h.ticks - 1].t, h.ticks,
           h.mean_current_nA, h.fluorescence_change);
  ph.commit();

  CsvFile sum(out_dir, "ionpump_summary.csv", res.files, "metric,value");
  sum.row("active_electrodes", res.active_electrodes.size());
  sum.row("max_closed_per_tick", res.max_closed_per_tick);
  sum.row("spearman_rho", res.spearman_rho);
  sum.commit();
  return res;
}

std::vector<TracePoint> run_closed_loop_twin(const DeviceConfig& config, const CellModel& cell,
                                             const std::function<double(double)>& target,
                                             const ClosedLoopOptions& options, ControllerState controller,
                                             std::ostream* trace) {
  if (!cell.get_if<IonPump>()) throw ConfigError("the closed loop needs an ion_pump cell");
  DeviceConfig cfg = config;
  cfg.time_mode = TimeMode{};
  Device dev(cfg);
  dev.bind_cell(options.channel, cell);
  Instrument instrument(std::move(dev));
  Server server(instrument, {"127.0.0.1", 0, true});
  std::atomic<bool> stop{false};
  std::thread serving([&] { server.serve(stop); });
  struct Join {
    std::atomic<bool>& stop;
    std::thread& t;
    ~Join() {
      stop = true;
      t.join();
    }
  } join{stop, serving};

  Client client("127.0.0.1", server.port());
  CallbackSensor sensor([&](double t) {
    server.advance_to(t);
    return server.with_instrument([&](Instrument& ins) {
      return fluorescence(ins.device().cell(options.channel)->get_if<IonPump>()->chem);
    });
  });
  return run_closed_loop(client, target, sensor, options, controller, trace);
}

double settling_time(const std::vector<TracePoint>& trace, double band, double t_from) {
  double settled = -1.0;
  for (const auto& p : trace) {
    if (p.t < t_from) continue;
    if (std::abs(p.measured - p.target) < band) {
      if (settled < 0) settled = p.t - t_from;
    } else {
      settled = -1.0;
    }
  }
  return settled;
}

}  // namespace mpstat
