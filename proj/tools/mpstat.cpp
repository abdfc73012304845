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


// mpstat: command-line front end of the multichannel potentiostat twin.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime error.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mpstat/config.hpp"
#include "mpstat/device.hpp"
#include "mpstat/errors.hpp"
#include "mpstat/experiments.hpp"
#include "mpstat/protocol.hpp"
#include "mpstat/server.hpp"

namespace fs = std::filesystem;
using namespace mpstat;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// Per-electrode conductance spread used when a config does not set one.
constexpr const char* kDefaultElectrodeScale = "1.00,0.80,1.25,0.90,1.15,0.85,1.35,0.95,1.05";

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string mode;
};

struct Context {
  KeyValueConfig cfg;
  DeviceConfig device;
  RunManifest manifest;
};

Context make_context(const Globals& g, const std::string& subcommand, const std::string& default_cell) {
  Context c;
  if (!g.config_path.empty()) c.cfg = KeyValueConfig::load(g.config_path);
  if (!c.cfg.has("cell")) c.cfg.set("cell", default_cell);
  if (g.seed) c.cfg.set("seed", std::to_string(*g.seed));
  if (!g.mode.empty()) c.cfg.set("mode", g.mode);
  c.device = device_config_from(c.cfg);
  c.manifest = {subcommand, g.config_path, c.device.seed, g.out, {}};
  std::error_code ec;
  fs::create_directories(g.out, ec);
  if (ec) throw IoError("cannot create " + g.out + ": " + ec.message());
  return c;
}

void print_files(const RunManifest& m) {
  for (const auto& f : m.files) std::cout << "  " << (fs::path(m.out_dir) / f).string() << "\n";
  std::cout << "  " << (fs::path(m.out_dir) / "manifest.json").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multichannel potentiostat device twin"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key = value configuration file");
  app.add_option("--seed", g.seed, "noise seed");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--mode", g.mode, "ideal or noisy")->check(CLI::IsMember({"ideal", "noisy"}));

  auto* characterize_cmd = app.add_subcommand("characterize", "output, input and load linearity sweeps");

  auto* cv_cmd = app.add_subcommand("cv", "cyclic voltammetry on a surface cell");
  CvOptions cv_opts;
  std::optional<double> offset_mv;
  cv_cmd->add_option("--rate", cv_opts.rate_mV_per_s, "scan rate in mV/s")->capture_default_str();
  cv_cmd->add_option("--cycles", cv_opts.cycles)->capture_default_str();
  cv_cmd->add_option("--offset-mv", offset_mv, "stage offset between drive and cell");
  cv_cmd->add_option("--sample-rate", cv_opts.sample_rate_Hz, "Hz; default is the protocol rate");

  auto* ionpump_cmd = app.add_subcommand("ionpump", "square-wave cycle across ion-pump electrodes");

  auto* run_cmd = app.add_subcommand("run", "execute a protocol CSV");
  std::string protocol_path;
  double run_rate = 0.0;
  run_cmd->add_option("protocol", protocol_path)->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--rate", run_rate, "sample rate in Hz; default is the protocol rate");

  auto* serve_cmd = app.add_subcommand("serve", "serve the UDP control protocol until SIGINT");
  ServerOptions server_opts;
  std::string protocols_dir = "protocols";
  serve_cmd->add_option("--port", server_opts.port)->capture_default_str();
  serve_cmd->add_option("--bind", server_opts.bind_address)->capture_default_str();
  serve_cmd->add_option("--protocols", protocols_dir, "directory searched by RUN")->capture_default_str();

  auto* loop_cmd = app.add_subcommand("closedloop", "steer the fluorescence proxy to a target");
  std::string target_spec = "0:0.5,20:0.65";
  std::string remote;
  std::string sensor_file;
  ClosedLoopOptions loop_opts;
  ControllerState controller;
  loop_cmd->add_option("--target", target_spec, "t:value,... piecewise-constant target")->capture_default_str();
  loop_cmd->add_option("--server", remote, "host:port of a running instrument instead of the twin");
  loop_cmd->add_option("--sensor-file", sensor_file, "file an external sensor appends intensities to");
  loop_cmd->add_option("--duration", loop_opts.duration_s)->capture_default_str();
  loop_cmd->add_option("--period", loop_opts.period_s)->capture_default_str();
  loop_cmd->add_option("--channel", loop_opts.channel)->capture_default_str();
  loop_cmd->add_option("--kp", controller.k_p)->capture_default_str();
  loop_cmd->add_option("--ki", controller.k_i)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (characterize_cmd->parsed()) {
      auto c = make_context(g, "characterize", "resistor");
      CharacterizeOptions o;
      o.load_ohm = c.cfg.get_double("resistor.ohm", o.load_ohm);
      auto r = characterize(c.device, o, g.out);
      c.manifest.files = r.files;
      c.manifest.write();
      std::printf("output error  %.4f %% FS\n", r.output_error_fs * 100);
      std::printf("input error   %.4f %% FS\n", r.input_error_fs * 100);
      std::printf("load fit      %.6f MOhm (configured %.6f MOhm)\n", r.fitted_load_ohm * 1e-6, o.load_ohm * 1e-6);
      print_files(c.manifest);
    } else if (cv_cmd->parsed()) {
      auto c = make_context(g, "cv", "pd_surface");
      if (offset_mv) c.device.chain.stage_offset_V = *offset_mv * 1e-3;
      auto r = run_cv(c.device, cell_from(c.cfg), cv_opts, g.out);
      c.manifest.files = r.files;
      c.manifest.write();
      std::printf("duration %.3f s, %zu peaks\n", r.duration_s, r.peaks.size());
      for (const auto& p : r.peaks)
        std::printf("  %+.4f V  %+9.2f nA  %s\n", p.v_V, p.i_nA,
                    p.direction == ScanDirection::Anodic ? "anodic" : "cathodic");
      print_files(c.manifest);
    } else if (ionpump_cmd->parsed()) {
      auto c = make_context(g, "ionpump", "ion_pump");
      if (!c.cfg.has("ionpump.electrode_scale")) c.cfg.set("ionpump.electrode_scale", kDefaultElectrodeScale);
      IonPumpOptions o;
      o.electrodes = static_cast<int>(c.cfg.get_int("ionpump.electrodes", o.electrodes));
      if (c.cfg.has("ionpump.skip")) {
        o.skip.clear();
        for (double s : c.cfg.get_list("ionpump.skip")) o.skip.insert(static_cast<int>(s));
      }
      std::vector<CellModel> cells;
      for (int e = 0; e < o.electrodes; ++e) cells.push_back(cell_from(c.cfg, e));
      auto r = run_ionpump(c.device, cells, o, g.out);
      c.manifest.files = r.files;
      c.manifest.write();
      std::printf("active electrodes %zu, spearman rho %.4f\n", r.active_electrodes.size(), r.spearman_rho);
      print_files(c.manifest);
    } else if (run_cmd->parsed()) {
      auto c = make_context(g, "run", "resistor");
      Device dev(c.device);
      auto protocol = load_protocol(protocol_path, dev.channel_count());
      if (c.cfg.has("cell") && (!g.config_path.empty()))
        for (int ch = 0; ch < dev.channel_count(); ++ch) dev.bind_cell(ch, cell_from(c.cfg, ch));
      std::signal(SIGINT, on_signal);
      RunOptions ro;
      ro.sample_rate_Hz = run_rate;
      ro.abort = &g_stop;
      ro.meta = {utc_now_string(), "protocol " + protocol.name};
      const std::string log_name = protocol.name + "_log.csv";
      ro.log_path = (fs::path(g.out) / log_name).string();
      run_protocol(dev, protocol, ro);
      c.manifest.files = {log_name};
      c.manifest.write();
      std::printf("ran %s for %.3f s\n", protocol.name.c_str(), protocol.duration_s());
      print_files(c.manifest);
    } else if (serve_cmd->parsed()) {
      auto c = make_context(g, "serve", "resistor");
      if (c.device.time_mode.factor <= 0) c.device.time_mode = TimeMode::realtime();
      Device dev(c.device);
      if (!g.config_path.empty())
        for (int ch = 0; ch < dev.channel_count(); ++ch) dev.bind_cell(ch, cell_from(c.cfg, ch));
      const std::string log_name = "serve_log.csv";
      dev.open_log(std::make_unique<RunLog>((fs::path(g.out) / log_name).string()), {utc_now_string(), "serve"});
      Instrument instrument(std::move(dev), protocols_dir);
      Server server(instrument, server_opts);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::fprintf(stderr, "serving on %s:%u\n", server_opts.bind_address.c_str(), server.port());
      server.serve(g_stop);
      c.manifest.files = {log_name};
      c.manifest.write();
    } else if (loop_cmd->parsed()) {
      auto c = make_context(g, "closedloop", "ion_pump");
      const auto target = parse_target_spec(target_spec);
      const std::string trace_name = "closedloop_trace.csv";
      std::ofstream trace(fs::path(g.out) / trace_name, std::ios::binary);
      if (!trace) throw IoError("cannot write " + trace_name);
      std::vector<TracePoint> points;
      if (remote.empty() && sensor_file.empty()) {
        points = run_closed_loop_twin(c.device, cell_from(c.cfg), target, loop_opts, controller, &trace);
      } else {
        if (remote.empty() || sensor_file.empty())
          throw ConfigError("--server and --sensor-file must be given together");
        const auto colon = remote.rfind(':');
        if (colon == std::string::npos) throw ConfigError("--server expects host:port");
        Client client(remote.substr(0, colon), static_cast<std::uint16_t>(std::stoi(remote.substr(colon + 1))));
        FileTailSensor sensor(sensor_file);
        points = run_closed_loop(client, target, sensor, loop_opts, controller, &trace);
      }
      c.manifest.files = {trace_name};
      c.manifest.write();
      if (!points.empty())
        std::printf("final t=%.1f s target=%.4f measured=%.4f\n", points.back().t, points.back().target,
                    points.back().measured);
      print_files(c.manifest);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
