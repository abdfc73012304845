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


// Desk-scale experiments behind the CLI: instrument characterization,
// cyclic voltammetry, the ion-pump electrode cycle and the closed loop on
// the twin. Each writes plain CSV files into an output directory (skipped
// when the directory is empty) and returns the numbers the files hold.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "mpstat/cell_models.hpp"
#include "mpstat/client.hpp"
#include "mpstat/device.hpp"

namespace mpstat {

struct RunManifest {
  std::string subcommand;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::vector<std::string> files;  ///< relative to out_dir

  std::string to_json() const;
  /// Writes manifest.json into out_dir.
  void write() const;
};

// ---- characterization ------------------------------------------------------

struct CharacterizeOptions {
  double load_ohm = 1e6;
  double meter_sigma_V = 1e-3;  ///< bench meter noise in noisy mode
  int input_step_nA = 10;
  int load_step_mV = 10;
  int settle_ticks = 20;
  int average_ticks = 20;
  double load_rate_Hz = 860.0;
};

struct CharacterizeResult {
  double output_error_fs = 0.0;  ///< max |residual| / output span
  double input_error_fs = 0.0;   ///< max |residual| / ADC span
  double fitted_load_ohm = 0.0;
  std::vector<std::string> files;
};

CharacterizeResult characterize(const DeviceConfig& config, const CharacterizeOptions& options,
                                const std::filesystem::path& out_dir = {});

// ---- cyclic voltammetry ----------------------------------------------------

struct CvOptions {
  double rate_mV_per_s = 100.0;
  int v_lo_mV = -900;
  int v_hi_mV = 500;
  int cycles = 1;
  int channel = 0;
  double sample_rate_Hz = 0.0;  ///< 0 keeps the protocol default
};

struct CvPeak {
  double v_V = 0.0;
  double i_nA = 0.0;
  ScanDirection direction = ScanDirection::Anodic;
};

struct CvResult {
  std::vector<double> t_s;
  std::vector<double> v_V;  ///< drive readback
  std::vector<double> i_nA;
  std::vector<int> direction;  ///< +1 rising drive, -1 falling
  std::vector<CvPeak> peaks;
  double duration_s = 0.0;
  std::vector<std::string> files;
};

/// Peaks after a 5-point moving average with prominence at least 5% of
/// max |I|. Only positive maxima and negative minima count; the scan
/// direction is taken from the drive trend at the peak.
std::vector<CvPeak> detect_cv_peaks(const std::vector<double>& v_V, const std::vector<double>& i_nA,
                                    const std::vector<int>& direction);

CvResult run_cv(const DeviceConfig& config, const CellModel& cell, const CvOptions& options,
                const std::filesystem::path& out_dir = {});

// ---- ion-pump electrode cycle ----------------------------------------------

struct IonPumpOptions {
  int electrodes = 9;
  std::set<int> skip{3, 5};
  int amp_mV = 1400;
  double period_s = 30.0;
  double frame_rate_Hz = 0.5;
};

/// A run of consecutive ticks with one electrode closed at one polarity.
struct HalfPhase {
  int channel = 0;
  int sign = 0;
  std::size_t first_tick = 0;
  std::size_t ticks = 0;
  double mean_current_nA = 0.0;
  double fluorescence_change = 0.0;
};

struct IonPumpResult {
  std::vector<HalfPhase> half_phases;
  std::vector<int> active_electrodes;  ///< in phase order
  std::vector<std::size_t> samples_per_phase;
  std::size_t max_closed_per_tick = 0;
  double spearman_rho = 0.0;
  std::vector<std::string> files;
};

/// `cells[e]` is bound to channel e.
IonPumpResult run_ionpump(const DeviceConfig& config, const std::vector<CellModel>& cells,
                          const IonPumpOptions& options, const std::filesystem::path& out_dir = {});

// ---- closed loop on the twin -----------------------------------------------

/// Serves the device in lockstep on loopback, drives it through the UDP
/// client and reads the bound ion pump's fluorescence proxy as the sensor.
std::vector<TracePoint> run_closed_loop_twin(const DeviceConfig& config, const CellModel& cell,
                                             const std::function<double(double)>& target,
                                             const ClosedLoopOptions& options, ControllerState controller,
                                             std::ostream* trace = nullptr);

/// First time from which |measured - target| stays below `band` for the
/// rest of the trace, measured from `t_from`; negative if never.
double settling_time(const std::vector<TracePoint>& trace, double band, double t_from);

}  // namespace mpstat
