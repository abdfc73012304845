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


// Analog path of one potentiostat channel: 12-bit DAC, level shifter,
// analog switch, shunt ammeter, input level shift with first-order low-pass,
// and the 16-bit ADC. Everything here is a pure function of its arguments
// plus explicitly passed state.

#pragma once

#include <cstdint>
#include <random>

#include "mpstat/cell_models.hpp"

namespace mpstat {

struct SignalChainParams {
  int dac_bits = 12;
  double dac_fullscale_V = 3.3;
  double shift_gain = 2.42;
  double shift_offset_V = -4.0;
  double shunt_ohm = 10'000.0;
  double amp_gain = 100.0;
  double adc_lsb_V = 125e-6;
  double adc_range_V = 3.3;
  double input_shift_V = 1.65;
  double lpf_cutoff_Hz = 72.0;
  double switch_leak_A = 10e-12;
  double noise_sigma_A = 0.8e-9;
  double max_sample_rate_Hz = 860.0;
  /// Output-stage error: the cell sees the nominal drive minus this value, so
  /// a positive offset moves voltammetric features to more positive logged
  /// potentials.
  double stage_offset_V = 0.0;
  /// Advertised safe drive current (distinct from the +-1650 nA reading span).
  double rated_current_A = 1.5e-6;

  int dac_max_code() const { return (1 << dac_bits) - 1; }
  double dac_lsb() const { return dac_fullscale_V / static_cast<double>(1 << dac_bits); }
  /// Drive resolution after the level shifter (about 1.95 mV).
  double output_lsb_V() const { return dac_lsb() * shift_gain; }
  double transimpedance_V_per_A() const { return shunt_ohm * amp_gain; }
  double reading_lsb_A() const { return adc_lsb_V / transimpedance_V_per_A(); }
  double amp_rail_V() const { return adc_range_V - input_shift_V; }
  /// Largest reading magnitude in ADC counts (13200 for the defaults).
  std::int64_t full_scale_counts() const;
  double drive_min_V() const;
  double drive_max_V() const;
};

struct DacOutput {
  int code = 0;
  double volts = 0.0;
};

struct FilterState {
  double y_prev = 0.0;
  bool initialized = false;
};

DacOutput dac_quantize(double v_request, const SignalChainParams& p = {});

/// Vo = gain * Vin + offset (2.42 * Vin - 4 for the defaults).
double level_shift(double v_dac, const SignalChainParams& p = {});
double level_shift_inverse(double v_out, const SignalChainParams& p = {});

/// Drive voltage produced by a DAC code.
double drive_from_code(int code, const SignalChainParams& p = {});
/// DAC code nearest to a requested drive voltage.
int code_for_drive(double v_out, const SignalChainParams& p = {});

/// An open switch passes at most the leakage current, keeping the sign.
double switch_current(bool closed, double i_cell, const SignalChainParams& p = {});

/// Shunt + instrumentation amplifier, clamped to the amplifier rails.
double sense_current(double i_channel, const SignalChainParams& p = {});

double filter_alpha(double dt, const SignalChainParams& p = {});

/// Adds the mid-rail shift and noise, then one step of the single-pole IIR.
/// The first call presets the filter to its input.
double shift_and_filter(double v_amp, FilterState& state, double dt, double noise_V,
                        const SignalChainParams& p = {});

/// Signed ADC counts relative to mid-rail; one count is 0.125 nA.
std::int64_t adc_counts(double v_adc_in, const SignalChainParams& p = {});
double adc_read_nA(double v_adc_in, const SignalChainParams& p = {});

inline constexpr std::int64_t kPicoampsPerCount = 125;

/// Gaussian noise source for one channel's amplifier output.
class NoiseSource {
 public:
  NoiseSource(std::uint64_t seed, int channel, double sigma_V);
  double draw() { return normal_(engine_); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

struct ChannelState {
  int index = 0;
  int set_mV = 0;  ///< last requested drive
  int dac_code = 0;
  bool switch_closed = false;
  std::int64_t baseline_counts = 0;
  FilterState filter{};
  double offset_A = 0.0;  ///< amplifier input offset, nulled by calibration
  std::int64_t last_counts = 0;
};

struct Sample {
  double t = 0.0;
  int channel = 0;
  int set_mV = 0;
  bool switch_closed = false;
  std::int64_t current_pA = 0;
};

/// Raw counts for one conversion, before baseline subtraction.
struct ChainReading {
  std::int64_t raw_counts = 0;
  double v_applied = 0.0;
  double i_channel = 0.0;
};

/// One tick of the full path: drive the cell (or float it when the switch
/// is open), sense, filter and convert. `noise` may be null for ideal mode.
/// Does not apply the calibration baseline.
ChainReading chain_convert(const SignalChainParams& p, ChannelState& ch, CellModel* cell, double dt,
                           NoiseSource* noise);

/// chain_convert plus baseline subtraction and saturation; updates
/// ch.last_counts and returns the logged sample.
Sample chain_step(const SignalChainParams& p, ChannelState& ch, CellModel* cell, double dt,
                  NoiseSource* noise, double t);

/// Quantized drive readback in mV, rounded to an integer.
int drive_readback_mV(int code, const SignalChainParams& p = {});

}  // namespace mpstat
