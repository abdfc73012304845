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


#include "mpstat/signal_chain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mpstat {

std::int64_t SignalChainParams::full_scale_counts() const {
  return std::llround(amp_rail_V() / adc_lsb_V);
}

double SignalChainParams::drive_min_V() const { return drive_from_code(0, *this); }

double SignalChainParams::drive_max_V() const { return drive_from_code(dac_max_code(), *this); }

DacOutput dac_quantize(double v_request, const SignalChainParams& p) {
  const double v = std::clamp(v_request, 0.0, p.dac_fullscale_V);
  const auto steps = static_cast<double>(1 << p.dac_bits);
  const auto code = static_cast<int>(std::min<long long>(std::llround(v / p.dac_fullscale_V * steps),
                                                         p.dac_max_code()));
  return {code, code * p.dac_lsb()};
}

double level_shift(double v_dac, const SignalChainParams& p) {
  return p.shift_gain * v_dac + p.shift_offset_V;
}

double level_shift_inverse(double v_out, const SignalChainParams& p) {
  return (v_out - p.shift_offset_V) / p.shift_gain;
}

double drive_from_code(int code, const SignalChainParams& p) {
  return level_shift(code * p.dac_lsb(), p);
}

int code_for_drive(double v_out, const SignalChainParams& p) {
  return dac_quantize(level_shift_inverse(v_out, p), p).code;
}

int drive_readback_mV(int code, const SignalChainParams& p) {
  return static_cast<int>(std::lround(drive_from_code(code, p) * 1000.0));
}

double switch_current(bool closed, double i_cell, const SignalChainParams& p) {
  if (closed) return i_cell;
  return std::clamp(i_cell, -p.switch_leak_A, p.switch_leak_A);
}

double sense_current(double i_channel, const SignalChainParams& p) {
  const double rail = p.amp_rail_V();
  return std::clamp(i_channel * p.transimpedance_V_per_A(), -rail, rail);
}

double filter_alpha(double dt, const SignalChainParams& p) {
  return 1.0 - std::exp(-2.0 * std::numbers::pi * p.lpf_cutoff_Hz * dt);
}

double shift_and_filter(double v_amp, FilterState& state, double dt, double noise_V,
                        const SignalChainParams& p) {
  const double u = v_amp + p.input_shift_V + noise_V;
  if (!state.initialized) {
    state.y_prev = u;
    state.initialized = true;
  } else {
    state.y_prev += filter_alpha(dt, p) * (u - state.y_prev);
  }
  return state.y_prev;
}

std::int64_t adc_counts(double v_adc_in, const SignalChainParams& p) {
  const double v = std::clamp(v_adc_in, 0.0, p.adc_range_V);
  return std::llround((v - p.input_shift_V) / p.adc_lsb_V);
}

double adc_read_nA(double v_adc_in, const SignalChainParams& p) {
  // Whole picoamps per count keep readings on the exact LSB lattice.
  const auto pA_per_count = std::llround(p.reading_lsb_A() * 1e12);
  return static_cast<double>(adc_counts(v_adc_in, p) * pA_per_count) / 1000.0;
}

NoiseSource::NoiseSource(std::uint64_t seed, int channel, double sigma_V)
    : normal_(0.0, sigma_V) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(channel)};
  engine_.seed(seq);
}

ChainReading chain_convert(const SignalChainParams& p, ChannelState& ch, CellModel* cell, double dt,
                           NoiseSource* noise) {
  ChainReading out;
  out.v_applied = drive_from_code(ch.dac_code, p) - p.stage_offset_V;

  double i_cell = 0.0;
  if (ch.switch_closed) {
    if (cell) i_cell = cell->current(out.v_applied, dt);
  } else if (cell) {
    i_cell = cell->probe(out.v_applied);
    cell->float_step(switch_current(false, i_cell, p), dt);
  }
  out.i_channel = switch_current(ch.switch_closed, i_cell, p);

  const double v_amp = sense_current(out.i_channel + ch.offset_A, p);
  const double n = noise ? noise->draw() : 0.0;
  const double v_in = shift_and_filter(v_amp, ch.filter, dt, n, p);
  out.raw_counts = adc_counts(v_in, p);
  return out;
}

Sample chain_step(const SignalChainParams& p, ChannelState& ch, CellModel* cell, double dt,
                  NoiseSource* noise, double t) {
  const auto reading = chain_convert(p, ch, cell, dt, noise);
  const auto fs = p.full_scale_counts();
  ch.last_counts = std::clamp(reading.raw_counts - ch.baseline_counts, -fs, fs);
  return {t, ch.index, drive_readback_mV(ch.dac_code, p), ch.switch_closed,
          ch.last_counts * kPicoampsPerCount};
}

}  // namespace mpstat
