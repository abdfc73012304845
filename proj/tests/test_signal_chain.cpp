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


#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "mpstat/cell_models.hpp"
#include "mpstat/signal_chain.hpp"

namespace mpstat {
namespace {

const SignalChainParams kP{};

// Reference models written from the component datasheet relations, kept
// independent of the library code.
double oracle_dac_volts(int code) { return code * 3.3 / 4096.0; }
double oracle_shift(double vin) { return 2.42 * vin - 4.0; }
std::int64_t oracle_counts(double v_adc) {
  const double lsb = 125e-6;
  const double x = (std::clamp(v_adc, 0.0, 3.3) - 1.65) / lsb;
  return static_cast<std::int64_t>(std::floor(x + 0.5));
}
double oracle_alpha(double dt) { return 1.0 - std::exp(-2.0 * std::numbers::pi * 72.0 * dt); }

TEST(ResolutionTest, CompositeOutputStep) {
  EXPECT_NEAR(kP.output_lsb_V() * 1e3, 1.95, 0.01);
  EXPECT_DOUBLE_EQ(kP.output_lsb_V() * 1e3, 1.94970703125);
}

TEST(ResolutionTest, ShuntRatioAndReadingLsb) {
  EXPECT_EQ(kP.transimpedance_V_per_A(), 1e6);
  EXPECT_DOUBLE_EQ(kP.reading_lsb_A(), 0.125e-9);
  EXPECT_EQ(kP.full_scale_counts(), 13200);
}

TEST(ResolutionTest, DriveRange) {
  EXPECT_DOUBLE_EQ(kP.drive_min_V(), -4.0);
  EXPECT_NEAR(kP.drive_max_V(), 3.98405, 5e-6);
  EXPECT_EQ(kP.dac_max_code(), 4095);
}

TEST(DacTest, Examples) {
  auto z = dac_quantize(0.0);
  EXPECT_EQ(z.code, 0);
  EXPECT_EQ(z.volts, 0.0);
  auto top = dac_quantize(3.3);
  EXPECT_EQ(top.code, 4095);
  EXPECT_DOUBLE_EQ(top.volts, 3.2991943359375);
  auto mid = dac_quantize(1.65);
  EXPECT_EQ(mid.code, 2048);
  EXPECT_DOUBLE_EQ(mid.volts, 1.65);
}

TEST(DacTest, MatchesOracleAndIsMonotone) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.5, 3.8);
  for (int k = 0; k < 20000; ++k) {
    const double a = u(rng), b = u(rng);
    const auto qa = dac_quantize(a), qb = dac_quantize(b);
    EXPECT_DOUBLE_EQ(qa.volts, oracle_dac_volts(qa.code));
    EXPECT_LE(std::abs(qa.volts - std::clamp(a, 0.0, oracle_dac_volts(4095))), 3.3 / 4096 / 2 + 1e-12);
    if (a <= b) EXPECT_LE(qa.code, qb.code);
  }
}

TEST(LevelShiftTest, Examples) {
  EXPECT_DOUBLE_EQ(level_shift(0.0), -4.0);
  EXPECT_NEAR(level_shift(3.3), 3.986, 1e-12);
  EXPECT_NEAR(level_shift(1.652893), 0.0, 2e-6);
  EXPECT_NEAR(level_shift_inverse(0.0), 4.0 / 2.42, 1e-15);
}

TEST(LevelShiftTest, DriveLatticeAnchoredAtMinusFour) {
  const double step = kP.output_lsb_V();
  for (int code = 0; code <= 4095; ++code) {
    const double v = drive_from_code(code);
    EXPECT_NEAR(v, oracle_shift(oracle_dac_volts(code)), 1e-12);
    EXPECT_NEAR((v + 4.0) / step, code, 1e-9);
    EXPECT_GE(v, -4.0);
    EXPECT_LE(v, 3.986);
  }
}

TEST(LevelShiftTest, CodeForDriveIsNearest) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-4.0, 3.98);
  for (int k = 0; k < 5000; ++k) {
    const double v = u(rng);
    const int c = code_for_drive(v);
    EXPECT_LE(std::abs(drive_from_code(c) - v), kP.output_lsb_V() / 2 + 1e-12);
  }
}

TEST(SwitchTest, Examples) {
  EXPECT_EQ(switch_current(true, 500e-9), 500e-9);
  EXPECT_EQ(switch_current(false, 500e-9), 10e-12);
  EXPECT_EQ(switch_current(false, -500e-9), -10e-12);
  EXPECT_EQ(switch_current(false, 0.0), 0.0);
  EXPECT_EQ(switch_current(false, 3e-12), 3e-12);
}

TEST(SenseTest, Examples) {
  EXPECT_NEAR(sense_current(1e-9), 1e-3, 1e-15);
  EXPECT_NEAR(sense_current(-1650e-9), -1.65, 1e-12);
  EXPECT_EQ(sense_current(2000e-9), 1.65);
  EXPECT_EQ(sense_current(-5e-6), -1.65);
}

TEST(FilterTest, AlphaMatchesOracle) {
  EXPECT_DOUBLE_EQ(filter_alpha(1.0 / 860), oracle_alpha(1.0 / 860));
  EXPECT_NEAR(filter_alpha(1.0 / 860), 0.4090560579254755, 1e-15);
}

TEST(FilterTest, FreshStateZeroInputIsMidRail) {
  FilterState s;
  EXPECT_EQ(shift_and_filter(0.0, s, 0.01, 0.0), 1.65);
}

TEST(FilterTest, HeldInputSettles) {
  FilterState s;
  double y = 0;
  for (int k = 0; k < 100; ++k) y = shift_and_filter(1.0, s, 1.0 / 860, 0.0);
  EXPECT_NEAR(y, 2.65, 2.65 * 1e-3);
}

TEST(FilterTest, FirstStepAfterPreset) {
  FilterState s;
  shift_and_filter(0.0, s, 1.0 / 860, 0.0);
  const double y = shift_and_filter(1.0, s, 1.0 / 860, 0.0);
  EXPECT_NEAR(y, 1.65 + 0.4090560579254755, 1e-12);
}

TEST(FilterTest, SettlesWithinFiveTimeConstants) {
  const double dt = 1.0 / 860;
  const double tau = 1.0 / (2 * std::numbers::pi * 72.0);
  const int n = static_cast<int>(std::ceil(5 * tau / dt));
  FilterState s;
  shift_and_filter(0.0, s, dt, 0.0);
  double y = 0;
  for (int k = 0; k < n; ++k) y = shift_and_filter(1.0, s, dt, 0.0);
  EXPECT_LT(std::abs((y - 1.65) - 1.0), 0.01);
}

TEST(FilterTest, SineResponseAtCutoff) {
  const double fs = 860, f = 72, dt = 1 / fs;
  FilterState s;
  double peak = 0;
  for (int k = 0; k < 8600; ++k) {
    const double x = 1.0 * std::sin(2 * std::numbers::pi * f * k * dt);
    const double y = shift_and_filter(x, s, dt, 0.0) - 1.65;
    if (k > 4300) peak = std::max(peak, std::abs(y));
  }
  // Sampled peaks underestimate the true amplitude by at most cos(pi f / fs).
  const double db = 20 * std::log10(peak);
  EXPECT_NEAR(db, -3.0, 0.5);
}

TEST(AdcTest, Examples) {
  EXPECT_EQ(adc_read_nA(1.65), 0.0);
  EXPECT_NEAR(adc_read_nA(1.651), 1.0, 1e-12);
  // 62.6 uV is just over half an LSB, so it rounds up to one count.
  EXPECT_EQ(adc_counts(1.6500626), oracle_counts(1.6500626));
  EXPECT_EQ(adc_read_nA(1.6500626), 0.125);
  EXPECT_EQ(adc_read_nA(1.6500624), 0.0);
}

TEST(AdcTest, LatticeMonotoneAndSaturating) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.2, 3.5);
  for (int k = 0; k < 20000; ++k) {
    const double a = u(rng), b = u(rng);
    const auto ca = adc_counts(a);
    EXPECT_EQ(ca, oracle_counts(a));
    const double r = adc_read_nA(a);
    EXPECT_EQ(r, static_cast<double>(ca) * 0.125);
    EXPECT_LE(std::abs(r), 1650.0);
    if (a <= b) EXPECT_LE(ca, adc_counts(b));
  }
}

TEST(SenseTest, Monotone) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3e-6, 3e-6);
  for (int k = 0; k < 10000; ++k) {
    const double a = u(rng), b = u(rng);
    if (a <= b) EXPECT_LE(sense_current(a), sense_current(b));
  }
}

TEST(ChainTest, RoundTripOnLsbLattice) {
  for (int n = -13200; n <= 13200; n += 7) {
    ChannelState ch;
    ch.offset_A = n * 0.125e-9;
    chain_convert(kP, ch, nullptr, 1.0 / 860, nullptr);
    const auto s = chain_step(kP, ch, nullptr, 1.0 / 860, nullptr, 0.0);
    EXPECT_EQ(s.current_pA, n * 125LL);
  }
}

TEST(ChainTest, OneMegohmAtPlus165) {
  ChannelState ch;
  ch.switch_closed = true;
  ch.dac_code = code_for_drive(1.65);
  CellModel r = Resistor{1e6};
  Sample s;
  for (int k = 0; k < 50; ++k) s = chain_step(kP, ch, &r, 1.0 / 860, nullptr, 0.0);
  const double expected_nA = std::min(drive_from_code(ch.dac_code) / 1e6 * 1e9, 1650.0);
  EXPECT_NEAR(s.current_pA * 1e-3, expected_nA, 0.125);
  EXPECT_NEAR(s.current_pA * 1e-3, 1650.0, 1.0);
}

TEST(ChainTest, OpenSwitchReadsBelowOneLsb) {
  ChannelState ch;
  ch.dac_code = code_for_drive(1.0);
  CellModel r = Resistor{1e6};
  for (int k = 0; k < 20; ++k) {
    const auto s = chain_step(kP, ch, &r, 1.0 / 860, nullptr, 0.0);
    EXPECT_EQ(s.current_pA, 0);
  }
}

TEST(ChainTest, SaturatesAtFullScale) {
  for (double amps : {5e-6, -5e-6, 1.7e-6}) {
    ChannelState ch;
    ch.offset_A = amps;
    const auto s = chain_step(kP, ch, nullptr, 1.0 / 860, nullptr, 0.0);
    EXPECT_LE(std::abs(s.current_pA), 1'650'000);
  }
}

TEST(ChainTest, NoisyFullSweepWithinOnePercent) {
  ChannelState ch;
  ch.switch_closed = true;
  NoiseSource noise(42, 0, kP.noise_sigma_A * kP.transimpedance_V_per_A());
  CellModel r = Resistor{1e6};
  double worst = 0;
  for (int mv = -1650; mv <= 1650; mv += 10) {
    ch.dac_code = code_for_drive(mv * 1e-3);
    Sample s;
    for (int k = 0; k < 10; ++k) s = chain_step(kP, ch, &r, 1.0 / 860, &noise, 0.0);
    const double truth_nA = std::clamp(drive_from_code(ch.dac_code) / 1e6 * 1e9, -1650.0, 1650.0);
    worst = std::max(worst, std::abs(s.current_pA * 1e-3 - truth_nA));
  }
  EXPECT_LT(worst, 0.01 * 1650);
}

TEST(NoiseTest, SeededPerChannel) {
  NoiseSource a(1, 0, 1.0), b(1, 0, 1.0), c(1, 1, 1.0);
  bool differs = false;
  for (int k = 0; k < 100; ++k) {
    const double x = a.draw();
    EXPECT_EQ(x, b.draw());
    differs |= x != c.draw();
  }
  EXPECT_TRUE(differs);
}

}  // namespace
}  // namespace mpstat
