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
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mpstat/cell_models.hpp"
#include "mpstat/errors.hpp"
#include "mpstat/experiments.hpp"

namespace mpstat {
namespace {

// Exact solution of the Randles network for a drive held constant over h.
struct RandlesOracle {
  double rs, rct, cdl, v_c = 0.0;
  double step(double v, double h) {
    const double tau = rs * rct / (rs + rct) * cdl;
    const double v_ss = v * rct / (rs + rct);
    v_c = v_ss + (v_c - v_ss) * std::exp(-h / tau);
    return (v - v_c) / rs;
  }
};

TEST(ResistorTest, OhmsLaw) {
  CellModel r = Resistor{1e6};
  EXPECT_NEAR(r.current(1.65, 0.01), 1.65e-6, 1e-18);
  CellModel fitted = Resistor{1.00969e6};
  EXPECT_NEAR(fitted.current(1.0, 0.01) * 1e6, 0.99040, 5e-6);
}

TEST(RandlesTest, StepResponseLimits) {
  CellModel c = Randles{100e3, 1e6, 1e-6, 0.0};
  EXPECT_NEAR(c.probe(1.0), 10e-6, 1e-15);
  const double tau = c.get_if<Randles>()->time_constant();
  double i = 0;
  for (int k = 0; k < 1000; ++k) i = c.current(1.0, 10 * tau / 1000);
  EXPECT_NEAR(i, 1.0 / 1.1e6, 1.0 / 1.1e6 * 1e-3);
  EXPECT_NEAR(i * 1e6, 0.909, 5e-4);
}

TEST(RandlesTest, TracksExactSolutionOverCvSweep) {
  // Start from equilibrium at the lower vertex.
  const double v0 = -0.9 * 1e6 / 1.1e6;
  Randles params{100e3, 1e6, 1e-6, v0};
  CellModel c = params;
  RandlesOracle ref{params.rs_ohm, params.rct_ohm, params.cdl_F, v0};
  const double dt = 1.0 / 15, rate = 0.1;
  double v = -0.9, dir = 1;
  double worst = 0, scale = 0;
  for (int k = 0; k < 2 * 14 * 15; ++k) {
    v += dir * rate * dt;
    if (v >= 0.5) dir = -1;
    const double a = c.current(v, dt), b = ref.step(v, dt);
    worst = std::max(worst, std::abs(a - b));
    scale = std::max(scale, std::abs(b));
  }
  EXPECT_LT(worst / scale, 0.005);
}

TEST(IonPumpTest, NoFluxNoChange) {
  IonPumpState s;
  s.leak_rate = 0;
  const double c0 = s.c_target;
  ionpump_step(s, 0.0, 10.0);
  EXPECT_EQ(s.c_target, c0);
}

TEST(IonPumpTest, FaradayHandComputation) {
  IonPumpState s;
  s.transfer_eff = 1;
  s.volume_target = 1e-9;
  s.leak_rate = 0;
  s.c_target = 0;
  for (int k = 0; k < 300; ++k) ionpump_step(s, 1e-6, 0.1);
  EXPECT_NEAR(s.c_target, 0.311, 5e-4);
  EXPECT_NEAR(s.c_target, 0.31092808969853186, 1e-9);
}

TEST(IonPumpTest, MassBalanceWithoutLeak) {
  IonPump p;
  p.chem.leak_rate = 0;
  CellModel c = p;
  const double c0 = p.chem.c_target;
  const double dt = 1.0 / 860;
  double q = 0;
  for (int k = 0; k < 860 * 30; ++k) q += c.current(1.0, dt) * dt;
  const auto& st = c.get_if<IonPump>()->chem;
  const double lhs = st.faraday * st.volume_target * (st.c_target - c0);
  EXPECT_NEAR(lhs, st.transfer_eff * q, std::abs(st.transfer_eff * q) * 1e-3);
}

TEST(IonPumpTest, NegativeDriveRaisesFluorescence) {
  CellModel c = IonPump{};
  const double f0 = fluorescence(c.get_if<IonPump>()->chem);
  double i = 0;
  for (int k = 0; k < 150; ++k) i = c.current(-1.4, 0.1);
  EXPECT_LT(i, 0);
  EXPECT_GT(fluorescence(c.get_if<IonPump>()->chem), f0);
}

TEST(FluorescenceTest, Limits) {
  IonPumpState s;
  s.c_target = 0;
  EXPECT_EQ(fluorescence(s), 1.0);
  s.c_target = s.c_half;
  EXPECT_EQ(fluorescence(s), 0.5);
  s.c_target = 1e300;
  EXPECT_NEAR(fluorescence(s), 0.0, 1e-200);
  s.c_target = std::numeric_limits<double>::infinity();
  EXPECT_EQ(fluorescence(s), 0.0);
}

TEST(FluorescenceTest, StrictlyDecreasingProperty) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  IonPumpState a, b;
  for (int k = 0; k < 10000; ++k) {
    a.c_target = u(rng);
    b.c_target = u(rng);
    const double fa = fluorescence(a), fb = fluorescence(b);
    EXPECT_GE(fa, 0.0);
    EXPECT_LE(fa, 1.0);
    if (a.c_target < b.c_target) EXPECT_GT(fa, fb);
  }
}

TEST(PdSurfaceTest, FourDirectionGatedExtrema) {
  CellModel c = PdSurface::palladium_defaults();
  const auto& peaks = c.get_if<PdSurface>()->peaks;
  const double dt = 1.0 / 100, rate = 0.1;
  std::vector<double> v, i;
  std::vector<int> dir;
  const int n = static_cast<int>(std::lround(1.4 / rate / dt));
  for (int k = 0; k <= n; ++k) {
    v.push_back(-0.9 + 1.4 * k / n);
    dir.push_back(1);
  }
  for (int k = 1; k <= n; ++k) {
    v.push_back(0.5 - 1.4 * k / n);
    dir.push_back(-1);
  }
  for (double x : v) i.push_back(c.current(x, dt) * 1e9);
  const auto found = detect_cv_peaks(v, i, dir);
  ASSERT_EQ(found.size(), 4u);
  for (const auto& spec : peaks) {
    int matches = 0;
    for (const auto& f : found)
      if (f.direction == spec.direction && std::abs(f.v_V - spec.v_center) <= spec.width_V / 4) ++matches;
    EXPECT_EQ(matches, 1) << "peak at " << spec.v_center;
  }
}

TEST(CellValidationTest, RejectsNonPositiveParameters) {
  EXPECT_THROW(validate(Resistor{0}), ConfigError);
  EXPECT_THROW(validate(Randles{-1, 1, 1, 0}), ConfigError);
  auto pd = PdSurface::palladium_defaults();
  pd.peaks[0].height_A = -1e-9;
  EXPECT_THROW(validate(pd), ConfigError);
  IonPump p;
  p.chem.volume_target = 0;
  EXPECT_THROW(validate(p), ConfigError);
  EXPECT_NO_THROW(validate(IonPump{}));
}

TEST(CellModelTest, NonFiniteDriveRejected) {
  CellModel c = Resistor{1e6};
  EXPECT_THROW(c.current(std::nan(""), 0.1), NonFiniteInput);
}

TEST(CellModelTest, ValueSemanticsClone) {
  CellModel a = Randles{};
  a.current(1.0, 0.5);
  CellModel b = a;
  EXPECT_EQ(a.current(0.5, 0.1), b.current(0.5, 0.1));
}

}  // namespace
}  // namespace mpstat
