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


#include "mpstat/cell_models.hpp"

#include <algorithm>
#include <cmath>

#include "mpstat/errors.hpp"

namespace mpstat {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

int substeps(double dt, double tau) {
  const double h_max = tau / 10.0;
  return std::max(1, static_cast<int>(std::ceil(dt / h_max)));
}

struct StepResult {
  double i_end;
  double charge;
};

// Explicit Euler on v_c with the drive held for the whole step.
StepResult advance(Randles& r, double v, double dt) {
  const int n = substeps(dt, r.time_constant());
  const double h = dt / n;
  double charge = 0.0;
  for (int k = 0; k < n; ++k) {
    const double i = (v - r.v_c) / r.rs_ohm;
    charge += i * h;
    r.v_c += h * (i - r.v_c / r.rct_ohm) / r.cdl_F;
  }
  return {(v - r.v_c) / r.rs_ohm, charge};
}

void advance_floating(Randles& r, double i_ext, double dt) {
  const int n = substeps(dt, r.rct_ohm * r.cdl_F);
  const double h = dt / n;
  for (int k = 0; k < n; ++k) r.v_c += h * (i_ext - r.v_c / r.rct_ohm) / r.cdl_F;
}

double peak_current(const PdSurface& pd, double v) {
  double i = 0.0;
  for (const auto& pk : pd.peaks) {
    if (pk.direction != pd.direction) continue;
    const double x = (v - pk.v_center) / pk.width_V;
    i += pk.height_A * std::exp(-x * x);
  }
  return i;
}

void require_finite(double v) {
  if (!std::isfinite(v)) throw NonFiniteInput("cell drive voltage is not finite");
}

}  // namespace

double Randles::time_constant() const {
  const double r_par = rs_ohm * rct_ohm / (rs_ohm + rct_ohm);
  return r_par * cdl_F;
}

PdSurface PdSurface::palladium_defaults() {
  PdSurface pd;
  pd.capacitance_F = 0.5e-6;
  pd.peaks = {
      {0.15, 250e-9, 0.05, ScanDirection::Anodic},     // surface oxide formation
      {-0.20, -400e-9, 0.06, ScanDirection::Cathodic},  // surface oxide reduction
      {-0.65, -600e-9, 0.05, ScanDirection::Cathodic},  // hydride formation
      {-0.75, 450e-9, 0.04, ScanDirection::Anodic},     // H desorption
  };
  return pd;
}

void ionpump_step(IonPumpState& s, double i_channel, double dt) {
  const double moles = s.transfer_eff * i_channel * dt / s.faraday;
  const double relax = s.leak_rate * (s.c_target - s.c_reservoir) * dt;
  s.c_target = std::max(0.0, s.c_target + moles / s.volume_target - relax);
}

double fluorescence(const IonPumpState& s) {
  if (!std::isfinite(s.c_target)) return 0.0;
  return 1.0 / (1.0 + s.c_target / s.c_half);
}

CellModel::CellModel(Variant v) : model_(std::move(v)) {}

double CellModel::current(double v, double dt) {
  require_finite(v);
  return std::visit(
      Overloaded{
          [&](Resistor& r) { return v / r.ohms; },
          [&](Randles& r) { return advance(r, v, dt).i_end; },
          [&](PdSurface& pd) {
            double i_cap = 0.0;
            if (!pd.initialized) {
              pd.initialized = true;
            } else {
              const double dv = v - pd.v_prev;
              if (dv > 0.0) pd.direction = ScanDirection::Anodic;
              if (dv < 0.0) pd.direction = ScanDirection::Cathodic;
              i_cap = pd.capacitance_F * dv / dt;
            }
            pd.v_prev = v;
            return i_cap + peak_current(pd, v);
          },
          [&](IonPump& p) {
            const auto step = advance(p.interface, v, dt);
            ionpump_step(p.chem, step.charge / dt, dt);
            return step.i_end;
          },
      },
      model_);
}

double CellModel::probe(double v) const {
  require_finite(v);
  return std::visit(Overloaded{
                        [&](const Resistor& r) { return v / r.ohms; },
                        [&](const Randles& r) { return (v - r.v_c) / r.rs_ohm; },
                        [&](const PdSurface& pd) { return peak_current(pd, v); },
                        [&](const IonPump& p) { return (v - p.interface.v_c) / p.interface.rs_ohm; },
                    },
                    model_);
}

void CellModel::float_step(double i_ext, double dt) {
  std::visit(Overloaded{
                 [](Resistor&) {},
                 [&](Randles& r) { advance_floating(r, i_ext, dt); },
                 // Electrode potential is undefined while floating; restart the
                 // capacitive term on reconnect.
                 [](PdSurface& pd) { pd.initialized = false; },
                 [&](IonPump& p) {
                   advance_floating(p.interface, i_ext, dt);
                   ionpump_step(p.chem, i_ext, dt);
                 },
             },
             model_);
}

void validate(const CellModel& cell) {
  std::visit(Overloaded{
                 [](const Resistor& r) {
                   if (!(r.ohms > 0)) throw ConfigError("resistor: R must be > 0");
                 },
                 [](const Randles& r) {
                   if (!(r.rs_ohm > 0) || !(r.rct_ohm > 0) || !(r.cdl_F > 0))
                     throw ConfigError("randles: Rs, Rct and Cdl must be > 0");
                 },
                 [](const PdSurface& pd) {
                   if (!(pd.capacitance_F > 0)) throw ConfigError("pd_surface: C must be > 0");
                   for (const auto& pk : pd.peaks) {
                     if (!(pk.width_V > 0)) throw ConfigError("pd_surface: peak width must be > 0");
                     const bool anodic = pk.direction == ScanDirection::Anodic;
                     if (anodic ? !(pk.height_A > 0) : !(pk.height_A < 0))
                       throw ConfigError("pd_surface: anodic peaks must be positive, cathodic negative");
                   }
                 },
                 [](const IonPump& p) {
                   const auto& r = p.interface;
                   if (!(r.rs_ohm > 0) || !(r.rct_ohm > 0) || !(r.cdl_F > 0))
                     throw ConfigError("ion_pump: interface Rs, Rct and Cdl must be > 0");
                   const auto& c = p.chem;
                   if (c.c_target < 0 || c.c_reservoir < 0 || !(c.volume_target > 0) || !(c.c_half > 0) ||
                       c.transfer_eff < 0 || c.transfer_eff > 1 || c.leak_rate < 0)
                     throw ConfigError("ion_pump: invalid chemistry parameters");
                 },
             },
             cell.variant());
}

}  // namespace mpstat
