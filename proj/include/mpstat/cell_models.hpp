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


#pragma once

#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace mpstat {

inline constexpr double kFaraday = 96485.33212;

struct Resistor {
  double ohms = 1e6;
};

/// Rs in series with (Rct || Cdl). v_c is the voltage across the parallel pair.
struct Randles {
  double rs_ohm = 100e3;
  double rct_ohm = 1e6;
  double cdl_F = 1e-6;
  double v_c = 0.0;

  double time_constant() const;
};

enum class ScanDirection { Anodic, Cathodic };

struct PeakSpec {
  double v_center = 0.0;
  double height_A = 0.0;
  double width_V = 0.05;
  ScanDirection direction = ScanDirection::Anodic;
};

/// Capacitive baseline plus scan-direction gated Gaussian peaks.
struct PdSurface {
  double capacitance_F = 0.5e-6;
  std::vector<PeakSpec> peaks;
  double v_prev = 0.0;
  bool initialized = false;
  ScanDirection direction = ScanDirection::Anodic;

  /// Peak set of a Pd nanoparticle electrode in NaCl vs AgCl.
  static PdSurface palladium_defaults();
};

struct IonPumpState {
  double c_target = 0.1;     ///< mol/m^3
  double c_reservoir = 0.1;  ///< mol/m^3, leak equilibrium
  double volume_target = 1e-9;
  double transfer_eff = 0.5;
  double leak_rate = 0.01;  ///< 1/s
  double faraday = kFaraday;
  double c_half = 0.1;  ///< concentration of half fluorescence
};

/// Electrical interface (a Randles network) coupled to a proton budget.
struct IonPump {
  Randles interface{1.5e6, 1.5e6, 4e-6, 0.0};
  IonPumpState chem{};
};

/// Advance the target compartment by one step of signed channel current.
/// Positive current moves protons into the target.
void ionpump_step(IonPumpState& state, double i_channel, double dt);

/// 1 / (1 + c/c_half): one at zero protons, strictly decreasing.
double fluorescence(const IonPumpState& state);

/// A polymorphic electrochemical load with value semantics.
class CellModel {
 public:
  using Variant = std::variant<Resistor, Randles, PdSurface, IonPump>;

  CellModel(Variant v);  // NOLINT(google-explicit-constructor)
  template <typename T>
    requires std::is_constructible_v<Variant, T>
  CellModel(T model) : CellModel(Variant(std::move(model))) {}  // NOLINT(google-explicit-constructor)

  /// Apply `v` for `dt` seconds and return the current at the end of the step.
  double current(double v, double dt);
  /// Instantaneous current the cell would draw at `v`; no state change.
  double probe(double v) const;
  /// Advance while disconnected, with only `i_ext` flowing (switch leakage).
  void float_step(double i_ext, double dt);

  const Variant& variant() const { return model_; }
  Variant& variant() { return model_; }

  template <typename T>
  const T* get_if() const {
    return std::get_if<T>(&model_);
  }
  template <typename T>
  T* get_if() {
    return std::get_if<T>(&model_);
  }

 private:
  Variant model_;
};

/// Validates positivity constraints; throws ConfigError.
void validate(const CellModel& cell);

}  // namespace mpstat
