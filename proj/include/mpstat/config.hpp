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


// Plain-text `key = value` configuration. `#` starts a comment. Keys:
//
//   boards, sample_rate_Hz, mode (ideal|noisy), seed, noise_sigma_nA,
//   stage_offset_mV, time_factor
//   cell = resistor | randles | pd_surface | ion_pump
//   resistor.ohm
//   randles.rs_ohm, randles.rct_ohm, randles.cdl_F
//   pd.capacitance_F, pd.peak.<n> = <center_V> <height_A> <width_V> anodic|cathodic
//   ionpump.rs_ohm, ionpump.rct_ohm, ionpump.cdl_F, ionpump.c_target,
//   ionpump.c_reservoir, ionpump.volume_m3, ionpump.transfer_eff,
//   ionpump.leak_rate, ionpump.c_half, ionpump.electrode_scale (list),
//   ionpump.electrodes, ionpump.skip (list)
//
// Lists are comma separated.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mpstat/cell_models.hpp"
#include "mpstat/device.hpp"

namespace mpstat {

class KeyValueConfig {
 public:
  /// Throws ConfigError naming the offending line, including unknown keys.
  static KeyValueConfig parse(std::string_view text, const std::string& source = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::vector<double> get_list(const std::string& key) const;
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;
  const std::string& source() const { return source_; }

 private:
  std::map<std::string, std::string> values_;
  std::string source_;
};

DeviceConfig device_config_from(const KeyValueConfig& cfg, DeviceConfig defaults = {});

/// Builds the configured cell. For ion pumps `electrode` picks the entry of
/// ionpump.electrode_scale, which divides both interface resistances.
CellModel cell_from(const KeyValueConfig& cfg, int electrode = 0);

}  // namespace mpstat
