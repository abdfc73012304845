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


#include "mpstat/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mpstat/errors.hpp"

namespace mpstat {
namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "boards",          "sample_rate_Hz",     "mode",
      "seed",            "noise_sigma_nA",     "stage_offset_mV",
      "time_factor",     "cell",               "resistor.ohm",
      "randles.rs_ohm",  "randles.rct_ohm",    "randles.cdl_F",
      "pd.capacitance_F", "ionpump.rs_ohm",    "ionpump.rct_ohm",
      "ionpump.cdl_F",   "ionpump.c_target",   "ionpump.c_reservoir",
      "ionpump.volume_m3", "ionpump.transfer_eff", "ionpump.leak_rate",
      "ionpump.c_half",  "ionpump.electrode_scale", "ionpump.electrodes",
      "ionpump.skip",
  };
  return keys;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double number(const std::string& key, const std::string& text) {
  double v = 0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size() || !std::isfinite(v))
    throw ConfigError(key + ": '" + text + "' is not a number");
  return v;
}

PeakSpec parse_peak(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  std::string c, h, w, dir;
  if (!(in >> c >> h >> w >> dir)) throw ConfigError(key + ": expected '<center_V> <height_A> <width_V> <dir>'");
  PeakSpec pk{number(key, c), number(key, h), number(key, w), ScanDirection::Anodic};
  if (dir == "cathodic") {
    pk.direction = ScanDirection::Cathodic;
  } else if (dir != "anodic") {
    throw ConfigError(key + ": direction must be anodic or cathodic");
  }
  return pk;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& source) {
  KeyValueConfig cfg;
  cfg.source_ = source;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const auto line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(std::string_view(line).substr(0, eq));
    const auto value = trim(std::string_view(line).substr(eq + 1));
    if (!known_keys().count(key) && !key.starts_with("pd.peak."))
      throw ConfigError(source + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : number(key, it->second);
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  long long v = 0;
  const auto& s = it->second;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ConfigError(key + ": '" + s + "' is not an integer");
  return v;
}

std::vector<double> KeyValueConfig::get_list(const std::string& key) const {
  std::vector<double> out;
  const auto it = values_.find(key);
  if (it == values_.end()) return out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(number(key, trim(item)));
  return out;
}

std::vector<std::string> KeyValueConfig::keys_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (k.starts_with(prefix)) out.push_back(k);
  return out;
}

DeviceConfig device_config_from(const KeyValueConfig& cfg, DeviceConfig d) {
  d.n_boards = static_cast<int>(cfg.get_int("boards", d.n_boards));
  d.sample_rate_Hz = cfg.get_double("sample_rate_Hz", d.sample_rate_Hz);
  if (cfg.has("mode")) d.mode = parse_mode(cfg.get("mode", ""));
  d.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(d.seed)));
  d.chain.noise_sigma_A = cfg.get_double("noise_sigma_nA", d.chain.noise_sigma_A * 1e9) * 1e-9;
  d.chain.stage_offset_V = cfg.get_double("stage_offset_mV", d.chain.stage_offset_V * 1e3) * 1e-3;
  d.time_mode.factor = cfg.get_double("time_factor", d.time_mode.factor);
  d.validate();
  return d;
}

CellModel cell_from(const KeyValueConfig& cfg, int electrode) {
  const auto kind = cfg.get("cell", "resistor");
  if (kind == "resistor") {
    return Resistor{cfg.get_double("resistor.ohm", 1e6)};
  }
  if (kind == "randles") {
    Randles r;
    r.rs_ohm = cfg.get_double("randles.rs_ohm", r.rs_ohm);
    r.rct_ohm = cfg.get_double("randles.rct_ohm", r.rct_ohm);
    r.cdl_F = cfg.get_double("randles.cdl_F", r.cdl_F);
    return r;
  }
  if (kind == "pd_surface") {
    auto pd = PdSurface::palladium_defaults();
    pd.capacitance_F = cfg.get_double("pd.capacitance_F", pd.capacitance_F);
    const auto peak_keys = cfg.keys_with_prefix("pd.peak.");
    if (!peak_keys.empty()) {
      pd.peaks.clear();
      for (const auto& k : peak_keys) pd.peaks.push_back(parse_peak(k, cfg.get(k, "")));
    }
    return pd;
  }
  if (kind == "ion_pump") {
    IonPump p;
    const auto scales = cfg.get_list("ionpump.electrode_scale");
    double scale = 1.0;
    if (!scales.empty()) scale = scales[static_cast<std::size_t>(electrode) % scales.size()];
    if (!(scale > 0)) throw ConfigError("ionpump.electrode_scale entries must be > 0");
    p.interface.rs_ohm = cfg.get_double("ionpump.rs_ohm", p.interface.rs_ohm) / scale;
    p.interface.rct_ohm = cfg.get_double("ionpump.rct_ohm", p.interface.rct_ohm) / scale;
    p.interface.cdl_F = cfg.get_double("ionpump.cdl_F", p.interface.cdl_F);
    auto& c = p.chem;
    c.c_target = cfg.get_double("ionpump.c_target", c.c_target);
    c.c_reservoir = cfg.get_double("ionpump.c_reservoir", c.c_reservoir);
    c.volume_target = cfg.get_double("ionpump.volume_m3", c.volume_target);
    c.transfer_eff = cfg.get_double("ionpump.transfer_eff", c.transfer_eff);
    c.leak_rate = cfg.get_double("ionpump.leak_rate", c.leak_rate);
    c.c_half = cfg.get_double("ionpump.c_half", c.c_half);
    return p;
  }
  throw ConfigError("unknown cell type '" + kind + "'");
}

}  // namespace mpstat
