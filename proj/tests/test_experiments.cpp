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


#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "mpstat/config.hpp"
#include "mpstat/experiments.hpp"

namespace mpstat {
namespace {

namespace fs = std::filesystem;

const fs::path kSource = MPSTAT_SOURCE_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / "mpstat_experiment_tests" / name;
  fs::remove_all(d);
  return d;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MPSTAT_CLI) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

TEST(CharacterizeTest, IdealRecoversLoadExactly) {
  DeviceConfig c;
  const auto r = characterize(c, {});
  EXPECT_NEAR(r.fitted_load_ohm, 1e6, 1e6 * 5e-4);
}

TEST(CharacterizeTest, NoisyWithinFullScaleBounds) {
  DeviceConfig c;
  c.mode = Mode::Noisy;
  const auto dir = fresh_dir("characterize");
  const auto r = characterize(c, {}, dir);
  EXPECT_LT(r.output_error_fs, 0.005);
  EXPECT_LT(r.input_error_fs, 0.01);
  EXPECT_EQ(r.files.size(), 4u);
  for (const auto& f : r.files) EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(slurp(dir / "load_test.csv").substr(0, 15), "v_V,i_nA,i_fit_");
}

TEST(CvExperimentTest, DurationFollowsRate) {
  DeviceConfig c;
  CvOptions o;
  o.rate_mV_per_s = 10;
  const auto r = run_cv(c, PdSurface::palladium_defaults(), o);
  EXPECT_DOUBLE_EQ(r.duration_s, 280.0);
  EXPECT_EQ(r.v_V.size(), 280u * 15u);
}

TEST(CvExperimentTest, PeaksAtConfiguredCenters) {
  DeviceConfig c;
  c.mode = Mode::Noisy;
  const auto r = run_cv(c, PdSurface::palladium_defaults(), {});
  ASSERT_EQ(r.peaks.size(), 4u);
  for (const auto& spec : PdSurface::palladium_defaults().peaks) {
    bool found = false;
    for (const auto& p : r.peaks)
      found |= p.direction == spec.direction && std::abs(p.v_V - spec.v_center) <= spec.width_V / 4;
    EXPECT_TRUE(found) << spec.v_center;
  }
}

TEST(IonPumpExperimentTest, ScaledElectrodesAnticorrelate) {
  const auto cfg = KeyValueConfig::load(kSource / "configs" / "ionpump.cfg");
  std::vector<CellModel> cells;
  for (int e = 0; e < 9; ++e) cells.push_back(cell_from(cfg, e));
  const auto r = run_ionpump(device_config_from(cfg), cells, {});
  EXPECT_EQ(r.active_electrodes, (std::vector<int>{0, 1, 2, 4, 6, 7, 8}));
  EXPECT_EQ(r.max_closed_per_tick, 1u);
  for (auto n : r.samples_per_phase) EXPECT_EQ(n, 450u);
  for (const auto& h : r.half_phases) {
    EXPECT_EQ(h.ticks, 225u);
    // Opposite signs of mean current and fluorescence change.
    EXPECT_LT(h.mean_current_nA * h.fluorescence_change, 0.0);
  }
  EXPECT_LT(r.spearman_rho, -0.9);
}

TEST(SettlingTimeTest, FindsLastEntryIntoBand) {
  std::vector<TracePoint> t{{0, 1, 0.5, 0}, {1, 1, 0.99, 0}, {2, 1, 0.9, 0}, {3, 1, 0.995, 0}, {4, 1, 1.0, 0}};
  EXPECT_DOUBLE_EQ(settling_time(t, 0.02, 0), 3.0);
  EXPECT_DOUBLE_EQ(settling_time(t, 0.02, 1), 2.0);
  t.push_back({5, 1, 0.5, 0});
  EXPECT_LT(settling_time(t, 0.02, 0), 0);
}

TEST(CliTest, ExitCodes) {
  const auto dir = fresh_dir("cli_codes");
  EXPECT_EQ(run_cli("--out " + dir.string() + " cv --rate 100"), 0);
  EXPECT_EQ(run_cli("--out " + dir.string() + " --config /nonexistent.cfg cv"), 2);
  EXPECT_EQ(run_cli("--out " + dir.string() + " --mode loud cv"), 2);
  EXPECT_EQ(run_cli("--out " + dir.string() + " bogus"), 2);
  EXPECT_EQ(run_cli("--out " + dir.string() + " closedloop --target 5:0.5"), 2);
  EXPECT_EQ(run_cli("--out /proc/forbidden/x cv"), 3);
}

TEST(CliTest, RunWritesLogAndManifest) {
  const auto dir = fresh_dir("cli_run");
  ASSERT_EQ(run_cli("--config " + (kSource / "configs/pd_surface.cfg").string() + " --out " + dir.string() +
                    " run " + (kSource / "protocols/cv_100.csv").string()),
            0);
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["subcommand"], "run");
  EXPECT_EQ(manifest["seed"], 1);
  ASSERT_EQ(manifest["files"].size(), 1u);
  EXPECT_TRUE(fs::exists(dir / manifest["files"][0].get<std::string>()));
}

TEST(CliTest, SeededRunsAreByteIdentical) {
  for (const std::string sub : {"cv", "ionpump", "characterize", "closedloop"}) {
    const auto a = fresh_dir("seed_a_" + sub), b = fresh_dir("seed_b_" + sub);
    ASSERT_EQ(run_cli("--mode noisy --seed 12 --out " + a.string() + " " + sub), 0) << sub;
    ASSERT_EQ(run_cli("--mode noisy --seed 12 --out " + b.string() + " " + sub), 0) << sub;
    const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
    ASSERT_FALSE(manifest["files"].empty());
    for (const auto& f : manifest["files"]) {
      const auto name = f.get<std::string>();
      EXPECT_EQ(slurp(a / name), slurp(b / name)) << sub << "/" << name;
    }
  }
}

}  // namespace
}  // namespace mpstat
