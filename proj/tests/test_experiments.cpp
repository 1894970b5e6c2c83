#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rydberg/experiments.hpp"

using namespace rydberg;

namespace {

std::string message_of(const Json& j) {
  try {
    config_from_json(j);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

std::string csv_of(const ExperimentConfig& c, const EnsembleResult& r) {
  std::ostringstream os;
  write_csv(os, c, r);
  return os.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rydberg_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

/// Noise-free, lossless single atom with perfect detection.
Json ideal_rabi() {
  return Json{{"preset", "rabi"},
              {"scan", {{"start", 0.1}, {"stop", 2.0}, {"points", 20}}},
              {"n_shots", 1},
              {"noise",
               {{"sigma_doppler_khz", 0.0},
                {"sigma_position_um", 0.0},
                {"channels",
                 {{"blue_scatter", false}, {"red_scatter", false}, {"blackbody", false}, {"radiative", false}}}}},
              {"detection", {{"f_r", 1.0}, {"f_g_table", Json::array({Json::array({0.0, 1.0})})}}}};
}

}  // namespace

TEST(Defaults, EveryPresetValidates) {
  for (const auto& p : preset_catalog()) {
    const ExperimentConfig c = default_config(p.name);
    EXPECT_NO_THROW(c.validate()) << p.name;
    EXPECT_NEAR(c.sequence.rabi_mhz, 2.0, 1e-12);
    EXPECT_NEAR(c.sigma_doppler_khz, 43.1, 0.05);
  }
}

TEST(Catalog, ListsAllPresetsWithFigures) {
  const Json l = list_presets();
  ASSERT_EQ(l.size(), 9u);
  for (const auto& p : l) {
    EXPECT_FALSE(p["figure"].get<std::string>().empty());
    EXPECT_GE(p["default_scan"]["points"].get<int>(), 2);
  }
  EXPECT_EQ(l[0]["name"], "rabi");
}

TEST(ConfigJson, RoundTrip) {
  for (const auto& p : preset_catalog()) {
    ExperimentConfig c = default_config(p.name);
    c.master_seed = 12345678901234ULL;
    c.gamma_laser_per_us = 0.01;
    c.channels.blackbody = false;
    c.detection.f_g_table = {{0.0, 0.99}, {8.0, 0.9}};
    const Json j = to_json(c);
    const ExperimentConfig back = config_from_json(j);
    EXPECT_EQ(to_json(back), j) << p.name;
  }
}

TEST(ConfigJson, MinimalConfigTakesPresetDefaults) {
  const ExperimentConfig c = config_from_json(Json{{"preset", "ramsey"}});
  EXPECT_EQ(to_json(c), to_json(default_config("ramsey")));
}

TEST(ConfigJson, AtomOverridesRederiveDrive) {
  const ExperimentConfig c =
      config_from_json(Json{{"preset", "t1"}, {"atom", {{"omega_blue_mhz", 30.0}, {"temperature_uk", 40.0}}}});
  EXPECT_NEAR(c.sequence.rabi_mhz, 1.0, 1e-12);
  EXPECT_NEAR(c.sigma_doppler_khz, 43.1 * std::sqrt(4.0), 0.1);
  const ExperimentConfig d =
      config_from_json(Json{{"preset", "t1"}, {"noise", {{"sigma_doppler_khz", 10.0}}}, {"sequence", {{"rabi_mhz", 1.5}}}});
  EXPECT_EQ(d.sigma_doppler_khz, 10.0);
  EXPECT_EQ(d.sequence.rabi_mhz, 1.5);
}

TEST(ConfigJson, UnknownKeysSuggestNearest) {
  const std::string m = message_of(Json{{"preset", "rabi"}, {"scan", {{"strat", 0.1}}}});
  EXPECT_NE(m.find("config.scan.strat"), std::string::npos) << m;
  EXPECT_NE(m.find("did you mean 'start'"), std::string::npos) << m;
  const std::string top = message_of(Json{{"preset", "rabi"}, {"n_shot", 3}});
  EXPECT_NE(top.find("did you mean 'n_shots'"), std::string::npos) << top;
}

TEST(ConfigJson, UnknownPresetSuggestsNearest) {
  const std::string m = message_of(Json{{"preset", "spin-echo"}});
  EXPECT_NE(m.find("did you mean 'spin_echo'"), std::string::npos) << m;
  EXPECT_NE(message_of(Json::object()).find("preset"), std::string::npos);
}

TEST(ConfigJson, RejectsBadValues) {
  EXPECT_FALSE(message_of(Json{{"preset", "rabi"}, {"n_shots", "many"}}).empty());
  EXPECT_FALSE(message_of(Json{{"preset", "rabi"}, {"n_shots", 0}}).empty());
  EXPECT_FALSE(message_of(Json{{"preset", "rabi"}, {"mode", "average"}}).empty());
  EXPECT_FALSE(message_of(Json{{"preset", "rabi"}, {"master_seed", -1}}).empty());
  EXPECT_FALSE(message_of(Json{{"preset", "rabi"}, {"scan", {{"start", 0.0}}}}).empty());
  EXPECT_FALSE(message_of(Json{{"preset", "parity_scan"}, {"scan", {{"stop", 0.6}}}}).empty());
  EXPECT_FALSE(message_of(Json{{"preset", "t1"}, {"model", {{"blockade_projected", true}}}}).empty());
  EXPECT_FALSE(message_of(Json{{"preset", "t1"}, {"detection", {{"trap_off_time_us", 20.0}}}}).empty());
  EXPECT_FALSE(message_of(Json{{"preset", "t1"}, {"detection", {{"f_g_table", {1, 2}}}}}).empty());
  EXPECT_FALSE(message_of(Json{{"preset", "t1"}, {"atom", {{"delta_intermediate_mhz", 0.0}}}}).empty());
  EXPECT_FALSE(message_of(Json{{"preset", "t1"}, {"scan", 3}}).empty());
}

TEST(LoadConfig, FileErrors) {
  const auto dir = scratch_dir("load");
  std::filesystem::create_directories(dir);
  EXPECT_THROW(load_config(dir / "missing.json"), ValidationError);
  std::ofstream(dir / "broken.json") << "{\"preset\": ";
  EXPECT_THROW(load_config(dir / "broken.json"), ValidationError);
  std::ofstream(dir / "ok.json") << "{\"preset\": \"t1\", \"n_shots\": 3}";
  EXPECT_EQ(load_config(dir / "ok.json").n_shots, 3);
  std::filesystem::remove_all(dir);
}

TEST(Run, NoDecayIsFlagged) {
  const ExperimentConfig c = config_from_json(ideal_rabi());
  const RunOutput out = run(c, false, 1);
  const DerivedScalar& tau = out.manifest.scalar("rabi_tau_us");
  EXPECT_FALSE(tau.value.has_value());
  EXPECT_EQ(tau.note, "no decay detected");
  EXPECT_EQ(tau.pass, std::optional<bool>(false));
  const DerivedScalar& f = out.manifest.scalar("rabi_frequency_mhz");
  EXPECT_NEAR(*f.value, 2.0, 1e-6);
  EXPECT_EQ(f.pass, std::optional<bool>(true));
  for (std::size_t i = 0; i < out.ensemble.points.size(); ++i) {
    const double s = std::sin(std::numbers::pi * 2.0 * out.ensemble.points[i].x);
    EXPECT_NEAR(out.ensemble.points[i].outcome_prob[1], s * s, 1e-8);
  }
}

TEST(Run, CsvIsIndependentOfWorkerCount) {
  ExperimentConfig c = default_config("w_lifetime");
  c.scan = {0.0, 4.0, 5};
  c.n_shots = 4;
  c.mode = EnsembleMode::sampled;
  const RunOutput a = run(c, false, 1);
  const RunOutput b = run(c, false, 4);
  EXPECT_EQ(csv_of(c, a.ensemble), csv_of(c, b.ensemble));
}

TEST(Run, CsvColumns) {
  ExperimentConfig c = default_config("blockade_rabi");
  c.scan = {0.05, 0.5, 4};
  c.n_shots = 1;
  const std::string csv = csv_of(c, run(c, false, 1).ensemble);
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line) && line.starts_with("#")) {
  }
  EXPECT_TRUE(line.starts_with("t_us,P_gg,P_gr,P_rg,P_rr,P_gg_lo,P_gg_hi,")) << line;
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 4);
}

TEST(Run, WritesFilesAndEchoesConfig) {
  const auto dir = scratch_dir("run");
  Json j = ideal_rabi();
  j["output_dir"] = dir.string();
  const ExperimentConfig c = config_from_json(j);
  const RunOutput out = run(c, true, 1);
  ASSERT_TRUE(std::filesystem::exists(dir / "rabi.csv"));
  ASSERT_TRUE(std::filesystem::exists(dir / "rabi.manifest.json"));
  std::ifstream man(dir / "rabi.manifest.json");
  const Json m = Json::parse(man);
  EXPECT_EQ(m["artifact"], kArtifactName);
  EXPECT_EQ(m["data_file"], "rabi.csv");
  EXPECT_EQ(to_json(config_from_json(m["config"])), m["config"]);
  EXPECT_TRUE(m["derived"][0]["value"].is_null());
  std::filesystem::remove_all(dir);
}

TEST(Run, FitFailureBecomesFailedScalar) {
  ExperimentConfig c = default_config("t1");
  c.scan = {0.0, 10.0, 3};
  c.n_shots = 1;
  const RunOutput out = run(c, false, 1);
  const DerivedScalar& s = out.manifest.scalar("t1_us");
  EXPECT_FALSE(s.value.has_value());
  EXPECT_EQ(s.pass, std::optional<bool>(false));
  EXPECT_FALSE(s.note.empty());
}

TEST(Run, NumericalFailurePropagates) {
  Json j = ideal_rabi();
  j["sequence"] = {{"rabi_mhz", 1e6}};
  EXPECT_THROW(run(config_from_json(j), false, 1), NumericalError);
}
