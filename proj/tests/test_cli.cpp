#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "softpos/cli/commands.hpp"
#include "softpos/io/config.hpp"
#include "softpos/io/csv.hpp"
#include "softpos/io/model_json.hpp"

namespace softpos::cli {
namespace {

// Small but complete experiment so the end-to-end tests stay fast.
constexpr const char* kSmallConfig = R"({
  "seed": 5,
  "simulate": { "horizon": 60, "excitation": { "length": 3000 }, "snr_db": 30 },
  "identification": { "orders": [2, 4] },
  "closedloop": { "horizon": 120, "steady_window": 40 }
})";

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("softpos_cli_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << text;
}

/// Runs all five stages into `dir`.
void run_chain(const io::ExperimentConfig& cfg, const fs::path& dir) {
  cmd_simulate(cfg, dir);
  cmd_fuse(dir / kSensorsFile, cfg, dir);
  cmd_identify(dir / kIdDataFile, cfg, dir);
  cmd_design(dir / kModelFile, cfg, dir);
  cmd_closedloop(dir / kModelFile, dir / kDesignFile, cfg, dir);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + SOFTPOS_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config_error_path(const std::string& text) {
  try {
    io::parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<accepted>";
}

TEST(Csv, RoundTripIsByteIdentical) {
  io::TimeSeries ts;
  ts.t = {0.0, 1.0 / 15.0, 2.0 / 15.0};
  ts.add_column("a", {0.1, -2.5e-300, 1e17});
  ts.add_column("b", {std::nextafter(1.0, 2.0), 3.0, -0.0});
  const std::string text = io::to_csv(ts);
  const auto back = io::parse_csv(text);
  EXPECT_EQ(back.names, ts.names);
  EXPECT_EQ(back.t, ts.t);
  EXPECT_EQ(back.columns, ts.columns);
  EXPECT_EQ(io::to_csv(back), text);
}

TEST(Csv, HeaderAndTrailingNewlineRules) {
  EXPECT_EQ(io::parse_csv("t,x\n0,1\n1,2\n").rows(), 2u);
  EXPECT_EQ(io::parse_csv("t,x\r\n0,1\r\n").rows(), 1u);
  EXPECT_EQ(io::parse_csv("t,x\n0,1").rows(), 1u);
}

TEST(Csv, ErrorsCarryLineNumbers) {
  const auto line_of = [](const std::string& text) -> std::size_t {
    try {
      io::parse_csv(text);
    } catch (const io::CsvParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("x,t\n0,1\n"), 1u);
  EXPECT_EQ(line_of("t,x\n0,1\n1,abc\n"), 3u);
  EXPECT_EQ(line_of("t,x\n0,1\n1\n"), 3u);
  EXPECT_EQ(line_of("t,x\n0,1\n0,2\n"), 3u);
  EXPECT_EQ(line_of("t,x\n0,\n"), 2u);
  EXPECT_EQ(line_of("t,x\n0,1\n\n1,2\n"), 3u);
  EXPECT_EQ(line_of("t,x\n0,nan\n"), 2u);
  EXPECT_EQ(line_of(""), 1u);
  try {
    io::parse_csv("t,x\n0,1\n1,abc\n");
  } catch (const io::CsvParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Config, EmptyDocumentGivesDefaults) {
  const auto c = io::parse_config_text("{}");
  const io::ExperimentConfig d;
  EXPECT_EQ(c.seed, d.seed);
  EXPECT_EQ(c.orders, d.orders);
  EXPECT_EQ(c.sigma_a, d.sigma_a);
  EXPECT_EQ(c.horizon, d.horizon);
}

TEST(Config, ParsesNestedValues) {
  const auto c = io::parse_config_text(
      R"({"seed": 9, "sensors": {"v2": {"noise_variance": 4.5}}, "design": {"Q": [[2, 0], [0, 3]], "R": 0.5},
          "closedloop": {"reference": {"kind": "step", "level": 0, "amplitude": 20, "start": 5}}})");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.v2.spec.noise_variance, 4.5);
  EXPECT_EQ(c.Q.resolve(2, "$")(1, 1), 3.0);
  EXPECT_EQ(c.R.resolve(1, "$")(0, 0), 0.5);
  EXPECT_EQ(c.reference.kind, sensors::TrajectoryKind::kStep);
  EXPECT_THROW(c.Q.resolve(3, "$.design.Q"), ConfigError);
}

TEST(Config, ErrorsNameTheOffendingKey) {
  EXPECT_EQ(config_error_path(R"({"bogus": 1})"), "$.bogus");
  EXPECT_EQ(config_error_path(R"({"sensors": {"xbox": {"noise_variance": -1}}})"), "$.sensors.xbox.noise_variance");
  EXPECT_EQ(config_error_path(R"({"sensors": {"xbox": {"nosie_variance": 1}}})"), "$.sensors.xbox.nosie_variance");
  EXPECT_EQ(config_error_path(R"({"identification": {"orders": [2, 0]}})"), "$.identification.orders[1]");
  EXPECT_EQ(config_error_path(R"({"seed": -3})"), "$.seed");
  EXPECT_EQ(config_error_path(R"({"seed": "x"})"), "$.seed");
  EXPECT_EQ(config_error_path(R"({"design": {"R": 0}})"), "$.design.R");
  EXPECT_EQ(config_error_path(R"({"design": {"Q": [[1, 2], [0, 1]]}})"), "$.design.Q");
  EXPECT_EQ(config_error_path(R"({"design": {"Q": [[1, 0], [0]]}})"), "$.design.Q[1]");
  EXPECT_EQ(config_error_path(R"({"closedloop": {"reference": {"kind": "zigzag"}}})"), "$.closedloop.reference.kind");
  EXPECT_EQ(config_error_path(R"({"identification": {"split": 1.5}})"), "$.identification.split");
  EXPECT_EQ(config_error_path("{not json"), "$");
  EXPECT_EQ(config_error_path("[]"), "$");
}

TEST(Config, ShippedConfigsLoad) {
  for (const auto& entry : fs::directory_iterator(SOFTPOS_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_NO_THROW(io::load_config(entry.path().string())) << entry.path();
  }
  EXPECT_THROW(io::load_config("/nonexistent/config.json"), ConfigError);
}

TEST(ModelJson, ModelAndDesignRoundTrip) {
  const auto plant = rig_plant();
  const auto m = io::model_from_json(io::Json::parse(io::model_to_json(plant).dump()));
  EXPECT_EQ(m.A, plant.A);
  EXPECT_EQ(m.B, plant.B);
  EXPECT_EQ(m.K, plant.K);
  EXPECT_EQ(m.Ts, plant.Ts);

  lqg::LqWeights w{lqg::rig_state_weight(), lqg::rig_input_weight(), {}};
  const auto d = lqg::design_lqg(plant, w, lqg::rig_observer_process_cov(), lqg::rig_observer_measurement_cov());
  auto back = io::design_from_json(io::Json::parse(io::design_to_json(d, w).dump()));
  EXPECT_EQ(back.Kopt, d.Kopt);
  EXPECT_EQ(back.Kobs, d.Kobs);
  EXPECT_EQ(back.Nr, d.Nr);
  EXPECT_EQ(back.P, d.P);
  io::check_design(plant, back);
  EXPECT_DOUBLE_EQ(back.regulator_spectral_radius, d.regulator_spectral_radius);
}

TEST(ModelJson, RejectsForeignDocuments) {
  EXPECT_THROW(io::model_from_json(io::Json::parse(R"({"format": "other"})")), InvalidInput);
  auto j = io::model_to_json(rig_plant());
  j.erase("K");
  EXPECT_THROW(io::model_from_json(j), InvalidInput);
  j = io::model_to_json(rig_plant());
  j["A"] = io::Json::array({io::Json::array({1.0})});
  EXPECT_THROW(io::model_from_json(j), InvalidInput);
}

TEST(Commands, EndToEndChain) {
  const auto cfg = io::parse_config_text(kSmallConfig);
  const fs::path dir = scratch_dir("chain");
  const auto sim = cmd_simulate(cfg, dir);
  ASSERT_EQ(sim.files.size(), 2u);
  const auto sensors_csv = io::read_csv((dir / kSensorsFile).string());
  EXPECT_EQ(sensors_csv.rows(), 900u);
  EXPECT_EQ(sensors_csv.names, (std::vector<std::string>{"truth", "z_xbox", "z_v2"}));
  const auto id_csv = io::read_csv((dir / kIdDataFile).string());
  EXPECT_EQ(id_csv.rows(), 3000u);
  EXPECT_TRUE(id_csv.has("u") && id_csv.has("y"));

  cmd_fuse(dir / kSensorsFile, cfg, dir);
  const auto fs_json = io::read_json_file((dir / kFuseSummaryFile).string());
  EXPECT_TRUE(fs_json["dominance_ok"].get<bool>());
  EXPECT_EQ(fs_json["decode_errors"].get<int>(), 0);
  EXPECT_LT(fs_json["fused"]["std"].get<double>(), 1.5);
  const auto fused = io::read_csv((dir / kFusedFile).string());
  EXPECT_TRUE(fused.has("d_fused") && fused.has("d_xbox") && fused.has("d_v2"));

  cmd_identify(dir / kIdDataFile, cfg, dir);
  const auto model_json = io::read_json_file((dir / kModelFile).string());
  EXPECT_EQ(model_json["selected_order"].get<int>(), 2);
  EXPECT_GE(model_json["test"]["fit_pct"].get<double>(), 95.0);
  EXPECT_NE(slurp(dir / kReportFile).find("Selected order: 2"), std::string::npos);

  cmd_design(dir / kModelFile, cfg, dir);
  const auto design_json = io::read_json_file((dir / kDesignFile).string());
  EXPECT_TRUE(design_json["stable"].get<bool>());

  cmd_closedloop(dir / kModelFile, dir / kDesignFile, cfg, dir);
  const auto metrics = io::read_json_file((dir / kMetricsFile).string());
  EXPECT_TRUE(metrics["within_band"].get<bool>());
  EXPECT_FALSE(metrics["settling_time"].is_null());
  const auto trace = io::read_csv((dir / kTraceFile).string());
  EXPECT_EQ(trace.names, (std::vector<std::string>{"r", "y_true", "y_meas", "xhat1", "xhat2", "u"}));
  fs::remove_all(dir);
}

TEST(Commands, RepeatedRunsAreByteIdentical) {
  const auto cfg = io::parse_config_text(kSmallConfig);
  const fs::path a = scratch_dir("det_a"), b = scratch_dir("det_b");
  run_chain(cfg, a);
  run_chain(cfg, b);
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    ASSERT_TRUE(fs::exists(b / name)) << name;
    EXPECT_EQ(slurp(entry.path()), slurp(b / name)) << name;
    ++compared;
  }
  EXPECT_EQ(compared, 11u);
  auto other = cfg;
  other.seed = 6;
  const fs::path c = scratch_dir("det_c");
  cmd_simulate(other, c);
  EXPECT_NE(slurp(a / kSensorsFile), slurp(c / kSensorsFile));
  for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST(Commands, ZeroNoiseEquilibriumStaysAtZero) {
  const auto cfg = io::load_config((fs::path(SOFTPOS_CONFIG_DIR) / "zero_noise_equilibrium.json").string());
  const fs::path dir = scratch_dir("equilibrium");
  cmd_simulate(cfg, dir);
  cmd_identify(dir / kIdDataFile, cfg, dir);
  cmd_design(dir / kModelFile, cfg, dir);
  cmd_closedloop(dir / kModelFile, dir / kDesignFile, cfg, dir);
  const auto metrics = io::read_json_file((dir / kMetricsFile).string());
  EXPECT_EQ(metrics["overshoot"].get<double>(), 0.0);
  EXPECT_EQ(metrics["steady_error_mean"].get<double>(), 0.0);
  EXPECT_EQ(metrics["steady_max_abs_error"].get<double>(), 0.0);
  const auto trace = io::read_csv((dir / kTraceFile).string());
  for (const auto& col : trace.columns) {
    for (const double v : col) ASSERT_EQ(v, 0.0);
  }
  fs::remove_all(dir);
}

TEST(Commands, FuseSingleSensorColumn) {
  const auto cfg = io::parse_config_text(kSmallConfig);
  const fs::path dir = scratch_dir("single");
  cmd_simulate(cfg, dir);
  auto s = io::read_csv((dir / kSensorsFile).string());
  io::TimeSeries only;
  only.t = s.t;
  only.add_column("truth", s.column("truth"));
  only.add_column("z_v2", s.column("z_v2"));
  io::write_csv_file((dir / "v2_only.csv").string(), only);
  cmd_fuse(dir / "v2_only.csv", cfg, dir);
  const auto fused = io::read_csv((dir / kFusedFile).string());
  ASSERT_GT(fused.rows(), 0u);
  // With one track the fusion site returns the aligned local track unchanged.
  for (std::size_t i = 0; i < fused.rows(); ++i) ASSERT_EQ(fused.column("d_fused")[i], fused.column("d_v2")[i]);
  fs::remove_all(dir);
}

TEST(Commands, InputErrors) {
  const auto cfg = io::parse_config_text(kSmallConfig);
  const fs::path dir = scratch_dir("errors");
  write_text(dir / "bad.csv", "t,u,y\n0,1,2\n1,oops,3\n");
  try {
    cmd_identify(dir / "bad.csv", cfg, dir);
    ADD_FAILURE() << "malformed CSV accepted";
  } catch (const io::CsvParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  write_text(dir / "nosensor.csv", "t,truth\n0,1\n1,1\n");
  EXPECT_THROW(cmd_fuse(dir / "nosensor.csv", cfg, dir), InvalidInput);
  EXPECT_THROW(cmd_design(dir / "missing.json", cfg, dir), InvalidInput);
  fs::remove_all(dir);
}

TEST(Commands, UnstabilizableModelIsNumericalFailure) {
  const auto cfg = io::parse_config_text(kSmallConfig);
  const fs::path dir = scratch_dir("unstab");
  StateSpaceModel m = rig_plant();
  m.A = (Matrix(2, 2) << 1.2, 0.0, 0.0, 0.5).finished();
  m.B = (Matrix(2, 1) << 0.0, 1.0).finished();
  io::write_json_file((dir / kModelFile).string(), io::model_to_json(m));
  EXPECT_THROW(cmd_design(dir / kModelFile, cfg, dir), NumericalError);
  fs::remove_all(dir);
}

TEST(CliExitCodes, MapErrorClasses) {
  const fs::path dir = scratch_dir("exit");
  write_text(dir / "small.json", kSmallConfig);
  write_text(dir / "unknown_key.json", R"({"sensors": {"kinect": {}}})");
  const std::string out = " --out \"" + dir.string() + "\"";
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("teleport"), 2);
  EXPECT_EQ(run_cli("simulate --seed banana" + out), 2);
  EXPECT_EQ(run_cli("simulate --config \"" + (dir / "unknown_key.json").string() + "\"" + out), 2);
  EXPECT_EQ(run_cli("simulate --config \"" + (dir / "absent.json").string() + "\"" + out), 2);
  EXPECT_EQ(run_cli("design" + out), 2);  // no model.json yet

  StateSpaceModel m = rig_plant();
  m.A = (Matrix(2, 2) << 1.2, 0.0, 0.0, 0.5).finished();
  m.B = (Matrix(2, 1) << 0.0, 1.0).finished();
  io::write_json_file((dir / "unstab.json").string(), io::model_to_json(m));
  EXPECT_EQ(run_cli("design --model \"" + (dir / "unstab.json").string() + "\"" + out), 3);

  const std::string cfg = " --config \"" + (dir / "small.json").string() + "\"";
  EXPECT_EQ(run_cli("simulate" + cfg + out), 0);
  EXPECT_EQ(run_cli("fuse" + cfg + out), 0);
  EXPECT_EQ(run_cli("identify" + cfg + out), 0);
  EXPECT_EQ(run_cli("design" + cfg + out), 0);
  EXPECT_EQ(run_cli("closedloop" + cfg + out), 0);
  EXPECT_TRUE(fs::exists(dir / kMetricsFile));
  fs::remove_all(dir);
}

}  // namespace
}  // namespace softpos::cli
