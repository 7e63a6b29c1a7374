// softpos — experiment runner for the patient-positioning control chain.
//
//   softpos simulate   [--config PATH] [--seed U64] [--out DIR]
//   softpos fuse       [--input sensors.csv]
//   softpos identify   [--input id_data.csv]
//   softpos design     [--model model.json]
//   softpos closedloop [--model model.json] [--design design.json]
//
// Inputs default to the files a previous stage wrote into --out, so the five
// stages chain without extra flags. Exit codes: 0 success, 2 configuration or
// input error, 3 numerical failure, 1 anything else.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "softpos/cli/commands.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitOther = 1;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "Experiment configuration (JSON)");
  sub->add_option("--seed", f.seed, "Root seed; overrides the config value");
  sub->add_option("--out", f.out, "Output directory")->capture_default_str();
}

softpos::io::ExperimentConfig load(const CommonFlags& f) {
  softpos::io::ExperimentConfig cfg = f.config.empty() ? softpos::io::ExperimentConfig{} : softpos::io::load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  return cfg;
}

std::string or_default(const std::string& given, const std::string& out, const char* file) {
  return given.empty() ? (std::filesystem::path(out) / file).string() : given;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace softpos;
  CLI::App app{"Patient-positioning experiments: sensor simulation, track fusion, system identification, LQG design "
               "and closed-loop simulation"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string input, model, design;

  auto* sim = app.add_subcommand("simulate", "Simulate truth, depth sensors and an identification record");
  add_common(sim, flags);

  auto* fuse = app.add_subcommand("fuse", "Local Kalman filters and track-to-track fusion of sensor streams");
  add_common(fuse, flags);
  fuse->add_option("--input", input, "Sensor CSV (default: OUT/sensors.csv)");

  auto* ident = app.add_subcommand("identify", "Order sweep and state-space identification from u/y data");
  add_common(ident, flags);
  ident->add_option("--input", input, "Identification CSV (default: OUT/id_data.csv)");

  auto* des = app.add_subcommand("design", "LQG regulator and observer synthesis");
  add_common(des, flags);
  des->add_option("--model", model, "Model JSON (default: OUT/model.json)");

  auto* loop = app.add_subcommand("closedloop", "Closed-loop simulation with fused noisy sensing");
  add_common(loop, flags);
  loop->add_option("--model", model, "Model JSON (default: OUT/model.json)");
  loop->add_option("--design", design, "Design JSON (default: OUT/design.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    const auto cfg = load(flags);
    cli::CommandResult res;
    if (sim->parsed()) {
      res = cli::cmd_simulate(cfg, flags.out);
    } else if (fuse->parsed()) {
      res = cli::cmd_fuse(or_default(input, flags.out, cli::kSensorsFile), cfg, flags.out);
    } else if (ident->parsed()) {
      res = cli::cmd_identify(or_default(input, flags.out, cli::kIdDataFile), cfg, flags.out);
    } else if (des->parsed()) {
      res = cli::cmd_design(or_default(model, flags.out, cli::kModelFile), cfg, flags.out);
    } else if (loop->parsed()) {
      res = cli::cmd_closedloop(or_default(model, flags.out, cli::kModelFile),
                                or_default(design, flags.out, cli::kDesignFile), cfg, flags.out);
    }
    std::cout << res.summary;
    for (const auto& f : res.files) std::cout << "wrote " << f.string() << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidInput& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
}
