// twoscale command-line front end: run one experiment, sweep delta values,
// or validate a configuration without running it.
//
// Exit codes: 0 success/convergence, 1 configuration error, 2 divergence or
// failure to converge.
#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "twoscale/twoscale.hpp"

namespace {

twoscale::ExperimentConfig load_config(const std::string& path, const std::string& seed_override) {
  twoscale::ExperimentConfig cfg = twoscale::parse_config_file(path);
  if (!seed_override.empty()) {
    const auto seed = static_cast<std::uint64_t>(std::stoull(seed_override));
    cfg.seed = seed;
    cfg.graph_seed = seed;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed algorithm synthesis from centralized blocks and consensus trackers"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string seed_override;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("config", config_path, "experiment configuration file")->required();
    cmd->add_option("--out", out_dir, "output directory (overrides the configured one)");
    cmd->add_option("--seed", seed_override, "override the instance and graph seeds");
  };

  CLI::App* cmd_run = app.add_subcommand("run", "run one experiment and write its trace");
  add_common(cmd_run);
  CLI::App* cmd_sweep =
      app.add_subcommand("sweep", "run the configured delta sweep plus the centralized reference");
  add_common(cmd_sweep);
  CLI::App* cmd_validate =
      app.add_subcommand("validate", "dry-run checks of a configuration, without running");
  add_common(cmd_validate);

  CLI11_PARSE(app, argc, argv);

  try {
    const twoscale::ExperimentConfig cfg = load_config(config_path, seed_override);
    if (app.got_subcommand(cmd_run)) return twoscale::run_experiment(cfg, out_dir, &std::cout);
    if (app.got_subcommand(cmd_sweep)) return twoscale::sweep_experiment(cfg, out_dir, &std::cout);
    // validate
    const auto checks = twoscale::validate_experiment(cfg);
    bool all_ok = true;
    for (const auto& c : checks) {
      std::cout << (c.ok ? "[ok]   " : "[FAIL] ") << c.name << " — " << c.detail << "\n";
      all_ok = all_ok && c.ok;
    }
    return all_ok ? 0 : 1;
  } catch (const twoscale::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
