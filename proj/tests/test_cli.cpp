// End-to-end checks of the command-line binary: exit codes, output files,
// and byte-identical replay.
#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "twoscale/experiment.hpp"

namespace fs = std::filesystem;

namespace {

const char* kCli = TWOSCALE_CLI_PATH;
const char* kConfigDir = TWOSCALE_CONFIG_DIR;

int run_cli(const std::string& args) {
  const std::string cmd = std::string(kCli) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("twoscale_cli_" + tag);
  fs::remove_all(dir);
  return dir;
}

// a copy of the bundled default with selected [run] overrides
fs::path config_with_run_overrides(const std::string& tag, const std::string& run_lines) {
  std::ifstream in(fs::path(kConfigDir) / "constraint_coupled.cfg");
  std::stringstream body;
  std::string line;
  bool in_run = false;
  while (std::getline(in, line)) {
    if (line == "[run]") in_run = true;
    if (!in_run) body << line << "\n";
  }
  body << "[run]\n" << run_lines;
  const fs::path path = fs::temp_directory_path() / ("twoscale_cfg_" + tag + ".cfg");
  std::ofstream out(path);
  out << body.str();
  return path;
}

}  // namespace

TEST(Cli, RunDefaultConfigConvergesWithExitZero) {
  const fs::path out = fresh_dir("run_ok");
  const fs::path cfg = config_with_run_overrides(
      "run_ok", "delta = 0.1\nhorizon = 20000\nrecord_every = 20\n");
  ASSERT_EQ(run_cli("run " + cfg.string() + " --out " + out.string()), 0);
  for (const char* name : {"trace.csv", "instance.txt", "solution.txt", "summary.txt"})
    EXPECT_TRUE(fs::exists(out / name)) << name;
  const std::string summary = slurp(out / "summary.txt");
  EXPECT_NE(summary.find("converged 1"), std::string::npos);
  // both error columns decay from the first to the last recorded row
  std::ifstream trace(out / "trace.csv");
  std::string line, first, last;
  std::getline(trace, line);  // header
  while (std::getline(trace, line)) {
    if (first.empty()) first = line;
    if (!line.empty()) last = line;
  }
  const auto opt_and_track = [](const std::string& row) {
    std::stringstream ss(row);
    std::string cell;
    std::getline(ss, cell, ',');  // t
    std::getline(ss, cell, ',');
    const double opt = std::stod(cell);
    std::getline(ss, cell, ',');
    return std::make_pair(opt, std::stod(cell));
  };
  const auto [opt0, trk0] = opt_and_track(first);
  const auto [opt1, trk1] = opt_and_track(last);
  EXPECT_LT(opt1, 1e-3 * opt0);
  EXPECT_LT(trk1, 1e-3 * trk0);
}

TEST(Cli, UnitDeltaDiverges) {
  const fs::path out = fresh_dir("run_div");
  const fs::path cfg = config_with_run_overrides(
      "run_div", "delta = 1.0\nhorizon = 60000\nrecord_every = 100\n");
  EXPECT_EQ(run_cli("run " + cfg.string() + " --out " + out.string()), 2);
  const std::string summary = slurp(out / "summary.txt");
  EXPECT_NE(summary.find("diverged 1"), std::string::npos);
}

TEST(Cli, ZeroHorizonIsSingleRowExitZero) {
  const fs::path out = fresh_dir("run_zero");
  const fs::path cfg =
      config_with_run_overrides("run_zero", "delta = 0.1\nhorizon = 0\nrecord_every = 1\n");
  ASSERT_EQ(run_cli("run " + cfg.string() + " --out " + out.string()), 0);
  const std::string trace = slurp(out / "trace.csv");
  EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 2);  // header + one row
}

TEST(Cli, ReplayProducesByteIdenticalTrace) {
  const fs::path out1 = fresh_dir("replay_a");
  const fs::path out2 = fresh_dir("replay_b");
  const fs::path cfg = config_with_run_overrides(
      "replay", "delta = 0.1\nhorizon = 5000\nrecord_every = 10\n");
  ASSERT_EQ(run_cli("run " + cfg.string() + " --out " + out1.string()), 0);
  ASSERT_EQ(run_cli("run " + cfg.string() + " --out " + out2.string()), 0);
  EXPECT_EQ(slurp(out1 / "trace.csv"), slurp(out2 / "trace.csv"));
}

TEST(Cli, SweepWritesTableAndReference) {
  const fs::path out = fresh_dir("sweep");
  const fs::path cfg = config_with_run_overrides(
      "sweep", "deltas = 1, 0.1, 0.05\nhorizon = 20000\nrecord_every = 100\n");
  ASSERT_EQ(run_cli("sweep " + cfg.string() + " --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "sweep.csv"));
  EXPECT_TRUE(fs::exists(out / "trace_centralized.csv"));
  EXPECT_TRUE(fs::exists(out / "trace_delta_0.csv"));
}

TEST(Cli, SingletonSweepIsConfigError) {
  const fs::path cfg = config_with_run_overrides(
      "sweep_one", "deltas = 0.1\nhorizon = 100\nrecord_every = 1\n");
  EXPECT_EQ(run_cli("sweep " + cfg.string() + " --out " + fresh_dir("sweep_one").string()), 1);
}

TEST(Cli, ValidateBundledConfigPasses) {
  const fs::path cfg = fs::path(kConfigDir) / "constraint_coupled.cfg";
  EXPECT_EQ(run_cli("validate " + cfg.string()), 0);
}

TEST(Cli, ValidateFlagsZeroEdgeProbability) {
  std::ifstream in(fs::path(kConfigDir) / "constraint_coupled.cfg");
  std::stringstream body;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("p = ", 0) == 0) line = "p = 0.0";
    body << line << "\n";
  }
  const fs::path path = fs::temp_directory_path() / "twoscale_cfg_p0.cfg";
  std::ofstream out(path);
  out << body.str();
  out.close();
  EXPECT_EQ(run_cli("validate " + path.string()), 1);
}

TEST(Cli, MissingConfigIsConfigError) {
  EXPECT_EQ(run_cli("run /nonexistent/path.cfg"), 1);
}

TEST(Cli, OutputsMatchDirectLibraryCalls) {
  // the CLI computes nothing the library cannot: identical bytes both ways
  const fs::path out_cli = fresh_dir("lib_eq_cli");
  const fs::path out_lib = fresh_dir("lib_eq_lib");
  const fs::path cfg = config_with_run_overrides(
      "lib_eq", "delta = 0.1\nhorizon = 3000\nrecord_every = 10\n");
  ASSERT_EQ(run_cli("run " + cfg.string() + " --out " + out_cli.string()), 0);
  const twoscale::ExperimentConfig parsed = twoscale::parse_config_file(cfg.string());
  ASSERT_EQ(twoscale::run_experiment(parsed, out_lib.string()), 0);
  EXPECT_EQ(slurp(out_cli / "trace.csv"), slurp(out_lib / "trace.csv"));
  EXPECT_EQ(slurp(out_cli / "summary.txt"), slurp(out_lib / "summary.txt"));
  EXPECT_EQ(slurp(out_cli / "instance.txt"), slurp(out_lib / "instance.txt"));
  EXPECT_EQ(slurp(out_cli / "solution.txt"), slurp(out_lib / "solution.txt"));
}

TEST(Cli, SeedOverrideChangesTheInstance) {
  const fs::path out1 = fresh_dir("seed_a");
  const fs::path out2 = fresh_dir("seed_b");
  const fs::path cfg = config_with_run_overrides(
      "seed", "delta = 0.1\nhorizon = 100\nrecord_every = 1\n");
  ASSERT_EQ(run_cli("run " + cfg.string() + " --seed 77 --out " + out1.string()), 0);
  ASSERT_EQ(run_cli("run " + cfg.string() + " --seed 78 --out " + out2.string()), 0);
  EXPECT_NE(slurp(out1 / "instance.txt"), slurp(out2 / "instance.txt"));
}
