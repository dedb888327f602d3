#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "twoscale/experiment.hpp"

using namespace twoscale;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("twoscale_test_" + tag);
  fs::remove_all(dir);
  return dir;
}

ExperimentConfig small_cc_config() {
  ExperimentConfig cfg;
  cfg.setup = "constraint_coupled";
  cfg.n_agents = 6;
  cfg.local_dim = 2;
  cfg.constraint_dim = 2;
  cfg.seed = 30;
  cfg.graph_seed = 130;
  cfg.edge_probability = 0.4;
  cfg.block = BlockParams{0.1, 1.0, 0.9};
  cfg.tracker_type = "perturbed";
  cfg.delta = 0.1;
  cfg.horizon = 20000;
  cfg.record_every = 20;
  return cfg;
}

}  // namespace

// --- config parsing -----------------------------------------------------------

TEST(Config, ParsesFullExample) {
  std::stringstream in(R"(# comment
[problem]
setup = game
n_agents = 7
local_dim = 3
constraint_dim = 2
omega = 0.5
seed = 11

[graph]
p = 0.45
seed = 9
max_retries = 12

[block]
gamma = 0.05
rho = 1.2
nu = 2.0

[tracker]
type = radmm
rho_admm = 0.8
beta_admm = 0.4

[run]
delta = 0.2
deltas = 1, 0.5, 0.25
horizon = 500
record_every = 5
out_dir = somewhere
write_state = true
)");
  const ExperimentConfig cfg = parse_config(in);
  EXPECT_EQ(cfg.setup, "game");
  EXPECT_EQ(cfg.n_agents, 7);
  EXPECT_EQ(cfg.agg_dim, 3);  // defaults to local_dim
  EXPECT_EQ(cfg.omega, 0.5);
  EXPECT_EQ(cfg.graph_seed, 9u);
  EXPECT_EQ(cfg.max_retries, 12);
  EXPECT_EQ(cfg.block.gamma, 0.05);
  EXPECT_EQ(cfg.tracker_type, "radmm");
  EXPECT_EQ(cfg.radmm.beta, 0.4);
  EXPECT_EQ(cfg.delta, 0.2);
  ASSERT_EQ(cfg.deltas.size(), 3u);
  EXPECT_EQ(cfg.deltas[1], 0.5);
  EXPECT_EQ(cfg.horizon, 500);
  EXPECT_TRUE(cfg.write_state);
  EXPECT_NO_THROW(check_config_ranges(cfg));
}

TEST(Config, RejectsUnknownKeysAndSections) {
  std::stringstream bad_key("[problem]\nwhatever = 3\n");
  EXPECT_THROW(parse_config(bad_key), ConfigError);
  std::stringstream bad_section("[nonsense]\nx = 1\n");
  EXPECT_THROW(parse_config(bad_section), ConfigError);
  std::stringstream no_eq("[problem]\nn_agents 4\n");
  EXPECT_THROW(parse_config(no_eq), ConfigError);
  std::stringstream orphan("n_agents = 4\n");
  EXPECT_THROW(parse_config(orphan), ConfigError);
}

TEST(Config, RangeChecksFire) {
  ExperimentConfig cfg = small_cc_config();
  cfg.delta = 1.5;
  EXPECT_THROW(check_config_ranges(cfg), ConfigError);
  cfg = small_cc_config();
  cfg.setup = "mystery";
  EXPECT_THROW(check_config_ranges(cfg), ConfigError);
  cfg = small_cc_config();
  cfg.block.gamma = 0.0;
  EXPECT_THROW(check_config_ranges(cfg), ConfigError);
}

// --- run orchestration -----------------------------------------------------------

TEST(Experiment, RunWritesAllOutputsAndConverges) {
  const fs::path dir = fresh_dir("run");
  const int code = run_experiment(small_cc_config(), dir.string());
  EXPECT_EQ(code, 0);
  EXPECT_TRUE(fs::exists(dir / "trace.csv"));
  EXPECT_TRUE(fs::exists(dir / "instance.txt"));
  EXPECT_TRUE(fs::exists(dir / "solution.txt"));
  EXPECT_TRUE(fs::exists(dir / "summary.txt"));
  const std::string summary = slurp(dir / "summary.txt");
  EXPECT_NE(summary.find("converged 1"), std::string::npos);
  const std::string trace = slurp(dir / "trace.csv");
  EXPECT_EQ(trace.rfind("t,opt_err,track_err,constr_res,lambda_neg", 0), 0u);
}

TEST(Experiment, ReplayIsByteIdentical) {
  const fs::path dir1 = fresh_dir("replay1");
  const fs::path dir2 = fresh_dir("replay2");
  ExperimentConfig cfg = small_cc_config();
  cfg.horizon = 5000;
  ASSERT_EQ(run_experiment(cfg, dir1.string()), 0);
  ASSERT_EQ(run_experiment(cfg, dir2.string()), 0);
  EXPECT_EQ(slurp(dir1 / "trace.csv"), slurp(dir2 / "trace.csv"));
  EXPECT_EQ(slurp(dir1 / "instance.txt"), slurp(dir2 / "instance.txt"));
}

TEST(Experiment, InstanceFileRoundTripReproducesTheRun) {
  const fs::path dir1 = fresh_dir("fromseed");
  ExperimentConfig cfg = small_cc_config();
  cfg.horizon = 2000;
  ASSERT_EQ(run_experiment(cfg, dir1.string()), 0);
  // replay from the serialized instance, without the seed
  const fs::path dir2 = fresh_dir("fromfile");
  ExperimentConfig replay = cfg;
  replay.instance_file = (dir1 / "instance.txt").string();
  replay.seed = 999999;  // must be ignored
  ASSERT_EQ(run_experiment(replay, dir2.string()), 0);
  EXPECT_EQ(slurp(dir1 / "trace.csv"), slurp(dir2 / "trace.csv"));
}

TEST(Experiment, AllSetupsRunEndToEnd) {
  for (const std::string setup : {"consensus", "aggregative", "game"}) {
    ExperimentConfig cfg;
    cfg.setup = setup;
    cfg.n_agents = 5;
    cfg.local_dim = 2;
    cfg.constraint_dim = 2;
    cfg.seed = 3;
    cfg.graph_seed = 8;
    cfg.edge_probability = 0.6;
    cfg.horizon = 40000;
    cfg.record_every = 100;
    cfg.tracker_type = "perturbed";
    const fs::path dir = fresh_dir("setup_" + setup);
    EXPECT_EQ(run_experiment(cfg, dir.string()), 0) << setup;
    EXPECT_TRUE(fs::exists(dir / "solution.txt")) << setup;
  }
}

TEST(Experiment, SweepNeedsTwoDeltas) {
  ExperimentConfig cfg = small_cc_config();
  cfg.deltas = {0.1};
  EXPECT_THROW(sweep_experiment(cfg, fresh_dir("sweep_bad").string()), ConfigError);
}

TEST(Experiment, SweepWritesTableAndTraces) {
  ExperimentConfig cfg = small_cc_config();
  cfg.horizon = 5000;
  cfg.deltas = {1.0, 0.1, 0.05};
  const fs::path dir = fresh_dir("sweep");
  const int code = sweep_experiment(cfg, dir.string());
  EXPECT_EQ(code, 0);
  EXPECT_TRUE(fs::exists(dir / "sweep.csv"));
  EXPECT_TRUE(fs::exists(dir / "trace_centralized.csv"));
  for (int k = 0; k < 3; ++k)
    EXPECT_TRUE(fs::exists(dir / ("trace_delta_" + std::to_string(k) + ".csv")));
  const std::string table = slurp(dir / "sweep.csv");
  EXPECT_EQ(table.rfind("kind,delta,converged,diverged,fitted_slope,initial_err,final_err", 0),
            0u);
  EXPECT_NE(table.find("centralized,"), std::string::npos);
}

TEST(Experiment, SweepOrdersRatesByDelta) {
  // on the reference instance the unit-delta run fails while smaller deltas
  // converge, the smallest with the flattest fitted rate
  ExperimentConfig cfg = small_cc_config();
  cfg.n_agents = 10;
  cfg.edge_probability = 0.3;
  cfg.horizon = 60000;
  cfg.record_every = 10;
  cfg.deltas = {1.0, 0.5, 0.1, 0.05};
  const fs::path dir = fresh_dir("sweep_order");
  sweep_experiment(cfg, dir.string());
  std::ifstream table(dir / "sweep.csv");
  std::string line;
  std::getline(table, line);  // header
  struct Row {
    std::string kind;
    double delta = 0.0;
    bool converged = false;
    bool diverged = false;
    double slope = 0.0;
    double initial = 0.0;
    double final = 0.0;
  };
  std::vector<Row> rows;
  while (std::getline(table, line)) {
    std::stringstream ss(line);
    Row row;
    std::string cell;
    std::getline(ss, row.kind, ',');
    std::getline(ss, cell, ',');
    row.delta = cell.empty() ? 0.0 : std::stod(cell);
    std::getline(ss, cell, ',');
    row.converged = cell == "1";
    std::getline(ss, cell, ',');
    row.diverged = cell == "1";
    std::getline(ss, cell, ',');
    row.slope = cell == "nan" ? 0.0 : std::stod(cell);
    std::getline(ss, cell, ',');
    row.initial = std::stod(cell);
    std::getline(ss, cell, ',');
    row.final = std::stod(cell);
    rows.push_back(row);
  }
  ASSERT_EQ(rows.size(), 5u);  // centralized + four deltas
  EXPECT_EQ(rows[0].kind, "centralized");
  EXPECT_TRUE(rows[0].converged);
  // the largest delta diverges or stalls; the small ones genuinely converge
  auto solved = [](const Row& r) { return !r.diverged && r.final <= 1e-6 * r.initial; };
  EXPECT_FALSE(solved(rows[1]));  // delta = 1
  EXPECT_TRUE(solved(rows[3]));   // delta = 0.1
  EXPECT_TRUE(solved(rows[4]));   // delta = 0.05
  double min_abs_slope = 1e99;
  for (std::size_t k = 1; k < rows.size(); ++k)
    if (solved(rows[k])) min_abs_slope = std::min(min_abs_slope, std::abs(rows[k].slope));
  EXPECT_NEAR(std::abs(rows[4].slope), min_abs_slope, 1e-12)
      << "smallest delta should have the flattest converging rate";
}

TEST(Experiment, TransientNegativeMultipliersAreRecordedNotClamped) {
  // nu below 1/(N rho) makes the first multiplier step negative for agents
  // that start at zero while others start positive
  ConstraintCoupledProblem p = generate_quadratic_cc(2, 1, 1, 8);
  p.b = {Vec::Constant(1, 50.0), Vec::Constant(1, 50.0)};  // deeply feasible at the origin
  ConstraintCoupledBlock block(&p, BlockParams{0.1, 0.1, 0.1});
  std::vector<Tracker> stub;
  stub.push_back(ExactAverage(2, 1));
  stub.push_back(ExactAverage(2, 1));
  auto alg = assemble(block, std::move(stub), 1.0);
  Vec init = Vec::Zero(block.state_dim());
  init(1) = 5.0;  // lambda of agent 0
  const RunTrace trace = run(alg, init, 3);
  bool flagged = false;
  double most_negative = 0.0;
  for (const auto& row : trace.rows) {
    flagged = flagged || row.lambda_neg == 1;
    for (int i = 0; i < 2; ++i)
      most_negative = std::min(most_negative, block.lambda_part(row.state, i).minCoeff());
  }
  EXPECT_TRUE(flagged);
  EXPECT_LT(most_negative, 0.0);  // recorded as-is, not clamped
}

// --- validation -------------------------------------------------------------------

TEST(Experiment, ValidatePassesOnGoodConfig) {
  const auto checks = validate_experiment(small_cc_config());
  for (const auto& c : checks) EXPECT_TRUE(c.ok) << c.name << ": " << c.detail;
  EXPECT_GE(checks.size(), 5u);
}

TEST(Experiment, ValidateFlagsDisconnectedGraph) {
  ExperimentConfig cfg = small_cc_config();
  cfg.edge_probability = 0.0;
  const auto checks = validate_experiment(cfg);
  bool found = false;
  for (const auto& c : checks)
    if (c.name == "graph_connectivity") {
      found = true;
      EXPECT_FALSE(c.ok);
    }
  EXPECT_TRUE(found);
}

TEST(Experiment, ValidateFlagsUnstablePiGains) {
  ExperimentConfig cfg = small_cc_config();
  cfg.tracker_type = "pi";
  cfg.pi.k_p = 10.0;
  cfg.edge_probability = 0.9;
  const auto checks = validate_experiment(cfg);
  bool found = false;
  for (const auto& c : checks)
    if (c.name == "tracker_spectral_gate") {
      found = true;
      EXPECT_FALSE(c.ok);
      EXPECT_NE(c.detail.find("spectral"), std::string::npos);
    }
  EXPECT_TRUE(found);
}

// --- output root resolution ----------------------------------------------------------

TEST(Experiment, OutDirHonorsEnvironmentRoot) {
  setenv("TWOSCALE_OUT_ROOT", "/tmp/twoscale_root_test", 1);
  const fs::path resolved = resolve_out_dir("runs/a");
  EXPECT_EQ(resolved, fs::path("/tmp/twoscale_root_test/runs/a"));
  const fs::path abs = resolve_out_dir("/tmp/explicit");
  EXPECT_EQ(abs, fs::path("/tmp/explicit"));
  unsetenv("TWOSCALE_OUT_ROOT");
  const fs::path plain = resolve_out_dir("runs/a");
  EXPECT_EQ(plain, fs::path("runs/a"));
}
