// Experiment orchestration shared by the CLI and the test suites: build an
// instance and graph from a configuration, assemble the distributed
// algorithm, run or sweep it, and write the output files.
#ifndef TWOSCALE_EXPERIMENT_HPP
#define TWOSCALE_EXPERIMENT_HPP

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "twoscale/config.hpp"
#include "twoscale/interconnect.hpp"
#include "twoscale/oracle.hpp"
#include "twoscale/trace.hpp"

namespace twoscale {

/// Everything a run/sweep needs, with the block-type dispatch erased behind
/// callables. run_distributed rebuilds the assembly from scratch per call,
/// so repeated invocations are bit-identical.
struct PreparedExperiment {
  std::function<RunTrace(double delta)> run_distributed;
  std::function<RunTrace(long horizon)> run_centralized_ref;  // throws DivergenceError
  std::function<void(std::ostream&)> write_instance;
  std::function<void(std::ostream&)> write_solution;
  Vec chi_star;
  Graph graph;
  WeightMatrix weights;
};

namespace detail {

inline Tracker make_tracker(const ExperimentConfig& cfg, const WeightMatrix& w, const Graph& g,
                            int dim) {
  if (cfg.tracker_type == "perturbed") return PerturbedConsensus(w, dim);
  if (cfg.tracker_type == "pi") return PiDac(w, dim, cfg.pi);
  if (cfg.tracker_type == "radmm") return RAdmmDac(g, dim, cfg.radmm);
  if (cfg.tracker_type == "exact") return ExactAverage(g.n_agents, dim);
  throw ConfigError("config: unknown tracker type '" + cfg.tracker_type + "'");
}

inline RunOptions make_run_options(const ExperimentConfig& cfg, const Vec& chi_star) {
  RunOptions opts;
  opts.record_every = cfg.record_every;
  opts.chi_star = chi_star;
  opts.record_state = cfg.write_state;
  return opts;
}

inline Vec interleave_solution(const std::vector<int>& local_dims, const Vec& x_star,
                               const Vec& lambda_star) {
  const int m = static_cast<int>(lambda_star.size());
  int total = 0;
  for (int d : local_dims) total += d + m;
  Vec chi(total);
  int x_at = 0, chi_at = 0;
  for (int d : local_dims) {
    chi.segment(chi_at, d) = x_star.segment(x_at, d);
    chi.segment(chi_at + d, m) = lambda_star;
    chi_at += d + m;
    x_at += d;
  }
  return chi;
}

}  // namespace detail

inline PreparedExperiment prepare_experiment(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  if (cfg.agg_dim == 0) cfg.agg_dim = cfg.local_dim;
  check_config_ranges(cfg);
  PreparedExperiment exp;
  exp.graph = erdos_renyi(cfg.n_agents, cfg.edge_probability, cfg.graph_seed, cfg.max_retries);
  exp.weights = metropolis_weights(exp.graph);
  const Graph g = exp.graph;
  const WeightMatrix w = exp.weights;

  if (cfg.setup == "constraint_coupled") {
    auto prob = std::make_shared<ConstraintCoupledProblem>();
    if (!cfg.instance_file.empty()) {
      std::ifstream in(cfg.instance_file);
      if (!in) throw ConfigError("config: cannot open instance file '" + cfg.instance_file + "'");
      *prob = load_cc_instance(in);
    } else {
      *prob = generate_quadratic_cc(cfg.n_agents, cfg.local_dim, cfg.constraint_dim, cfg.seed);
    }
    const Solution sol = solve_cc_active_set(*prob);
    exp.chi_star = detail::interleave_solution(prob->local_dims, sol.x_star, sol.lambda_star);
    exp.write_instance = [prob](std::ostream& out) { save_instance(out, *prob); };
    exp.write_solution = [sol](std::ostream& out) { save_solution(out, sol); };
    const Vec chi_star = exp.chi_star;
    exp.run_distributed = [prob, cfg, g, w, chi_star](double delta) {
      ConstraintCoupledBlock block(prob.get(), cfg.block);
      std::vector<Tracker> streams{detail::make_tracker(cfg, w, g, prob->constraint_dim),
                                   detail::make_tracker(cfg, w, g, prob->constraint_dim)};
      auto alg = assemble(block, std::move(streams), delta);
      RunOptions opts = detail::make_run_options(cfg, chi_star);
      if (cfg.tracker_type == "perturbed") {
        ErrorCoordinateMetric metric;
        metric.t_perp = build_error_coordinates(cfg.n_agents, 2 * prob->constraint_dim).t_perp;
        metric.stream_order = {1, 0};  // per agent: multiplier state, then residual state
        const ConstraintCoupledProblem* raw = prob.get();
        metric.equilibrium_stack = [raw](const Vec& chi) { return cc_equilibrium_stack(*raw, chi); };
        opts.error_coords = std::move(metric);
      }
      return run(alg, Vec::Zero(block.state_dim()), cfg.horizon, opts);
    };
    exp.run_centralized_ref = [prob, cfg, chi_star](long horizon) {
      ConstraintCoupledBlock block(prob.get(), cfg.block);
      CentralizedOptions copts;
      copts.record_every = cfg.record_every;
      copts.chi_star = chi_star;
      return run_centralized(block, Vec::Zero(block.state_dim()), horizon, copts);
    };
    return exp;
  }

  if (cfg.setup == "consensus") {
    auto prob = std::make_shared<ConsensusProblem>();
    if (!cfg.instance_file.empty()) {
      std::ifstream in(cfg.instance_file);
      if (!in) throw ConfigError("config: cannot open instance file '" + cfg.instance_file + "'");
      *prob = load_consensus_instance(in);
    } else {
      *prob = generate_quadratic_consensus(cfg.n_agents, cfg.local_dim, cfg.seed, cfg.nu_problem);
    }
    const Vec x_star = solve_consensus_min(*prob);
    Vec chi_star(prob->n_agents * prob->dim);
    for (int i = 0; i < prob->n_agents; ++i) chi_star.segment(i * prob->dim, prob->dim) = x_star;
    exp.chi_star = chi_star;
    exp.write_instance = [prob](std::ostream& out) { save_instance(out, *prob); };
    exp.write_solution = [x_star](std::ostream& out) {
      Solution sol;
      sol.x_star = x_star;
      save_solution(out, sol);
    };
    exp.run_distributed = [prob, cfg, g, w, chi_star](double delta) {
      ConsensusBlock block(prob.get(), cfg.block);
      CascadeTracker cascade{detail::make_tracker(cfg, w, g, prob->dim),
                             detail::make_tracker(cfg, w, g, prob->dim)};
      auto alg = assemble(block, std::move(cascade), delta);
      return run(alg, Vec::Zero(block.state_dim()), cfg.horizon,
                 detail::make_run_options(cfg, chi_star));
    };
    exp.run_centralized_ref = [prob, cfg, chi_star](long horizon) {
      ConsensusBlock block(prob.get(), cfg.block);
      CentralizedOptions copts;
      copts.record_every = cfg.record_every;
      copts.chi_star = chi_star;
      return run_centralized(block, Vec::Zero(block.state_dim()), horizon, copts);
    };
    return exp;
  }

  if (cfg.setup == "aggregative") {
    auto prob = std::make_shared<AggregativeProblem>();
    if (!cfg.instance_file.empty()) {
      std::ifstream in(cfg.instance_file);
      if (!in) throw ConfigError("config: cannot open instance file '" + cfg.instance_file + "'");
      *prob = load_aggregative_instance(in);
    } else {
      *prob = generate_quadratic_aggregative(cfg.n_agents, cfg.agg_dim, cfg.seed, cfg.omega);
    }
    const auto off = detail::offsets_of(prob->local_dims);
    const AggregativeProblem* raw = prob.get();
    auto total_gradient = [raw, off](const Vec& x) {
      const Vec s = sigma(*raw, x);
      Vec gs_mean = Vec::Zero(raw->agg_dim);
      for (int i = 0; i < raw->n_agents; ++i)
        gs_mean += raw->costs[i].grad_s(x.segment(off[i], raw->local_dims[i]), s);
      gs_mean /= static_cast<double>(raw->n_agents);
      Vec grad(x.size());
      for (int i = 0; i < raw->n_agents; ++i) {
        const Vec xi = x.segment(off[i], raw->local_dims[i]);
        grad.segment(off[i], raw->local_dims[i]) =
            raw->costs[i].grad_x(xi, s) + raw->contributions[i].grad(xi) * gs_mean;
      }
      return grad;
    };
    const Vec x_star = solve_affine_gradient_min(total_gradient, prob->total_dim());
    exp.chi_star = x_star;
    exp.write_instance = [prob](std::ostream& out) { save_instance(out, *prob); };
    exp.write_solution = [x_star](std::ostream& out) {
      Solution sol;
      sol.x_star = x_star;
      save_solution(out, sol);
    };
    const Vec chi_star = exp.chi_star;
    exp.run_distributed = [prob, cfg, g, w, chi_star](double delta) {
      AggregativeBlock block(prob.get(), cfg.block);
      CascadeTracker cascade{detail::make_tracker(cfg, w, g, prob->agg_dim),
                             detail::make_tracker(cfg, w, g, prob->agg_dim)};
      auto alg = assemble(block, std::move(cascade), delta);
      return run(alg, Vec::Zero(block.state_dim()), cfg.horizon,
                 detail::make_run_options(cfg, chi_star));
    };
    exp.run_centralized_ref = [prob, cfg, chi_star](long horizon) {
      AggregativeBlock block(prob.get(), cfg.block);
      CentralizedOptions copts;
      copts.record_every = cfg.record_every;
      copts.chi_star = chi_star;
      return run_centralized(block, Vec::Zero(block.state_dim()), horizon, copts);
    };
    return exp;
  }

  // game
  auto prob = std::make_shared<AggregativeGame>();
  if (!cfg.instance_file.empty()) {
    std::ifstream in(cfg.instance_file);
    if (!in) throw ConfigError("config: cannot open instance file '" + cfg.instance_file + "'");
    *prob = load_game_instance(in);
  } else {
    *prob = generate_quadratic_game(cfg.n_agents, cfg.agg_dim, cfg.constraint_dim, cfg.seed,
                                    cfg.omega);
  }
  const Solution sol = solve_game_linear(*prob);
  exp.chi_star = detail::interleave_solution(prob->local_dims, sol.x_star, sol.lambda_star);
  exp.write_instance = [prob](std::ostream& out) { save_instance(out, *prob); };
  exp.write_solution = [sol](std::ostream& out) { save_solution(out, sol); };
  const Vec chi_star = exp.chi_star;
  exp.run_distributed = [prob, cfg, g, w, chi_star](double delta) {
    GameBlock block(prob.get(), cfg.block);
    std::vector<Tracker> streams{detail::make_tracker(cfg, w, g, prob->agg_dim),
                                 detail::make_tracker(cfg, w, g, prob->constraint_dim),
                                 detail::make_tracker(cfg, w, g, prob->constraint_dim)};
    auto alg = assemble(block, std::move(streams), delta);
    return run(alg, Vec::Zero(block.state_dim()), cfg.horizon,
               detail::make_run_options(cfg, chi_star));
  };
  exp.run_centralized_ref = [prob, cfg, chi_star](long horizon) {
    GameBlock block(prob.get(), cfg.block);
    CentralizedOptions copts;
    copts.record_every = cfg.record_every;
    copts.chi_star = chi_star;
    return run_centralized(block, Vec::Zero(block.state_dim()), horizon, copts);
  };
  return exp;
}

// --- output files ------------------------------------------------------------

/// Resolves the output directory: an explicit override wins over the
/// configured one, and relative paths land under $TWOSCALE_OUT_ROOT when it
/// is set.
inline std::filesystem::path resolve_out_dir(const std::string& configured,
                                             const std::string& override_dir = "") {
  std::filesystem::path p = override_dir.empty() ? configured : override_dir;
  if (p.is_relative()) {
    const char* root = std::getenv("TWOSCALE_OUT_ROOT");
    if (root != nullptr && *root != '\0') p = std::filesystem::path(root) / p;
  }
  return p;
}

namespace detail {

inline void write_file(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  writer(out);
}

struct RunSummary {
  bool diverged = false;
  bool converged = false;
  double initial_opt = 0.0;
  double final_opt = 0.0;
  double final_track = 0.0;
  double final_constr = 0.0;
  RateFit fit;
  bool fit_valid = false;
  long recorded_rows = 0;
};

inline RunSummary summarize(const RunTrace& trace) {
  RunSummary s;
  s.diverged = trace.diverged;
  s.recorded_rows = static_cast<long>(trace.rows.size());
  if (!trace.rows.empty()) {
    s.initial_opt = trace.front().opt_err;
    s.final_opt = trace.back().opt_err;
    s.final_track = trace.back().track_err;
    s.final_constr = trace.back().constr_res;
    s.converged = !trace.diverged && s.final_opt <= s.initial_opt;
    // fit the rate on the decaying portion only, cutting the tail off once
    // the error reaches the float-noise floor relative to its start
    std::vector<double> errors;
    for (double e : trace.column_opt_err()) {
      if (!(e > 0.0) && e != 0.0) {
        errors.clear();
        break;  // NaN or negative: no fit
      }
      if (!errors.empty() && e <= 1e-12 * errors.front()) break;
      errors.push_back(e);
    }
    if (errors.size() >= 2) {
      try {
        s.fit = fit_linear_rate(errors, 0.5);
        s.fit_valid = true;
      } catch (const std::exception&) {
        s.fit_valid = false;
      }
    }
  }
  return s;
}

inline void write_summary(std::ostream& out, const RunSummary& s, double delta) {
  out << "delta " << format_double(delta) << "\n";
  out << "recorded_rows " << s.recorded_rows << "\n";
  out << "diverged " << (s.diverged ? 1 : 0) << "\n";
  out << "converged " << (s.converged ? 1 : 0) << "\n";
  out << "initial_opt_err " << format_double(s.initial_opt) << "\n";
  out << "final_opt_err " << format_double(s.final_opt) << "\n";
  out << "final_track_err " << format_double(s.final_track) << "\n";
  out << "final_constr_res " << format_double(s.final_constr) << "\n";
  out << "fitted_slope " << (s.fit_valid ? format_double(s.fit.slope) : "nan") << "\n";
  out << "fitted_r_squared " << (s.fit_valid ? format_double(s.fit.r_squared) : "nan") << "\n";
}

}  // namespace detail

/// Runs one experiment and writes trace.csv, instance.txt, solution.txt and
/// summary.txt into the output directory. Returns 0 when the run converged
/// (final optimality error no worse than the initial one), 2 on a divergence
/// event or failure to converge. Configuration problems throw ConfigError,
/// which the CLI maps to exit code 1.
inline int run_experiment(const ExperimentConfig& cfg, const std::string& out_override = "",
                          std::ostream* log = nullptr) {
  const PreparedExperiment exp = prepare_experiment(cfg);
  const std::filesystem::path dir = resolve_out_dir(cfg.out_dir, out_override);
  std::filesystem::create_directories(dir);
  const RunTrace trace = exp.run_distributed(cfg.delta);
  detail::write_file(dir / "trace.csv",
                     [&](std::ostream& o) { write_trace_csv(o, trace, cfg.write_state); });
  detail::write_file(dir / "instance.txt", exp.write_instance);
  detail::write_file(dir / "solution.txt", exp.write_solution);
  const detail::RunSummary summary = detail::summarize(trace);
  detail::write_file(dir / "summary.txt",
                     [&](std::ostream& o) { detail::write_summary(o, summary, cfg.delta); });
  if (log != nullptr) {
    *log << "run: delta=" << cfg.delta << " rows=" << summary.recorded_rows
         << (summary.diverged ? " DIVERGED" : "")
         << " final_opt_err=" << format_double(summary.final_opt) << "\n";
  }
  if (summary.diverged) return 2;
  return summary.converged ? 0 : 2;
}

/// Runs the configured delta sweep plus the centralized reference and writes
/// one trace per delta (trace_delta_<k>.csv), the reference trace
/// (trace_centralized.csv) and the sweep.csv table. Partial results are
/// written before any failure. Returns 0 when at least one delta converged,
/// 2 when none did.
inline int sweep_experiment(const ExperimentConfig& cfg, const std::string& out_override = "",
                            std::ostream* log = nullptr) {
  if (cfg.deltas.size() < 2)
    throw ConfigError("sweep: at least two delta values are required");
  const PreparedExperiment exp = prepare_experiment(cfg);
  const std::filesystem::path dir = resolve_out_dir(cfg.out_dir, out_override);
  std::filesystem::create_directories(dir);

  // independent runs execute concurrently; results are collected in config
  // order so the output is schedule-independent
  std::vector<std::future<RunTrace>> futures;
  futures.reserve(cfg.deltas.size());
  for (double d : cfg.deltas)
    futures.push_back(std::async(std::launch::async,
                                 [&exp, d]() { return exp.run_distributed(d); }));

  RunTrace central;
  bool central_diverged = false;
  try {
    central = exp.run_centralized_ref(cfg.horizon);
  } catch (const DivergenceError&) {
    central_diverged = true;
  }
  detail::write_file(dir / "trace_centralized.csv",
                     [&](std::ostream& o) { write_trace_csv(o, central, cfg.write_state); });
  detail::write_file(dir / "instance.txt", exp.write_instance);
  detail::write_file(dir / "solution.txt", exp.write_solution);

  std::ofstream table(dir / "sweep.csv");
  if (!table) throw std::runtime_error("cannot write sweep.csv");
  table << "kind,delta,converged,diverged,fitted_slope,initial_err,final_err\n";
  const detail::RunSummary central_summary = detail::summarize(central);
  table << "centralized,," << (central_summary.converged && !central_diverged ? 1 : 0) << ","
        << (central_diverged ? 1 : 0) << ","
        << (central_summary.fit_valid ? format_double(central_summary.fit.slope) : "nan") << ","
        << format_double(central_summary.initial_opt) << ","
        << format_double(central_summary.final_opt) << "\n";

  int n_converged = 0;
  for (std::size_t k = 0; k < cfg.deltas.size(); ++k) {
    const RunTrace trace = futures[k].get();
    detail::write_file(dir / ("trace_delta_" + std::to_string(k) + ".csv"),
                       [&](std::ostream& o) { write_trace_csv(o, trace, cfg.write_state); });
    const detail::RunSummary s = detail::summarize(trace);
    if (s.converged) ++n_converged;
    table << "distributed," << format_double(cfg.deltas[k]) << "," << (s.converged ? 1 : 0) << ","
          << (s.diverged ? 1 : 0) << "," << (s.fit_valid ? format_double(s.fit.slope) : "nan")
          << "," << format_double(s.initial_opt) << "," << format_double(s.final_opt) << "\n";
    if (log != nullptr)
      *log << "sweep: delta=" << cfg.deltas[k] << (s.diverged ? " DIVERGED" : "")
           << " final_opt_err=" << format_double(s.final_opt) << "\n";
  }
  return n_converged > 0 ? 0 : 2;
}

// --- validation -----------------------------------------------------------------

struct CheckResult {
  std::string name;
  bool ok = false;
  std::string detail;
};

/// Dry-run checks without running the experiment: parameter ranges, instance
/// construction and constraint rank, graph connectivity, weight structure,
/// tracker stability gate, and the aggregate-binding signature.
inline std::vector<CheckResult> validate_experiment(const ExperimentConfig& cfg) {
  std::vector<CheckResult> checks;
  auto add = [&](const std::string& name, bool ok, const std::string& detail) {
    checks.push_back({name, ok, detail});
  };

  try {
    check_config_ranges(cfg);
    add("config_ranges", true, "all parameters within contract ranges");
  } catch (const std::exception& e) {
    add("config_ranges", false, e.what());
    return checks;  // later checks would act on invalid data
  }

  if (!cfg.instance_file.empty()) {
    const bool exists = std::filesystem::exists(cfg.instance_file);
    add("instance_file", exists,
        exists ? cfg.instance_file : "missing file '" + cfg.instance_file + "'");
    if (!exists) return checks;
  }

  Graph g;
  try {
    g = erdos_renyi(cfg.n_agents, cfg.edge_probability, cfg.graph_seed, cfg.max_retries);
    add("graph_connectivity", true,
        std::to_string(g.edges.size()) + " edges, connected sample found");
  } catch (const std::exception& e) {
    add("graph_connectivity", false, e.what());
    return checks;
  }

  WeightMatrix w = metropolis_weights(g);
  add("weights_doubly_stochastic", weights_valid(w, g),
      "row/column sums within 1e-12 of one, symmetric");

  if (cfg.setup == "constraint_coupled" || cfg.setup == "game") {
    try {
      Mat stacked;
      if (cfg.setup == "constraint_coupled") {
        const auto prob =
            generate_quadratic_cc(cfg.n_agents, cfg.local_dim, cfg.constraint_dim, cfg.seed);
        stacked = prob.stacked_a();
      } else {
        const auto prob = generate_quadratic_game(cfg.n_agents, cfg.agg_dim, cfg.constraint_dim,
                                                  cfg.seed, cfg.omega);
        stacked = prob.stacked_a();
      }
      Eigen::JacobiSVD<Mat> svd(stacked);
      const double smin = svd.singularValues().minCoeff();
      add("constraint_rank", smin > 1e-9,
          "stacked A smallest singular value " + format_double(smin));
    } catch (const std::exception& e) {
      add("constraint_rank", false, e.what());
    }
  }

  try {
    Tracker probe = detail::make_tracker(cfg, w, g, 1);
    std::string note = "tracker '" + cfg.tracker_type + "' constructed";
    if (const auto* pi = std::get_if<PiDac>(&probe))
      note += ", disagreement spectral radius " + format_double(pi->spectral_radius());
    add("tracker_spectral_gate", true, note);
  } catch (const std::exception& e) {
    add("tracker_spectral_gate", false, e.what());
  }

  try {
    ExperimentConfig dry = cfg;
    dry.horizon = 0;  // constructs the full assembly without iterating
    const PreparedExperiment exp = prepare_experiment(dry);
    (void)exp.run_distributed(dry.delta);
    add("aggregate_binding", true, "block and tracker streams agree on dimensions");
  } catch (const std::exception& e) {
    add("aggregate_binding", false, e.what());
  }

  return checks;
}

}  // namespace twoscale

#endif  // TWOSCALE_EXPERIMENT_HPP
