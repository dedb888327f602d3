// Experiment configuration: line-oriented `key = value` text grouped under
// [section] headers. The grammar is documented in the README; unknown keys
// and malformed lines are configuration errors so typos fail loudly.
#ifndef TWOSCALE_CONFIG_HPP
#define TWOSCALE_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "twoscale/blocks.hpp"
#include "twoscale/trackers.hpp"
#include "twoscale/types.hpp"

namespace twoscale {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ExperimentConfig {
  // [problem]
  std::string setup = "constraint_coupled";  // consensus | constraint_coupled | aggregative | game
  int n_agents = 10;
  int local_dim = 2;
  int constraint_dim = 2;
  int agg_dim = 0;  // 0 means "same as local_dim"
  double omega = 1.0;
  double nu_problem = 1.0;  // consensus augmentation weight
  std::uint64_t seed = 1;
  std::string instance_file;

  // [graph]
  double edge_probability = 0.3;
  std::uint64_t graph_seed = 1;
  int max_retries = 50;

  // [block]
  BlockParams block;

  // [tracker]
  std::string tracker_type = "perturbed";  // perturbed | pi | radmm | exact
  PiDacParams pi;
  RAdmmParams radmm;

  // [run]
  double delta = 0.1;
  std::vector<double> deltas;  // sweep values
  long horizon = 10000;
  int record_every = 1;
  std::string out_dir = "out";
  bool write_state = false;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

inline double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: invalid numeric value '" + v + "' for key '" + key + "'");
  }
}

inline long to_long(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const long n = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config: invalid integer value '" + v + "' for key '" + key + "'");
  }
}

inline bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: invalid boolean value '" + v + "' for key '" + key + "'");
}

inline std::vector<double> to_double_list(const std::string& v, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell = trim(cell);
    if (!cell.empty()) out.push_back(to_double(cell, key));
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) + ": malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section != "problem" && section != "graph" && section != "block" &&
          section != "tracker" && section != "run")
        throw ConfigError("config line " + std::to_string(line_no) + ": unknown section [" +
                          section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError("config line " + std::to_string(line_no) + ": key outside any section");

    auto unknown = [&]() {
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key +
                        "' in section [" + section + "]");
    };

    if (section == "problem") {
      if (key == "setup") cfg.setup = value;
      else if (key == "n_agents") cfg.n_agents = static_cast<int>(detail::to_long(value, key));
      else if (key == "local_dim") cfg.local_dim = static_cast<int>(detail::to_long(value, key));
      else if (key == "constraint_dim") cfg.constraint_dim = static_cast<int>(detail::to_long(value, key));
      else if (key == "agg_dim") cfg.agg_dim = static_cast<int>(detail::to_long(value, key));
      else if (key == "omega") cfg.omega = detail::to_double(value, key);
      else if (key == "nu") cfg.nu_problem = detail::to_double(value, key);
      else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(detail::to_long(value, key));
      else if (key == "instance_file") cfg.instance_file = value;
      else unknown();
    } else if (section == "graph") {
      if (key == "p") cfg.edge_probability = detail::to_double(value, key);
      else if (key == "seed") cfg.graph_seed = static_cast<std::uint64_t>(detail::to_long(value, key));
      else if (key == "max_retries") cfg.max_retries = static_cast<int>(detail::to_long(value, key));
      else unknown();
    } else if (section == "block") {
      if (key == "gamma") cfg.block.gamma = detail::to_double(value, key);
      else if (key == "rho") cfg.block.rho = detail::to_double(value, key);
      else if (key == "nu") cfg.block.nu = detail::to_double(value, key);
      else unknown();
    } else if (section == "tracker") {
      if (key == "type") cfg.tracker_type = value;
      else if (key == "pi_gamma") cfg.pi.gamma = detail::to_double(value, key);
      else if (key == "k_p") cfg.pi.k_p = detail::to_double(value, key);
      else if (key == "k_i") cfg.pi.k_i = detail::to_double(value, key);
      else if (key == "rho_admm") cfg.radmm.rho = detail::to_double(value, key);
      else if (key == "beta_admm") cfg.radmm.beta = detail::to_double(value, key);
      else unknown();
    } else if (section == "run") {
      if (key == "delta") cfg.delta = detail::to_double(value, key);
      else if (key == "deltas") cfg.deltas = detail::to_double_list(value, key);
      else if (key == "horizon") cfg.horizon = detail::to_long(value, key);
      else if (key == "record_every") cfg.record_every = static_cast<int>(detail::to_long(value, key));
      else if (key == "out_dir") cfg.out_dir = value;
      else if (key == "write_state") cfg.write_state = detail::to_bool(value, key);
      else unknown();
    }
  }
  if (cfg.agg_dim == 0) cfg.agg_dim = cfg.local_dim;
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  return parse_config(in);
}

/// Basic range validation shared by run/sweep/validate. Throws ConfigError
/// with the first violation.
inline void check_config_ranges(const ExperimentConfig& cfg) {
  if (cfg.setup != "consensus" && cfg.setup != "constraint_coupled" &&
      cfg.setup != "aggregative" && cfg.setup != "game")
    throw ConfigError("config: unknown setup '" + cfg.setup + "'");
  if (cfg.n_agents < 2) throw ConfigError("config: n_agents must be at least 2");
  if (cfg.local_dim < 1) throw ConfigError("config: local_dim must be positive");
  if ((cfg.setup == "constraint_coupled" || cfg.setup == "game") && cfg.constraint_dim < 1)
    throw ConfigError("config: constraint_dim must be positive");
  if (cfg.edge_probability < 0.0 || cfg.edge_probability > 1.0)
    throw ConfigError("config: graph p must lie in [0, 1]");
  if (cfg.max_retries < 1) throw ConfigError("config: max_retries must be positive");
  if (cfg.block.gamma <= 0.0) throw ConfigError("config: gamma must be positive");
  if (cfg.block.rho <= 0.0) throw ConfigError("config: rho must be positive");
  if (cfg.block.nu <= 0.0) throw ConfigError("config: nu must be positive");
  if (cfg.nu_problem <= 0.0) throw ConfigError("config: problem nu must be positive");
  if (cfg.tracker_type != "perturbed" && cfg.tracker_type != "pi" && cfg.tracker_type != "radmm" &&
      cfg.tracker_type != "exact")
    throw ConfigError("config: unknown tracker type '" + cfg.tracker_type + "'");
  if (cfg.delta <= 0.0 || cfg.delta > 1.0) throw ConfigError("config: delta must lie in (0, 1]");
  for (double d : cfg.deltas)
    if (d <= 0.0 || d > 1.0) throw ConfigError("config: sweep deltas must lie in (0, 1]");
  if (cfg.horizon < 0) throw ConfigError("config: horizon must be nonnegative");
  if (cfg.record_every < 1) throw ConfigError("config: record_every must be positive");
}

}  // namespace twoscale

#endif  // TWOSCALE_CONFIG_HPP
