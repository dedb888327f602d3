// Communication graphs and doubly stochastic consensus weights.
#ifndef TWOSCALE_GRAPH_HPP
#define TWOSCALE_GRAPH_HPP

#include <algorithm>
#include <cstdint>
#include <istream>
#include <ostream>
#include <queue>
#include <utility>
#include <vector>

#include "twoscale/io.hpp"
#include "twoscale/rng.hpp"
#include "twoscale/types.hpp"

namespace twoscale {

/// Undirected communication topology. Every edge is a bidirectional link,
/// so each agent's neighbor set doubles as its in-neighbor set.
struct Graph {
  int n_agents = 0;
  std::vector<std::pair<int, int>> edges;     // normalized i < j
  std::vector<std::vector<int>> neighbors;    // sorted per agent
  std::vector<int> degrees;
};

/// Builds a Graph from an edge list, normalizing pairs and rejecting
/// self-loops, duplicates, and out-of-range endpoints. Connectivity is not
/// enforced here; generators and weight construction check it where needed.
inline Graph make_graph(int n_agents, std::vector<std::pair<int, int>> edges) {
  require(n_agents >= 1, "make_graph: n_agents must be positive");
  Graph g;
  g.n_agents = n_agents;
  g.neighbors.resize(n_agents);
  for (auto& e : edges) {
    require(e.first != e.second, "make_graph: self-loop rejected");
    require(e.first >= 0 && e.first < n_agents && e.second >= 0 && e.second < n_agents,
            "make_graph: edge endpoint out of range");
    if (e.first > e.second) std::swap(e.first, e.second);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  g.edges = std::move(edges);
  for (const auto& [i, j] : g.edges) {
    g.neighbors[i].push_back(j);
    g.neighbors[j].push_back(i);
  }
  for (auto& nbrs : g.neighbors) std::sort(nbrs.begin(), nbrs.end());
  g.degrees.resize(n_agents);
  for (int i = 0; i < n_agents; ++i) g.degrees[i] = static_cast<int>(g.neighbors[i].size());
  return g;
}

inline bool is_connected(const Graph& g) {
  if (g.n_agents <= 1) return true;
  std::vector<char> seen(g.n_agents, 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  int count = 1;
  while (!frontier.empty()) {
    const int v = frontier.front();
    frontier.pop();
    for (int w : g.neighbors[v]) {
      if (!seen[w]) {
        seen[w] = 1;
        ++count;
        frontier.push(w);
      }
    }
  }
  return count == g.n_agents;
}

/// Erdős–Rényi sample conditioned on connectivity. Each unordered pair is an
/// edge independently with probability p; disconnected samples are redrawn
/// from the advanced generator state, up to max_retries attempts. The same
/// (n_agents, p, seed) triple always yields the same graph.
inline Graph erdos_renyi(int n_agents, double p, std::uint64_t seed, int max_retries = 50) {
  require(n_agents >= 2, "erdos_renyi: n_agents must be at least 2");
  require(p >= 0.0 && p <= 1.0, "erdos_renyi: p must lie in [0, 1]");
  require(max_retries >= 1, "erdos_renyi: max_retries must be positive");
  SplitMix64 rng(seed);
  for (int attempt = 1; attempt <= max_retries; ++attempt) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n_agents; ++i)
      for (int j = i + 1; j < n_agents; ++j)
        if (rng.uniform() < p) edges.emplace_back(i, j);
    Graph g = make_graph(n_agents, std::move(edges));
    if (is_connected(g)) return g;
  }
  throw std::runtime_error("erdos_renyi: disconnected graph after " +
                           std::to_string(max_retries) + " attempts");
}

/// Nonnegative consensus weights matching the graph sparsity.
struct WeightMatrix {
  Mat entries;
};

/// Metropolis–Hastings weights: w_ij = 1/(1 + max(deg_i, deg_j)) on edges,
/// diagonal absorbs the remainder. Symmetric and doubly stochastic for any
/// connected undirected graph, using only neighbor degrees.
inline WeightMatrix metropolis_weights(const Graph& g) {
  require(is_connected(g), "metropolis_weights: graph must be connected");
  const int n = g.n_agents;
  Mat w = Mat::Zero(n, n);
  for (const auto& [i, j] : g.edges) {
    const double wij = 1.0 / (1.0 + std::max(g.degrees[i], g.degrees[j]));
    w(i, j) = wij;
    w(j, i) = wij;
  }
  for (int i = 0; i < n; ++i) w(i, i) = 1.0 - w.row(i).sum();
  return WeightMatrix{std::move(w)};
}

/// Checks the WeightMatrix contract against a graph: sparsity, symmetry,
/// nonnegativity, and row/column sums within tol of one.
inline bool weights_valid(const WeightMatrix& wm, const Graph& g, double tol = 1e-12) {
  const Mat& w = wm.entries;
  const int n = g.n_agents;
  if (w.rows() != n || w.cols() != n) return false;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (w(i, j) < 0.0) return false;
      if (std::abs(w(i, j) - w(j, i)) > tol) return false;
      if (i != j && w(i, j) > 0.0 &&
          !std::binary_search(g.neighbors[i].begin(), g.neighbors[i].end(), j))
        return false;
    }
    if (std::abs(w.row(i).sum() - 1.0) > tol) return false;
    if (std::abs(w.col(i).sum() - 1.0) > tol) return false;
  }
  return true;
}

// --- serialization ---------------------------------------------------------
// Graph: header line with n_agents, then one "i j" pair per edge.
// WeightMatrix: full matrix as row-major CSV.

inline void save_graph(std::ostream& out, const Graph& g) {
  out << g.n_agents << "\n";
  for (const auto& [i, j] : g.edges) out << i << " " << j << "\n";
}

inline Graph load_graph(std::istream& in) {
  int n = 0;
  if (!(in >> n)) throw std::runtime_error("load_graph: missing n_agents header");
  std::vector<std::pair<int, int>> edges;
  int i = 0, j = 0;
  while (in >> i >> j) edges.emplace_back(i, j);
  return make_graph(n, std::move(edges));
}

inline void save_weights_csv(std::ostream& out, const WeightMatrix& w) {
  save_matrix_csv(out, w.entries);
}

inline WeightMatrix load_weights_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(parse_csv_row(line));
  }
  if (rows.empty()) throw std::runtime_error("load_weights_csv: empty file");
  const int n = static_cast<int>(rows.size());
  Mat w(n, n);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[i].size()) != n)
      throw std::runtime_error("load_weights_csv: matrix is not square");
    for (int j = 0; j < n; ++j) w(i, j) = rows[i][j];
  }
  return WeightMatrix{std::move(w)};
}

}  // namespace twoscale

#endif  // TWOSCALE_GRAPH_HPP
