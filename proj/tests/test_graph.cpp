#include <gtest/gtest.h>

#include <sstream>

#include "twoscale/graph.hpp"

using namespace twoscale;

namespace {

// Independent reachability oracle: boolean transitive closure.
bool connected_by_closure(int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
  for (int i = 0; i < n; ++i) reach[i][i] = 1;
  for (const auto& [i, j] : edges) {
    reach[i][j] = 1;
    reach[j][i] = 1;
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (reach[i][k] && reach[k][j]) reach[i][j] = 1;
  for (int j = 0; j < n; ++j)
    if (!reach[0][j]) return false;
  return true;
}

}  // namespace

TEST(Graph, MetropolisPathOfThree) {
  const Graph g = make_graph(3, {{0, 1}, {1, 2}});
  const WeightMatrix w = metropolis_weights(g);
  EXPECT_DOUBLE_EQ(w.entries(0, 1), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(w.entries(0, 0), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(w.entries(1, 1), 1.0 / 3.0);
  EXPECT_TRUE(weights_valid(w, g));
}

TEST(Graph, MetropolisCompleteOnThree) {
  const Graph g = make_graph(3, {{0, 1}, {0, 2}, {1, 2}});
  const WeightMatrix w = metropolis_weights(g);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(w.entries(i, j), 1.0 / 3.0);
}

TEST(Graph, MetropolisSingleEdge) {
  const Graph g = make_graph(2, {{0, 1}});
  const WeightMatrix w = metropolis_weights(g);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_DOUBLE_EQ(w.entries(i, j), 0.5);
}

TEST(Graph, MetropolisInvariantsOnRandomGraphs) {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const Graph g = erdos_renyi(12, 0.4, seed);
    const WeightMatrix w = metropolis_weights(g);
    ASSERT_TRUE(weights_valid(w, g, 1e-12));
    const Vec ones = Vec::Ones(g.n_agents);
    EXPECT_LT(((w.entries * ones) - ones).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(((w.entries.transpose() * ones) - ones).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Graph, ConnectivityMatchesClosureOracleExhaustively) {
  for (int n = 1; n <= 6; ++n) {
    std::vector<std::pair<int, int>> all_pairs;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) all_pairs.emplace_back(i, j);
    const unsigned total = 1u << all_pairs.size();
    for (unsigned mask = 0; mask < total; ++mask) {
      std::vector<std::pair<int, int>> edges;
      for (std::size_t k = 0; k < all_pairs.size(); ++k)
        if (mask & (1u << k)) edges.push_back(all_pairs[k]);
      const Graph g = make_graph(n, edges);
      ASSERT_EQ(is_connected(g), connected_by_closure(n, edges))
          << "n=" << n << " mask=" << mask;
    }
  }
}

TEST(Graph, ErdosRenyiDeterministic) {
  const Graph a = erdos_renyi(10, 0.3, 42);
  const Graph b = erdos_renyi(10, 0.3, 42);
  EXPECT_EQ(a.edges, b.edges);
  EXPECT_TRUE(is_connected(a));
  const Graph c = erdos_renyi(10, 0.3, 43);
  EXPECT_TRUE(is_connected(c));
}

TEST(Graph, ErdosRenyiFullProbabilityIsComplete) {
  const Graph g = erdos_renyi(3, 1.0, 7);
  EXPECT_EQ(g.edges.size(), 3u);
  for (int d : g.degrees) EXPECT_EQ(d, 2);
}

TEST(Graph, ErdosRenyiZeroProbabilityExhaustsRetries) {
  try {
    erdos_renyi(2, 0.0, 1, 5);
    FAIL() << "expected a disconnected-graph error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("disconnected"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("5"), std::string::npos);
  }
}

TEST(Graph, RejectsSelfLoopsAndBadEndpoints) {
  EXPECT_THROW(make_graph(3, {{1, 1}}), std::invalid_argument);
  EXPECT_THROW(make_graph(3, {{0, 3}}), std::invalid_argument);
}

TEST(Graph, SerializationRoundTrip) {
  const Graph g = erdos_renyi(9, 0.35, 11);
  std::stringstream buf;
  save_graph(buf, g);
  const Graph back = load_graph(buf);
  EXPECT_EQ(back.n_agents, g.n_agents);
  EXPECT_EQ(back.edges, g.edges);

  const WeightMatrix w = metropolis_weights(g);
  std::stringstream wbuf;
  save_weights_csv(wbuf, w);
  const WeightMatrix wback = load_weights_csv(wbuf);
  EXPECT_LT((wback.entries - w.entries).cwiseAbs().maxCoeff(), 1e-16);
}
