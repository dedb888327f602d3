// Problem data for the four supported setups: consensus optimization,
// constraint-coupled optimization, aggregative optimization, and aggregative
// games with a shared linear coupling constraint.
//
// Costs are closed-form handles (value plus analytic gradients); the seeded
// quadratic generators additionally retain their matrices so that oracle
// solvers and serialization can see the raw data.
#ifndef TWOSCALE_PROBLEMS_HPP
#define TWOSCALE_PROBLEMS_HPP

#include <cstdint>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "twoscale/io.hpp"
#include "twoscale/rng.hpp"
#include "twoscale/types.hpp"

namespace twoscale {

/// Differentiable cost f: R^k -> R with analytic gradient.
struct SmoothCost {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> grad;
};

inline SmoothCost make_quadratic_cost(Mat q, Vec r) {
  require(q.rows() == q.cols() && q.rows() == r.size(), "make_quadratic_cost: shape mismatch");
  return SmoothCost{
      [q, r](const Vec& x) { return 0.5 * x.dot(q * x) + r.dot(x); },
      [q, r](const Vec& x) -> Vec { return q * x + r; },
  };
}

/// Cost f(x_i, s) of one agent in an aggregative setup, with both partial
/// gradients (grad_x in R^{n_i}, grad_s in R^d).
struct AggregativeCost {
  std::function<double(const Vec&, const Vec&)> value;
  std::function<Vec(const Vec&, const Vec&)> grad_x;
  std::function<Vec(const Vec&, const Vec&)> grad_s;
};

/// Contribution map phi_i: R^{n_i} -> R^d. `grad` returns the n_i x d
/// transposed Jacobian, the shape that multiplies a d-vector from the left.
struct Contribution {
  std::function<Vec(const Vec&)> value;
  std::function<Mat(const Vec&)> grad;
};

inline Contribution identity_contribution(int dim) {
  return Contribution{
      [](const Vec& x) { return x; },
      [dim](const Vec&) -> Mat { return Mat::Identity(dim, dim); },
  };
}

// ---------------------------------------------------------------------------

struct ConsensusProblem {
  int n_agents = 0;
  int dim = 0;
  double nu = 1.0;  // augmentation weight of the consensus penalty
  std::vector<SmoothCost> costs;
  // quadratic data, populated by the generators (empty for user handles)
  std::vector<Mat> q;
  std::vector<Vec> r;

  bool is_quadratic() const { return !q.empty(); }
};

struct ConstraintCoupledProblem {
  int n_agents = 0;
  std::vector<int> local_dims;
  int constraint_dim = 0;
  std::vector<SmoothCost> costs;
  std::vector<Mat> q;  // quadratic data when available
  std::vector<Vec> r;
  std::vector<Mat> a;  // A_i, m x n_i
  std::vector<Vec> b;  // b_i in R^m

  bool is_quadratic() const { return !q.empty(); }
  int total_dim() const { return std::accumulate(local_dims.begin(), local_dims.end(), 0); }

  Mat stacked_a() const {
    Mat full(constraint_dim, total_dim());
    int col = 0;
    for (int i = 0; i < n_agents; ++i) {
      full.middleCols(col, local_dims[i]) = a[i];
      col += local_dims[i];
    }
    return full;
  }
  Vec total_b() const {
    Vec sum = Vec::Zero(constraint_dim);
    for (const Vec& bi : b) sum += bi;
    return sum;
  }
};

struct AggregativeProblem {
  int n_agents = 0;
  std::vector<int> local_dims;
  int agg_dim = 0;
  std::vector<AggregativeCost> costs;
  std::vector<Contribution> contributions;
  // quadratic-family data (identity contributions) when generated
  std::vector<Mat> q;
  std::vector<Vec> r;
  std::vector<Vec> targets;
  double omega = 0.0;

  bool is_quadratic() const { return !q.empty(); }
  int total_dim() const { return std::accumulate(local_dims.begin(), local_dims.end(), 0); }
};

struct AggregativeGame {
  int n_agents = 0;
  std::vector<int> local_dims;
  int agg_dim = 0;
  int constraint_dim = 0;
  std::vector<AggregativeCost> costs;  // J_i
  std::vector<Contribution> contributions;
  std::vector<Mat> a;
  std::vector<Vec> b;
  // quadratic-family data when generated
  std::vector<Mat> q;
  std::vector<Vec> r;
  double omega = 0.0;

  bool is_quadratic() const { return !q.empty(); }
  int total_dim() const { return std::accumulate(local_dims.begin(), local_dims.end(), 0); }
  Mat stacked_a() const {
    Mat full(constraint_dim, total_dim());
    int col = 0;
    for (int i = 0; i < n_agents; ++i) {
      full.middleCols(col, local_dims[i]) = a[i];
      col += local_dims[i];
    }
    return full;
  }
  Vec total_b() const {
    Vec sum = Vec::Zero(constraint_dim);
    for (const Vec& bi : b) sum += bi;
    return sum;
  }
};

// --- shared evaluations ----------------------------------------------------

namespace detail {
inline std::vector<int> offsets_of(const std::vector<int>& dims) {
  std::vector<int> off(dims.size() + 1, 0);
  for (std::size_t i = 0; i < dims.size(); ++i) off[i + 1] = off[i] + dims[i];
  return off;
}
}  // namespace detail

/// Aggregative variable sigma(x) = (1/N) sum_i phi_i(x_i).
template <class AggregativeLike>
Vec sigma(const AggregativeLike& p, const Vec& x) {
  const auto off = detail::offsets_of(p.local_dims);
  require(x.size() == off.back(), "sigma: stacked dimension mismatch");
  Vec s = Vec::Zero(p.agg_dim);
  for (int i = 0; i < p.n_agents; ++i) {
    Vec c = p.contributions[i].value(x.segment(off[i], p.local_dims[i]));
    require(c.size() == p.agg_dim, "sigma: contribution dimension mismatch");
    s += c;
  }
  return s / static_cast<double>(p.n_agents);
}

/// Coupling residual sum_i (A_i x_i - b_i) = A x - b.
template <class ConstrainedLike>
Vec constraint_residual(const ConstrainedLike& p, const Vec& x) {
  const auto off = detail::offsets_of(p.local_dims);
  require(x.size() == off.back(), "constraint_residual: stacked dimension mismatch");
  Vec res = Vec::Zero(p.constraint_dim);
  for (int i = 0; i < p.n_agents; ++i)
    res += p.a[i] * x.segment(off[i], p.local_dims[i]) - p.b[i];
  return res;
}

// --- seeded generators -----------------------------------------------------

namespace detail {

inline Mat gaussian_matrix(SplitMix64& rng, int rows, int cols) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.gaussian();
  return m;
}

/// Random orthogonal matrix: QR of a Gaussian matrix with the sign of each
/// R diagonal entry fixed, which makes the factor unique and the draw
/// reproducible.
inline Mat random_orthogonal(SplitMix64& rng, int n) {
  const Mat g = gaussian_matrix(rng, n, n);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ();
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

/// Symmetric positive definite matrix with eigenvalues drawn uniformly from
/// the open interval (0, 1).
inline Mat random_spd_unit(SplitMix64& rng, int n) {
  const Mat u = random_orthogonal(rng, n);
  Vec d(n);
  for (int i = 0; i < n; ++i) d(i) = rng.uniform_open();
  return u * d.asDiagonal() * u.transpose();
}

inline double min_singular_value(const Mat& m) {
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues().minCoeff();
}

}  // namespace detail

/// Quadratic constraint-coupled instance: f_i(x) = x'Q_i x / 2 + r_i'x with
/// Q_i eigenvalues in (0,1), Gaussian r_i and A_i, b_i uniform in (0,1).
/// The stacked A = [A_1 ... A_N] is redrawn (deterministically) until its
/// smallest singular value exceeds 1e-9.
inline ConstraintCoupledProblem generate_quadratic_cc(int n_agents, int local_dim,
                                                      int constraint_dim, std::uint64_t seed,
                                                      int max_rank_retries = 20) {
  require(n_agents >= 1 && local_dim >= 1 && constraint_dim >= 1,
          "generate_quadratic_cc: dimensions must be positive");
  SplitMix64 rng(seed);
  ConstraintCoupledProblem p;
  p.n_agents = n_agents;
  p.local_dims.assign(n_agents, local_dim);
  p.constraint_dim = constraint_dim;
  for (int i = 0; i < n_agents; ++i) {
    p.q.push_back(detail::random_spd_unit(rng, local_dim));
    p.r.push_back(detail::gaussian_matrix(rng, local_dim, 1).col(0));
    Vec bi(constraint_dim);
    for (int k = 0; k < constraint_dim; ++k) bi(k) = rng.uniform_open();
    p.b.push_back(bi);
    p.costs.push_back(make_quadratic_cost(p.q.back(), p.r.back()));
  }
  for (int attempt = 1; attempt <= max_rank_retries; ++attempt) {
    p.a.clear();
    for (int i = 0; i < n_agents; ++i)
      p.a.push_back(detail::gaussian_matrix(rng, constraint_dim, local_dim));
    if (detail::min_singular_value(p.stacked_a()) > 1e-9) return p;
  }
  throw std::runtime_error("generate_quadratic_cc: rank-repair retries exhausted");
}

/// Quadratic consensus instance over a common d-dimensional variable.
inline ConsensusProblem generate_quadratic_consensus(int n_agents, int dim, std::uint64_t seed,
                                                     double nu = 1.0) {
  require(n_agents >= 1 && dim >= 1, "generate_quadratic_consensus: dimensions must be positive");
  require(nu > 0.0, "generate_quadratic_consensus: nu must be positive");
  SplitMix64 rng(seed);
  ConsensusProblem p;
  p.n_agents = n_agents;
  p.dim = dim;
  p.nu = nu;
  for (int i = 0; i < n_agents; ++i) {
    p.q.push_back(detail::random_spd_unit(rng, dim));
    p.r.push_back(detail::gaussian_matrix(rng, dim, 1).col(0));
    p.costs.push_back(make_quadratic_cost(p.q.back(), p.r.back()));
  }
  return p;
}

namespace detail {
inline AggregativeCost quadratic_tracking_cost(const Mat& q, const Vec& r, const Vec& target,
                                               double omega) {
  return AggregativeCost{
      [q, r, target, omega](const Vec& x, const Vec& s) {
        return 0.5 * x.dot(q * x) + r.dot(x) + 0.5 * omega * (s - target).squaredNorm();
      },
      [q, r](const Vec& x, const Vec&) -> Vec { return q * x + r; },
      [target, omega](const Vec&, const Vec& s) -> Vec { return omega * (s - target); },
  };
}

inline AggregativeCost quadratic_game_cost(const Mat& q, const Vec& r, double omega) {
  return AggregativeCost{
      [q, r, omega](const Vec& x, const Vec& s) {
        return 0.5 * x.dot(q * x) + r.dot(x) + omega * x.dot(s);
      },
      [q, r, omega](const Vec& x, const Vec& s) -> Vec { return q * x + r + omega * s; },
      [omega](const Vec& x, const Vec&) -> Vec { return omega * x; },
  };
}
}  // namespace detail

/// Quadratic aggregative instance with identity contributions:
/// f_i(x_i, s) = x_i'Q_i x_i / 2 + r_i'x_i + omega/2 |s - t_i|^2.
inline AggregativeProblem generate_quadratic_aggregative(int n_agents, int dim,
                                                         std::uint64_t seed, double omega = 1.0) {
  require(n_agents >= 1 && dim >= 1, "generate_quadratic_aggregative: dimensions must be positive");
  require(omega >= 0.0, "generate_quadratic_aggregative: omega must be nonnegative");
  SplitMix64 rng(seed);
  AggregativeProblem p;
  p.n_agents = n_agents;
  p.local_dims.assign(n_agents, dim);
  p.agg_dim = dim;
  p.omega = omega;
  for (int i = 0; i < n_agents; ++i) {
    p.q.push_back(detail::random_spd_unit(rng, dim));
    p.r.push_back(detail::gaussian_matrix(rng, dim, 1).col(0));
    p.targets.push_back(detail::gaussian_matrix(rng, dim, 1).col(0));
    p.costs.push_back(detail::quadratic_tracking_cost(p.q.back(), p.r.back(), p.targets.back(), omega));
    p.contributions.push_back(identity_contribution(dim));
  }
  return p;
}

/// Quadratic aggregative game with identity contributions and a shared
/// linear coupling constraint: J_i(x_i, s) = x_i'Q_i x_i / 2 + r_i'x_i +
/// omega x_i's. The pseudo-gradient is affine and strongly monotone.
inline AggregativeGame generate_quadratic_game(int n_agents, int dim, int constraint_dim,
                                               std::uint64_t seed, double omega = 1.0,
                                               int max_rank_retries = 20) {
  require(n_agents >= 1 && dim >= 1 && constraint_dim >= 1,
          "generate_quadratic_game: dimensions must be positive");
  require(omega >= 0.0, "generate_quadratic_game: omega must be nonnegative");
  SplitMix64 rng(seed);
  AggregativeGame p;
  p.n_agents = n_agents;
  p.local_dims.assign(n_agents, dim);
  p.agg_dim = dim;
  p.constraint_dim = constraint_dim;
  p.omega = omega;
  for (int i = 0; i < n_agents; ++i) {
    p.q.push_back(detail::random_spd_unit(rng, dim));
    p.r.push_back(detail::gaussian_matrix(rng, dim, 1).col(0));
    Vec bi(constraint_dim);
    for (int k = 0; k < constraint_dim; ++k) bi(k) = rng.uniform_open();
    p.b.push_back(bi);
    p.costs.push_back(detail::quadratic_game_cost(p.q.back(), p.r.back(), omega));
    p.contributions.push_back(identity_contribution(dim));
  }
  for (int attempt = 1; attempt <= max_rank_retries; ++attempt) {
    p.a.clear();
    for (int i = 0; i < n_agents; ++i)
      p.a.push_back(detail::gaussian_matrix(rng, constraint_dim, dim));
    if (detail::min_singular_value(p.stacked_a()) > 1e-9) return p;
  }
  throw std::runtime_error("generate_quadratic_game: rank-repair retries exhausted");
}

// --- instance files --------------------------------------------------------
// Structured text: a header naming the setup, integer dimension lines, then
// labeled row-major CSV blocks per agent. Only instances with stored
// quadratic data can be serialized; that covers everything the generators
// produce, so an experiment replays without its seed.

namespace detail {

inline void save_block(std::ostream& out, const std::string& label, int index, const Mat& m) {
  out << label << " " << index << "\n";
  save_matrix_csv(out, m);
}

inline void save_block(std::ostream& out, const std::string& label, int index, const Vec& v) {
  out << label << " " << index << "\n";
  save_vector_csv(out, v);
}

inline void expect_block(std::istream& in, const std::string& label, int index) {
  std::string tag;
  int idx = -1;
  in >> tag >> idx;
  in.ignore();  // trailing newline
  if (tag != label || idx != index)
    throw std::runtime_error("load_instance: expected block '" + label + " " +
                             std::to_string(index) + "', got '" + tag + " " +
                             std::to_string(idx) + "'");
}

}  // namespace detail

inline void save_instance(std::ostream& out, const ConstraintCoupledProblem& p) {
  require(p.is_quadratic(), "save_instance: quadratic data required");
  out << "twoscale-instance v1\n";
  out << "setup constraint_coupled\n";
  out << "n_agents " << p.n_agents << "\n";
  out << "constraint_dim " << p.constraint_dim << "\n";
  out << "local_dims";
  for (int d : p.local_dims) out << " " << d;
  out << "\n";
  for (int i = 0; i < p.n_agents; ++i) {
    detail::save_block(out, "Q", i, p.q[i]);
    detail::save_block(out, "r", i, p.r[i]);
    detail::save_block(out, "A", i, p.a[i]);
    detail::save_block(out, "b", i, p.b[i]);
  }
}

inline void save_instance(std::ostream& out, const ConsensusProblem& p) {
  require(p.is_quadratic(), "save_instance: quadratic data required");
  out << "twoscale-instance v1\n";
  out << "setup consensus\n";
  out << "n_agents " << p.n_agents << "\n";
  out << "dim " << p.dim << "\n";
  out << "nu " << format_double(p.nu) << "\n";
  for (int i = 0; i < p.n_agents; ++i) {
    detail::save_block(out, "Q", i, p.q[i]);
    detail::save_block(out, "r", i, p.r[i]);
  }
}

inline void save_instance(std::ostream& out, const AggregativeProblem& p) {
  require(p.is_quadratic(), "save_instance: quadratic data required");
  out << "twoscale-instance v1\n";
  out << "setup aggregative\n";
  out << "n_agents " << p.n_agents << "\n";
  out << "dim " << p.agg_dim << "\n";
  out << "omega " << format_double(p.omega) << "\n";
  for (int i = 0; i < p.n_agents; ++i) {
    detail::save_block(out, "Q", i, p.q[i]);
    detail::save_block(out, "r", i, p.r[i]);
    detail::save_block(out, "t", i, p.targets[i]);
  }
}

inline void save_instance(std::ostream& out, const AggregativeGame& p) {
  require(p.is_quadratic(), "save_instance: quadratic data required");
  out << "twoscale-instance v1\n";
  out << "setup game\n";
  out << "n_agents " << p.n_agents << "\n";
  out << "dim " << p.agg_dim << "\n";
  out << "constraint_dim " << p.constraint_dim << "\n";
  out << "omega " << format_double(p.omega) << "\n";
  for (int i = 0; i < p.n_agents; ++i) {
    detail::save_block(out, "Q", i, p.q[i]);
    detail::save_block(out, "r", i, p.r[i]);
    detail::save_block(out, "A", i, p.a[i]);
    detail::save_block(out, "b", i, p.b[i]);
  }
}

namespace detail {
inline void expect_header(std::istream& in, const std::string& setup) {
  std::string line;
  std::getline(in, line);
  if (line != "twoscale-instance v1") throw std::runtime_error("load_instance: bad header");
  std::string tag, name;
  in >> tag >> name;
  if (tag != "setup" || name != setup)
    throw std::runtime_error("load_instance: expected setup '" + setup + "', got '" + name + "'");
}

inline int read_int_field(std::istream& in, const std::string& key) {
  std::string tag;
  int value = 0;
  in >> tag >> value;
  if (tag != key) throw std::runtime_error("load_instance: expected field '" + key + "'");
  return value;
}

inline double read_double_field(std::istream& in, const std::string& key) {
  std::string tag;
  double value = 0;
  in >> tag >> value;
  if (tag != key) throw std::runtime_error("load_instance: expected field '" + key + "'");
  return value;
}
}  // namespace detail

inline ConstraintCoupledProblem load_cc_instance(std::istream& in) {
  detail::expect_header(in, "constraint_coupled");
  ConstraintCoupledProblem p;
  p.n_agents = detail::read_int_field(in, "n_agents");
  p.constraint_dim = detail::read_int_field(in, "constraint_dim");
  std::string tag;
  in >> tag;
  if (tag != "local_dims") throw std::runtime_error("load_instance: expected field 'local_dims'");
  p.local_dims.resize(p.n_agents);
  for (int i = 0; i < p.n_agents; ++i) in >> p.local_dims[i];
  in.ignore();
  for (int i = 0; i < p.n_agents; ++i) {
    detail::expect_block(in, "Q", i);
    p.q.push_back(load_matrix_csv(in, p.local_dims[i], p.local_dims[i]));
    detail::expect_block(in, "r", i);
    p.r.push_back(load_vector_csv(in, p.local_dims[i]));
    detail::expect_block(in, "A", i);
    p.a.push_back(load_matrix_csv(in, p.constraint_dim, p.local_dims[i]));
    detail::expect_block(in, "b", i);
    p.b.push_back(load_vector_csv(in, p.constraint_dim));
    p.costs.push_back(make_quadratic_cost(p.q[i], p.r[i]));
  }
  return p;
}

inline ConsensusProblem load_consensus_instance(std::istream& in) {
  detail::expect_header(in, "consensus");
  ConsensusProblem p;
  p.n_agents = detail::read_int_field(in, "n_agents");
  p.dim = detail::read_int_field(in, "dim");
  p.nu = detail::read_double_field(in, "nu");
  in.ignore();
  for (int i = 0; i < p.n_agents; ++i) {
    detail::expect_block(in, "Q", i);
    p.q.push_back(load_matrix_csv(in, p.dim, p.dim));
    detail::expect_block(in, "r", i);
    p.r.push_back(load_vector_csv(in, p.dim));
    p.costs.push_back(make_quadratic_cost(p.q[i], p.r[i]));
  }
  return p;
}

inline AggregativeProblem load_aggregative_instance(std::istream& in) {
  detail::expect_header(in, "aggregative");
  AggregativeProblem p;
  p.n_agents = detail::read_int_field(in, "n_agents");
  p.agg_dim = detail::read_int_field(in, "dim");
  p.omega = detail::read_double_field(in, "omega");
  p.local_dims.assign(p.n_agents, p.agg_dim);
  in.ignore();
  for (int i = 0; i < p.n_agents; ++i) {
    detail::expect_block(in, "Q", i);
    p.q.push_back(load_matrix_csv(in, p.agg_dim, p.agg_dim));
    detail::expect_block(in, "r", i);
    p.r.push_back(load_vector_csv(in, p.agg_dim));
    detail::expect_block(in, "t", i);
    p.targets.push_back(load_vector_csv(in, p.agg_dim));
    p.costs.push_back(detail::quadratic_tracking_cost(p.q[i], p.r[i], p.targets[i], p.omega));
    p.contributions.push_back(identity_contribution(p.agg_dim));
  }
  return p;
}

inline AggregativeGame load_game_instance(std::istream& in) {
  detail::expect_header(in, "game");
  AggregativeGame p;
  p.n_agents = detail::read_int_field(in, "n_agents");
  p.agg_dim = detail::read_int_field(in, "dim");
  p.constraint_dim = detail::read_int_field(in, "constraint_dim");
  p.omega = detail::read_double_field(in, "omega");
  p.local_dims.assign(p.n_agents, p.agg_dim);
  in.ignore();
  for (int i = 0; i < p.n_agents; ++i) {
    detail::expect_block(in, "Q", i);
    p.q.push_back(load_matrix_csv(in, p.agg_dim, p.agg_dim));
    detail::expect_block(in, "r", i);
    p.r.push_back(load_vector_csv(in, p.agg_dim));
    detail::expect_block(in, "A", i);
    p.a.push_back(load_matrix_csv(in, p.constraint_dim, p.agg_dim));
    detail::expect_block(in, "b", i);
    p.b.push_back(load_vector_csv(in, p.constraint_dim));
    p.costs.push_back(detail::quadratic_game_cost(p.q[i], p.r[i], p.omega));
    p.contributions.push_back(identity_contribution(p.agg_dim));
  }
  return p;
}

}  // namespace twoscale

#endif  // TWOSCALE_PROBLEMS_HPP
