// Centralized optimization-oriented building blocks.
//
// Every block exposes the same surface: a per-agent update chi_i+ =
// g_i(chi_i, alpha) driven by an aggregate alpha, the exact aggregate
// alpha(chi) a central aggregator would compute, and per-agent tracker
// signals whose network mean reproduces each aggregate component. Components
// that are sums (constraint residuals, gradient sums) are fed to trackers as
// N times the local contribution, so trackers uniformly estimate means.
#ifndef TWOSCALE_BLOCKS_HPP
#define TWOSCALE_BLOCKS_HPP

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "twoscale/problems.hpp"
#include "twoscale/trace.hpp"
#include "twoscale/types.hpp"

namespace twoscale {

struct BlockParams {
  double gamma = 0.1;  // step size
  double nu = 1.0;     // multiplier disagreement weight (constrained blocks)
  double rho = 1.0;    // one-sided quadratic penalty weight
};

// --- one-sided quadratic penalty -------------------------------------------

/// Scalar penalty: v*l + rho/2 v^2 on the branch rho*v + l >= 0, else
/// -l^2/(2 rho). Values and both derivatives are continuous across the
/// switching surface rho*v + l = 0; ties evaluate the quadratic branch.
inline double h_rho(double v, double lambda, double rho) {
  require(rho > 0.0, "h_rho: rho must be positive");
  if (rho * v + lambda >= 0.0) return v * lambda + 0.5 * rho * v * v;
  return -lambda * lambda / (2.0 * rho);
}

/// Componentwise sum of h_rho over a vector pair.
inline double h_rho_sum(const Vec& v, const Vec& lambda, double rho) {
  require(v.size() == lambda.size(), "h_rho_sum: dimension mismatch");
  double total = 0.0;
  for (Eigen::Index k = 0; k < v.size(); ++k) total += h_rho(v(k), lambda(k), rho);
  return total;
}

/// Partial gradients of the summed penalty, componentwise:
/// (lambda + rho v, v) on the active branch, (0, -lambda/rho) otherwise.
inline std::pair<Vec, Vec> grad_h_rho(const Vec& v, const Vec& lambda, double rho) {
  require(rho > 0.0, "grad_h_rho: rho must be positive");
  require(v.size() == lambda.size(), "grad_h_rho: dimension mismatch");
  Vec g1(v.size()), g2(v.size());
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (rho * v(k) + lambda(k) >= 0.0) {
      g1(k) = lambda(k) + rho * v(k);
      g2(k) = v(k);
    } else {
      g1(k) = 0.0;
      g2(k) = -lambda(k) / rho;
    }
  }
  return {std::move(g1), std::move(g2)};
}

// --- aggregates -------------------------------------------------------------

/// Exact aggregate alpha(chi): one vector per component, shared by all
/// agents. Distributed runs replace it with per-agent estimates.
struct Aggregate {
  std::vector<Vec> comp;
};

/// Declared aggregation signature of a block. `nested` marks the two-level
/// structure where component 1 is a mean of signals that themselves depend
/// on component 0 (handled by a cascade tracker).
struct AggregateSpec {
  std::vector<int> dims;
  bool nested = false;
};

namespace detail {
/// Per-agent offsets into the stacked state.
struct StateLayout {
  std::vector<int> offset;
  std::vector<int> dim;
  int total = 0;
};

inline StateLayout layout_of(const std::vector<int>& dims) {
  StateLayout l;
  l.offset.resize(dims.size());
  l.dim = dims;
  int acc = 0;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    l.offset[i] = acc;
    acc += dims[i];
  }
  l.total = acc;
  return l;
}
}  // namespace detail

// --- consensus optimization block -------------------------------------------

/// Gradient step on the augmented consensus cost: every agent moves toward
/// the network mean and descends the total gradient evaluated at that mean.
/// alpha_1 = mean of chi_i, alpha_2 = sum_j grad f_j(alpha_1).
class ConsensusBlock {
 public:
  static constexpr bool has_multiplier = false;

  ConsensusBlock(const ConsensusProblem* problem, BlockParams params)
      : problem_(problem), params_(params) {
    require(problem_ != nullptr, "ConsensusBlock: null problem");
    require(params_.gamma >= 0.0, "ConsensusBlock: gamma must be nonnegative");
    require(problem_->nu > 0.0, "ConsensusBlock: problem nu must be positive");
    layout_ = detail::layout_of(std::vector<int>(problem_->n_agents, problem_->dim));
  }

  int n_agents() const { return problem_->n_agents; }
  int state_dim() const { return layout_.total; }
  int agent_dim(int i) const { return layout_.dim[i]; }
  const detail::StateLayout& layout() const { return layout_; }
  const BlockParams& params() const { return params_; }
  const ConsensusProblem& problem() const { return *problem_; }

  AggregateSpec aggregate_spec() const { return {{problem_->dim, problem_->dim}, true}; }

  Aggregate exact_aggregate(const Vec& chi) const {
    require(chi.size() == layout_.total, "ConsensusBlock: state dimension mismatch");
    Vec mean = Vec::Zero(problem_->dim);
    for (int i = 0; i < n_agents(); ++i) mean += agent_view(chi, i);
    mean /= static_cast<double>(n_agents());
    Vec grad_sum = Vec::Zero(problem_->dim);
    for (int i = 0; i < n_agents(); ++i) grad_sum += problem_->costs[i].grad(mean);
    return Aggregate{{mean, grad_sum}};
  }

  Vec agent_step(int i, const Vec& chi_i, const std::vector<Vec>& alpha) const {
    require(alpha.size() == 2 && alpha[0].size() == problem_->dim &&
                alpha[1].size() == problem_->dim,
            "ConsensusBlock: aggregate dimension mismatch");
    (void)i;
    return chi_i - params_.gamma * (problem_->nu * (chi_i - alpha[0]) + alpha[1]);
  }

  // cascade signals: inner tracks the state mean, outer tracks the gradient
  // sum (signal scaled by N so its mean is the sum)
  Vec inner_signal(int i, const Vec& chi_i) const {
    (void)i;
    return chi_i;
  }
  Vec outer_signal(int i, const Vec& chi_i, const Vec& inner_estimate) const {
    (void)chi_i;
    return static_cast<double>(n_agents()) * problem_->costs[i].grad(inner_estimate);
  }

  Vec output(const Vec& chi) const { return chi; }
  bool admissible_init(const Vec& chi) const { return chi.size() == layout_.total; }

  Eigen::VectorBlock<const Vec> agent_view(const Vec& chi, int i) const {
    return chi.segment(layout_.offset[i], layout_.dim[i]);
  }

  /// Augmented cost value; its stacked gradient is what the exact-aggregate
  /// update descends.
  double augmented_value(const Vec& chi) const {
    const int n = n_agents();
    Vec mean = Vec::Zero(problem_->dim);
    for (int i = 0; i < n; ++i) mean += agent_view(chi, i);
    mean /= static_cast<double>(n);
    double quad = 0.0;
    for (int i = 0; i < n; ++i) quad += (agent_view(chi, i) - mean).squaredNorm();
    double costs = 0.0;
    for (int i = 0; i < n; ++i) costs += problem_->costs[i].value(mean);
    return 0.5 * problem_->nu * quad + static_cast<double>(n) * costs;
  }

 private:
  const ConsensusProblem* problem_;
  BlockParams params_;
  detail::StateLayout layout_;
};

// --- constraint-coupled block -----------------------------------------------

/// Primal-dual step on the augmented Lagrangian with the one-sided quadratic
/// penalty. Per-agent state chi_i = (x_i, lambda_i); alpha_1 = sum_i
/// (A_i x_i - b_i), alpha_2 = mean of lambda_i.
class ConstraintCoupledBlock {
 public:
  static constexpr bool has_multiplier = true;

  ConstraintCoupledBlock(const ConstraintCoupledProblem* problem, BlockParams params)
      : problem_(problem), params_(params) {
    require(problem_ != nullptr, "ConstraintCoupledBlock: null problem");
    require(params_.gamma >= 0.0 && params_.nu > 0.0 && params_.rho > 0.0,
            "ConstraintCoupledBlock: params must be positive");
    std::vector<int> dims;
    for (int i = 0; i < problem_->n_agents; ++i)
      dims.push_back(problem_->local_dims[i] + problem_->constraint_dim);
    layout_ = detail::layout_of(dims);
  }

  int n_agents() const { return problem_->n_agents; }
  int state_dim() const { return layout_.total; }
  int agent_dim(int i) const { return layout_.dim[i]; }
  const detail::StateLayout& layout() const { return layout_; }
  const BlockParams& params() const { return params_; }
  const ConstraintCoupledProblem& problem() const { return *problem_; }

  AggregateSpec aggregate_spec() const {
    return {{problem_->constraint_dim, problem_->constraint_dim}, false};
  }

  Vec x_part(const Vec& chi, int i) const {
    return chi.segment(layout_.offset[i], problem_->local_dims[i]);
  }
  Vec lambda_part(const Vec& chi, int i) const {
    return chi.segment(layout_.offset[i] + problem_->local_dims[i], problem_->constraint_dim);
  }

  Aggregate exact_aggregate(const Vec& chi) const {
    require(chi.size() == layout_.total, "ConstraintCoupledBlock: state dimension mismatch");
    Vec residual = Vec::Zero(problem_->constraint_dim);
    Vec lambda_mean = Vec::Zero(problem_->constraint_dim);
    for (int i = 0; i < n_agents(); ++i) {
      residual += problem_->a[i] * x_part(chi, i) - problem_->b[i];
      lambda_mean += lambda_part(chi, i);
    }
    lambda_mean /= static_cast<double>(n_agents());
    return Aggregate{{residual, lambda_mean}};
  }

  Vec agent_step(int i, const Vec& chi_i, const std::vector<Vec>& alpha) const {
    require(alpha.size() == 2 && alpha[0].size() == problem_->constraint_dim &&
                alpha[1].size() == problem_->constraint_dim,
            "ConstraintCoupledBlock: aggregate dimension mismatch");
    const int nx = problem_->local_dims[i];
    const Vec x = chi_i.head(nx);
    const Vec lambda = chi_i.tail(problem_->constraint_dim);
    const auto [g1, g2] = grad_h_rho(alpha[0], alpha[1], params_.rho);
    Vec next(chi_i.size());
    next.head(nx) =
        x - params_.gamma * (problem_->costs[i].grad(x) + problem_->a[i].transpose() * g1);
    next.tail(problem_->constraint_dim) =
        lambda + params_.gamma * params_.nu * (alpha[1] - lambda) +
        (params_.gamma / static_cast<double>(n_agents())) * g2;
    return next;
  }

  Vec signal(int component, int i, const Vec& chi_i) const {
    const int nx = problem_->local_dims[i];
    if (component == 0)
      return static_cast<double>(n_agents()) * (problem_->a[i] * chi_i.head(nx) - problem_->b[i]);
    if (component == 1) return chi_i.tail(problem_->constraint_dim);
    throw std::invalid_argument("ConstraintCoupledBlock: unknown aggregate component");
  }

  /// Output map keeps the primal part only.
  Vec output(const Vec& chi) const {
    Vec x(problem_->total_dim());
    int at = 0;
    for (int i = 0; i < n_agents(); ++i) {
      x.segment(at, problem_->local_dims[i]) = x_part(chi, i);
      at += problem_->local_dims[i];
    }
    return x;
  }

  /// Initialization contract: multipliers start nonnegative. The update
  /// itself is not clamped; transient negativity is recorded in the trace.
  bool admissible_init(const Vec& chi) const {
    if (chi.size() != layout_.total) return false;
    for (int i = 0; i < n_agents(); ++i)
      if (lambda_part(chi, i).minCoeff() < 0.0) return false;
    return true;
  }

  bool has_negative_multiplier(const Vec& chi) const {
    for (int i = 0; i < n_agents(); ++i)
      if (lambda_part(chi, i).minCoeff() < 0.0) return true;
    return false;
  }

  double constraint_residual_norm(const Vec& chi) const {
    return constraint_residual(*problem_, output(chi)).norm();
  }

 private:
  const ConstraintCoupledProblem* problem_;
  BlockParams params_;
  detail::StateLayout layout_;
};

// --- aggregative optimization block -----------------------------------------

/// Gradient step on f_sigma(x) = sum_i f_i(x_i, sigma(x)). alpha_1 = sigma(x),
/// alpha_2 = mean of grad_s f_j(x_j, alpha_1); the chain-rule term enters as
/// grad phi_i times that mean.
class AggregativeBlock {
 public:
  static constexpr bool has_multiplier = false;

  AggregativeBlock(const AggregativeProblem* problem, BlockParams params)
      : problem_(problem), params_(params) {
    require(problem_ != nullptr, "AggregativeBlock: null problem");
    require(params_.gamma >= 0.0, "AggregativeBlock: gamma must be nonnegative");
    layout_ = detail::layout_of(problem_->local_dims);
  }

  int n_agents() const { return problem_->n_agents; }
  int state_dim() const { return layout_.total; }
  int agent_dim(int i) const { return layout_.dim[i]; }
  const detail::StateLayout& layout() const { return layout_; }
  const BlockParams& params() const { return params_; }
  const AggregativeProblem& problem() const { return *problem_; }

  AggregateSpec aggregate_spec() const { return {{problem_->agg_dim, problem_->agg_dim}, true}; }

  Aggregate exact_aggregate(const Vec& chi) const {
    require(chi.size() == layout_.total, "AggregativeBlock: state dimension mismatch");
    const Vec s = sigma(*problem_, chi);
    Vec grad_mean = Vec::Zero(problem_->agg_dim);
    for (int i = 0; i < n_agents(); ++i)
      grad_mean += problem_->costs[i].grad_s(agent_view(chi, i), s);
    grad_mean /= static_cast<double>(n_agents());
    return Aggregate{{s, grad_mean}};
  }

  Vec agent_step(int i, const Vec& chi_i, const std::vector<Vec>& alpha) const {
    require(alpha.size() == 2 && alpha[0].size() == problem_->agg_dim &&
                alpha[1].size() == problem_->agg_dim,
            "AggregativeBlock: aggregate dimension mismatch");
    const Vec grad_local = problem_->costs[i].grad_x(chi_i, alpha[0]);
    const Mat jac = problem_->contributions[i].grad(chi_i);
    return chi_i - params_.gamma * (grad_local + jac * alpha[1]);
  }

  Vec inner_signal(int i, const Vec& chi_i) const { return problem_->contributions[i].value(chi_i); }
  Vec outer_signal(int i, const Vec& chi_i, const Vec& inner_estimate) const {
    return problem_->costs[i].grad_s(chi_i, inner_estimate);
  }

  Vec output(const Vec& chi) const { return chi; }
  bool admissible_init(const Vec& chi) const { return chi.size() == layout_.total; }

  Eigen::VectorBlock<const Vec> agent_view(const Vec& chi, int i) const {
    return chi.segment(layout_.offset[i], layout_.dim[i]);
  }

  double total_value(const Vec& chi) const {
    const Vec s = sigma(*problem_, chi);
    double total = 0.0;
    for (int i = 0; i < n_agents(); ++i) total += problem_->costs[i].value(agent_view(chi, i), s);
    return total;
  }

 private:
  const AggregativeProblem* problem_;
  BlockParams params_;
  detail::StateLayout layout_;
};

// --- aggregative game block ---------------------------------------------------

/// Equilibrium-seeking primal-dual step: the pseudo-gradient of each player
/// plus the shared penalty on the coupling constraint. alpha_1 = sigma(x),
/// alpha_2 = mean of lambda_i, alpha_3 = sum_i (A_i x_i - b_i).
class GameBlock {
 public:
  static constexpr bool has_multiplier = true;

  GameBlock(const AggregativeGame* problem, BlockParams params)
      : problem_(problem), params_(params) {
    require(problem_ != nullptr, "GameBlock: null problem");
    require(params_.gamma >= 0.0 && params_.nu > 0.0 && params_.rho > 0.0,
            "GameBlock: params must be positive");
    std::vector<int> dims;
    for (int i = 0; i < problem_->n_agents; ++i)
      dims.push_back(problem_->local_dims[i] + problem_->constraint_dim);
    layout_ = detail::layout_of(dims);
  }

  int n_agents() const { return problem_->n_agents; }
  int state_dim() const { return layout_.total; }
  int agent_dim(int i) const { return layout_.dim[i]; }
  const detail::StateLayout& layout() const { return layout_; }
  const BlockParams& params() const { return params_; }
  const AggregativeGame& problem() const { return *problem_; }

  AggregateSpec aggregate_spec() const {
    return {{problem_->agg_dim, problem_->constraint_dim, problem_->constraint_dim}, false};
  }

  Vec x_part(const Vec& chi, int i) const {
    return chi.segment(layout_.offset[i], problem_->local_dims[i]);
  }
  Vec lambda_part(const Vec& chi, int i) const {
    return chi.segment(layout_.offset[i] + problem_->local_dims[i], problem_->constraint_dim);
  }

  /// Player i's pseudo-gradient G_i(x_i, s).
  Vec pseudo_gradient(int i, const Vec& x_i, const Vec& s) const {
    const Mat jac = problem_->contributions[i].grad(x_i);
    return problem_->costs[i].grad_x(x_i, s) +
           jac * problem_->costs[i].grad_s(x_i, s) / static_cast<double>(n_agents());
  }

  Aggregate exact_aggregate(const Vec& chi) const {
    require(chi.size() == layout_.total, "GameBlock: state dimension mismatch");
    Vec s = Vec::Zero(problem_->agg_dim);
    Vec lambda_mean = Vec::Zero(problem_->constraint_dim);
    Vec residual = Vec::Zero(problem_->constraint_dim);
    for (int i = 0; i < n_agents(); ++i) {
      s += problem_->contributions[i].value(x_part(chi, i));
      lambda_mean += lambda_part(chi, i);
      residual += problem_->a[i] * x_part(chi, i) - problem_->b[i];
    }
    s /= static_cast<double>(n_agents());
    lambda_mean /= static_cast<double>(n_agents());
    return Aggregate{{s, lambda_mean, residual}};
  }

  Vec agent_step(int i, const Vec& chi_i, const std::vector<Vec>& alpha) const {
    require(alpha.size() == 3 && alpha[0].size() == problem_->agg_dim &&
                alpha[1].size() == problem_->constraint_dim &&
                alpha[2].size() == problem_->constraint_dim,
            "GameBlock: aggregate dimension mismatch");
    const int nx = problem_->local_dims[i];
    const Vec x = chi_i.head(nx);
    const Vec lambda = chi_i.tail(problem_->constraint_dim);
    const auto [g1, g2] = grad_h_rho(alpha[2], alpha[1], params_.rho);
    Vec next(chi_i.size());
    next.head(nx) = x - params_.gamma * (pseudo_gradient(i, x, alpha[0]) +
                                         problem_->a[i].transpose() * g1);
    next.tail(problem_->constraint_dim) =
        lambda + params_.gamma * params_.nu * (alpha[1] - lambda) +
        (params_.gamma / static_cast<double>(n_agents())) * g2;
    return next;
  }

  Vec signal(int component, int i, const Vec& chi_i) const {
    const int nx = problem_->local_dims[i];
    if (component == 0) return problem_->contributions[i].value(chi_i.head(nx));
    if (component == 1) return chi_i.tail(problem_->constraint_dim);
    if (component == 2)
      return static_cast<double>(n_agents()) * (problem_->a[i] * chi_i.head(nx) - problem_->b[i]);
    throw std::invalid_argument("GameBlock: unknown aggregate component");
  }

  Vec output(const Vec& chi) const {
    Vec x(problem_->total_dim());
    int at = 0;
    for (int i = 0; i < n_agents(); ++i) {
      x.segment(at, problem_->local_dims[i]) = x_part(chi, i);
      at += problem_->local_dims[i];
    }
    return x;
  }

  bool admissible_init(const Vec& chi) const {
    if (chi.size() != layout_.total) return false;
    for (int i = 0; i < n_agents(); ++i)
      if (lambda_part(chi, i).minCoeff() < 0.0) return false;
    return true;
  }

  bool has_negative_multiplier(const Vec& chi) const {
    for (int i = 0; i < n_agents(); ++i)
      if (lambda_part(chi, i).minCoeff() < 0.0) return true;
    return false;
  }

  double constraint_residual_norm(const Vec& chi) const {
    return constraint_residual(*problem_, output(chi)).norm();
  }

 private:
  const AggregativeGame* problem_;
  BlockParams params_;
  detail::StateLayout layout_;
};

// --- centralized reference run ------------------------------------------------

struct CentralizedOptions {
  int record_every = 1;
  double divergence_threshold = 1e12;
  double stop_tol = 0.0;  // > 0: stop early once the step change falls below it
  Vec chi_star;           // optional reference point for opt_err (empty = NaN)
};

namespace detail {
template <class Block>
TraceRow make_row(const Block& block, const Vec& chi, long t, double track_err,
                  const Vec& chi_star) {
  TraceRow row;
  row.t = t;
  row.state = chi;
  row.opt_err = chi_star.size() > 0 ? (chi - chi_star).norm()
                                    : std::numeric_limits<double>::quiet_NaN();
  row.track_err = track_err;
  if constexpr (Block::has_multiplier) {
    row.constr_res = block.constraint_residual_norm(chi);
    row.lambda_neg = block.has_negative_multiplier(chi) ? 1 : 0;
  }
  return row;
}
}  // namespace detail

/// Iterates chi+ = g(chi, 1 alpha(chi)) with the exact aggregate. Throws
/// DivergenceError when the state norm exceeds the threshold or turns
/// non-finite.
template <class Block>
RunTrace run_centralized(const Block& block, const Vec& init, long iterations,
                         const CentralizedOptions& opts = {}) {
  require(block.admissible_init(init), "run_centralized: init violates the state contract");
  require(iterations >= 0, "run_centralized: negative horizon");
  RunTrace trace;
  Vec chi = init;
  trace.rows.push_back(detail::make_row(block, chi, 0, 0.0, opts.chi_star));
  for (long t = 1; t <= iterations; ++t) {
    const Aggregate alpha = block.exact_aggregate(chi);
    Vec next(chi.size());
    for (int i = 0; i < block.n_agents(); ++i) {
      const auto& l = block.layout();
      next.segment(l.offset[i], l.dim[i]) =
          block.agent_step(i, chi.segment(l.offset[i], l.dim[i]), alpha.comp);
    }
    const double change = (next - chi).cwiseAbs().maxCoeff();
    chi = std::move(next);
    if (!chi.allFinite() || chi.norm() > opts.divergence_threshold)
      throw DivergenceError("run_centralized: state norm exceeded divergence threshold", t);
    const bool stopping = opts.stop_tol > 0.0 && change <= opts.stop_tol;
    if (t % opts.record_every == 0 || t == iterations || stopping)
      trace.rows.push_back(detail::make_row(block, chi, t, 0.0, opts.chi_star));
    if (stopping) break;
  }
  return trace;
}

/// Single centralized step of the stacked state (used by tests and the
/// double-loop reference mode).
template <class Block>
Vec centralized_step(const Block& block, const Vec& chi) {
  const Aggregate alpha = block.exact_aggregate(chi);
  Vec next(chi.size());
  for (int i = 0; i < block.n_agents(); ++i) {
    const auto& l = block.layout();
    next.segment(l.offset[i], l.dim[i]) =
        block.agent_step(i, chi.segment(l.offset[i], l.dim[i]), alpha.comp);
  }
  return next;
}

}  // namespace twoscale

#endif  // TWOSCALE_BLOCKS_HPP
