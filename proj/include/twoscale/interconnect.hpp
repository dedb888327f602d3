// Interconnection of an optimization-oriented block with consensus-oriented
// trackers: the distributed meta-algorithm.
//
// Each step performs, simultaneously,
//   chi_i+ = chi_i + delta (g_i(chi_i, proxy_i(chi_i, z_i)) - chi_i)
//   z+     = tracker update driven by the signals u(chi)
// where every proxy is evaluated from the current tracker state, so agents
// only ever touch their own state and their neighbors' tracker variables.
// Tracker signals are re-evaluated from the current chi each step; the
// sum-versus-mean scaling lives in the block signal definitions.
#ifndef TWOSCALE_INTERCONNECT_HPP
#define TWOSCALE_INTERCONNECT_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "twoscale/blocks.hpp"
#include "twoscale/trace.hpp"
#include "twoscale/trackers.hpp"
#include "twoscale/types.hpp"

namespace twoscale {

template <class Block>
concept NestedSignalBlock = requires(const Block& b, const Vec& v) {
  { b.inner_signal(0, v) } -> std::convertible_to<Vec>;
  { b.outer_signal(0, v, v) } -> std::convertible_to<Vec>;
};

/// Per-agent aggregate estimates: comp[k] has one row per agent.
struct AgentEstimates {
  std::vector<Mat> comp;

  Vec agent_row(int i) const {
    int total = 0;
    for (const Mat& m : comp) total += static_cast<int>(m.cols());
    Vec out(total);
    int at = 0;
    for (const Mat& m : comp) {
      out.segment(at, m.cols()) = m.row(i).transpose();
      at += static_cast<int>(m.cols());
    }
    return out;
  }

  Vec stacked() const {
    const int n = static_cast<int>(comp.front().rows());
    int per_agent = 0;
    for (const Mat& m : comp) per_agent += static_cast<int>(m.cols());
    Vec out(n * per_agent);
    for (int i = 0; i < n; ++i) out.segment(i * per_agent, per_agent) = agent_row(i);
    return out;
  }
};

/// Diagnostic metric in tracker error coordinates: the distance between the
/// projected tracker state and its chi-parametrized equilibrium,
/// | T_perp z - z_eq(chi) | with z_eq(chi) = -T_perp u(chi). Requires
/// perturbed-consensus streams; `stream_order` lists, per agent, which
/// stream fills each slot of the interleaved stack.
struct ErrorCoordinateMetric {
  Mat t_perp;
  std::vector<int> stream_order;
  std::function<Vec(const Vec&)> equilibrium_stack;  // u(chi), per-agent interleaved
};

template <class Block>
class DistributedAlgorithm {
 public:
  DistributedAlgorithm(Block block, std::vector<Tracker> streams, double delta)
      : block_(std::move(block)), streams_(std::move(streams)), delta_(delta) {
    require(delta_ >= 0.0 && delta_ <= 1.0, "assemble: delta must lie in [0, 1]");
    const AggregateSpec spec = block_.aggregate_spec();
    require(!spec.nested,
            "assemble: this block has a nested aggregation; bind a cascade tracker instead");
    require(streams_.size() == spec.dims.size(),
            "assemble: expected " + std::to_string(spec.dims.size()) + " tracker streams, got " +
                std::to_string(streams_.size()));
    for (std::size_t k = 0; k < streams_.size(); ++k) {
      if (tracker_signal_dim(streams_[k]) != spec.dims[k])
        throw std::invalid_argument(
            "assemble: aggregate component " + std::to_string(k) + " has dimension " +
            std::to_string(spec.dims[k]) + " but its tracker carries " +
            std::to_string(tracker_signal_dim(streams_[k])));
      if (tracker_agents(streams_[k]) != block_.n_agents())
        throw std::invalid_argument("assemble: aggregate component " + std::to_string(k) +
                                    " tracker has the wrong number of agents");
    }
  }

  DistributedAlgorithm(Block block, CascadeTracker cascade, double delta)
      : block_(std::move(block)), cascade_(std::move(cascade)), delta_(delta) {
    require(delta_ >= 0.0 && delta_ <= 1.0, "assemble: delta must lie in [0, 1]");
    const AggregateSpec spec = block_.aggregate_spec();
    require(spec.nested, "assemble: this block has a flat aggregation; bind one tracker per "
                         "component instead of a cascade");
    if (tracker_signal_dim(cascade_->inner) != spec.dims[0])
      throw std::invalid_argument("assemble: aggregate component 0 (inner) has dimension " +
                                  std::to_string(spec.dims[0]) + " but its tracker carries " +
                                  std::to_string(tracker_signal_dim(cascade_->inner)));
    if (tracker_signal_dim(cascade_->outer) != spec.dims[1])
      throw std::invalid_argument("assemble: aggregate component 1 (outer) has dimension " +
                                  std::to_string(spec.dims[1]) + " but its tracker carries " +
                                  std::to_string(tracker_signal_dim(cascade_->outer)));
    if (tracker_agents(cascade_->inner) != block_.n_agents() ||
        tracker_agents(cascade_->outer) != block_.n_agents())
      throw std::invalid_argument("assemble: cascade tracker has the wrong number of agents");
  }

  const Block& block() const { return block_; }
  double delta() const { return delta_; }
  const std::vector<Tracker>& streams() const { return streams_; }
  const CascadeTracker& cascade() const { return *cascade_; }
  bool nested() const { return cascade_.has_value(); }

  void reset() {
    for (auto& t : streams_) tracker_reset(t);
    if (cascade_) {
      tracker_reset(cascade_->inner);
      tracker_reset(cascade_->outer);
    }
  }

  /// Current per-agent aggregate estimates alpha_hat(chi, z).
  AgentEstimates proxies(const Vec& chi) const {
    AgentEstimates est;
    if constexpr (NestedSignalBlock<Block>) {
      const Mat u_inner = inner_signals(chi);
      const Mat p_inner = tracker_proxies(cascade_->inner, u_inner);
      const Mat u_outer = outer_signals(chi, p_inner);
      est.comp = {p_inner, tracker_proxies(cascade_->outer, u_outer)};
    } else {
      for (std::size_t k = 0; k < streams_.size(); ++k)
        est.comp.push_back(tracker_proxies(streams_[k], component_signals(static_cast<int>(k), chi)));
    }
    return est;
  }

  /// Full block update g(chi, alpha_hat) without the delta blend.
  Vec block_update(const Vec& chi, const AgentEstimates& est) const {
    const auto& layout = block_.layout();
    Vec next(chi.size());
    std::vector<Vec> alpha_i(est.comp.size());
    for (int i = 0; i < block_.n_agents(); ++i) {
      for (std::size_t k = 0; k < est.comp.size(); ++k)
        alpha_i[k] = est.comp[k].row(i).transpose();
      next.segment(layout.offset[i], layout.dim[i]) =
          block_.agent_step(i, chi.segment(layout.offset[i], layout.dim[i]), alpha_i);
    }
    return next;
  }

  /// Advances the trackers one round with signals evaluated at chi.
  void advance_trackers(const Vec& chi) {
    if constexpr (NestedSignalBlock<Block>) {
      const Mat u_inner = inner_signals(chi);
      const Mat p_inner = tracker_proxies(cascade_->inner, u_inner);
      const Mat u_outer = outer_signals(chi, p_inner);
      tracker_step(cascade_->inner, u_inner);
      tracker_step(cascade_->outer, u_outer);
    } else {
      for (std::size_t k = 0; k < streams_.size(); ++k)
        tracker_step(streams_[k], component_signals(static_cast<int>(k), chi));
    }
  }

  /// One simultaneous step; returns chi+ and advances the tracker states.
  Vec step(const Vec& chi) {
    const AgentEstimates est = proxies(chi);
    const Vec applied = block_update(chi, est);
    Vec next = chi + delta_ * (applied - chi);
    advance_trackers(chi);
    return next;
  }

 private:
  Mat inner_signals(const Vec& chi) const {
    const auto& layout = block_.layout();
    Mat u(block_.n_agents(), tracker_signal_dim(cascade_->inner));
    for (int i = 0; i < block_.n_agents(); ++i)
      u.row(i) =
          block_.inner_signal(i, Vec(chi.segment(layout.offset[i], layout.dim[i]))).transpose();
    return u;
  }

  Mat outer_signals(const Vec& chi, const Mat& inner_prox) const {
    const auto& layout = block_.layout();
    Mat u(block_.n_agents(), tracker_signal_dim(cascade_->outer));
    for (int i = 0; i < block_.n_agents(); ++i)
      u.row(i) = block_
                     .outer_signal(i, Vec(chi.segment(layout.offset[i], layout.dim[i])),
                                   Vec(inner_prox.row(i).transpose()))
                     .transpose();
    return u;
  }

  Mat component_signals(int k, const Vec& chi) const {
    const auto& layout = block_.layout();
    Mat u(block_.n_agents(), tracker_signal_dim(streams_[k]));
    for (int i = 0; i < block_.n_agents(); ++i)
      u.row(i) =
          block_.signal(k, i, Vec(chi.segment(layout.offset[i], layout.dim[i]))).transpose();
    return u;
  }

  Block block_;
  std::vector<Tracker> streams_;
  std::optional<CascadeTracker> cascade_;
  double delta_ = 0.1;
};

template <class Block>
DistributedAlgorithm<Block> assemble(Block block, std::vector<Tracker> streams, double delta) {
  return DistributedAlgorithm<Block>(std::move(block), std::move(streams), delta);
}

template <class Block>
DistributedAlgorithm<Block> assemble(Block block, CascadeTracker cascade, double delta) {
  return DistributedAlgorithm<Block>(std::move(block), std::move(cascade), delta);
}

// --- runs -------------------------------------------------------------------

struct RunOptions {
  int record_every = 1;
  double divergence_threshold = 1e12;
  Vec chi_star;                                      // empty -> opt_err is NaN
  std::optional<ErrorCoordinateMetric> error_coords;  // default: proxy deviation
  bool record_state = true;
};

namespace detail {

template <class Block>
double proxy_deviation(const Block& block, const Vec& chi, const AgentEstimates& est) {
  const Aggregate exact = block.exact_aggregate(chi);
  double worst = 0.0;
  for (int i = 0; i < block.n_agents(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < est.comp.size(); ++k)
      acc += (est.comp[k].row(i).transpose() - exact.comp[k]).squaredNorm();
    worst = std::max(worst, std::sqrt(acc));
  }
  return worst;
}

template <class Block>
double error_coordinate_value(const DistributedAlgorithm<Block>& alg,
                              const ErrorCoordinateMetric& metric, const Vec& chi) {
  std::vector<const Mat*> states;
  for (int s : metric.stream_order) {
    const Mat* z = perturbed_state(alg.streams().at(s));
    require(z != nullptr, "error coordinates require perturbed-consensus streams");
    states.push_back(z);
  }
  const int n = alg.block().n_agents();
  int per_agent = 0;
  for (const Mat* z : states) per_agent += static_cast<int>(z->cols());
  Vec z_stack(n * per_agent);
  for (int i = 0; i < n; ++i) {
    int at = i * per_agent;
    for (const Mat* z : states) {
      z_stack.segment(at, z->cols()) = z->row(i).transpose();
      at += static_cast<int>(z->cols());
    }
  }
  const Vec z_eq = -(metric.t_perp * metric.equilibrium_stack(chi));
  return (metric.t_perp * z_stack - z_eq).norm();
}

template <class Block>
TraceRow distributed_row(const DistributedAlgorithm<Block>& alg, const RunOptions& opts, long t,
                         const Vec& chi, const AgentEstimates& est) {
  TraceRow row;
  row.t = t;
  if (opts.record_state) {
    row.state = chi;
    row.proxies = est.stacked();
  }
  row.opt_err = opts.chi_star.size() > 0 ? (chi - opts.chi_star).norm()
                                         : std::numeric_limits<double>::quiet_NaN();
  row.track_err = opts.error_coords
                      ? error_coordinate_value(alg, *opts.error_coords, chi)
                      : proxy_deviation(alg.block(), chi, est);
  if constexpr (Block::has_multiplier) {
    row.constr_res = alg.block().constraint_residual_norm(chi);
    row.lambda_neg = alg.block().has_negative_multiplier(chi) ? 1 : 0;
  }
  return row;
}

}  // namespace detail

/// Deterministic distributed run from a fresh tracker state. A divergence
/// event (non-finite state or norm above the threshold) truncates the trace
/// and sets the flag instead of throwing.
template <class Block>
RunTrace run(DistributedAlgorithm<Block>& alg, const Vec& init, long horizon,
             const RunOptions& opts = {}) {
  require(alg.block().admissible_init(init), "run: init violates the block state contract");
  require(horizon >= 0, "run: negative horizon");
  require(opts.record_every >= 1, "run: record_every must be positive");
  alg.reset();
  RunTrace trace;
  Vec chi = init;
  for (long t = 0; t <= horizon; ++t) {
    const AgentEstimates est = alg.proxies(chi);
    if (t % opts.record_every == 0 || t == horizon)
      trace.rows.push_back(detail::distributed_row(alg, opts, t, chi, est));
    if (t == horizon) break;
    const Vec applied = alg.block_update(chi, est);
    Vec next = chi + alg.delta() * (applied - chi);
    alg.advance_trackers(chi);
    if (!next.allFinite() || next.norm() > opts.divergence_threshold) {
      trace.diverged = true;
      trace.divergence_iteration = t + 1;
      trace.warnings.push_back("divergence event at iteration " + std::to_string(t + 1));
      break;
    }
    chi = std::move(next);
  }
  return trace;
}

/// Reference double-loop mode: chi is frozen while the tracker iterates to
/// (numerical) stationarity, then one full block step is taken with the
/// converged proxies. Not implementable in a real network; used to validate
/// the interconnection against the centralized method.
template <class Block>
RunTrace run_double_loop(DistributedAlgorithm<Block>& alg, const Vec& init, long outer_iters,
                         long inner_iters, double inner_tol = 1e-10,
                         const RunOptions& opts = {}) {
  require(alg.block().admissible_init(init), "run_double_loop: init violates the state contract");
  require(outer_iters >= 0 && inner_iters >= 0, "run_double_loop: negative iteration count");
  alg.reset();
  RunTrace trace;
  Vec chi = init;
  trace.rows.push_back(detail::distributed_row(alg, opts, 0, chi, alg.proxies(chi)));
  for (long t = 1; t <= outer_iters; ++t) {
    bool inner_converged = (inner_iters == 0);
    Mat prev = alg.proxies(chi).stacked().transpose();
    for (long k = 0; k < inner_iters; ++k) {
      alg.advance_trackers(chi);
      const Mat cur = alg.proxies(chi).stacked().transpose();
      if ((cur - prev).cwiseAbs().maxCoeff() <= inner_tol) {
        inner_converged = true;
        break;
      }
      prev = cur;
    }
    if (!inner_converged)
      trace.warnings.push_back("inner loop did not reach tolerance at outer step " +
                               std::to_string(t));
    const AgentEstimates est = alg.proxies(chi);
    Vec next = alg.block_update(chi, est);
    if (!next.allFinite() || next.norm() > opts.divergence_threshold) {
      trace.diverged = true;
      trace.divergence_iteration = t;
      trace.warnings.push_back("divergence event at outer step " + std::to_string(t));
      break;
    }
    chi = std::move(next);
    if (t % opts.record_every == 0 || t == outer_iters)
      trace.rows.push_back(detail::distributed_row(alg, opts, t, chi, alg.proxies(chi)));
  }
  return trace;
}

/// Empirical probe for the stability margin in delta: returns the largest
/// grid value whose run converges according to the supplied predicate. Not a
/// certified bound; the theory only guarantees that some positive threshold
/// exists.
inline double estimate_delta_bar(const std::function<bool(double)>& converges,
                                 const std::vector<double>& delta_grid) {
  double best = 0.0;
  for (double d : delta_grid) {
    require(d > 0.0 && d <= 1.0, "estimate_delta_bar: grid values must lie in (0, 1]");
    if (converges(d)) best = std::max(best, d);
  }
  return best;
}

}  // namespace twoscale

#endif  // TWOSCALE_INTERCONNECT_HPP
