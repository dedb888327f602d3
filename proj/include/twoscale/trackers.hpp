// Consensus-oriented dynamics (dynamic average consensus trackers).
//
// Every tracker runs synchronous rounds over a fixed graph: given the matrix
// U of per-agent signals (one row per agent), proxies(U) returns each agent's
// current estimate of the network mean of the rows, and step(U) advances the
// tracker state. Proxies are evaluated from the *current* state, which is
// what the interconnected algorithm consumes before the tracker moves.
#ifndef TWOSCALE_TRACKERS_HPP
#define TWOSCALE_TRACKERS_HPP

#include <cmath>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "twoscale/graph.hpp"
#include "twoscale/types.hpp"

namespace twoscale {

// --- perturbed consensus (causal form) ---------------------------------------

/// z_i+ = sum_j w_ij (z_j + u_j) - u_i with the self-weight included, proxy
/// u_i + z_i. Requires zero initialization; 1'z = 0 is preserved by every
/// step because the weights are doubly stochastic.
class PerturbedConsensus {
 public:
  PerturbedConsensus(WeightMatrix weights, int signal_dim)
      : weights_(std::move(weights)), signal_dim_(signal_dim) {
    require(signal_dim >= 1, "PerturbedConsensus: signal_dim must be positive");
    require(weights_.entries.rows() == weights_.entries.cols() && weights_.entries.rows() >= 1,
            "PerturbedConsensus: weight matrix must be square");
    state_ = Mat::Zero(weights_.entries.rows(), signal_dim_);
  }

  int n_agents() const { return static_cast<int>(state_.rows()); }
  int signal_dim() const { return signal_dim_; }
  const Mat& state() const { return state_; }

  Mat proxies(const Mat& signals) const {
    check_signals(signals);
    return signals + state_;
  }

  void step(const Mat& signals) {
    check_signals(signals);
    state_ = weights_.entries * (state_ + signals) - signals;
  }

  void reset() { state_.setZero(); }

 private:
  void check_signals(const Mat& signals) const {
    require(signals.rows() == state_.rows() && signals.cols() == signal_dim_,
            "PerturbedConsensus: signal matrix shape mismatch");
  }

  WeightMatrix weights_;
  int signal_dim_;
  Mat state_;
};

// --- proportional-integral tracker -------------------------------------------

struct PiDacParams {
  double gamma = 0.1;
  double k_p = 0.4;
  double k_i = 0.1;
};

/// Discrete-time PI estimator; unlike the perturbed form it needs no special
/// initialization. State (p_i, q_i) per agent, proxy p_i:
///   p+ = (1-gamma) p - k_p L p + k_i L q + gamma u
///   q+ = q - k_i L p
/// with (L x)_i = sum_j w_ij (x_i - x_j). The proportional path damps
/// disagreement in p while the integral state q cancels the signal spread,
/// with the antisymmetric p/q coupling of the underlying continuous-time
/// estimator. Construction validates the tuning by checking that the linear
/// iteration matrix, restricted to the complement of the invariant q-mean
/// direction, has spectral radius below one.
class PiDac {
 public:
  PiDac(WeightMatrix weights, int signal_dim, PiDacParams params = {})
      : weights_(std::move(weights)), signal_dim_(signal_dim), params_(params) {
    require(signal_dim >= 1, "PiDac: signal_dim must be positive");
    require(params_.gamma > 0.0 && params_.gamma < 1.0, "PiDac: gamma must lie in (0, 1)");
    require(params_.k_p > 0.0 && params_.k_i >= 0.0, "PiDac: gains must be nonnegative, k_p > 0");
    const int n = static_cast<int>(weights_.entries.rows());
    p_ = Mat::Zero(n, signal_dim_);
    q_ = Mat::Zero(n, signal_dim_);
    spectral_radius_ = disagreement_spectral_radius();
    if (spectral_radius_ >= 1.0)
      throw std::invalid_argument(
          "PiDac: unstable tuning (disagreement spectral radius " +
          std::to_string(spectral_radius_) + " >= 1) with gamma=" + std::to_string(params_.gamma) +
          ", k_p=" + std::to_string(params_.k_p) + ", k_i=" + std::to_string(params_.k_i));
  }

  int n_agents() const { return static_cast<int>(p_.rows()); }
  int signal_dim() const { return signal_dim_; }
  const Mat& p_state() const { return p_; }
  const Mat& q_state() const { return q_; }
  double spectral_radius() const { return spectral_radius_; }

  Mat proxies(const Mat& signals) const {
    check_signals(signals);
    return p_;
  }

  void step(const Mat& signals) {
    check_signals(signals);
    const Mat lap_p = p_ - weights_.entries * p_;
    const Mat lap_q = q_ - weights_.entries * q_;
    const Mat p_next =
        (1.0 - params_.gamma) * p_ - params_.k_p * lap_p + params_.k_i * lap_q +
        params_.gamma * signals;
    q_ -= params_.k_i * lap_p;
    p_ = p_next;
  }

  void reset() {
    p_.setZero();
    q_.setZero();
  }

 private:
  void check_signals(const Mat& signals) const {
    require(signals.rows() == p_.rows() && signals.cols() == signal_dim_,
            "PiDac: signal matrix shape mismatch");
  }

  double disagreement_spectral_radius() const {
    const int n = static_cast<int>(weights_.entries.rows());
    const Mat lap = Mat::Identity(n, n) - weights_.entries;
    if (params_.k_i == 0.0) {
      // q is inert; only the p block iterates
      const Mat p_block = (1.0 - params_.gamma) * Mat::Identity(n, n) - params_.k_p * lap;
      return Eigen::EigenSolver<Mat>(p_block, false).eigenvalues().cwiseAbs().maxCoeff();
    }
    Mat m = Mat::Zero(2 * n, 2 * n);
    m.topLeftCorner(n, n) = (1.0 - params_.gamma) * Mat::Identity(n, n) - params_.k_p * lap;
    m.topRightCorner(n, n) = params_.k_i * lap;
    m.bottomLeftCorner(n, n) = -params_.k_i * lap;
    m.bottomRightCorner(n, n) = Mat::Identity(n, n);
    // The q consensus direction (0, 1)/sqrt(n) is invariant with eigenvalue
    // one; restrict to its orthogonal complement via a Householder basis.
    Vec v = Vec::Zero(2 * n);
    v.tail(n).setConstant(1.0 / std::sqrt(static_cast<double>(n)));
    v(0) -= 1.0;
    const Mat house = Mat::Identity(2 * n, 2 * n) - (2.0 / v.squaredNorm()) * v * v.transpose();
    const Mat basis = house.bottomRows(2 * n - 1);
    const Mat restricted = basis * m * basis.transpose();
    return Eigen::EigenSolver<Mat>(restricted, false).eigenvalues().cwiseAbs().maxCoeff();
  }

  WeightMatrix weights_;
  int signal_dim_;
  PiDacParams params_;
  Mat p_;
  Mat q_;
  double spectral_radius_ = 0.0;
};

// --- relaxed ADMM tracker -----------------------------------------------------

struct RAdmmParams {
  double rho = 0.9;
  double beta = 0.5;
};

/// Edge-based tracker derived from relaxed ADMM on the consensus
/// reformulation of averaging. Agent i keeps one variable z_ij per
/// neighbor j:
///   proxy_i = (u_i + sum_j z_ij) / (1 + rho deg_i)
///   z_ij+   = (1-beta) z_ij + beta (-z_ji + 2 rho proxy_j)
/// All proxies are computed from the current state first, then every edge
/// variable updates (synchronous rounds).
class RAdmmDac {
 public:
  RAdmmDac(Graph graph, int signal_dim, RAdmmParams params = {})
      : graph_(std::move(graph)), signal_dim_(signal_dim), params_(params) {
    require(signal_dim >= 1, "RAdmmDac: signal_dim must be positive");
    require(params_.rho > 0.0, "RAdmmDac: rho must be positive");
    require(params_.beta > 0.0 && params_.beta < 1.0, "RAdmmDac: beta must lie in (0, 1)");
    edge_state_.resize(graph_.n_agents);
    reciprocal_.resize(graph_.n_agents);
    for (int i = 0; i < graph_.n_agents; ++i) {
      edge_state_[i] = Mat::Zero(graph_.degrees[i], signal_dim_);
      reciprocal_[i].resize(graph_.degrees[i]);
      for (int k = 0; k < graph_.degrees[i]; ++k) {
        const int j = graph_.neighbors[i][k];
        const auto& back = graph_.neighbors[j];
        reciprocal_[i][k] = static_cast<int>(
            std::lower_bound(back.begin(), back.end(), i) - back.begin());
      }
    }
  }

  int n_agents() const { return graph_.n_agents; }
  int signal_dim() const { return signal_dim_; }
  const std::vector<Mat>& edge_state() const { return edge_state_; }

  Mat proxies(const Mat& signals) const {
    check_signals(signals);
    Mat out(graph_.n_agents, signal_dim_);
    for (int i = 0; i < graph_.n_agents; ++i) {
      Vec acc = signals.row(i).transpose();
      for (int k = 0; k < graph_.degrees[i]; ++k) acc += edge_state_[i].row(k).transpose();
      out.row(i) = acc.transpose() / (1.0 + params_.rho * graph_.degrees[i]);
    }
    return out;
  }

  void step(const Mat& signals) {
    const Mat prox = proxies(signals);
    std::vector<Mat> next = edge_state_;
    for (int i = 0; i < graph_.n_agents; ++i) {
      for (int k = 0; k < graph_.degrees[i]; ++k) {
        const int j = graph_.neighbors[i][k];
        const Vec z_ji = edge_state_[j].row(reciprocal_[i][k]).transpose();
        next[i].row(k) = (1.0 - params_.beta) * edge_state_[i].row(k) +
                         params_.beta * (-z_ji.transpose() + 2.0 * params_.rho * prox.row(j));
      }
    }
    edge_state_ = std::move(next);
  }

  void reset() {
    for (auto& m : edge_state_) m.setZero();
  }

 private:
  void check_signals(const Mat& signals) const {
    require(signals.rows() == graph_.n_agents && signals.cols() == signal_dim_,
            "RAdmmDac: signal matrix shape mismatch");
  }

  Graph graph_;
  int signal_dim_;
  RAdmmParams params_;
  std::vector<Mat> edge_state_;          // row k of entry i is z_{i, neighbors[i][k]}
  std::vector<std::vector<int>> reciprocal_;  // position of i in neighbors[j]
};

// --- exact-aggregate stub -----------------------------------------------------

/// Reference stub standing in for a tracker: every proxy equals the exact
/// network mean of the current signals, with no internal state. Substituting
/// it (with delta = 1) reduces a distributed assembly to the centralized
/// method.
class ExactAverage {
 public:
  ExactAverage(int n_agents, int signal_dim) : n_agents_(n_agents), signal_dim_(signal_dim) {
    require(n_agents >= 1 && signal_dim >= 1, "ExactAverage: positive dimensions required");
  }

  int n_agents() const { return n_agents_; }
  int signal_dim() const { return signal_dim_; }

  Mat proxies(const Mat& signals) const {
    require(signals.rows() == n_agents_ && signals.cols() == signal_dim_,
            "ExactAverage: signal matrix shape mismatch");
    const Vec mean = signals.colwise().mean().transpose();
    Mat out(n_agents_, signal_dim_);
    out.rowwise() = mean.transpose();
    return out;
  }

  void step(const Mat&) {}
  void reset() {}

 private:
  int n_agents_;
  int signal_dim_;
};

// --- variant interface ---------------------------------------------------------

using Tracker = std::variant<PerturbedConsensus, PiDac, RAdmmDac, ExactAverage>;

inline Mat tracker_proxies(const Tracker& tracker, const Mat& signals) {
  return std::visit([&](const auto& t) { return t.proxies(signals); }, tracker);
}

inline void tracker_step(Tracker& tracker, const Mat& signals) {
  std::visit([&](auto& t) { t.step(signals); }, tracker);
}

inline void tracker_reset(Tracker& tracker) {
  std::visit([](auto& t) { t.reset(); }, tracker);
}

inline int tracker_agents(const Tracker& tracker) {
  return std::visit([](const auto& t) { return t.n_agents(); }, tracker);
}

inline int tracker_signal_dim(const Tracker& tracker) {
  return std::visit([](const auto& t) { return t.signal_dim(); }, tracker);
}

/// Internal state of a perturbed-consensus tracker, or nullptr for other
/// variants. Used by the error-coordinate diagnostics.
inline const Mat* perturbed_state(const Tracker& tracker) {
  if (const auto* p = std::get_if<PerturbedConsensus>(&tracker)) return &p->state();
  return nullptr;
}

// --- cascade for composite aggregations -----------------------------------------

/// Two trackers in series for two-level aggregations: the inner stage tracks
/// the mean of inner signals, and its per-agent proxy feeds the outer
/// signals, whose mean the outer stage tracks.
struct CascadeTracker {
  Tracker inner;
  Tracker outer;
};

/// One synchronous cascade round. `inner_signals` holds the per-agent inner
/// contributions; `outer_signal_fn(i, inner_proxy_row)` produces agent i's
/// outer contribution from its current inner estimate. Returns the proxy
/// pair evaluated before the state advance.
template <class OuterSignalFn>
std::pair<Mat, Mat> cascade_proxies(const CascadeTracker& cascade, const Mat& inner_signals,
                                    OuterSignalFn&& outer_signal_fn) {
  const Mat inner_prox = tracker_proxies(cascade.inner, inner_signals);
  const int n = static_cast<int>(inner_prox.rows());
  Mat outer_signals(n, tracker_signal_dim(cascade.outer));
  for (int i = 0; i < n; ++i) {
    const Vec row = outer_signal_fn(i, Vec(inner_prox.row(i).transpose()));
    require(row.size() == outer_signals.cols(), "cascade: outer signal dimension mismatch");
    outer_signals.row(i) = row.transpose();
  }
  return {inner_prox, tracker_proxies(cascade.outer, outer_signals)};
}

template <class OuterSignalFn>
void cascade_step(CascadeTracker& cascade, const Mat& inner_signals,
                  OuterSignalFn&& outer_signal_fn) {
  require(tracker_agents(cascade.inner) == tracker_agents(cascade.outer),
          "cascade: stages must share the graph size");
  const Mat inner_prox = tracker_proxies(cascade.inner, inner_signals);
  const int n = static_cast<int>(inner_prox.rows());
  Mat outer_signals(n, tracker_signal_dim(cascade.outer));
  for (int i = 0; i < n; ++i)
    outer_signals.row(i) = outer_signal_fn(i, Vec(inner_prox.row(i).transpose())).transpose();
  tracker_step(cascade.inner, inner_signals);
  tracker_step(cascade.outer, outer_signals);
}

// --- stationarity certificate -----------------------------------------------------

/// Runs a tracker on static signals until the proxies stop moving and
/// returns the worst per-agent deviation from the exact mean, the numerical
/// certificate that the scheme solves the averaging problem on this graph.
/// Throws when the budget runs out or the tracker stalls away from the mean
/// (e.g. on a disconnected graph).
inline double tracker_fixed_point_error(Tracker& tracker, const Mat& static_signals,
                                        double certificate_tol = 1e-8, long budget = 1000000,
                                        double stationarity_tol = 1e-12) {
  const Vec mean = static_signals.colwise().mean().transpose();
  auto deviation = [&](const Mat& prox) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < prox.rows(); ++i)
      worst = std::max(worst, (prox.row(i).transpose() - mean).norm());
    return worst;
  };
  Mat prev = tracker_proxies(tracker, static_signals);
  for (long it = 1; it <= budget; ++it) {
    tracker_step(tracker, static_signals);
    const Mat cur = tracker_proxies(tracker, static_signals);
    const double change = (cur - prev).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, cur.cwiseAbs().maxCoeff());
    const double dev = deviation(cur);
    if (dev <= certificate_tol) return dev;
    if (change <= stationarity_tol * scale)
      throw std::runtime_error(
          "tracker_fixed_point_error: tracker stalled at deviation " + std::to_string(dev) +
          " after " + std::to_string(it) + " iterations");
    prev = cur;
  }
  throw std::runtime_error("tracker_fixed_point_error: iteration budget exhausted");
}

}  // namespace twoscale

#endif  // TWOSCALE_TRACKERS_HPP
