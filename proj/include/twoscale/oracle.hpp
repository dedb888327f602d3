// Independent ground-truth solvers and run diagnostics: small-scale
// active-set KKT enumeration, direct consensus solves, tracker error
// coordinates, exponential-rate fitting, and the quadratic-form diagnostic
// for constraint-coupled runs.
#ifndef TWOSCALE_ORACLE_HPP
#define TWOSCALE_ORACLE_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "twoscale/io.hpp"
#include "twoscale/problems.hpp"
#include "twoscale/types.hpp"

namespace twoscale {

struct Solution {
  Vec x_star;
  Vec lambda_star;
  std::vector<int> active_set;
  double kkt_residual = 0.0;
  bool degenerate_tie = false;  // a near-tie between active-set candidates was resolved
};

namespace detail {

struct KktCandidate {
  Vec x;
  Vec lambda;
  std::vector<int> active;
  double residual = std::numeric_limits<double>::infinity();
  bool feasible = false;
};

/// Evaluates the KKT residual of (x, lambda) for min x'Qx/2 + r'x subject to
/// Ax <= b, with `stationarity` supplied so games can reuse the machinery.
inline double kkt_residual_of(const Vec& stationarity, const Vec& lambda, const Vec& slack) {
  double res = stationarity.cwiseAbs().maxCoeff();
  res = std::max(res, std::max(0.0, slack.maxCoeff()));           // primal feasibility
  res = std::max(res, std::max(0.0, -lambda.minCoeff()));         // dual feasibility
  res = std::max(res, std::abs(lambda.dot(slack)));               // complementary slackness
  return res;
}

/// Active-set enumeration for an affine stationarity map F(x) + A' lambda = 0
/// with coupling constraint Ax <= b. F is affine with matrix `m` and offset
/// `f0` (F(x) = m x + f0); `m` need not be symmetric but must make the KKT
/// systems nonsingular (stationarity solvable for every candidate set).
inline Solution solve_affine_kkt(const Mat& m, const Vec& f0, const Mat& a, const Vec& b,
                                 double feas_tol = 1e-9) {
  const int n = static_cast<int>(m.rows());
  const int mdim = static_cast<int>(a.rows());
  require(mdim <= 10, "active-set oracle: constraint dimension too large (max 10)");
  KktCandidate best;
  bool tie = false;
  for (unsigned mask = 0; mask < (1u << mdim); ++mask) {
    std::vector<int> active;
    for (int k = 0; k < mdim; ++k)
      if (mask & (1u << k)) active.push_back(k);
    const int na = static_cast<int>(active.size());
    Mat kkt(n + na, n + na);
    kkt.setZero();
    kkt.topLeftCorner(n, n) = m;
    Vec rhs(n + na);
    rhs.head(n) = -f0;
    for (int k = 0; k < na; ++k) {
      kkt.block(0, n + k, n, 1) = a.row(active[k]).transpose();
      kkt.block(n + k, 0, 1, n) = a.row(active[k]);
      rhs(n + k) = b(active[k]);
    }
    Eigen::FullPivLU<Mat> lu(kkt);
    if (!lu.isInvertible()) continue;
    const Vec sol = lu.solve(rhs);
    KktCandidate cand;
    cand.x = sol.head(n);
    cand.lambda = Vec::Zero(mdim);
    for (int k = 0; k < na; ++k) cand.lambda(active[k]) = sol(n + k);
    cand.active = active;
    const Vec slack = a * cand.x - b;
    cand.feasible = slack.maxCoeff() <= feas_tol && cand.lambda.minCoeff() >= -feas_tol;
    cand.residual = kkt_residual_of(m * cand.x + f0 + a.transpose() * cand.lambda, cand.lambda, slack);
    if (!cand.feasible) continue;
    if (cand.residual < best.residual) {
      tie = best.feasible && std::abs(cand.residual - best.residual) < 1e-12;
      best = cand;
    } else if (best.feasible && std::abs(cand.residual - best.residual) < 1e-12) {
      tie = true;
    }
  }
  if (!best.feasible)
    throw std::runtime_error("active-set oracle: no feasible KKT candidate (infeasible or "
                             "degenerate instance)");
  Solution s;
  s.x_star = best.x;
  s.lambda_star = best.lambda;
  s.active_set = best.active;
  s.kkt_residual = best.residual;
  s.degenerate_tie = tie;
  return s;
}

}  // namespace detail

/// Exhaustive active-set KKT solve of a quadratic constraint-coupled
/// instance: enumerates all 2^m candidate active sets, solves each
/// equality-constrained system, and keeps the candidate that is primal
/// feasible with nonnegative multipliers. Strong convexity makes the winner
/// unique; near-ties resolve to the smaller KKT residual and are flagged.
inline Solution solve_cc_active_set(const ConstraintCoupledProblem& p) {
  require(p.is_quadratic(), "solve_cc_active_set: quadratic instance required");
  const int n = p.total_dim();
  Mat q = Mat::Zero(n, n);
  Vec r(n);
  int at = 0;
  for (int i = 0; i < p.n_agents; ++i) {
    q.block(at, at, p.local_dims[i], p.local_dims[i]) = p.q[i];
    r.segment(at, p.local_dims[i]) = p.r[i];
    at += p.local_dims[i];
  }
  return detail::solve_affine_kkt(q, r, p.stacked_a(), p.total_b());
}

/// Direct solve of the consensus minimizer: (sum_i Q_i) x = -(sum_i r_i).
inline Vec solve_consensus_min(const ConsensusProblem& p) {
  require(p.is_quadratic(), "solve_consensus_min: quadratic instance required");
  Mat q_sum = Mat::Zero(p.dim, p.dim);
  Vec r_sum = Vec::Zero(p.dim);
  for (int i = 0; i < p.n_agents; ++i) {
    q_sum += p.q[i];
    r_sum += p.r[i];
  }
  Eigen::FullPivLU<Mat> lu(q_sum);
  if (!lu.isInvertible()) throw std::runtime_error("solve_consensus_min: singular system");
  return lu.solve(-r_sum);
}

/// Variational equilibrium of a linear-quadratic aggregative game: the
/// stacked pseudo-gradient G is affine, so its matrix and offset are
/// recovered exactly from n+1 evaluations and the coupling constraint is
/// handled by the same active-set enumeration as the optimization oracle,
/// with G(x) + A' lambda = 0 as stationarity.
inline Solution solve_game_linear(const AggregativeGame& game) {
  const int n = game.total_dim();
  const auto off = detail::offsets_of(game.local_dims);
  auto pseudo_gradient = [&](const Vec& x) {
    const Vec s = sigma(game, x);
    Vec g(n);
    for (int i = 0; i < game.n_agents; ++i) {
      const Vec xi = x.segment(off[i], game.local_dims[i]);
      const Mat jac = game.contributions[i].grad(xi);
      g.segment(off[i], game.local_dims[i]) =
          game.costs[i].grad_x(xi, s) +
          jac * game.costs[i].grad_s(xi, s) / static_cast<double>(game.n_agents);
    }
    return g;
  };
  const Vec g0 = pseudo_gradient(Vec::Zero(n));
  Mat m(n, n);
  for (int j = 0; j < n; ++j) m.col(j) = pseudo_gradient(Vec::Unit(n, j)) - g0;
  return detail::solve_affine_kkt(m, g0, game.stacked_a(), game.total_b());
}

/// Minimizer of an affine-gradient objective sampled through its gradient
/// map (used for the quadratic aggregative family, whose total gradient is
/// affine in the stacked variable).
inline Vec solve_affine_gradient_min(const std::function<Vec(const Vec&)>& gradient, int dim) {
  const Vec g0 = gradient(Vec::Zero(dim));
  Mat m(dim, dim);
  for (int j = 0; j < dim; ++j) m.col(j) = gradient(Vec::Unit(dim, j)) - g0;
  Eigen::FullPivLU<Mat> lu(m);
  if (!lu.isInvertible())
    throw std::runtime_error("solve_affine_gradient_min: singular gradient map");
  return lu.solve(-g0);
}

// --- error coordinates -------------------------------------------------------

/// Orthonormal rows spanning the complement of span(1 (x) I): the projection
/// that isolates tracker disagreement. Built from the Householder reflection
/// taking 1/sqrt(N) to the first basis vector, so the construction is
/// deterministic.
struct ErrorCoordinates {
  Mat t_perp;  // (N-1) d x N d
  int n_agents = 0;
  int per_agent_dim = 0;
};

inline ErrorCoordinates build_error_coordinates(int n_agents, int per_agent_dim) {
  require(n_agents >= 2 && per_agent_dim >= 1, "build_error_coordinates: dimensions too small");
  Vec v = Vec::Constant(n_agents, 1.0 / std::sqrt(static_cast<double>(n_agents)));
  v(0) -= 1.0;
  const Mat house =
      Mat::Identity(n_agents, n_agents) - (2.0 / v.squaredNorm()) * v * v.transpose();
  const Mat basis = house.bottomRows(n_agents - 1);  // rows orthonormal, orthogonal to 1
  ErrorCoordinates ec;
  ec.n_agents = n_agents;
  ec.per_agent_dim = per_agent_dim;
  const int d = per_agent_dim;
  ec.t_perp = Mat::Zero((n_agents - 1) * d, n_agents * d);
  for (int i = 0; i < n_agents - 1; ++i)
    for (int j = 0; j < n_agents; ++j)
      ec.t_perp.block(i * d, j * d, d, d) = basis(i, j) * Mat::Identity(d, d);
  return ec;
}

/// Equilibrium signal stack for the constraint-coupled assembly: per agent,
/// the multiplier followed by N times the local constraint residual. The
/// tracker equilibrium in error coordinates is z_eq(chi) = -T_perp times
/// this stack.
inline Vec cc_equilibrium_stack(const ConstraintCoupledProblem& p, const Vec& chi) {
  const int m = p.constraint_dim;
  Vec stack(2 * m * p.n_agents);
  int chi_at = 0;
  for (int i = 0; i < p.n_agents; ++i) {
    const Vec xi = chi.segment(chi_at, p.local_dims[i]);
    const Vec li = chi.segment(chi_at + p.local_dims[i], m);
    stack.segment(2 * m * i, m) = li;
    stack.segment(2 * m * i + m, m) = static_cast<double>(p.n_agents) * (p.a[i] * xi - p.b[i]);
    chi_at += p.local_dims[i] + m;
  }
  return stack;
}

// --- rate fitting --------------------------------------------------------------

struct RateFit {
  double slope = 0.0;
  double r_squared = 1.0;
  bool floored = false;  // nonpositive entries were floored before taking logs
};

/// Least-squares fit of log(error) against the iteration index over the
/// trailing fraction of the sequence. Nonpositive entries are floored at
/// 1e-300 and flagged. A constant tail fits exactly (slope 0, r^2 = 1).
inline RateFit fit_linear_rate(const std::vector<double>& errors, double tail_fraction) {
  require(tail_fraction > 0.0 && tail_fraction <= 1.0,
          "fit_linear_rate: tail_fraction must lie in (0, 1]");
  require(errors.size() >= 2, "fit_linear_rate: need at least two samples");
  const std::size_t count =
      std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(errors.size() * tail_fraction)));
  const std::size_t start = errors.size() - count;
  RateFit fit;
  std::vector<double> ts, ys;
  for (std::size_t k = start; k < errors.size(); ++k) {
    double e = errors[k];
    if (e <= 0.0) {
      e = 1e-300;
      fit.floored = true;
    }
    ts.push_back(static_cast<double>(k));
    ys.push_back(std::log(e));
  }
  const double n = static_cast<double>(ts.size());
  double t_mean = 0.0, y_mean = 0.0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    t_mean += ts[k];
    y_mean += ys[k];
  }
  t_mean /= n;
  y_mean /= n;
  double stt = 0.0, sty = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    stt += (ts[k] - t_mean) * (ts[k] - t_mean);
    sty += (ts[k] - t_mean) * (ys[k] - y_mean);
    syy += (ys[k] - y_mean) * (ys[k] - y_mean);
  }
  fit.slope = sty / stt;
  const double ss_res = syy - sty * sty / stt;
  fit.r_squared = syy <= 1e-30 ? 1.0 : std::max(0.0, 1.0 - ss_res / syy);
  return fit;
}

// --- quadratic-form diagnostic ---------------------------------------------------

/// kappa threshold above which the diagnostic quadratic form is positive
/// semidefinite (Schur complement of its off-diagonal coupling block).
inline double lyapunov_kappa_threshold(const ConstraintCoupledProblem& p) {
  Eigen::JacobiSVD<Mat> svd(p.stacked_a());
  return std::sqrt(static_cast<double>(p.n_agents)) * svd.singularValues().maxCoeff();
}

/// Quadratic form in the displacement from (x*, 1 lambda*) with coupling
/// between the primal error and the stacked multiplier error; decreases
/// along converging constraint-coupled runs once kappa is large enough.
/// Diagnostic only.
inline double lyapunov_cc(const ConstraintCoupledProblem& p, const Solution& sol, double kappa,
                          const Vec& chi) {
  require(kappa > 0.0, "lyapunov_cc: kappa must be positive");
  const int m = p.constraint_dim;
  const int n = p.total_dim();
  require(chi.size() == n + p.n_agents * m, "lyapunov_cc: state dimension mismatch");
  Vec dx(n);
  Vec dl(p.n_agents * m);
  int chi_at = 0, x_at = 0;
  for (int i = 0; i < p.n_agents; ++i) {
    dx.segment(x_at, p.local_dims[i]) =
        chi.segment(chi_at, p.local_dims[i]) - sol.x_star.segment(x_at, p.local_dims[i]);
    dl.segment(i * m, m) = chi.segment(chi_at + p.local_dims[i], m) - sol.lambda_star;
    chi_at += p.local_dims[i] + m;
    x_at += p.local_dims[i];
  }
  const Mat a = p.stacked_a();
  Vec dl_sum = Vec::Zero(m);
  for (int i = 0; i < p.n_agents; ++i) dl_sum += dl.segment(i * m, m);
  // [dx; dl]' [[kappa I, A'1'], [1 A, kappa I]] [dx; dl]
  return kappa * dx.squaredNorm() + kappa * dl.squaredNorm() + 2.0 * dl_sum.dot(a * dx);
}

inline void save_solution(std::ostream& out, const Solution& sol) {
  out << "x_star\n";
  save_vector_csv(out, sol.x_star);
  out << "lambda_star\n";
  if (sol.lambda_star.size() > 0)
    save_vector_csv(out, sol.lambda_star);
  else
    out << "\n";
  out << "active_set";
  for (int k : sol.active_set) out << " " << k;
  out << "\n";
  out << "kkt_residual " << format_double(sol.kkt_residual) << "\n";
}

}  // namespace twoscale

#endif  // TWOSCALE_ORACLE_HPP
