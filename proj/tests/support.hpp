// Shared test helpers: finite differences and seeded random vectors.
#ifndef TWOSCALE_TESTS_SUPPORT_HPP
#define TWOSCALE_TESTS_SUPPORT_HPP

#include <functional>

#include "twoscale/problems.hpp"
#include "twoscale/rng.hpp"
#include "twoscale/types.hpp"

namespace test_support {

using twoscale::Mat;
using twoscale::Vec;

/// Central finite-difference gradient of a scalar function.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                       double h = 1e-6) {
  Vec g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vec hi = x, lo = x;
    hi(k) += h;
    lo(k) -= h;
    g(k) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

inline Vec random_vec(twoscale::SplitMix64& rng, int dim, double scale = 1.0) {
  Vec v(dim);
  for (int k = 0; k < dim; ++k) v(k) = scale * rng.gaussian();
  return v;
}

inline Mat random_mat(twoscale::SplitMix64& rng, int rows, int cols, double scale = 1.0) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.gaussian();
  return m;
}

/// Step size below the stability threshold of the constraint-coupled
/// primal-dual map: the primal curvature is bounded by the largest cost
/// curvature plus the penalty curvature through the constraints.
inline double safe_cc_gamma(const twoscale::ConstraintCoupledProblem& p, double rho, double nu) {
  double q_max = 0.0;
  for (const Mat& q : p.q) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(q);
    q_max = std::max(q_max, eig.eigenvalues().maxCoeff());
  }
  Eigen::JacobiSVD<Mat> svd(p.stacked_a());
  const double s_max = svd.singularValues().maxCoeff();
  return 0.4 / (q_max + rho * s_max * s_max + nu + 1.0 / rho);
}

}  // namespace test_support

#endif  // TWOSCALE_TESTS_SUPPORT_HPP
