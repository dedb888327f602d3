// Shared aliases and error types.
#ifndef TWOSCALE_TYPES_HPP
#define TWOSCALE_TYPES_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace twoscale {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Thrown when an iteration leaves the admissible region (state norm above
/// the divergence threshold, or non-finite entries).
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& msg, long iteration)
      : std::runtime_error(msg), iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace twoscale

#endif  // TWOSCALE_TYPES_HPP
