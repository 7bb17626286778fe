#pragma once

#include <cmath>

#include "riot/core_types.hpp"

namespace riot::detail {

inline constexpr int kMaxStepHalvings = 20;
inline constexpr double kGradientTolerance = 1e-10;

/// sum pi_hat log pi_hat over the support of pi_hat.
inline double negentropy(const Matrix& pi_hat) {
  double s = 0.0;
  for (Index i = 0; i < pi_hat.rows(); ++i) {
    for (Index j = 0; j < pi_hat.cols(); ++j) {
      const double p = pi_hat(i, j);
      if (p > 0.0) s += p * std::log(p);
    }
  }
  return s;
}

inline void check_fit_shapes(const Matrix& pi_hat, Index users, Index items) {
  if (pi_hat.rows() != users || pi_hat.cols() != items) {
    throw InvalidInput("matching matrix is " + std::to_string(pi_hat.rows()) + "x" + std::to_string(pi_hat.cols()) +
                       " but there are " + std::to_string(users) + " users and " + std::to_string(items) + " items");
  }
}

}  // namespace riot::detail
