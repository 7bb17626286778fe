#pragma once

#include "riot/core_types.hpp"
#include "riot/entropic_ot.hpp"

namespace riot {

struct BoundReport {
  double bound_value = 0.0;
  double observed_value = 0.0;
  /// observed_value >= bound_value - 1e-9.
  bool satisfied = false;
};

inline constexpr double kBoundTolerance = 1e-9;

BoundReport make_bound_report(double bound, double observed);

/// sum p log(p / q) with 0 log 0 = 0. Throws InvalidInput naming the first
/// cell where p > 0 but q = 0.
double kl_divergence(const Matrix& p, const Matrix& q);
double kl_divergence(const CouplingMatrix& p, const CouplingMatrix& q);

/// ||mu1 - mu2||^2 / n + ||nu1 - nu2||^2 / m: the smallest squared Frobenius
/// distance between a coupling of (mu1, nu1) and one of (mu2, nu2).
double coupling_gap_lower_bound(const Vector& mu1, const Vector& nu1, const Vector& mu2, const Vector& nu2);
/// Compares ||pi1 - pi2||_F^2 against coupling_gap_lower_bound of their marginals.
BoundReport coupling_gap_check(const CouplingMatrix& pi1, const CouplingMatrix& pi2);

/// sqrt((||delta_mu||_1^2 + ||delta_nu||_1^2) / (m n)).
double iot_error_lower_bound(const Vector& delta_mu, const Vector& delta_nu, Index m, Index n);
/// Compares ||pi0 - pi_fit||_1 against iot_error_lower_bound of the marginal gaps.
BoundReport iot_error_check(const CouplingMatrix& pi0, const CouplingMatrix& pi_fit);

/// Least-squares removal of the shift gauge: the (a, b) minimizing
/// ||M - a 1^T - 1 b^T||_F and the residual norm at the minimum.
struct ShiftFit {
  Vector a;
  Vector b;
  double residual = 0.0;
};
ShiftFit fit_shift(const Matrix& m);

/// min over (a, b) of ||C2 - C1 - a 1^T - 1 b^T||_F.
double cost_shift_distance(const CostMatrix& c1, const CostMatrix& c2);
double cost_shift_distance(const Matrix& c1, const Matrix& c2);

/// The member of {learned + a 1^T + 1 b^T} closest to reference.
Matrix shift_align(const Matrix& learned, const Matrix& reference);

/// Observed ||C_learned - C0||_F^2 against (1/lambda^2) times the squared
/// shift-free part of log pi_hat - log pi0. Requires positive plans.
BoundReport cost_error_bound_check(const CostMatrix& c0, const CostMatrix& c_learned, const CouplingMatrix& pi0,
                                   const CouplingMatrix& pi_hat, double lambda);

/// Observed ||log pi_learned - log pi0||_F^2 (both plans solved at (mu, nu))
/// against lambda^2 times the squared shift-free part of C_learned - C0.
BoundReport prediction_error_bound_check(const CostMatrix& c0, const CostMatrix& c_learned, const ProbabilityVector& mu,
                                         const ProbabilityVector& nu, double lambda,
                                         const SinkhornOptions& options = {});

/// Inverts the entropic plan of a symmetric hollow cost. Throws InvalidInput
/// when the plan fails the cycle-consistency test by more than 1e-6.
MetricMatrix symmetric_cost_recovery(const CouplingMatrix& pi, double lambda);

struct MatchingErrors {
  double rmse = 0.0;
  double mae = 0.0;
  /// KL(test || pred).
  double kl = 0.0;
};
MatchingErrors eval_matching(const CouplingMatrix& pred, const CouplingMatrix& test);

}  // namespace riot
