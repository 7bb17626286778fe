#pragma once

#include <optional>

#include "riot/core_types.hpp"

namespace riot {

struct SinkhornOptions {
  /// Stop once max(row l1 error, column l1 error) <= tol after a full sweep.
  double tol = 1e-9;
  int max_iters = 10000;
};

/// Entropic transport plan in scaling form: plan = diag(a) exp(-lambda C) diag(b).
/// log_a/log_b are always populated; a/b are their exponentials and may
/// overflow to infinity for badly scaled problems solved in the log domain.
struct SinkhornResult {
  CouplingMatrix plan;
  Vector a;
  Vector b;
  Vector log_a;
  Vector log_b;
  int iterations = 0;
  double final_marginal_error = 0.0;
  bool log_domain = false;
};

/// Raised when the scaling iterations hit max_iters. Holds the last iterate.
class SinkhornNotConverged : public SolverFailure {
 public:
  SinkhornNotConverged(Matrix last_plan, Vector log_a, Vector log_b, int iterations, double error);

  const Matrix& last_plan() const noexcept { return last_plan_; }
  const Vector& last_log_a() const noexcept { return log_a_; }
  const Vector& last_log_b() const noexcept { return log_b_; }
  double error_level() const noexcept { return error_; }

 private:
  Matrix last_plan_;
  Vector log_a_;
  Vector log_b_;
  double error_;
};

/// Soft-min conjugate pair: z_conjugate_j = (1/lambda) log nu_j - (1/lambda) log sum_i exp(lambda (z_i - C_ij)).
struct DualPotentials {
  Vector z;
  Vector z_conjugate;
};

/// Sinkhorn-Knopp matrix scaling (b <- nu / K^T a, a <- mu / K b starting from
/// a = 1, or from exp(initial_log_a) when given). Falls back to log-sum-exp
/// updates when a scaling factor leaves [1e-150, 1e150] or the kernel underflows.
/// Requires strictly positive marginals.
SinkhornResult sinkhorn(const CostMatrix& cost, const ProbabilityVector& mu, const ProbabilityVector& nu,
                        double lambda, const SinkhornOptions& options = {},
                        const std::optional<Vector>& initial_log_a = std::nullopt);

/// H(pi) = -sum pi_ij (log pi_ij - 1) with 0 log 0 = 0.
double entropy(const Matrix& pi);

/// <pi, C> - H(pi) / lambda for an arbitrary coupling.
double rot_primal_value(const Matrix& pi, const Matrix& cost, double lambda);

/// Regularized transport value at the Sinkhorn solution.
double rot_distance(const CostMatrix& cost, const ProbabilityVector& mu, const ProbabilityVector& nu, double lambda,
                    const SinkhornOptions& options = {});

/// Soft-min conjugate of z under cost C with target marginal nu.
Vector c_transform(const Vector& z, const Matrix& cost, const Vector& nu, double lambda);

struct DualValue {
  double value = 0.0;
  DualPotentials potentials;
};

/// <z, mu> + <z^C, nu> - 1/lambda for a given potential z.
double rot_dual_objective(const Vector& z, const Matrix& cost, const Vector& mu, const Vector& nu, double lambda);

/// Dual value with z = (1/lambda) log a taken from the Sinkhorn left scaling.
DualValue rot_dual_value(const CostMatrix& cost, const ProbabilityVector& mu, const ProbabilityVector& nu,
                         double lambda, const SinkhornOptions& options = {});

}  // namespace riot
