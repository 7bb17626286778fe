#pragma once

#include <optional>
#include <vector>

#include "riot/core_types.hpp"
#include "riot/kernel_cost.hpp"
#include "riot/riot_solver.hpp"

namespace riot {

/// Euclidean projection of a vector onto {x >= 0, sum x = total}.
Vector project_simplex(const Vector& x, double total = 1.0);

/// Nearest point (Frobenius) of the metric cone intersected with
/// {entries >= 0, sum of entries = 1}. The input is symmetrized and its
/// diagonal zeroed first. Throws SolverFailure after 5000 cycles.
MetricMatrix project_metric_simplex(const Matrix& m);

/// Gradient of delta <z^C, mu_hat> with respect to C at fixed z:
/// delta P with P_ij = mu_hat_j exp(lambda (z_i - C_ij)) / sum_k exp(lambda (z_k - C_kj)).
/// At the optimal potential P is the regularized transport plan between mu and mu_hat.
Matrix grad_Cu_relaxation(const Vector& z, const ProbabilityVector& mu, const ProbabilityVector& mu_hat,
                          const CostMatrix& cost_u, double lambda_u, double delta);

struct JointFitOptions {
  /// Step size for the side costs; defaults to 0.1 * params.step_size.
  std::optional<double> side_step_size;
  /// Starting side costs (projected onto the feasible set). Uniform off-diagonal otherwise.
  std::optional<Matrix> initial_cost_u;
  std::optional<Matrix> initial_cost_v;
  bool keep_history = false;
};

struct JointFitResult {
  InteractionMatrix interaction;
  MetricMatrix cost_u;
  MetricMatrix cost_v;
  CouplingMatrix fitted_plan;
  std::vector<double> objective_trace;
  RiotFitResult riot;
};

/// Relaxed fit that also learns C_u and C_v by projected gradient steps,
/// cycling (A, plan), (C_u, C_v) and (z, w).
JointFitResult joint_fit(const CouplingMatrix& pi_hat, const ProfileSet& users, const ProfileSet& items,
                         const KernelSpec& kernel, const HyperParams& params, const JointFitOptions& options = {});

}  // namespace riot
