#pragma once

#include <optional>
#include <vector>

#include "riot/core_types.hpp"
#include "riot/entropic_ot.hpp"
#include "riot/kernel_cost.hpp"

namespace riot {

/// -sum_ij pi_hat_ij log pi_ij, skipping cells where pi_hat_ij = 0.
double cross_entropy(const Matrix& pi_hat, const Matrix& pi);

/// Negative log-likelihood of pi_hat under the entropic plan of C(A) with
/// marginals pinned to those of pi_hat.
double iot_objective(const InteractionMatrix& interaction, const CouplingMatrix& pi_hat, const ProfileSet& users,
                     const ProfileSet& items, const KernelSpec& kernel, double lambda,
                     const SinkhornOptions& sinkhorn_options = {});

/// Gradient of iot_objective: sum_ij lambda (pi_hat_ij - pi_ij) C'_ij(A).
Matrix iot_gradient(const InteractionMatrix& interaction, const CouplingMatrix& pi_hat, const ProfileSet& users,
                    const ProfileSet& items, const KernelSpec& kernel, double lambda,
                    const SinkhornOptions& sinkhorn_options = {});

struct IotFitOptions {
  std::optional<InteractionMatrix> initial_interaction;
  /// Record every accepted iterate of A (initial point included).
  bool keep_history = false;
};

struct IotFitResult {
  InteractionMatrix interaction;
  CouplingMatrix fitted_plan;
  /// KL(pi_hat || plan) at the initial point and after every accepted step.
  std::vector<double> objective_trace;
  int iterations = 0;
  std::vector<Matrix> history;
};

/// Fixed-step gradient descent on iot_objective from A = 0, halving the step
/// (at most 20 times per iteration) whenever it would increase the objective.
IotFitResult iot_fit(const CouplingMatrix& pi_hat, const ProfileSet& users, const ProfileSet& items,
                     const KernelSpec& kernel, const HyperParams& params, const IotFitOptions& options = {});

}  // namespace riot
