#pragma once

#include <optional>
#include <vector>

#include <json.hpp>

#include "riot/core_types.hpp"
#include "riot/entropic_ot.hpp"
#include "riot/kernel_cost.hpp"

namespace riot {

/// Iterates of the alternating robust solver. The plan is
/// xi_i exp(-lambda C_ij(A)) eta_j and has unit mass.
struct RiotState {
  InteractionMatrix interaction;
  Vector xi;
  Vector eta;
  double theta = 0.0;
  Vector z;
  Vector w;
  CouplingMatrix current_plan;
  double objective = 0.0;
};

nlohmann::json to_json(const RiotState& state);
/// Rebuilds a state from a checkpoint; validates shapes and positivity.
RiotState riot_state_from_json(const nlohmann::json& doc);

/// Root theta < min_i (M eta)_i / (Z eta)_i of
///   p(theta) = sum_i mu_hat_i (Z eta)_i / ((M - theta Z) eta)_i = 1.
/// p increases from 0 to +inf on that half-line, so the root is unique.
double theta_root_p(const Vector& eta, const Vector& mu_hat, const Matrix& m, const Matrix& z);
/// Column counterpart of theta_root_p, driven by xi and nu_hat.
double theta_root_q(const Vector& xi, const Vector& nu_hat, const Matrix& m, const Matrix& z);

struct InnerSolveResult {
  Vector xi;
  Vector eta;
  double theta1 = 0.0;
  double theta2 = 0.0;
  /// h(xi, eta) after initialization and after each half-step (2K + 1 entries).
  std::vector<double> objective_trace;
  int iterations = 0;
  /// ||-mu_hat / xi + M eta - theta1 Z eta||_inf at exit.
  double kkt_residual = 0.0;
};

/// h(xi, eta) = -<mu_hat, log xi> - <nu_hat, log eta> + xi^T M eta.
double inner_objective(const Vector& xi, const Vector& eta, const Vector& mu_hat, const Vector& nu_hat,
                       const Matrix& m);

/// Alternating exact minimization of h over xi then eta subject to
/// xi^T Z eta = 1, with Z = exp(-lambda C) and M = delta (z 1^T + 1 w^T) .* Z.
/// Runs at most max_iters sweeps, stopping early once the stationarity
/// residual and |theta1 - theta2| are below tol. Starts from xi = eta = 1
/// rescaled onto the constraint unless a warm start is supplied.
InnerSolveResult inner_xi_eta_solve(const Matrix& z_kernel, const Matrix& m, const Vector& mu_hat,
                                    const Vector& nu_hat, int max_iters, double tol,
                                    const std::optional<std::pair<Vector, Vector>>& warm_start = std::nullopt);

/// Convenience form building Z and M from a cost matrix and dual potentials.
InnerSolveResult inner_xi_eta_solve(const CostMatrix& cost, const CouplingMatrix& pi_hat, const Vector& z,
                                    const Vector& w, const HyperParams& params,
                                    const std::optional<std::pair<Vector, Vector>>& warm_start = std::nullopt);

/// -sum pi_hat log pi + delta (d_{lambda_u}(C_u, pi 1, mu_hat) + d_{lambda_v}(C_v, pi^T 1, nu_hat)).
double riot_objective(const RiotState& state, const CouplingMatrix& pi_hat, const CostMatrix& cost_u,
                      const CostMatrix& cost_v, const HyperParams& params);

/// Objective of the primal block for fixed duals:
/// -sum pi_hat log pi + delta (<z, pi 1> + <w, pi^T 1>).
double riot_block_objective(const Matrix& plan, const Matrix& pi_hat, const Vector& z, const Vector& w,
                            double delta);

/// sum_ij lambda [pi_hat_ij + (theta - delta (z_i + w_j)) pi_ij] C'_ij(A).
/// Throws SolverFailure when the state violates xi^T Z eta = 1 by more than 1e-6.
Matrix riot_grad_A(const RiotState& state, const CouplingMatrix& pi_hat, const ProfileSet& users,
                   const ProfileSet& items, const KernelSpec& kernel, const HyperParams& params);

struct DualUpdate {
  Vector z;
  Vector w;
  SinkhornResult user_side;
  SinkhornResult item_side;
};

/// z = (1/lambda_u) log a, a the left scaling of the transport between the
/// plan's row marginal and mu_hat under C_u; w likewise for columns. Both are
/// returned centred (zero mean), a representative of their shift class.
DualUpdate dual_update_zw(const CouplingMatrix& plan, const ProbabilityVector& mu_hat, const ProbabilityVector& nu_hat,
                          const CostMatrix& cost_u, const CostMatrix& cost_v, const HyperParams& params,
                          const std::optional<std::pair<Vector, Vector>>& warm_log_scalings = std::nullopt);

struct RiotFitOptions {
  /// Resume from a checkpoint instead of A = 0, z = w = 0.
  std::optional<RiotState> initial_state;
  bool keep_history = false;
};

struct RiotFitResult {
  InteractionMatrix interaction;
  CouplingMatrix fitted_plan;
  MarginalPair relaxed_marginals;
  /// riot_objective at every visited iterate (outer_iters + 1 entries unless stopped early).
  std::vector<double> objective_trace;
  /// State at the best iterate.
  RiotState state;
  /// State at the last iterate, suitable for checkpointing.
  RiotState final_state;
  int iterations = 0;
  std::vector<Matrix> history;
};

/// Alternating solver: per outer iteration an inner xi/eta solve, a
/// backtracked gradient step on A for the fixed duals, then a Sinkhorn
/// dual update of (z, w). Returns the iterate with the lowest objective.
RiotFitResult riot_fit(const CouplingMatrix& pi_hat, const ProfileSet& users, const ProfileSet& items,
                       const KernelSpec& kernel, const CostMatrix& cost_u, const CostMatrix& cost_v,
                       const HyperParams& params, const RiotFitOptions& options = {});

/// Plan for a new population under a learned interaction matrix.
CouplingMatrix predict_matching(const InteractionMatrix& interaction, const ProfileSet& users_new,
                                const ProfileSet& items_new, const ProbabilityVector& mu_new,
                                const ProbabilityVector& nu_new, const KernelSpec& kernel, double lambda,
                                const SinkhornOptions& options = {});

}  // namespace riot
