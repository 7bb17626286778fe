#pragma once

#include <functional>

#include "riot/riot_solver.hpp"

namespace riot::detail {

/// Hook run after each accepted A step and before the dual update. It may
/// replace the side costs; the duals are then recomputed for the new costs.
/// Arguments: model marginals of the current plan, the dual update computed
/// at that plan with the current costs, and the costs to modify in place.
using SideCostUpdate = std::function<void(const ProbabilityVector& mu_model, const ProbabilityVector& nu_model,
                                          const DualUpdate& duals, Matrix& cost_u, Matrix& cost_v)>;

struct DriverResult {
  RiotFitResult fit;
  Matrix best_cost_u;
  Matrix best_cost_v;
  Matrix final_cost_u;
  Matrix final_cost_v;
};

DriverResult run_alternation(const CouplingMatrix& pi_hat, const ProfileSet& users, const ProfileSet& items,
                             const KernelSpec& kernel, Matrix cost_u, Matrix cost_v, const HyperParams& params,
                             const RiotFitOptions& options, const SideCostUpdate& side_update);

}  // namespace riot::detail
