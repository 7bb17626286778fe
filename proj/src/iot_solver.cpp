#include "riot/iot_solver.hpp"

#include <cmath>
#include <limits>

#include "fit_common.hpp"

namespace riot {
namespace {

struct Evaluation {
  CouplingMatrix plan;
  double objective;
};

Evaluation evaluate(const InteractionMatrix& interaction, const CouplingMatrix& pi_hat, const MarginalPair& pinned,
                    const ProfileSet& users, const ProfileSet& items, const KernelSpec& kernel, double lambda,
                    const SinkhornOptions& options) {
  const CostMatrix cost = kernel_cost(users, items, interaction, kernel);
  SinkhornResult s = sinkhorn(cost, pinned.mu, pinned.nu, lambda, options);
  const double obj = cross_entropy(pi_hat.entries(), s.plan.entries());
  return {std::move(s.plan), obj};
}

Matrix gradient_at(const InteractionMatrix& interaction, const CouplingMatrix& pi_hat, const CouplingMatrix& plan,
                   const ProfileSet& users, const ProfileSet& items, const KernelSpec& kernel, double lambda) {
  const Matrix cost_grad = lambda * (pi_hat.entries() - plan.entries());
  return kernel_cost_pullback(users, items, interaction, kernel, cost_grad);
}

}  // namespace

double cross_entropy(const Matrix& pi_hat, const Matrix& pi) {
  double s = 0.0;
  for (Index i = 0; i < pi_hat.rows(); ++i) {
    for (Index j = 0; j < pi_hat.cols(); ++j) {
      const double w = pi_hat(i, j);
      if (w > 0.0) s -= w * std::log(pi(i, j));
    }
  }
  return s;
}

double iot_objective(const InteractionMatrix& interaction, const CouplingMatrix& pi_hat, const ProfileSet& users,
                     const ProfileSet& items, const KernelSpec& kernel, double lambda,
                     const SinkhornOptions& sinkhorn_options) {
  detail::check_fit_shapes(pi_hat.entries(), users.count(), items.count());
  const MarginalPair pinned = marginals(pi_hat);
  return evaluate(interaction, pi_hat, pinned, users, items, kernel, lambda, sinkhorn_options).objective;
}

Matrix iot_gradient(const InteractionMatrix& interaction, const CouplingMatrix& pi_hat, const ProfileSet& users,
                    const ProfileSet& items, const KernelSpec& kernel, double lambda,
                    const SinkhornOptions& sinkhorn_options) {
  detail::check_fit_shapes(pi_hat.entries(), users.count(), items.count());
  const MarginalPair pinned = marginals(pi_hat);
  const Evaluation e = evaluate(interaction, pi_hat, pinned, users, items, kernel, lambda, sinkhorn_options);
  return gradient_at(interaction, pi_hat, e.plan, users, items, kernel, lambda);
}

IotFitResult iot_fit(const CouplingMatrix& pi_hat, const ProfileSet& users, const ProfileSet& items,
                     const KernelSpec& kernel, const HyperParams& params, const IotFitOptions& options) {
  params.validate();
  kernel.validate();
  detail::check_fit_shapes(pi_hat.entries(), users.count(), items.count());
  const MarginalPair pinned = marginals(pi_hat);
  const SinkhornOptions sk{params.sinkhorn_tol, params.sinkhorn_max_iters};
  const double offset = detail::negentropy(pi_hat.entries());

  InteractionMatrix current = options.initial_interaction.value_or(InteractionMatrix::zeros(users.dim(), items.dim()));
  Evaluation eval = evaluate(current, pi_hat, pinned, users, items, kernel, params.lambda, sk);
  if (!std::isfinite(eval.objective)) {
    throw SolverFailure("iot_fit: non-finite objective at the initial point",
                        {{"objective_trace", std::vector<double>{}}});
  }

  IotFitResult result{current, eval.plan, {eval.objective + offset}, 0, {}};
  if (options.keep_history) result.history.push_back(current.entries());

  for (int iter = 0; iter < params.outer_iters; ++iter) {
    const Matrix grad = gradient_at(current, pi_hat, eval.plan, users, items, kernel, params.lambda);
    if (grad.norm() <= detail::kGradientTolerance) break;

    double step = params.step_size;
    std::optional<InteractionMatrix> accepted;
    std::optional<Evaluation> accepted_eval;
    for (int halving = 0; halving <= detail::kMaxStepHalvings; ++halving, step *= 0.5) {
      InteractionMatrix trial(current.entries() - step * grad);
      try {
        Evaluation e = evaluate(trial, pi_hat, pinned, users, items, kernel, params.lambda, sk);
        if (std::isfinite(e.objective) && e.objective <= eval.objective) {
          accepted = std::move(trial);
          accepted_eval = std::move(e);
          break;
        }
      } catch (const SolverFailure&) {
        // Rejected like an uphill step.
      }
    }
    if (!accepted) break;

    current = std::move(*accepted);
    eval = std::move(*accepted_eval);
    ++result.iterations;
    result.objective_trace.push_back(eval.objective + offset);
    if (options.keep_history) result.history.push_back(current.entries());
  }

  result.interaction = current;
  result.fitted_plan = eval.plan;
  return result;
}

}  // namespace riot
