#include "riot/riot_solver.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "fit_common.hpp"
#include "riot/iot_solver.hpp"
#include "riot_driver.hpp"

namespace riot {
namespace {

constexpr int kMaxRootIterations = 200;

// Root of sum_i w_i r_i / (d_i + t r_i) = 1 over t > 0, where
// d_i = r_i (s_i / r_i - theta_max) >= 0 and theta = theta_max - t.
struct NormalizerRoot {
  double theta_max = 0.0;
  double t = 0.0;
  Vector gap;  // d_i

  double theta() const { return theta_max - t; }
};

NormalizerRoot solve_normalizer(const Vector& weights, const Vector& r, const Vector& s) {
  const Index n = r.size();
  if (weights.size() != n || s.size() != n) throw InvalidInput("theta root: size mismatch");
  for (Index i = 0; i < n; ++i) {
    if (!(r[i] > 0.0) || !std::isfinite(r[i])) throw SolverFailure("theta root: Z-weighted scaling must be positive");
    if (!(weights[i] > 0.0)) throw InvalidInput("theta root: empirical marginal must be strictly positive");
  }
  NormalizerRoot root;
  const Vector ratio = s.cwiseQuotient(r);
  root.theta_max = ratio.minCoeff();
  root.gap = r.cwiseProduct((ratio.array() - root.theta_max).matrix());

  auto residual = [&](double t, double* slope) {
    double g = -1.0;
    double dg = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double den = root.gap[i] + t * r[i];
      g += weights[i] * r[i] / den;
      dg -= weights[i] * r[i] * r[i] / (den * den);
    }
    if (slope) *slope = dg;
    return g;
  };

  // g(t) <= 1/t - 1 and g(t) >= (sum of weights on the active set)/t - 1.
  double lo = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (root.gap[i] == 0.0) lo += weights[i];
  }
  double hi = 1.0;
  if (residual(lo, nullptr) <= 0.0) {
    root.t = lo;
    return root;
  }
  if (residual(hi, nullptr) >= 0.0) {
    root.t = hi;
    return root;
  }
  double t = lo;
  for (int iter = 0; iter < kMaxRootIterations; ++iter) {
    double slope = 0.0;
    const double g = residual(t, &slope);
    if (g == 0.0) break;
    if (g > 0.0) lo = t; else hi = t;
    double next = t - g / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= 4.0 * std::numeric_limits<double>::epsilon() * next || hi - lo <= 0.0) {
      t = next;
      root.t = t;
      return root;
    }
    t = next;
    if (iter + 1 == kMaxRootIterations) {
      throw SolverFailure("theta root did not converge",
                          {{"bracket_theta", {root.theta_max - hi, root.theta_max - lo}}});
    }
  }
  root.t = t;
  return root;
}

// xi_i = w_i / (d_i + t r_i), then rescaled so that xi^T r = 1 exactly.
Vector normalized_update(const Vector& weights, const Vector& r, const NormalizerRoot& root) {
  Vector x(weights.size());
  for (Index i = 0; i < x.size(); ++i) x[i] = weights[i] / (root.gap[i] + root.t * r[i]);
  return x / x.dot(r);
}

Matrix relaxation_weights(const Matrix& z_kernel, const Vector& z, const Vector& w, double delta) {
  Matrix m(z_kernel.rows(), z_kernel.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = delta * (z[i] + w[j]) * z_kernel(i, j);
  }
  return m;
}

Matrix cost_gradient(const Matrix& pi_hat, const Matrix& plan, const Vector& z, const Vector& w, double theta,
                     double lambda, double delta) {
  Matrix g(plan.rows(), plan.cols());
  for (Index i = 0; i < g.rows(); ++i) {
    for (Index j = 0; j < g.cols(); ++j) {
      g(i, j) = lambda * (pi_hat(i, j) + (theta - delta * (z[i] + w[j])) * plan(i, j));
    }
  }
  return g;
}

// One inner solve at fixed (A, z, w).
struct Block {
  Matrix kernel;
  InnerSolveResult inner;
  Matrix plan;
  double objective = 0.0;  // primal block objective E
};

Block solve_block(const InteractionMatrix& interaction, const ProfileSet& users, const ProfileSet& items,
                  const KernelSpec& kernel, const Matrix& pi_hat, const Vector& mu_hat, const Vector& nu_hat,
                  const Vector& z, const Vector& w, const HyperParams& params,
                  const std::optional<std::pair<Vector, Vector>>& warm) {
  const CostMatrix cost = kernel_cost(users, items, interaction, kernel);
  Block b;
  b.kernel = (-params.lambda * cost.entries()).array().exp().matrix();
  const Matrix m = relaxation_weights(b.kernel, z, w, params.delta);
  b.inner = inner_xi_eta_solve(b.kernel, m, mu_hat, nu_hat, params.inner_iters, params.inner_tol, warm);
  b.plan = b.inner.xi.asDiagonal() * b.kernel * b.inner.eta.asDiagonal();
  b.objective = riot_block_objective(b.plan, pi_hat, z, w, params.delta);
  return b;
}

void check_side_costs(const Matrix& cost_u, const Matrix& cost_v, Index m, Index n) {
  if (cost_u.rows() != m || cost_u.cols() != m) throw InvalidInput("user-side cost must be m x m");
  if (cost_v.rows() != n || cost_v.cols() != n) throw InvalidInput("item-side cost must be n x n");
}

Vector json_vector(const nlohmann::json& doc, const char* key) {
  const auto values = doc.at(key).get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

Matrix json_matrix(const nlohmann::json& doc, const char* key) {
  const auto rows = doc.at(key).get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw InvalidInput(std::string("checkpoint: empty matrix ") + key);
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < out.rows(); ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    if (static_cast<Index>(row.size()) != out.cols()) throw InvalidInput(std::string("checkpoint: ragged ") + key);
    for (Index j = 0; j < out.cols(); ++j) out(i, j) = row[static_cast<std::size_t>(j)];
  }
  return out;
}

nlohmann::json matrix_json(const Matrix& m) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) rows[static_cast<std::size_t>(i)].assign(m.row(i).begin(), m.row(i).end());
  return rows;
}

nlohmann::json vector_json(const Vector& v) { return std::vector<double>(v.begin(), v.end()); }

}  // namespace

nlohmann::json to_json(const RiotState& s) {
  return {{"interaction", matrix_json(s.interaction.entries())},
          {"xi", vector_json(s.xi)},
          {"eta", vector_json(s.eta)},
          {"theta", s.theta},
          {"z", vector_json(s.z)},
          {"w", vector_json(s.w)},
          {"current_plan", matrix_json(s.current_plan.entries())},
          {"objective", s.objective}};
}

RiotState riot_state_from_json(const nlohmann::json& doc) {
  try {
    RiotState s{InteractionMatrix(json_matrix(doc, "interaction")),
                json_vector(doc, "xi"),
                json_vector(doc, "eta"),
                doc.at("theta").get<double>(),
                json_vector(doc, "z"),
                json_vector(doc, "w"),
                CouplingMatrix(json_matrix(doc, "current_plan")),
                doc.at("objective").get<double>()};
    const Index m = s.current_plan.rows();
    const Index n = s.current_plan.cols();
    if (s.xi.size() != m || s.z.size() != m || s.eta.size() != n || s.w.size() != n) {
      throw InvalidInput("checkpoint: vector sizes do not match the plan");
    }
    if (!(s.xi.array() > 0.0).all() || !(s.eta.array() > 0.0).all()) {
      throw InvalidInput("checkpoint: xi and eta must be strictly positive");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("checkpoint: ") + e.what());
  }
}

double theta_root_p(const Vector& eta, const Vector& mu_hat, const Matrix& m, const Matrix& z) {
  return solve_normalizer(mu_hat, z * eta, m * eta).theta();
}

double theta_root_q(const Vector& xi, const Vector& nu_hat, const Matrix& m, const Matrix& z) {
  return solve_normalizer(nu_hat, z.transpose() * xi, m.transpose() * xi).theta();
}

double inner_objective(const Vector& xi, const Vector& eta, const Vector& mu_hat, const Vector& nu_hat,
                       const Matrix& m) {
  return -mu_hat.dot(xi.array().log().matrix()) - nu_hat.dot(eta.array().log().matrix()) + xi.dot(m * eta);
}

InnerSolveResult inner_xi_eta_solve(const Matrix& z_kernel, const Matrix& m, const Vector& mu_hat,
                                    const Vector& nu_hat, int max_iters, double tol,
                                    const std::optional<std::pair<Vector, Vector>>& warm_start) {
  const Index rows = z_kernel.rows();
  const Index cols = z_kernel.cols();
  if (m.rows() != rows || m.cols() != cols || mu_hat.size() != rows || nu_hat.size() != cols) {
    throw InvalidInput("inner solve: dimension mismatch");
  }
  InnerSolveResult out;
  if (warm_start) {
    out.xi = warm_start->first;
    out.eta = warm_start->second;
    if (out.xi.size() != rows || out.eta.size() != cols) throw InvalidInput("inner solve: warm start has wrong size");
  } else {
    out.xi = Vector::Ones(rows);
    out.eta = Vector::Ones(cols);
  }
  const double mass = out.xi.dot(z_kernel * out.eta);
  if (!(mass > 0.0) || !std::isfinite(mass)) throw SolverFailure("inner solve: kernel mass is not positive");
  out.xi /= std::sqrt(mass);
  out.eta /= std::sqrt(mass);
  out.objective_trace.push_back(inner_objective(out.xi, out.eta, mu_hat, nu_hat, m));

  auto kkt = [&](double theta) {
    const Vector r = -mu_hat.cwiseQuotient(out.xi) + m * out.eta - theta * (z_kernel * out.eta);
    return r.lpNorm<Eigen::Infinity>();
  };

  if (max_iters == 0) {
    out.theta1 = theta_root_p(out.eta, mu_hat, m, z_kernel);
    out.theta2 = theta_root_q(out.xi, nu_hat, m, z_kernel);
    out.kkt_residual = kkt(out.theta1);
    return out;
  }

  for (int k = 0; k < max_iters; ++k) {
    const Vector r1 = z_kernel * out.eta;
    const NormalizerRoot root1 = solve_normalizer(mu_hat, r1, m * out.eta);
    out.xi = normalized_update(mu_hat, r1, root1);
    out.theta1 = root1.theta();
    out.objective_trace.push_back(inner_objective(out.xi, out.eta, mu_hat, nu_hat, m));

    const Vector r2 = z_kernel.transpose() * out.xi;
    const NormalizerRoot root2 = solve_normalizer(nu_hat, r2, m.transpose() * out.xi);
    out.eta = normalized_update(nu_hat, r2, root2);
    out.theta2 = root2.theta();
    out.objective_trace.push_back(inner_objective(out.xi, out.eta, mu_hat, nu_hat, m));

    // (c xi, eta / c) leaves the plan, h and theta unchanged; keep both sides
    // at comparable magnitude so Z eta cannot drift toward underflow.
    const double balance = std::sqrt(out.xi.sum() / out.eta.sum());
    out.xi /= balance;
    out.eta *= balance;

    out.iterations = k + 1;
    out.kkt_residual = kkt(out.theta1);
    if (!std::isfinite(out.kkt_residual)) {
      throw SolverFailure("inner solve produced non-finite iterates", {{"iteration", k + 1}});
    }
    if (out.kkt_residual <= tol && std::abs(out.theta1 - out.theta2) <= tol) break;
  }
  return out;
}

InnerSolveResult inner_xi_eta_solve(const CostMatrix& cost, const CouplingMatrix& pi_hat, const Vector& z,
                                    const Vector& w, const HyperParams& params,
                                    const std::optional<std::pair<Vector, Vector>>& warm_start) {
  params.validate();
  detail::check_fit_shapes(pi_hat.entries(), cost.rows(), cost.cols());
  if (z.size() != cost.rows() || w.size() != cost.cols()) throw InvalidInput("inner solve: dual sizes mismatch");
  const Matrix kernel = (-params.lambda * cost.entries()).array().exp().matrix();
  const Matrix m = relaxation_weights(kernel, z, w, params.delta);
  const MarginalPair emp = marginals(pi_hat);
  return inner_xi_eta_solve(kernel, m, emp.mu.values(), emp.nu.values(), params.inner_iters, params.inner_tol,
                            warm_start);
}

double riot_block_objective(const Matrix& plan, const Matrix& pi_hat, const Vector& z, const Vector& w,
                            double delta) {
  return cross_entropy(pi_hat, plan) +
         delta * (z.dot(plan.rowwise().sum()) + w.dot(plan.colwise().sum().transpose()));
}

double riot_objective(const RiotState& state, const CouplingMatrix& pi_hat, const CostMatrix& cost_u,
                      const CostMatrix& cost_v, const HyperParams& params) {
  params.validate();
  detail::check_fit_shapes(pi_hat.entries(), state.current_plan.rows(), state.current_plan.cols());
  check_side_costs(cost_u.entries(), cost_v.entries(), pi_hat.rows(), pi_hat.cols());
  const MarginalPair emp = marginals(pi_hat);
  const MarginalPair model = marginals(state.current_plan);
  const SinkhornOptions sk{params.sinkhorn_tol, params.sinkhorn_max_iters};
  double value = cross_entropy(pi_hat.entries(), state.current_plan.entries());
  if (params.delta != 0.0) {
    value += params.delta * (rot_distance(cost_u, model.mu, emp.mu, params.lambda_u, sk) +
                             rot_distance(cost_v, model.nu, emp.nu, params.lambda_v, sk));
  }
  return value;
}

Matrix riot_grad_A(const RiotState& state, const CouplingMatrix& pi_hat, const ProfileSet& users,
                   const ProfileSet& items, const KernelSpec& kernel, const HyperParams& params) {
  params.validate();
  detail::check_fit_shapes(pi_hat.entries(), users.count(), items.count());
  const CostMatrix cost = kernel_cost(users, items, state.interaction, kernel);
  const Matrix z_kernel = (-params.lambda * cost.entries()).array().exp().matrix();
  if (state.xi.size() != cost.rows() || state.eta.size() != cost.cols() || state.z.size() != cost.rows() ||
      state.w.size() != cost.cols()) {
    throw InvalidInput("riot_grad_A: state sizes do not match the problem");
  }
  const double residual = std::abs(state.xi.dot(z_kernel * state.eta) - 1.0);
  if (!(residual <= 1e-6)) {
    throw SolverFailure("riot_grad_A: state violates the unit-mass constraint", {{"constraint_residual", residual}});
  }
  const Matrix plan = state.xi.asDiagonal() * z_kernel * state.eta.asDiagonal();
  const Matrix g = cost_gradient(pi_hat.entries(), plan, state.z, state.w, state.theta, params.lambda, params.delta);
  return kernel_cost_pullback(users, items, state.interaction, kernel, g);
}

DualUpdate dual_update_zw(const CouplingMatrix& plan, const ProbabilityVector& mu_hat, const ProbabilityVector& nu_hat,
                          const CostMatrix& cost_u, const CostMatrix& cost_v, const HyperParams& params,
                          const std::optional<std::pair<Vector, Vector>>& warm_log_scalings) {
  check_side_costs(cost_u.entries(), cost_v.entries(), plan.rows(), plan.cols());
  const SinkhornOptions sk{params.sinkhorn_tol, params.sinkhorn_max_iters};
  const MarginalPair model = marginals(plan);
  std::optional<Vector> warm_u;
  std::optional<Vector> warm_v;
  if (warm_log_scalings) {
    warm_u = warm_log_scalings->first;
    warm_v = warm_log_scalings->second;
  }
  SinkhornResult su = sinkhorn(cost_u, model.mu, mu_hat, params.lambda_u, sk, warm_u);
  SinkhornResult sv = sinkhorn(cost_v, model.nu, nu_hat, params.lambda_v, sk, warm_v);
  // Constant shifts of z or w do not change the plan, the gradient or the
  // relaxation value; centring keeps theta - delta (z_i + w_j) well scaled.
  Vector z = su.log_a / params.lambda_u;
  Vector w = sv.log_a / params.lambda_v;
  z.array() -= z.mean();
  w.array() -= w.mean();
  return {std::move(z), std::move(w), std::move(su), std::move(sv)};
}

namespace detail {

DriverResult run_alternation(const CouplingMatrix& pi_hat, const ProfileSet& users, const ProfileSet& items,
                             const KernelSpec& kernel, Matrix cost_u, Matrix cost_v, const HyperParams& params,
                             const RiotFitOptions& options, const SideCostUpdate& side_update) {
  params.validate();
  kernel.validate();
  const Index m = users.count();
  const Index n = items.count();
  check_fit_shapes(pi_hat.entries(), m, n);
  check_side_costs(cost_u, cost_v, m, n);
  const MarginalPair emp = marginals(pi_hat);
  if (!emp.mu.strictly_positive() || !emp.nu.strictly_positive()) {
    throw InvalidInput("riot_fit: empirical marginals must be strictly positive (drop empty rows/columns first)");
  }
  const Vector& mu_hat = emp.mu.values();
  const Vector& nu_hat = emp.nu.values();

  InteractionMatrix interaction = InteractionMatrix::zeros(users.dim(), items.dim());
  Vector z = Vector::Zero(m);
  Vector w = Vector::Zero(n);
  std::optional<std::pair<Vector, Vector>> warm_inner;
  if (options.initial_state) {
    const RiotState& s = *options.initial_state;
    if (s.interaction.rows() != users.dim() || s.interaction.cols() != items.dim() || s.z.size() != m ||
        s.w.size() != n || s.xi.size() != m || s.eta.size() != n) {
      throw InvalidInput("riot_fit: initial state does not match the problem dimensions");
    }
    interaction = s.interaction;
    z = s.z;
    w = s.w;
    warm_inner = std::make_pair(s.xi, s.eta);
  }
  std::optional<std::pair<Vector, Vector>> warm_duals;

  std::optional<DriverResult> out;
  std::vector<double> trace;
  std::vector<Matrix> history;
  double best = std::numeric_limits<double>::infinity();
  int accepted_steps = 0;

  for (int outer = 0;; ++outer) {
    const Block block =
        solve_block(interaction, users, items, kernel, pi_hat.entries(), mu_hat, nu_hat, z, w, params, warm_inner);
    warm_inner = std::make_pair(block.inner.xi, block.inner.eta);
    CouplingMatrix plan(block.plan);
    DualUpdate duals = dual_update_zw(plan, emp.mu, emp.nu, CostMatrix(cost_u), CostMatrix(cost_v), params, warm_duals);

    const double objective =
        cross_entropy(pi_hat.entries(), block.plan) +
        params.delta * (rot_primal_value(duals.user_side.plan.entries(), cost_u, params.lambda_u) +
                        rot_primal_value(duals.item_side.plan.entries(), cost_v, params.lambda_v));
    trace.push_back(objective);
    if (!std::isfinite(objective) || !std::isfinite(block.objective)) {
      throw SolverFailure("riot_fit: non-finite objective", {{"objective_trace", trace}});
    }
    if (options.keep_history) history.push_back(interaction.entries());

    RiotState state{interaction, block.inner.xi, block.inner.eta, block.inner.theta1, z, w, plan, objective};
    if (!out) {
      out.emplace(DriverResult{RiotFitResult{interaction, plan, marginals(plan), {}, state, state, 0, {}}, cost_u,
                               cost_v, cost_u, cost_v});
    }
    if (objective < best) {
      best = objective;
      out->fit.state = state;
      out->best_cost_u = cost_u;
      out->best_cost_v = cost_v;
    }
    out->fit.final_state = state;
    out->final_cost_u = cost_u;
    out->final_cost_v = cost_v;

    if (outer == params.outer_iters) break;

    const Matrix g =
        cost_gradient(pi_hat.entries(), block.plan, z, w, block.inner.theta1, params.lambda, params.delta);
    const Matrix grad = kernel_cost_pullback(users, items, interaction, kernel, g);
    if (grad.norm() <= kGradientTolerance) break;

    double step = params.step_size;
    std::optional<InteractionMatrix> accepted;
    for (int halving = 0; halving <= kMaxStepHalvings; ++halving, step *= 0.5) {
      InteractionMatrix trial(interaction.entries() - step * grad);
      try {
        const Block tb =
            solve_block(trial, users, items, kernel, pi_hat.entries(), mu_hat, nu_hat, z, w, params, warm_inner);
        if (std::isfinite(tb.objective) && tb.objective <= block.objective) {
          accepted = std::move(trial);
          break;
        }
      } catch (const SolverFailure&) {
        // Rejected like an uphill step.
      }
    }
    if (!accepted) break;
    interaction = std::move(*accepted);
    ++accepted_steps;

    warm_duals = std::make_pair(duals.user_side.log_a, duals.item_side.log_a);
    if (side_update) {
      side_update(plan.row_marginal(), plan.col_marginal(), duals, cost_u, cost_v);
      duals = dual_update_zw(plan, emp.mu, emp.nu, CostMatrix(cost_u), CostMatrix(cost_v), params, warm_duals);
      warm_duals = std::make_pair(duals.user_side.log_a, duals.item_side.log_a);
    }
    z = std::move(duals.z);
    w = std::move(duals.w);
  }

  RiotFitResult& fit = out->fit;
  fit.interaction = fit.state.interaction;
  fit.fitted_plan = fit.state.current_plan;
  fit.relaxed_marginals = marginals(fit.fitted_plan);
  fit.objective_trace = std::move(trace);
  fit.iterations = accepted_steps;
  fit.history = std::move(history);
  return std::move(*out);
}

}  // namespace detail

RiotFitResult riot_fit(const CouplingMatrix& pi_hat, const ProfileSet& users, const ProfileSet& items,
                       const KernelSpec& kernel, const CostMatrix& cost_u, const CostMatrix& cost_v,
                       const HyperParams& params, const RiotFitOptions& options) {
  return detail::run_alternation(pi_hat, users, items, kernel, cost_u.entries(), cost_v.entries(), params, options,
                                 {})
      .fit;
}

CouplingMatrix predict_matching(const InteractionMatrix& interaction, const ProfileSet& users_new,
                                const ProfileSet& items_new, const ProbabilityVector& mu_new,
                                const ProbabilityVector& nu_new, const KernelSpec& kernel, double lambda,
                                const SinkhornOptions& options) {
  if (mu_new.size() != users_new.count() || nu_new.size() != items_new.count()) {
    throw InvalidInput("predict: marginal sizes do not match the number of profiles");
  }
  const CostMatrix cost = kernel_cost(users_new, items_new, interaction, kernel);
  return sinkhorn(cost, mu_new, nu_new, lambda, options).plan;
}

}  // namespace riot
