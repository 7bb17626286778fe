#include "riot/entropic_ot.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace riot {
namespace {

constexpr double kScalingCeiling = 1e150;
constexpr double kScalingFloor = 1e-150;

bool well_scaled(const Vector& v) {
  for (Index i = 0; i < v.size(); ++i) {
    const double x = v[i];
    if (!std::isfinite(x) || x > kScalingCeiling || x < kScalingFloor) return false;
  }
  return true;
}

double marginal_error(const Matrix& plan, const Vector& mu, const Vector& nu) {
  const double row = (plan.rowwise().sum() - mu).lpNorm<1>();
  const double col = (plan.colwise().sum().transpose() - nu).lpNorm<1>();
  return std::max(row, col);
}

void check_problem(const CostMatrix& cost, const ProbabilityVector& mu, const ProbabilityVector& nu, double lambda) {
  if (cost.rows() != mu.size() || cost.cols() != nu.size()) {
    throw InvalidInput("sinkhorn: cost is " + std::to_string(cost.rows()) + "x" + std::to_string(cost.cols()) +
                       " but marginals have sizes " + std::to_string(mu.size()) + " and " + std::to_string(nu.size()));
  }
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidInput("sinkhorn: lambda must be positive");
  if (!mu.strictly_positive() || !nu.strictly_positive()) {
    throw InvalidInput("sinkhorn: marginals must be strictly positive (drop empty rows/columns first)");
  }
}

struct Iterate {
  Vector log_a;
  Vector log_b;
  Matrix plan;
  double error = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

// Log-sum-exp updates; robust to arbitrarily scaled kernels.
void solve_log_domain(const Matrix& scaled_cost, const Vector& log_mu, const Vector& log_nu, const Vector& mu,
                      const Vector& nu, const SinkhornOptions& options, Iterate& it) {
  const Index m = scaled_cost.rows();
  const Index n = scaled_cost.cols();
  Vector& f = it.log_a;
  Vector& g = it.log_b;
  g.resize(n);
  while (it.iterations < options.max_iters) {
    ++it.iterations;
    for (Index j = 0; j < n; ++j) {
      const auto col = f - scaled_cost.col(j);
      const double top = col.maxCoeff();
      g[j] = log_nu[j] - (top + std::log((col.array() - top).exp().sum()));
    }
    for (Index i = 0; i < m; ++i) {
      const auto row = g.transpose() - scaled_cost.row(i);
      const double top = row.maxCoeff();
      f[i] = log_mu[i] - (top + std::log((row.array() - top).exp().sum()));
    }
    it.plan = ((-scaled_cost).colwise() + f).rowwise() + g.transpose();
    it.plan = it.plan.array().exp().matrix();
    it.error = marginal_error(it.plan, mu, nu);
    if (it.error <= options.tol) {
      it.converged = true;
      return;
    }
  }
}

}  // namespace

SinkhornNotConverged::SinkhornNotConverged(Matrix last_plan, Vector log_a, Vector log_b, int iterations, double error)
    : SolverFailure("sinkhorn did not converge within " + std::to_string(iterations) +
                        " iterations (marginal error " + std::to_string(error) + ")",
                    nlohmann::json{{"solver", "sinkhorn"}, {"iterations", iterations}, {"marginal_error", error}}),
      last_plan_(std::move(last_plan)),
      log_a_(std::move(log_a)),
      log_b_(std::move(log_b)),
      error_(error) {}

SinkhornResult sinkhorn(const CostMatrix& cost, const ProbabilityVector& mu, const ProbabilityVector& nu,
                        double lambda, const SinkhornOptions& options, const std::optional<Vector>& initial_log_a) {
  check_problem(cost, mu, nu, lambda);
  const Index m = cost.rows();
  const Index n = cost.cols();
  if (initial_log_a && initial_log_a->size() != m) throw InvalidInput("sinkhorn: initial scaling has wrong size");

  const Matrix scaled_cost = lambda * cost.entries();
  const Vector& muv = mu.values();
  const Vector& nuv = nu.values();

  Iterate it;
  it.log_a = initial_log_a ? *initial_log_a : Vector::Zero(m);
  bool log_domain = false;

  const Matrix kernel = (-scaled_cost).array().exp().matrix();
  const bool kernel_ok = (kernel.array() > 0.0).all() && kernel.allFinite();
  Vector a = it.log_a.array().exp().matrix();
  if (!kernel_ok || !well_scaled(a)) {
    log_domain = true;
  } else {
    Vector b(n);
    Vector kta = kernel.transpose() * a;
    while (it.iterations < options.max_iters) {
      ++it.iterations;
      const Vector a_prev = a;
      b = nuv.cwiseQuotient(kta);
      const Vector kb = kernel * b;
      a = muv.cwiseQuotient(kb);
      if (!well_scaled(a) || !well_scaled(b)) {
        it.log_a = a_prev.array().log().matrix();
        log_domain = true;
        break;
      }
      kta = kernel.transpose() * a;
      const double row = (a.cwiseProduct(kb) - muv).lpNorm<1>();
      const double col = (b.cwiseProduct(kta) - nuv).lpNorm<1>();
      it.error = std::max(row, col);
      if (it.error <= options.tol) {
        it.converged = true;
        break;
      }
    }
    if (!log_domain) {
      it.log_a = a.array().log().matrix();
      it.log_b = b.array().log().matrix();
      it.plan = a.asDiagonal() * kernel * b.asDiagonal();
    }
  }
  if (log_domain) {
    const Vector log_mu = muv.array().log().matrix();
    const Vector log_nu = nuv.array().log().matrix();
    solve_log_domain(scaled_cost, log_mu, log_nu, muv, nuv, options, it);
  }
  if (!it.converged) {
    throw SinkhornNotConverged(std::move(it.plan), std::move(it.log_a), std::move(it.log_b), it.iterations, it.error);
  }

  // Fold the residual mass defect into b so the plan sums to one exactly.
  const double mass = it.plan.sum();
  it.plan /= mass;
  it.log_b.array() -= std::log(mass);
  const double error = marginal_error(it.plan, muv, nuv);

  SinkhornResult result{CouplingMatrix(std::move(it.plan)),
                        it.log_a.array().exp().matrix(),
                        it.log_b.array().exp().matrix(),
                        std::move(it.log_a),
                        std::move(it.log_b),
                        it.iterations,
                        error,
                        log_domain};
  return result;
}

double entropy(const Matrix& pi) {
  double h = 0.0;
  for (Index i = 0; i < pi.rows(); ++i) {
    for (Index j = 0; j < pi.cols(); ++j) {
      const double p = pi(i, j);
      if (p > 0.0) h -= p * (std::log(p) - 1.0);
    }
  }
  return h;
}

double rot_primal_value(const Matrix& pi, const Matrix& cost, double lambda) {
  return pi.cwiseProduct(cost).sum() - entropy(pi) / lambda;
}

double rot_distance(const CostMatrix& cost, const ProbabilityVector& mu, const ProbabilityVector& nu, double lambda,
                    const SinkhornOptions& options) {
  const SinkhornResult s = sinkhorn(cost, mu, nu, lambda, options);
  return rot_primal_value(s.plan.entries(), cost.entries(), lambda);
}

Vector c_transform(const Vector& z, const Matrix& cost, const Vector& nu, double lambda) {
  Vector out(cost.cols());
  for (Index j = 0; j < cost.cols(); ++j) {
    const Vector e = lambda * (z - cost.col(j));
    const double top = e.maxCoeff();
    const double lse = top + std::log((e.array() - top).exp().sum());
    out[j] = (std::log(nu[j]) - lse) / lambda;
  }
  return out;
}

double rot_dual_objective(const Vector& z, const Matrix& cost, const Vector& mu, const Vector& nu, double lambda) {
  const Vector zc = c_transform(z, cost, nu, lambda);
  return z.dot(mu) + zc.dot(nu) - 1.0 / lambda;
}

DualValue rot_dual_value(const CostMatrix& cost, const ProbabilityVector& mu, const ProbabilityVector& nu,
                         double lambda, const SinkhornOptions& options) {
  const SinkhornResult s = sinkhorn(cost, mu, nu, lambda, options);
  DualValue out;
  out.potentials.z = s.log_a / lambda;
  out.potentials.z_conjugate = c_transform(out.potentials.z, cost.entries(), nu.values(), lambda);
  out.value = out.potentials.z.dot(mu.values()) + out.potentials.z_conjugate.dot(nu.values()) - 1.0 / lambda;
  return out;
}

}  // namespace riot
