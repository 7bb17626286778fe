#include "riot/analysis.hpp"

#include <cmath>
#include <string>

namespace riot {
namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput(std::string(what) + ": shapes " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                       " and " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + " differ");
  }
}

Matrix log_plan(const Matrix& pi, const char* what) {
  if (!(pi.array() > 0.0).all()) throw InvalidInput(std::string(what) + ": plan has zero entries");
  return pi.array().log().matrix();
}

}  // namespace

BoundReport make_bound_report(double bound, double observed) {
  bound = std::max(bound, 0.0);
  observed = std::max(observed, 0.0);
  return {bound, observed, observed >= bound - kBoundTolerance};
}

double kl_divergence(const Matrix& p, const Matrix& q) {
  require_same_shape(p, q, "kl divergence");
  double s = 0.0;
  for (Index i = 0; i < p.rows(); ++i) {
    for (Index j = 0; j < p.cols(); ++j) {
      if (p(i, j) <= 0.0) continue;
      if (!(q(i, j) > 0.0)) {
        throw InvalidInput("kl divergence: reference is zero at row " + std::to_string(i) + ", column " +
                           std::to_string(j) + " where the first argument is positive");
      }
      s += p(i, j) * std::log(p(i, j) / q(i, j));
    }
  }
  return std::max(s, 0.0);
}

double kl_divergence(const CouplingMatrix& p, const CouplingMatrix& q) { return kl_divergence(p.entries(), q.entries()); }

double coupling_gap_lower_bound(const Vector& mu1, const Vector& nu1, const Vector& mu2, const Vector& nu2) {
  if (mu1.size() != mu2.size() || nu1.size() != nu2.size()) throw InvalidInput("coupling gap: dimension mismatch");
  const double m = static_cast<double>(mu1.size());
  const double n = static_cast<double>(nu1.size());
  return (mu1 - mu2).squaredNorm() / n + (nu1 - nu2).squaredNorm() / m;
}

BoundReport coupling_gap_check(const CouplingMatrix& pi1, const CouplingMatrix& pi2) {
  require_same_shape(pi1.entries(), pi2.entries(), "coupling gap");
  const MarginalPair a = marginals(pi1);
  const MarginalPair b = marginals(pi2);
  return make_bound_report(coupling_gap_lower_bound(a.mu.values(), a.nu.values(), b.mu.values(), b.nu.values()),
                           (pi1.entries() - pi2.entries()).squaredNorm());
}

double iot_error_lower_bound(const Vector& delta_mu, const Vector& delta_nu, Index m, Index n) {
  if (m < 1 || n < 1) throw InvalidInput("iot error bound: dimensions must be positive");
  const double a = delta_mu.lpNorm<1>();
  const double b = delta_nu.lpNorm<1>();
  return std::sqrt((a * a + b * b) / (static_cast<double>(m) * static_cast<double>(n)));
}

BoundReport iot_error_check(const CouplingMatrix& pi0, const CouplingMatrix& pi_fit) {
  require_same_shape(pi0.entries(), pi_fit.entries(), "iot error bound");
  const MarginalPair a = marginals(pi0);
  const MarginalPair b = marginals(pi_fit);
  const double bound =
      iot_error_lower_bound(a.mu.values() - b.mu.values(), a.nu.values() - b.nu.values(), pi0.rows(), pi0.cols());
  return make_bound_report(bound, (pi0.entries() - pi_fit.entries()).lpNorm<1>());
}

ShiftFit fit_shift(const Matrix& m) {
  const Index rows = m.rows();
  const Index cols = m.cols();
  if (rows == 0 || cols == 0) throw InvalidInput("shift fit: empty matrix");
  // Normal equations [[n I, 1 1^T], [1 1^T, m I]] x = [M 1; M^T 1]. The
  // system is singular along [1; -1]; adding the rank-one term for that
  // direction gives a positive definite matrix with the same solution on
  // its complement, where the right-hand side lives.
  const Index d = rows + cols;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
  gram.topLeftCorner(rows, rows).diagonal().setConstant(static_cast<double>(cols));
  gram.bottomRightCorner(cols, cols).diagonal().setConstant(static_cast<double>(rows));
  gram.topRightCorner(rows, cols).setOnes();
  gram.bottomLeftCorner(cols, rows).setOnes();
  Eigen::VectorXd null_dir(d);
  null_dir.head(rows).setOnes();
  null_dir.tail(cols).setConstant(-1.0);
  null_dir.normalize();
  gram += null_dir * null_dir.transpose();

  Eigen::VectorXd f(d);
  f.head(rows) = m.rowwise().sum();
  f.tail(cols) = m.colwise().sum().transpose();
  const Eigen::VectorXd x = gram.ldlt().solve(f);

  ShiftFit out{x.head(rows), x.tail(cols), 0.0};
  Matrix r = m;
  r.colwise() -= out.a;
  r.rowwise() -= out.b.transpose();
  out.residual = r.norm();
  return out;
}

double cost_shift_distance(const Matrix& c1, const Matrix& c2) {
  require_same_shape(c1, c2, "cost shift distance");
  return fit_shift(c2 - c1).residual;
}

double cost_shift_distance(const CostMatrix& c1, const CostMatrix& c2) {
  return cost_shift_distance(c1.entries(), c2.entries());
}

Matrix shift_align(const Matrix& learned, const Matrix& reference) {
  require_same_shape(learned, reference, "shift alignment");
  const ShiftFit s = fit_shift(reference - learned);
  Matrix out = learned;
  out.colwise() += s.a;
  out.rowwise() += s.b.transpose();
  return out;
}

BoundReport cost_error_bound_check(const CostMatrix& c0, const CostMatrix& c_learned, const CouplingMatrix& pi0,
                                   const CouplingMatrix& pi_hat, double lambda) {
  if (!(lambda > 0.0)) throw InvalidInput("cost error bound: lambda must be positive");
  require_same_shape(c0.entries(), c_learned.entries(), "cost error bound");
  require_same_shape(c0.entries(), pi0.entries(), "cost error bound");
  require_same_shape(c0.entries(), pi_hat.entries(), "cost error bound");
  const Matrix dlog = log_plan(pi_hat.entries(), "cost error bound") - log_plan(pi0.entries(), "cost error bound");
  const double r = fit_shift(dlog).residual;
  return make_bound_report(r * r / (lambda * lambda), (c_learned.entries() - c0.entries()).squaredNorm());
}

BoundReport prediction_error_bound_check(const CostMatrix& c0, const CostMatrix& c_learned, const ProbabilityVector& mu,
                                         const ProbabilityVector& nu, double lambda, const SinkhornOptions& options) {
  if (!(lambda > 0.0)) throw InvalidInput("prediction error bound: lambda must be positive");
  require_same_shape(c0.entries(), c_learned.entries(), "prediction error bound");
  const SinkhornResult s0 = sinkhorn(c0, mu, nu, lambda, options);
  const SinkhornResult s1 = sinkhorn(c_learned, mu, nu, lambda, options);
  // log pi = log a_i + log b_j - lambda C_ij, exact even where pi underflows.
  auto log_of = [&](const SinkhornResult& s, const Matrix& c) {
    Matrix l = -lambda * c;
    l.colwise() += s.log_a;
    l.rowwise() += s.log_b.transpose();
    return l;
  };
  const Matrix dlog = log_of(s1, c_learned.entries()) - log_of(s0, c0.entries());
  const double r = fit_shift(c_learned.entries() - c0.entries()).residual;
  return make_bound_report(lambda * lambda * r * r, dlog.squaredNorm());
}

MetricMatrix symmetric_cost_recovery(const CouplingMatrix& pi, double lambda) {
  if (!(lambda > 0.0)) throw InvalidInput("cost recovery: lambda must be positive");
  if (pi.rows() != pi.cols()) throw InvalidInput("cost recovery: plan must be square");
  const Matrix logp = log_plan(pi.entries(), "cost recovery");
  const Index n = pi.rows();
  // log t_i - log t_1 = (log pi_i1 - log pi_1i) / 2.
  Vector log_t(n);
  for (Index i = 0; i < n; ++i) log_t[i] = 0.5 * (logp(i, 0) - logp(0, i));
  double worst = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      worst = std::max(worst, std::abs(log_t[i] - log_t[j] - 0.5 * (logp(i, j) - logp(j, i))));
    }
  }
  if (worst > 1e-6) {
    throw InvalidInput("plan not generated by symmetric hollow cost (cycle inconsistency " + std::to_string(worst) +
                       ")");
  }
  Matrix c(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double log_k = logp(i, j) - 0.5 * (logp(i, i) + logp(j, j)) - (log_t[i] - log_t[j]);
      c(i, j) = -log_k / lambda;
    }
  }
  Matrix sym = 0.5 * (c + c.transpose());
  sym.diagonal().setZero();
  return MetricMatrix(std::move(sym), 1e-6);
}

MatchingErrors eval_matching(const CouplingMatrix& pred, const CouplingMatrix& test) {
  require_same_shape(pred.entries(), test.entries(), "eval");
  const Matrix diff = pred.entries() - test.entries();
  const double count = static_cast<double>(diff.size());
  return {std::sqrt(diff.squaredNorm() / count), diff.cwiseAbs().sum() / count,
          kl_divergence(test.entries(), pred.entries())};
}

}  // namespace riot
