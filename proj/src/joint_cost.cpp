#include "riot/joint_cost.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <limits>

#include "riot_driver.hpp"

namespace riot {
namespace {

constexpr int kMaxProjectionCycles = 5000;
constexpr double kProjectionTolerance = 1e-12;

// Upper-triangular coordinates of a hollow symmetric matrix.
struct PairIndex {
  explicit PairIndex(Index d) : d(d), offset(static_cast<std::size_t>(d)) {
    Index k = 0;
    for (Index i = 0; i < d; ++i) {
      offset[static_cast<std::size_t>(i)] = k - i - 1;
      k += d - i - 1;
    }
    count = k;
  }
  Index operator()(Index i, Index j) const {
    if (i > j) std::swap(i, j);
    return offset[static_cast<std::size_t>(i)] + j;
  }
  Index d;
  Index count = 0;
  std::vector<Index> offset;
};

Matrix from_pairs(const Vector& x, const PairIndex& idx) {
  Matrix out = Matrix::Zero(idx.d, idx.d);
  for (Index i = 0; i < idx.d; ++i) {
    for (Index j = i + 1; j < idx.d; ++j) out(i, j) = out(j, i) = x[idx(i, j)];
  }
  return out;
}

double triangle_violation(const Vector& x, const PairIndex& idx) {
  double worst = 0.0;
  for (Index i = 0; i < idx.d; ++i) {
    for (Index j = i + 1; j < idx.d; ++j) {
      for (Index k = j + 1; k < idx.d; ++k) {
        const double a = x[idx(i, j)], b = x[idx(i, k)], c = x[idx(j, k)];
        worst = std::max({worst, a - b - c, b - a - c, c - a - b});
      }
    }
  }
  return worst;
}

}  // namespace

Vector project_simplex(const Vector& x, double total) {
  if (x.size() == 0) throw InvalidInput("simplex projection of an empty vector");
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double shift = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const double candidate = (cumulative - total) / static_cast<double>(k + 1);
    if (sorted[k] - candidate > 0.0) shift = candidate;
  }
  return (x.array() - shift).max(0.0).matrix();
}

MetricMatrix project_metric_simplex(const Matrix& m) {
  if (m.rows() != m.cols()) throw InvalidInput("metric projection: matrix must be square");
  if (m.rows() < 2) throw InvalidInput("metric projection: needs at least two points");
  if (!m.allFinite()) throw InvalidInput("metric projection: non-finite entry");
  const PairIndex idx(m.rows());
  const Index d = idx.d;

  Vector x(idx.count);
  for (Index i = 0; i < d; ++i) {
    for (Index j = i + 1; j < d; ++j) x[idx(i, j)] = 0.5 * (m(i, j) + m(j, i));
  }

  struct Triple {
    Index ij, ik, jk;
  };
  std::vector<Triple> triples;
  for (Index i = 0; i < d; ++i) {
    for (Index j = i + 1; j < d; ++j) {
      for (Index k = j + 1; k < d; ++k) triples.push_back({idx(i, j), idx(i, k), idx(j, k)});
    }
  }
  // Dykstra corrections: three half-spaces per triple, then the simplex.
  std::vector<double> corr(3 * triples.size(), 0.0);
  Vector simplex_corr = Vector::Zero(idx.count);

  // Each half-space is s . x <= 0 with s a permutation of (+1, -1, -1).
  auto project_halfspace = [&](Index p, Index q, Index r, double& c) {
    // Add back the previous correction along (1, -1, -1), project, store new one.
    x[p] += c;
    x[q] -= c;
    x[r] -= c;
    const double excess = x[p] - x[q] - x[r];
    c = excess > 0.0 ? excess / 3.0 : 0.0;
    x[p] -= c;
    x[q] += c;
    x[r] += c;
  };

  Vector previous = x;
  for (int cycle = 0; cycle < kMaxProjectionCycles; ++cycle) {
    for (std::size_t t = 0; t < triples.size(); ++t) {
      const Triple& tr = triples[t];
      project_halfspace(tr.ij, tr.ik, tr.jk, corr[3 * t]);
      project_halfspace(tr.ik, tr.ij, tr.jk, corr[3 * t + 1]);
      project_halfspace(tr.jk, tr.ij, tr.ik, corr[3 * t + 2]);
    }
    const Vector y = x + simplex_corr;
    x = project_simplex(y, 0.5);
    simplex_corr = y - x;

    const double change = (x - previous).lpNorm<Eigen::Infinity>();
    previous = x;
    if (change <= kProjectionTolerance && triangle_violation(x, idx) <= kProjectionTolerance) {
      return MetricMatrix(from_pairs(x, idx));
    }
  }
  const Matrix out = from_pairs(x, idx);
  const double worst = MetricMatrix::worst_violation(out);
  if (worst <= MetricMatrix::kDefaultTolerance) return MetricMatrix(out);
  throw SolverFailure("metric projection did not converge", {{"worst_violation", worst}});
}

Matrix grad_Cu_relaxation(const Vector& z, const ProbabilityVector& mu, const ProbabilityVector& mu_hat,
                          const CostMatrix& cost_u, double lambda_u, double delta) {
  const Index d = cost_u.rows();
  if (cost_u.cols() != d || z.size() != d || mu.size() != d || mu_hat.size() != d) {
    throw InvalidInput("side-cost gradient: dimension mismatch");
  }
  if (!(lambda_u > 0.0)) throw InvalidInput("side-cost gradient: lambda must be positive");
  if (delta == 0.0) return Matrix::Zero(d, d);
  Matrix p(d, d);
  for (Index j = 0; j < d; ++j) {
    double top = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < d; ++i) top = std::max(top, lambda_u * (z[i] - cost_u(i, j)));
    double sum = 0.0;
    for (Index i = 0; i < d; ++i) {
      p(i, j) = std::exp(lambda_u * (z[i] - cost_u(i, j)) - top);
      sum += p(i, j);
    }
    p.col(j) *= mu_hat[j] / sum;
  }
  return delta * p;
}

JointFitResult joint_fit(const CouplingMatrix& pi_hat, const ProfileSet& users, const ProfileSet& items,
                         const KernelSpec& kernel, const HyperParams& params, const JointFitOptions& options) {
  params.validate();
  const double side_step = options.side_step_size.value_or(0.1 * params.step_size);
  if (!(side_step >= 0.0) || !std::isfinite(side_step)) throw InvalidInput("side-cost step size must be nonnegative");
  const Index m = users.count();
  const Index n = items.count();
  if (m < 2 || n < 2) throw InvalidInput("joint fit needs at least two users and two items");

  auto initial = [](const std::optional<Matrix>& given, Index d, const char* name) {
    if (!given) {
      Matrix c = Matrix::Constant(d, d, 1.0 / static_cast<double>(d * (d - 1)));
      c.diagonal().setZero();
      return c;
    }
    if (given->rows() != d || given->cols() != d) {
      throw InvalidInput(std::string("initial ") + name + " must be " + std::to_string(d) + "x" + std::to_string(d));
    }
    return Matrix(project_metric_simplex(*given).entries());
  };
  Matrix cost_u = initial(options.initial_cost_u, m, "user-side cost");
  Matrix cost_v = initial(options.initial_cost_v, n, "item-side cost");

  const MarginalPair emp = marginals(pi_hat);
  detail::SideCostUpdate update;
  if (side_step > 0.0) {
    update = [&](const ProbabilityVector& mu_model, const ProbabilityVector& nu_model, const DualUpdate& duals,
                 Matrix& cu, Matrix& cv) {
      auto step = [&](const Vector& potential, const ProbabilityVector& model, const ProbabilityVector& target,
                      const Matrix& cost, double lambda) {
        const Matrix g = grad_Cu_relaxation(potential, model, target, CostMatrix(cost), lambda, params.delta);
        return Matrix(project_metric_simplex(cost - side_step * g).entries());
      };
      auto item_side = std::async(std::launch::async, step, std::cref(duals.w), std::cref(nu_model),
                                  std::cref(emp.nu), std::cref(cv), params.lambda_v);
      Matrix new_u = step(duals.z, mu_model, emp.mu, cu, params.lambda_u);
      cv = item_side.get();
      cu = std::move(new_u);
    };
  }

  RiotFitOptions riot_options;
  riot_options.keep_history = options.keep_history;
  detail::DriverResult run =
      detail::run_alternation(pi_hat, users, items, kernel, cost_u, cost_v, params, riot_options, update);
  return JointFitResult{run.fit.interaction,       MetricMatrix(run.best_cost_u), MetricMatrix(run.best_cost_v),
                        run.fit.fitted_plan,       run.fit.objective_trace,       std::move(run.fit)};
}

}  // namespace riot
