#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "riot/errors.hpp"

namespace riot {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
/// Dense row-major matrix used for every coupling and cost container.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Absolute tolerance on the total mass of probability vectors and couplings.
inline constexpr double kProbabilityTolerance = 1e-9;

/// Point of the probability simplex. Inputs whose sum is within
/// kProbabilityTolerance of one are renormalized by their actual sum.
class ProbabilityVector {
 public:
  explicit ProbabilityVector(Vector values);

  static ProbabilityVector uniform(Index size);

  const Vector& values() const noexcept { return values_; }
  Index size() const noexcept { return values_.size(); }
  double operator[](Index i) const { return values_[i]; }
  bool strictly_positive() const { return (values_.array() > 0.0).all(); }

 private:
  Vector values_;
};

/// Nonnegative matrix of total mass one (a joint distribution).
class CouplingMatrix {
 public:
  explicit CouplingMatrix(Matrix entries);

  const Matrix& entries() const noexcept { return entries_; }
  Index rows() const noexcept { return entries_.rows(); }
  Index cols() const noexcept { return entries_.cols(); }
  double operator()(Index i, Index j) const { return entries_(i, j); }

  ProbabilityVector row_marginal() const;
  ProbabilityVector col_marginal() const;

 private:
  Matrix entries_;
};

/// Matrix of finite matching costs.
class CostMatrix {
 public:
  explicit CostMatrix(Matrix entries);

  const Matrix& entries() const noexcept { return entries_; }
  Index rows() const noexcept { return entries_.rows(); }
  Index cols() const noexcept { return entries_.cols(); }
  double operator()(Index i, Index j) const { return entries_(i, j); }

 private:
  Matrix entries_;
};

/// Square hollow symmetric nonnegative matrix satisfying every triangle
/// inequality (a point of the cone of distance matrices).
class MetricMatrix {
 public:
  static constexpr double kDefaultTolerance = 1e-7;

  explicit MetricMatrix(Matrix entries, double tolerance = kDefaultTolerance);

  /// Largest violation of the metric-cone constraints (zero diagonal,
  /// symmetry, nonnegativity, triangle inequalities). Zero inside the cone.
  static double worst_violation(const Matrix& entries);

  const Matrix& entries() const noexcept { return entries_; }
  Index size() const noexcept { return entries_.rows(); }
  CostMatrix as_cost() const { return CostMatrix(entries_); }

 private:
  Matrix entries_;
};

/// Kernel parameter A of the cost C(A) = f(U^T A V).
class InteractionMatrix {
 public:
  explicit InteractionMatrix(Matrix entries);
  static InteractionMatrix zeros(Index p, Index q) { return InteractionMatrix(Matrix::Zero(p, q)); }

  const Matrix& entries() const noexcept { return entries_; }
  Index rows() const noexcept { return entries_.rows(); }
  Index cols() const noexcept { return entries_.cols(); }

 private:
  Matrix entries_;
};

/// Feature vectors of one side of the market, one column per individual.
class ProfileSet {
 public:
  explicit ProfileSet(Matrix features);

  const Matrix& features() const noexcept { return features_; }
  Index dim() const noexcept { return features_.rows(); }
  Index count() const noexcept { return features_.cols(); }

 private:
  Matrix features_;
};

/// Raw co-occurrence counts N_ij.
class MatchCounts {
 public:
  explicit MatchCounts(CountMatrix counts);

  const CountMatrix& counts() const noexcept { return counts_; }
  std::int64_t total() const noexcept { return total_; }

 private:
  CountMatrix counts_;
  std::int64_t total_ = 0;
};

struct MarginalPair {
  ProbabilityVector mu;
  ProbabilityVector nu;
};

/// Solver hyper-parameters shared by the fixed-marginal and relaxed estimators.
struct HyperParams {
  double lambda = 1.0;
  double lambda_u = 1.0;
  double lambda_v = 1.0;
  double delta = 0.01;
  double step_size = 10.0;
  int outer_iters = 50;
  /// Upper bound on alternating xi/eta sweeps per inner solve.
  int inner_iters = 100;
  /// Early exit of the inner solve once its stationarity residual drops below this.
  double inner_tol = 1e-11;
  double sinkhorn_tol = 1e-9;
  int sinkhorn_max_iters = 10000;

  /// Throws InvalidInput naming the first offending field.
  void validate() const;
};

CouplingMatrix normalize_counts(const MatchCounts& counts);
MarginalPair marginals(const CouplingMatrix& pi);

}  // namespace riot
