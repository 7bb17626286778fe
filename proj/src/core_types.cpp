#include "riot/core_types.hpp"

#include <cmath>
#include <string>

namespace riot {
namespace {

std::string cell(Index i, Index j) { return "(" + std::to_string(i) + ", " + std::to_string(j) + ")"; }

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (!std::isfinite(m(i, j))) {
        throw InvalidInput(std::string(what) + ": non-finite entry at " + cell(i, j));
      }
    }
  }
}

template <typename Derived>
double checked_mass(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (m.size() == 0) throw InvalidInput(std::string(what) + ": empty");
  require_finite(m, what);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (m(i, j) < 0.0) throw InvalidInput(std::string(what) + ": negative mass at " + cell(i, j));
    }
  }
  const double total = m.sum();
  if (std::abs(total - 1.0) > kProbabilityTolerance) {
    throw InvalidInput(std::string(what) + ": total mass " + std::to_string(total) + " is not 1");
  }
  return total;
}

}  // namespace

ProbabilityVector::ProbabilityVector(Vector values) : values_(std::move(values)) {
  values_ /= checked_mass(values_, "probability vector");
}

ProbabilityVector ProbabilityVector::uniform(Index size) {
  if (size < 1) throw InvalidInput("probability vector: empty");
  return ProbabilityVector(Vector::Constant(size, 1.0 / static_cast<double>(size)));
}

CouplingMatrix::CouplingMatrix(Matrix entries) : entries_(std::move(entries)) {
  entries_ /= checked_mass(entries_, "coupling matrix");
}

ProbabilityVector CouplingMatrix::row_marginal() const { return ProbabilityVector(entries_.rowwise().sum()); }

ProbabilityVector CouplingMatrix::col_marginal() const {
  return ProbabilityVector(entries_.colwise().sum().transpose());
}

CostMatrix::CostMatrix(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.size() == 0) throw InvalidInput("cost matrix: empty");
  require_finite(entries_, "cost matrix");
}

double MetricMatrix::worst_violation(const Matrix& c) {
  const Index d = c.rows();
  double worst = 0.0;
  for (Index i = 0; i < d; ++i) {
    worst = std::max(worst, std::abs(c(i, i)));
    for (Index j = 0; j < d; ++j) {
      worst = std::max(worst, std::abs(c(i, j) - c(j, i)));
      worst = std::max(worst, -c(i, j));
    }
  }
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) {
      for (Index k = 0; k < d; ++k) {
        worst = std::max(worst, c(i, j) - c(i, k) - c(k, j));
      }
    }
  }
  return worst;
}

MetricMatrix::MetricMatrix(Matrix entries, double tolerance) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols() || entries_.size() == 0) {
    throw InvalidInput("metric matrix: must be square and non-empty");
  }
  require_finite(entries_, "metric matrix");
  const double worst = worst_violation(entries_);
  if (worst > tolerance) {
    throw InvalidInput("metric matrix: constraint violated by " + std::to_string(worst));
  }
}

InteractionMatrix::InteractionMatrix(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.size() == 0) throw InvalidInput("interaction matrix: empty");
  require_finite(entries_, "interaction matrix");
}

ProfileSet::ProfileSet(Matrix features) : features_(std::move(features)) {
  if (features_.cols() < 1 || features_.rows() < 1) throw InvalidInput("profile set: needs at least one individual");
  require_finite(features_, "profile set");
}

MatchCounts::MatchCounts(CountMatrix counts) : counts_(std::move(counts)) {
  for (Index i = 0; i < counts_.rows(); ++i) {
    for (Index j = 0; j < counts_.cols(); ++j) {
      if (counts_(i, j) < 0) throw InvalidInput("match counts: negative count at " + cell(i, j));
      total_ += counts_(i, j);
    }
  }
  if (total_ < 1) throw InvalidInput("empty matching data");
}

void HyperParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidInput(std::string("hyper-parameter ") + name + " must be positive");
  };
  positive(lambda, "lambda");
  positive(lambda_u, "lambda_u");
  positive(lambda_v, "lambda_v");
  positive(step_size, "step_size");
  positive(inner_tol, "inner_tol");
  positive(sinkhorn_tol, "sinkhorn_tol");
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw InvalidInput("hyper-parameter delta must be nonnegative");
  if (outer_iters < 0) throw InvalidInput("hyper-parameter outer_iters must be nonnegative");
  if (inner_iters < 0) throw InvalidInput("hyper-parameter inner_iters must be nonnegative");
  if (sinkhorn_max_iters < 1) throw InvalidInput("hyper-parameter sinkhorn_max_iters must be positive");
}

CouplingMatrix normalize_counts(const MatchCounts& counts) {
  if (counts.total() < 1) throw InvalidInput("empty matching data");
  Matrix pi = counts.counts().cast<double>() / static_cast<double>(counts.total());
  return CouplingMatrix(std::move(pi));
}

MarginalPair marginals(const CouplingMatrix& pi) { return {pi.row_marginal(), pi.col_marginal()}; }

}  // namespace riot
