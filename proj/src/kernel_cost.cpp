#include "riot/kernel_cost.hpp"

#include <cmath>

namespace riot {
namespace {

void check_dims(const ProfileSet& users, const ProfileSet& items, const InteractionMatrix& interaction) {
  if (interaction.rows() != users.dim() || interaction.cols() != items.dim()) {
    throw InvalidInput("interaction matrix is " + std::to_string(interaction.rows()) + "x" +
                       std::to_string(interaction.cols()) + " but profiles have dimensions " +
                       std::to_string(users.dim()) + " and " + std::to_string(items.dim()));
  }
}

std::string at(Index i, Index j) { return " at (" + std::to_string(i) + ", " + std::to_string(j) + ")"; }

// Applies `fn` entrywise, naming the offending cell on failure.
template <typename Fn>
Matrix map_scores(const Matrix& scores, Fn&& fn, const char* what) {
  Matrix out(scores.rows(), scores.cols());
  for (Index i = 0; i < scores.rows(); ++i) {
    for (Index j = 0; j < scores.cols(); ++j) {
      try {
        out(i, j) = fn(scores(i, j));
      } catch (const SolverFailure& e) {
        throw SolverFailure(std::string(e.what()) + at(i, j), {{"cell", {i, j}}});
      }
      if (!std::isfinite(out(i, j))) {
        throw SolverFailure(std::string("non-finite kernel ") + what + at(i, j), {{"cell", {i, j}}});
      }
    }
  }
  return out;
}

}  // namespace

void KernelSpec::validate() const {
  if (!std::isfinite(gamma) || !std::isfinite(c0)) throw InvalidInput("kernel: gamma and c0 must be finite");
  if (kind == KernelKind::polynomial && degree < 1) throw InvalidInput("kernel: polynomial degree must be >= 1");
}

double KernelSpec::value(double t) const {
  switch (kind) {
    case KernelKind::linear:
      return t;
    case KernelKind::polynomial: {
      const double base = gamma * t + c0;
      if (std::abs(base) > kPolynomialBaseLimit) throw SolverFailure("polynomial kernel overflow guard tripped");
      return std::pow(base, degree);
    }
    case KernelKind::sigmoid:
      return std::tanh(gamma * t + c0);
  }
  return t;
}

double KernelSpec::derivative(double t) const {
  switch (kind) {
    case KernelKind::linear:
      return 1.0;
    case KernelKind::polynomial: {
      const double base = gamma * t + c0;
      if (std::abs(base) > kPolynomialBaseLimit) throw SolverFailure("polynomial kernel overflow guard tripped");
      return degree * gamma * std::pow(base, degree - 1);
    }
    case KernelKind::sigmoid: {
      const double th = std::tanh(gamma * t + c0);
      return gamma * (1.0 - th * th);
    }
  }
  return 1.0;
}

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::linear:
      return "linear";
    case KernelKind::polynomial:
      return "polynomial";
    case KernelKind::sigmoid:
      return "sigmoid";
  }
  return "linear";
}

KernelKind kernel_kind_from_string(const std::string& name) {
  if (name == "linear") return KernelKind::linear;
  if (name == "polynomial" || name == "poly") return KernelKind::polynomial;
  if (name == "sigmoid") return KernelKind::sigmoid;
  throw InvalidInput("unknown kernel kind '" + name + "'");
}

Matrix bilinear_scores(const ProfileSet& users, const ProfileSet& items, const InteractionMatrix& interaction) {
  check_dims(users, items, interaction);
  return users.features().transpose() * interaction.entries() * items.features();
}

CostMatrix kernel_cost(const ProfileSet& users, const ProfileSet& items, const InteractionMatrix& interaction,
                       const KernelSpec& kernel) {
  kernel.validate();
  const Matrix scores = bilinear_scores(users, items, interaction);
  return CostMatrix(map_scores(scores, [&](double t) { return kernel.value(t); }, "value"));
}

Matrix kernel_cost_directional_grad(const ProfileSet& users, const ProfileSet& items,
                                    const InteractionMatrix& interaction, const KernelSpec& kernel,
                                    const Matrix& direction) {
  kernel.validate();
  if (direction.rows() != interaction.rows() || direction.cols() != interaction.cols()) {
    throw InvalidInput("direction must have the shape of the interaction matrix");
  }
  const Matrix scores = bilinear_scores(users, items, interaction);
  const Matrix slope = map_scores(scores, [&](double t) { return kernel.derivative(t); }, "derivative");
  const Matrix projected = users.features().transpose() * direction * items.features();
  return slope.cwiseProduct(projected);
}

Matrix kernel_cost_pullback(const ProfileSet& users, const ProfileSet& items, const InteractionMatrix& interaction,
                            const KernelSpec& kernel, const Matrix& cost_gradient) {
  kernel.validate();
  const Matrix scores = bilinear_scores(users, items, interaction);
  if (cost_gradient.rows() != scores.rows() || cost_gradient.cols() != scores.cols()) {
    throw InvalidInput("cost gradient must be m x n");
  }
  const Matrix slope = map_scores(scores, [&](double t) { return kernel.derivative(t); }, "derivative");
  return users.features() * cost_gradient.cwiseProduct(slope) * items.features().transpose();
}

}  // namespace riot
