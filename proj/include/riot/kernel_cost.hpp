#pragma once

#include <string>

#include "riot/core_types.hpp"

namespace riot {

enum class KernelKind { linear, polynomial, sigmoid };

/// Inner-product kernel k(x, y) = f(x^T y).
///   linear:     f(t) = t
///   polynomial: f(t) = (gamma t + c0)^degree
///   sigmoid:    f(t) = tanh(gamma t + c0)
struct KernelSpec {
  KernelKind kind = KernelKind::linear;
  double gamma = 1.0;
  double c0 = 0.0;
  int degree = 1;

  static KernelSpec linear() { return {}; }
  static KernelSpec polynomial(double gamma, double c0, int degree) {
    return {KernelKind::polynomial, gamma, c0, degree};
  }
  static KernelSpec sigmoid(double gamma, double c0) { return {KernelKind::sigmoid, gamma, c0, 1}; }

  void validate() const;

  /// Polynomial kernels refuse |gamma t + c0| above this bound.
  static constexpr double kPolynomialBaseLimit = 1e6;

  double value(double t) const;
  double derivative(double t) const;
};

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& name);

/// U^T A V for U (p x m), V (q x n), A (p x q).
Matrix bilinear_scores(const ProfileSet& users, const ProfileSet& items, const InteractionMatrix& interaction);

/// C_ij = f(u_i^T A v_j).
CostMatrix kernel_cost(const ProfileSet& users, const ProfileSet& items, const InteractionMatrix& interaction,
                       const KernelSpec& kernel);

/// Entrywise <C'_ij(A), W> = f'(u_i^T A v_j) u_i^T W v_j.
Matrix kernel_cost_directional_grad(const ProfileSet& users, const ProfileSet& items,
                                    const InteractionMatrix& interaction, const KernelSpec& kernel,
                                    const Matrix& direction);

/// sum_ij g_ij C'_ij(A) = U (G .* f'(U^T A V)) V^T, the pullback of a cost
/// gradient G (m x n) to the interaction matrix (p x q).
Matrix kernel_cost_pullback(const ProfileSet& users, const ProfileSet& items, const InteractionMatrix& interaction,
                            const KernelSpec& kernel, const Matrix& cost_gradient);

}  // namespace riot
