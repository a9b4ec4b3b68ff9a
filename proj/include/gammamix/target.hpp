#pragma once

#include <cstddef>

#include <Eigen/Core>

namespace gammamix {

/// Differentiable log-density over an unconstrained real vector. Must be
/// safe to call concurrently from several sampler chains.
class Target {
 public:
  virtual ~Target() = default;

  [[nodiscard]] virtual std::size_t dimension() const = 0;
  [[nodiscard]] virtual double log_density(const Eigen::VectorXd& q) const = 0;
  /// Returns the log-density and writes its gradient into grad.
  virtual double log_density_gradient(const Eigen::VectorXd& q, Eigen::VectorXd& grad) const = 0;
};

}  // namespace gammamix
