#pragma once

#include <cstddef>

#include <Eigen/Core>

#include "gammamix/dpgmm_model.hpp"
#include "gammamix/target.hpp"

namespace gammamix {

/// The DPGMM posterior in sampling coordinates where components at index
/// >= `occupied` and their sticks are non-centered:
///
///   shape slot:  z   with log alpha = log kappa - m(lambda, z)
///   rate slot:   z   with log beta  = m(nu, z) - log v
///   stick slot:  y   with -log(1 - V) = exp(y) / a
///
/// where m(s, .) is a smooth monotone map taking a roughly unit-scale z to
/// the log of a Gamma(s, 1) variate. Under the prior these coordinates have
/// comparable scale whatever the hyperparameters, which removes the funnels
/// that prior-dominated components otherwise create. All other coordinates
/// are unchanged. The density includes the Jacobian of the map, so draws
/// mapped back with to_model() follow the same posterior.
class NoncenteredDpgmm final : public Target {
 public:
  NoncenteredDpgmm(const DpgmmPosterior& posterior, std::size_t occupied);

  [[nodiscard]] std::size_t dimension() const override { return posterior_.dimension(); }
  [[nodiscard]] double log_density(const Eigen::VectorXd& w) const override;
  double log_density_gradient(const Eigen::VectorXd& w, Eigen::VectorXd& grad) const override;

  [[nodiscard]] std::size_t occupied() const noexcept { return occupied_; }
  /// Sampling coordinates -> model unconstrained coordinates.
  [[nodiscard]] Eigen::VectorXd to_model(const Eigen::VectorXd& w) const;
  /// Model unconstrained coordinates -> sampling coordinates.
  [[nodiscard]] Eigen::VectorXd from_model(const Eigen::VectorXd& u) const;

 private:
  double evaluate(const Eigen::VectorXd& w, Eigen::VectorXd* grad) const;

  const DpgmmPosterior& posterior_;
  DpgmmLayout layout_;
  std::size_t occupied_;
};

}  // namespace gammamix
