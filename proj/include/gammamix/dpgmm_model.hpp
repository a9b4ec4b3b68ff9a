#pragma once

// Truncated stick-breaking Dirichlet-process Gamma mixture.
//
//   a            ~ Gamma(1, 1)
//   V_j          ~ Beta(1, a),                 j = 1..K-1
//   pi_k         = V_k prod_{j<k} (1 - V_j),   pi_K takes the leftover stick
//   lambda_k     ~ InvGamma(lambda_shape, lambda_scale)
//   kappa_k      ~ Exp(kappa_rate)
//   nu_k         ~ Gamma(nu_shape, nu_rate)
//   v_k          ~ InvGamma(v_shape, v_scale)
//   alpha_k      ~ InvGamma(lambda_k, kappa_k)     (component shape)
//   beta_k       ~ Gamma(nu_k, v_k)                (component rate)
//   x_i          ~ sum_k pi_k Gamma(alpha_k, beta_k)
//
// Allocations are summed out, so the posterior is continuous in all
// coordinates. Unconstrained coordinates are log for positive quantities
// and logit for stick fractions.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "gammamix/mixture.hpp"
#include "gammamix/target.hpp"

namespace gammamix {

inline constexpr std::size_t kDefaultTruncation = 30;

struct HyperPriors {
  double lambda_shape = 1.0;  // InvGamma shape on lambda
  double lambda_scale = 1.0;  // InvGamma scale on lambda
  double kappa_rate = 0.001;  // Exp rate on kappa
  double nu_shape = 1.0;      // Gamma shape on nu
  double nu_rate = 1.0;       // Gamma rate on nu
  double v_shape = 1.0;       // InvGamma shape on v
  double v_scale = 1.0;       // InvGamma scale on v

  void validate() const;
  friend bool operator==(const HyperPriors&, const HyperPriors&) = default;
};

nlohmann::json to_json(const HyperPriors& hp);
/// Unknown keys are rejected; missing keys keep their defaults.
HyperPriors hyperpriors_from_json(const nlohmann::json& j);

struct DpComponent {
  double lambda = 1.0;  // shape of the InvGamma prior on alpha
  double kappa = 1.0;   // scale of the InvGamma prior on alpha
  double nu = 1.0;      // shape of the Gamma prior on beta
  double v = 1.0;       // rate of the Gamma prior on beta
  double shape = 1.0;   // alpha_k
  double rate = 1.0;    // beta_k

  friend bool operator==(const DpComponent&, const DpComponent&) = default;
};

struct LatentState {
  double concentration = 1.0;       // a
  std::vector<double> sticks;       // V_1..V_{K-1}
  std::vector<DpComponent> components;

  [[nodiscard]] std::size_t truncation() const noexcept { return components.size(); }
  /// Throws std::invalid_argument when a constraint is violated.
  void validate() const;
};

/// Coordinate layout of the unconstrained vector:
/// [log a | logit V_1..V_{K-1} | per component: log lambda, log kappa,
///  log nu, log v, log alpha, log beta].
class DpgmmLayout {
 public:
  enum Field : std::size_t { kLambda = 0, kKappa, kNu, kV, kShape, kRate, kFieldCount };

  explicit DpgmmLayout(std::size_t truncation);
  /// Infers K from an unconstrained vector length (must be a multiple of 7).
  static DpgmmLayout from_dimension(std::size_t dim);

  [[nodiscard]] std::size_t truncation() const noexcept { return k_; }
  [[nodiscard]] std::size_t dimension() const noexcept { return 7 * k_; }
  [[nodiscard]] static constexpr Eigen::Index concentration() noexcept { return 0; }
  [[nodiscard]] Eigen::Index stick(std::size_t j) const noexcept {
    return static_cast<Eigen::Index>(1 + j);
  }
  [[nodiscard]] Eigen::Index component(std::size_t k, Field f) const noexcept {
    return static_cast<Eigen::Index>(k_ + kFieldCount * k + f);
  }
  /// Human-readable coordinate names, e.g. "a", "V[3]", "shape[2]".
  [[nodiscard]] std::vector<std::string> names() const;

 private:
  std::size_t k_;
};

/// pi_k = V_k prod_{j<k}(1 - V_j) for k < K; pi_K = 1 - sum_{k<K} pi_k, which
/// equals prod_{j<K}(1 - V_j) and makes the forward sum exactly one.
/// Throws std::domain_error if any V_j lies outside (0, 1).
std::vector<double> stick_break(std::span<const double> sticks);

LatentState constrain(const Eigen::VectorXd& u);
Eigen::VectorXd unconstrain(const LatentState& state);
/// log |d constrain / d u|.
double log_jacobian(const Eigen::VectorXd& u);

double log_prior(const LatentState& state, const HyperPriors& hp);
/// sum_i log sum_k pi_k f(x_i | alpha_k, beta_k); zero for empty data.
double log_likelihood(const LatentState& state, std::span<const double> data);

/// The sampler target: log prior + log likelihood + log Jacobian, with an
/// analytic gradient. Holds a private copy of the data.
class DpgmmPosterior final : public Target {
 public:
  DpgmmPosterior(std::span<const double> data, std::size_t truncation, HyperPriors hp = {});

  [[nodiscard]] std::size_t dimension() const override { return layout_.dimension(); }
  [[nodiscard]] double log_density(const Eigen::VectorXd& u) const override;
  double log_density_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const override;

  [[nodiscard]] const DpgmmLayout& layout() const noexcept { return layout_; }
  [[nodiscard]] const HyperPriors& hyperpriors() const noexcept { return hp_; }
  [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(x_.size()); }

 private:
  double evaluate(const Eigen::VectorXd& u, Eigen::VectorXd* grad) const;

  DpgmmLayout layout_;
  HyperPriors hp_;
  Eigen::VectorXd x_;
  Eigen::VectorXd log_x_;
};

double log_posterior_unnormalized(const Eigen::VectorXd& u, std::span<const double> data,
                                  const HyperPriors& hp);
Eigen::VectorXd grad_log_posterior(const Eigen::VectorXd& u, std::span<const double> data,
                                   const HyperPriors& hp);

/// Builds a starting state from a finite mixture with at most K components.
/// Occupied components copy the mixture, with hyperparameters placed where
/// the conditional priors peak at the copied shape and rate; they share
/// 1 - spare_mass of the weight. Spare components sit at prior medians:
/// hyperparameters at their hyperprior medians, shape and rate at their
/// conditional medians, sticks at the Beta(1, a) median.
LatentState state_from_mixture(const MixtureModel& model, std::size_t truncation,
                               const HyperPriors& hp = {}, double spare_mass = 1e-3);

/// Mixture implied by a latent state (weights via stick_break). Components
/// with zero weight are dropped.
MixtureModel mixture_from_state(const LatentState& state);

}  // namespace gammamix
