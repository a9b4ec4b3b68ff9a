#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "gammamix/mixture.hpp"

namespace gammamix {

/// N x K membership coefficients; every row sums to one.
struct Responsibilities {
  Eigen::MatrixXd phi;

  [[nodiscard]] Eigen::Index rows() const noexcept { return phi.rows(); }
  [[nodiscard]] Eigen::Index cols() const noexcept { return phi.cols(); }
};

struct EmOptions {
  std::size_t k = 1;
  std::size_t max_iters = 1000;
  double tol = 1e-8;  // relative log-likelihood change
  std::size_t restarts = 1;
  std::uint64_t seed = 0;
  /// When the moment-matching update lowers a component's expected
  /// complete-data log-likelihood, substitute the weighted Gamma MLE.
  /// This keeps the observed log-likelihood non-decreasing.
  bool monotone_guard = true;

  void validate() const;
};

struct EmFitResult {
  MixtureModel model;
  double log_likelihood = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  /// Log-likelihood of the initial model followed by one entry per M-step.
  std::vector<double> log_likelihood_trace;
  /// Components whose moment-matching update was replaced by the MLE.
  std::size_t guarded_updates = 0;
};

/// 1-D k-means (k-means++ seeding, at most 100 Lloyd iterations) with each
/// cluster converted to a Gamma component by moment matching.
/// Throws InitializationError on constant data or fewer than k distinct values.
MixtureModel kmeans_init(std::span<const double> data, std::size_t k, std::uint64_t seed);

/// phi_ik = w_k f(x_i|k) / sum_j w_j f(x_i|j). Throws FitError naming the
/// offending point when a value has zero density under every component.
Responsibilities e_step(const MixtureModel& model, std::span<const double> data);

/// Same as e_step, also returning the observed-data log-likelihood.
Responsibilities e_step(const MixtureModel& model, std::span<const double> data,
                        double& log_likelihood);

/// Moment-matching M-step. With weighted mean E and variance Var of each
/// column, the shape-scale identities E = a*s, Var = a*s^2 give
/// shape = E^2/Var and rate = E/Var. Var is floored at 1e-6 times the
/// sample variance of data. Throws FitError on an empty column or a
/// column with exactly zero weighted variance.
MixtureModel m_step(const Responsibilities& resp, std::span<const double> data);

/// Weighted maximum-likelihood Gamma fit for one column of responsibilities.
GammaComponent weighted_gamma_mle(std::span<const double> data,
                                  const Eigen::Ref<const Eigen::VectorXd>& weights);

/// Observed-data log-likelihood sum_i log p(x_i).
double log_likelihood(const MixtureModel& model, std::span<const double> data);

/// k-means initialization followed by EM iterations until the relative
/// log-likelihood change drops below tol or max_iters is reached. With
/// restarts > 1 the highest-likelihood run wins.
EmFitResult fit_em(std::span<const double> data, const EmOptions& opts);

}  // namespace gammamix
