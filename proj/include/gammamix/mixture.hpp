#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "gammamix/rng.hpp"

namespace gammamix {

/// One weighted Gamma kernel in shape-rate form.
struct GammaComponent {
  double weight = 1.0;
  double shape = 1.0;
  double rate = 1.0;

  [[nodiscard]] double mean() const noexcept { return shape / rate; }
  [[nodiscard]] double variance() const noexcept { return shape / (rate * rate); }

  friend bool operator==(const GammaComponent&, const GammaComponent&) = default;
};

/// Finite Gamma mixture. Immutable once built; components are kept in
/// canonical order (descending weight, ties by ascending shape) and the
/// weights sum to one within 1e-9.
class MixtureModel {
 public:
  static constexpr double kWeightSumTolerance = 1e-9;

  /// Validates and sorts. Throws std::invalid_argument on violations.
  explicit MixtureModel(std::vector<GammaComponent> components);

  /// Rescales weights to sum to one before validating. Useful for
  /// published parameter tables whose rounded weights do not quite sum
  /// to one.
  static MixtureModel normalized(std::vector<GammaComponent> components);

  /// Builds from shape-scale parameters (mean = shape * scale).
  static MixtureModel from_shape_scale(std::span<const double> weights,
                                       std::span<const double> shapes,
                                       std::span<const double> scales);

  [[nodiscard]] std::size_t k() const noexcept { return components_.size(); }
  [[nodiscard]] const std::vector<GammaComponent>& components() const noexcept {
    return components_;
  }
  [[nodiscard]] const GammaComponent& operator[](std::size_t i) const {
    return components_[i];
  }

  [[nodiscard]] double mean() const noexcept;

  friend bool operator==(const MixtureModel&, const MixtureModel&) = default;

 private:
  std::vector<GammaComponent> components_;
};

/// log sum_k w_k f(x | shape_k, rate_k), evaluated with log-sum-exp.
/// Throws std::domain_error for x < 0.
double mixture_log_pdf(const MixtureModel& model, double x);

/// Mixture CDF via the regularized lower incomplete gamma function.
double mixture_cdf(const MixtureModel& model, double x);

/// n i.i.d. draws: a categorical pick over weights, then a Gamma draw.
std::vector<double> sample(const MixtureModel& model, std::size_t n, Rng& rng);
std::vector<double> sample(const MixtureModel& model, std::size_t n, std::uint64_t seed);

/// Number of components with weight strictly above threshold.
inline constexpr double kDefaultEffectiveThreshold = 0.001;
std::size_t effective_components(const MixtureModel& model,
                                 double threshold = kDefaultEffectiveThreshold);

/// {"components":[{"weight":w,"shape":a,"rate":b},...]}
nlohmann::json to_json(const MixtureModel& model);
MixtureModel mixture_from_json(const nlohmann::json& j);

}  // namespace gammamix
