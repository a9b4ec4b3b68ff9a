#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gammamix/target.hpp"

namespace gammamix {

enum class MetricKind { Diagonal, Dense };

struct SamplerConfig {
  std::size_t chains = 2;
  std::size_t warmup = 1000;
  std::size_t draws = 1000;
  double target_accept = 0.8;
  std::size_t max_tree_depth = 10;
  /// Tree depth limit during the initial warmup buffer, before the first
  /// metric window. Short trajectories keep a chain near its start while the
  /// step size settles.
  std::optional<std::size_t> initial_max_tree_depth;
  std::uint64_t seed = 0;

  /// Warmup adaptation of the step size (and, for NUTS, the metric).
  bool adapt = true;
  bool adapt_metric = true;
  MetricKind metric = MetricKind::Diagonal;
  /// Dense metric only: block label per coordinate. Covariances between
  /// coordinates with different labels are dropped. Empty means one block.
  std::vector<int> metric_blocks;
  /// Starting inverse metric (dimension x dimension); empty means identity.
  /// A diagonal metric uses only its diagonal.
  Eigen::MatrixXd initial_inverse_metric;
  /// NUTS: initial step size, or the fixed step size when adapt is false.
  /// RWM: global proposal scale. Unset means pick automatically.
  std::optional<double> step_size;
  /// Energy error beyond which a transition is flagged divergent.
  double max_energy_error = 1000.0;
  /// Run chains on separate threads. Results do not depend on this.
  bool parallel = true;
  /// Keep warmup iterations in ChainTrace::warmup_draws.
  bool save_warmup = false;

  void validate() const;
};

struct ChainTrace {
  Eigen::MatrixXd draws;  // one row per retained draw, unconstrained coordinates
  std::vector<double> log_density;
  std::vector<std::uint8_t> divergent;
  std::vector<double> accept_stat;
  std::vector<int> tree_depth;
  std::vector<int> leapfrog_steps;
  double step_size = 0.0;
  Eigen::VectorXd inverse_metric;        // diagonal of the inverse metric
  Eigen::MatrixXd dense_inverse_metric;  // empty unless the metric is dense
  Eigen::MatrixXd warmup_draws;          // filled only with save_warmup
  std::vector<double> warmup_log_density;
};

struct Trace {
  std::string method;
  std::vector<ChainTrace> chains;

  [[nodiscard]] std::size_t chain_count() const noexcept { return chains.size(); }
  [[nodiscard]] std::size_t draws_per_chain() const noexcept {
    return chains.empty() ? 0 : static_cast<std::size_t>(chains.front().draws.rows());
  }
  [[nodiscard]] std::size_t dimension() const noexcept {
    return chains.empty() ? 0 : static_cast<std::size_t>(chains.front().draws.cols());
  }
  [[nodiscard]] std::size_t divergences() const noexcept;
  [[nodiscard]] std::size_t total_draws() const noexcept {
    return chain_count() * draws_per_chain();
  }
};

/// Multinomial no-U-turn sampler with the generalized termination
/// criterion, dual-averaging step-size adaptation and a windowed diagonal
/// or dense metric. Each chain's generator is derived from cfg.seed and its index.
/// Throws SamplerInitError if the target is not finite at a start point.
Trace nuts_sample(const Target& target, const std::vector<Eigen::VectorXd>& inits,
                  const SamplerConfig& cfg);
Trace nuts_sample(const Target& target, const Eigen::VectorXd& init, const SamplerConfig& cfg);

/// Gaussian random-walk Metropolis. Warmup adapts a global scale toward
/// 0.234 acceptance and per-coordinate scales from the warmup draws.
Trace rwm_sample(const Target& target, const std::vector<Eigen::VectorXd>& inits,
                 const SamplerConfig& cfg);
Trace rwm_sample(const Target& target, const Eigen::VectorXd& init, const SamplerConfig& cfg);

}  // namespace gammamix
