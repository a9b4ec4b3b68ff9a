#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gammamix/diagnostics.hpp"
#include "gammamix/dpgmm_model.hpp"
#include "gammamix/mixture.hpp"
#include "gammamix/sampler.hpp"

namespace gammamix {

enum class DpgmmMethod { Nuts, Rwm };

/// How draws are aligned before their components are averaged.
enum class LabelAlignment {
  /// Each draw's occupied components are matched to reference components
  /// by an optimal assignment on log mean, log standard deviation and
  /// weight; the reference is refined until the assignment settles.
  Matched,
  /// Components ranked by descending weight within each draw.
  Canonical,
};

struct DpgmmOptions {
  std::size_t truncation = kDefaultTruncation;
  HyperPriors hyperpriors;
  /// chains, warmup, draws, target_accept, max_tree_depth and seed are
  /// honoured; the metric settings are chosen by fit_dpgmm.
  SamplerConfig sampler;
  DpgmmMethod method = DpgmmMethod::Nuts;
  double threshold = kDefaultEffectiveThreshold;
  LabelAlignment alignment = LabelAlignment::Matched;
  /// Components of the EM fit that seeds the chains. 0 picks the count
  /// with the lowest BIC.
  std::size_t init_k = 0;
  /// Standard deviation of the Gaussian jitter added to each chain's start.
  double init_jitter = 0.1;

  void validate() const;
};

struct DpgmmSummary {
  MixtureModel model{{GammaComponent{}}};
  std::size_t k_effective = 0;
  /// Posterior mean weight per aligned slot.
  std::vector<double> mean_weights;
  /// The leftover (last) stick carries posterior mean weight above the
  /// threshold, so the truncation may be too small.
  bool truncation_saturated = false;
};

/// Point estimate from a trace in DpgmmLayout coordinates. Each draw's
/// components are aligned, then (pi, shape, rate) are averaged per slot;
/// slots whose mean weight is at or below threshold are dropped and the
/// rest renormalized.
///
/// Matched alignment uses as many slots as the most common count of
/// components above threshold, starting from the highest-density draw.
/// Canonical alignment keeps all K ranks.
DpgmmSummary summarize(const Trace& trace, double threshold = kDefaultEffectiveThreshold,
                       LabelAlignment alignment = LabelAlignment::Matched);

/// Minimum-cost assignment of every row to a distinct column
/// (rows <= columns). Returns the column chosen for each row.
std::vector<std::size_t> min_cost_assignment(const Eigen::MatrixXd& cost);

struct DpgmmFit {
  /// Draws in DpgmmLayout coordinates with their log posterior.
  Trace trace;
  DpgmmSummary summary;
  Diagnostics diagnostics;
  MixtureModel init_model{{GammaComponent{}}};
  std::vector<std::string> warnings;
};

/// Seeds every chain from an EM fit mapped into the latent space, then
/// samples the posterior. NUTS runs on a reparametrized copy of the target
/// in which the initially unoccupied components are non-centered, with a
/// metric that is dense within each component; its draws are mapped back
/// before they are returned.
/// Throws SamplerInitError when a start point has no finite density.
DpgmmFit fit_dpgmm(std::span<const double> data, const DpgmmOptions& opts);

/// EM component count with the lowest BIC among 1..max_k.
std::size_t select_k_by_bic(std::span<const double> data, std::size_t max_k, std::uint64_t seed);

/// One row per draw: chain, draw, log_posterior, divergent, then every
/// latent quantity on its natural scale.
void write_trace_csv(const std::filesystem::path& path, const Trace& trace);

}  // namespace gammamix
