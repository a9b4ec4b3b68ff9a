#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gammamix/sampler.hpp"

namespace gammamix {

using ChainDraws = std::vector<std::vector<double>>;

/// Rank-normalized split R-hat (maximum of the bulk and folded versions).
/// NaN when the pooled draws have zero variance or fewer than two chains.
double split_r_hat(const ChainDraws& chains);

/// Multi-chain effective sample size from autocorrelations truncated with
/// Geyer's initial monotone sequence.
double effective_sample_size(const ChainDraws& chains);

struct Diagnostics {
  std::vector<double> split_r_hat;  // per coordinate; empty with one chain
  std::vector<double> ess;          // per coordinate
  double r_hat_log_density = 0.0;
  double ess_log_density = 0.0;
  std::size_t divergence_count = 0;
  std::vector<std::string> warnings;
};

Diagnostics diagnostics(const Trace& trace);

/// Draws of one coordinate (or of the log density when coord is npos)
/// split out per chain.
ChainDraws coordinate_draws(const Trace& trace, std::size_t coord);
inline constexpr std::size_t kLogDensity = static_cast<std::size_t>(-1);

}  // namespace gammamix
