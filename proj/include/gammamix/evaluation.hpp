#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gammamix/data_pipeline.hpp"
#include "gammamix/mixture.hpp"
#include "gammamix/sampler.hpp"

namespace gammamix {

enum class Discretization {
  Midpoint,  // density at the bin midpoint times the bin width
  ExactCdf,  // CDF difference across the bin
};

inline constexpr double kKlFloor = 1e-12;

/// Bin masses of q over the given edges, renormalized to sum to one over
/// the binned support.
std::vector<double> discretize(const MixtureModel& q, std::span<const double> edges,
                               Discretization how = Discretization::Midpoint);

/// sum_{b: p_b > 0} p_b ln(p_b / max(q_b, 1e-12)) in nats. Both inputs are
/// bin masses of equal length; neither is renormalized here.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// KL(empirical || model) with q discretized onto p's bins.
double kl_divergence(const EmpiricalPdf& p, const MixtureModel& q,
                     Discretization how = Discretization::Midpoint);

/// Effective component counts across the draws of a DPGMM trace whose
/// coordinates follow DpgmmLayout.
struct ComponentTrace {
  std::vector<std::size_t> counts;     // one per draw, chains in order
  std::vector<std::size_t> histogram;  // histogram[k] = draws with count k

  [[nodiscard]] std::size_t mode() const;
};

ComponentTrace component_trace(const Trace& trace, double threshold = kDefaultEffectiveThreshold);

}  // namespace gammamix
