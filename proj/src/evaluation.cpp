#include "gammamix/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gammamix/dpgmm_model.hpp"

namespace gammamix {

std::vector<double> discretize(const MixtureModel& q, std::span<const double> edges,
                               Discretization how) {
  if (edges.size() < 2) throw std::invalid_argument("need at least two bin edges");
  const std::size_t bins = edges.size() - 1;
  std::vector<double> mass(bins);
  double total = 0.0;
  double cdf_prev = how == Discretization::ExactCdf ? mixture_cdf(q, edges[0]) : 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double width = edges[b + 1] - edges[b];
    if (!(width > 0.0)) throw std::invalid_argument("bin edges must be strictly increasing");
    if (how == Discretization::Midpoint) {
      mass[b] = std::exp(mixture_log_pdf(q, 0.5 * (edges[b] + edges[b + 1]))) * width;
    } else {
      const double cdf = mixture_cdf(q, edges[b + 1]);
      mass[b] = std::max(cdf - cdf_prev, 0.0);
      cdf_prev = cdf;
    }
    total += mass[b];
  }
  if (total > 0.0) {
    for (double& m : mass) m /= total;
  }
  return mass;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("KL inputs differ in length");
  double d = 0.0;
  for (std::size_t b = 0; b < p.size(); ++b) {
    if (!(p[b] > 0.0)) continue;
    d += p[b] * std::log(p[b] / std::max(q[b], kKlFloor));
  }
  return d;
}

double kl_divergence(const EmpiricalPdf& p, const MixtureModel& q, Discretization how) {
  std::vector<double> pm(p.bins());
  for (std::size_t b = 0; b < p.bins(); ++b) pm[b] = p.mass(b);
  return kl_divergence(pm, discretize(q, p.edges, how));
}

std::size_t ComponentTrace::mode() const {
  if (histogram.empty()) return 0;
  return static_cast<std::size_t>(std::max_element(histogram.begin(), histogram.end()) -
                                  histogram.begin());
}

ComponentTrace component_trace(const Trace& trace, double threshold) {
  ComponentTrace out;
  if (trace.chains.empty()) return out;
  const auto layout = DpgmmLayout::from_dimension(trace.dimension());
  out.histogram.assign(layout.truncation() + 1, 0);
  for (const auto& chain : trace.chains) {
    for (Eigen::Index r = 0; r < chain.draws.rows(); ++r) {
      const auto pi = stick_break(constrain(chain.draws.row(r).transpose()).sticks);
      const auto n = static_cast<std::size_t>(
          std::count_if(pi.begin(), pi.end(), [&](double w) { return w > threshold; }));
      out.counts.push_back(n);
      ++out.histogram[n];
    }
  }
  return out;
}

}  // namespace gammamix
