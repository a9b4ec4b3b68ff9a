#include "gammamix/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

namespace gammamix {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

bool zero_variance(const ChainDraws& chains) {
  for (const auto& c : chains) {
    for (double x : c) {
      if (x != chains.front().front()) return false;
    }
  }
  return true;
}

ChainDraws split_halves(const ChainDraws& chains) {
  ChainDraws out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

// Pooled ranks (ties averaged), mapped through the normal quantile function.
ChainDraws rank_normalize(const ChainDraws& chains) {
  std::vector<std::pair<double, std::size_t>> pooled;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (std::size_t i = 0; i < chains[c].size(); ++i) {
      pooled.emplace_back(chains[c][i], c * chains[c].size() + i);
    }
  }
  std::sort(pooled.begin(), pooled.end());
  const double s = static_cast<double>(pooled.size());
  std::vector<double> z(pooled.size());
  const boost::math::normal normal;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j + 1 < pooled.size() && pooled[j + 1].first == pooled[i].first) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    const double value = boost::math::quantile(normal, (rank - 0.375) / (s + 0.25));
    for (std::size_t t = i; t <= j; ++t) z[pooled[t].second] = value;
    i = j + 1;
  }
  ChainDraws out(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const std::size_t n = chains[c].size();
    out[c].assign(z.begin() + static_cast<std::ptrdiff_t>(c * n),
                  z.begin() + static_cast<std::ptrdiff_t>((c + 1) * n));
  }
  return out;
}

double classic_r_hat(const ChainDraws& chains) {
  const double m = static_cast<double>(chains.size());
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    const double mu = mean_of(c);
    double ss = 0.0;
    for (double x : c) ss += (x - mu) * (x - mu);
    means.push_back(mu);
    vars.push_back(ss / (n - 1.0));
  }
  const double grand = mean_of(means);
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= n / (m - 1.0);
  const double w = mean_of(vars);
  if (!(w > 0.0)) return kNaN;
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

// Biased autocovariance estimate at the given lag.
double autocovariance(const std::vector<double>& x, double mean, std::size_t lag) {
  double acc = 0.0;
  for (std::size_t i = 0; i + lag < x.size(); ++i) acc += (x[i] - mean) * (x[i + lag] - mean);
  return acc / static_cast<double>(x.size());
}

}  // namespace

double split_r_hat(const ChainDraws& chains) {
  if (chains.size() < 2 || chains.front().size() < 4) return kNaN;
  if (zero_variance(chains)) return kNaN;
  const ChainDraws halves = split_halves(chains);
  const double bulk = classic_r_hat(rank_normalize(halves));

  std::vector<double> pooled;
  for (const auto& c : halves) pooled.insert(pooled.end(), c.begin(), c.end());
  std::nth_element(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(pooled.size() / 2),
                   pooled.end());
  const double median = pooled[pooled.size() / 2];
  ChainDraws folded = halves;
  for (auto& c : folded) {
    for (double& x : c) x = std::abs(x - median);
  }
  const double tail = classic_r_hat(rank_normalize(folded));
  if (std::isnan(bulk) || std::isnan(tail)) return kNaN;
  return std::max(bulk, tail);
}

double effective_sample_size(const ChainDraws& chains) {
  if (chains.empty() || chains.front().size() < 4) return kNaN;
  if (zero_variance(chains)) return kNaN;
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  const double nd = static_cast<double>(n);

  std::vector<double> means(m), acov0(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean_of(chains[c]);
    acov0[c] = autocovariance(chains[c], means[c], 0);
  }
  const double mean_var = mean_of(acov0) * nd / (nd - 1.0);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) {
    const double grand = mean_of(means);
    double b = 0.0;
    for (double mu : means) b += (mu - grand) * (mu - grand);
    var_plus += b / static_cast<double>(m - 1);
  }
  if (!(var_plus > 0.0)) return kNaN;

  auto rho_at = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m; ++c) acc += autocovariance(chains[c], means[c], lag);
    return 1.0 - (mean_var - acc / static_cast<double>(m)) / var_plus;
  };

  std::vector<double> rho(n, 0.0);
  rho[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = rho_at(1);
  rho[1] = rho_odd;
  std::size_t t = 0;
  while (t + 5 < n && !std::isnan(rho_even + rho_odd) && rho_even + rho_odd > 0.0) {
    t += 2;
    rho_even = rho_at(t);
    rho_odd = rho_at(t + 1);
    if (rho_even + rho_odd >= 0.0) {
      rho[t] = rho_even;
      rho[t + 1] = rho_odd;
    }
  }
  const std::size_t max_t = t;
  if (rho_even > 0.0) rho[max_t] = rho_even;

  // Initial monotone sequence.
  for (std::size_t s = 1; s + 3 <= max_t; s += 2) {
    if (rho[s + 1] + rho[s + 2] > rho[s - 1] + rho[s]) {
      rho[s + 1] = (rho[s - 1] + rho[s]) / 2.0;
      rho[s + 2] = rho[s + 1];
    }
  }
  const double total = static_cast<double>(m) * nd;
  double tau = -1.0;
  for (std::size_t s = 0; s <= max_t; ++s) tau += 2.0 * rho[s];
  if (max_t + 1 < n) tau += rho[max_t + 1];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

ChainDraws coordinate_draws(const Trace& trace, std::size_t coord) {
  ChainDraws out;
  for (const auto& c : trace.chains) {
    if (coord == kLogDensity) {
      out.push_back(c.log_density);
    } else {
      const auto col = c.draws.col(static_cast<Eigen::Index>(coord));
      out.emplace_back(col.data(), col.data() + col.size());
    }
  }
  return out;
}

Diagnostics diagnostics(const Trace& trace) {
  Diagnostics d;
  d.divergence_count = trace.divergences();
  const bool multi = trace.chain_count() >= 2;
  if (!multi) d.warnings.push_back("single chain: split R-hat omitted");
  bool zero_var = false;
  for (std::size_t i = 0; i < trace.dimension(); ++i) {
    const auto draws = coordinate_draws(trace, i);
    if (zero_variance(draws)) zero_var = true;
    if (multi) d.split_r_hat.push_back(split_r_hat(draws));
    d.ess.push_back(effective_sample_size(draws));
  }
  const auto lp = coordinate_draws(trace, kLogDensity);
  if (zero_variance(lp)) zero_var = true;
  d.r_hat_log_density = multi ? split_r_hat(lp) : kNaN;
  d.ess_log_density = effective_sample_size(lp);
  if (zero_var) d.warnings.push_back("zero-variance draws: R-hat and ESS reported as NaN");
  return d;
}

}  // namespace gammamix
