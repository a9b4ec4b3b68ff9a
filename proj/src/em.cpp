#include "gammamix/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "gammamix/error.hpp"
#include "gammamix/special_math.hpp"

namespace gammamix {

namespace {

constexpr std::size_t kMaxLloydIterations = 100;
constexpr double kVarianceFloorFraction = 1e-6;

double sample_variance(std::span<const double> data) {
  if (data.empty()) return 0.0;
  double mean = 0.0;
  for (double x : data) mean += x;
  mean /= static_cast<double>(data.size());
  double ss = 0.0;
  for (double x : data) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(data.size());
}

void require_positive_data(std::span<const double> data) {
  if (data.empty()) throw std::invalid_argument("data set is empty");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i]) || !(data[i] > 0.0)) {
      std::ostringstream msg;
      msg << "data point " << i << " = " << data[i] << " is not finite and positive";
      throw std::invalid_argument(msg.str());
    }
  }
}

GammaComponent moment_match(double weight, double mean, double var) {
  return {weight, mean * mean / var, mean / var};
}

// Weighted expected complete-data log-likelihood of one component.
double component_q(std::span<const double> data, const Eigen::VectorXd& log_x,
                   const Eigen::Ref<const Eigen::VectorXd>& w, double shape, double rate) {
  const double c = shape * std::log(rate) - log_gamma(shape);
  double q = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Eigen::Index ii = static_cast<Eigen::Index>(i);
    if (w[ii] == 0.0) continue;
    q += w[ii] * (c + (shape - 1.0) * log_x[ii] - rate * data[i]);
  }
  return q;
}

}  // namespace

void EmOptions::validate() const {
  if (k < 1) throw std::invalid_argument("EM needs k >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("EM tolerance must be > 0");
  if (max_iters < 1) throw std::invalid_argument("EM needs max_iters >= 1");
  if (restarts < 1) throw std::invalid_argument("EM needs restarts >= 1");
}

MixtureModel kmeans_init(std::span<const double> data, std::size_t k, std::uint64_t seed) {
  require_positive_data(data);
  if (k < 1) throw InitializationError("k-means needs k >= 1");
  const double global_var = sample_variance(data);
  if (!(global_var > 0.0)) {
    throw InitializationError("k-means initialization: data has zero variance");
  }
  {
    std::vector<double> sorted(data.begin(), data.end());
    std::sort(sorted.begin(), sorted.end());
    const auto distinct =
        static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
    if (distinct < k) {
      std::ostringstream msg;
      msg << "k-means initialization: " << distinct << " distinct values for k = " << k;
      throw InitializationError(msg.str());
    }
  }

  const std::size_t n = data.size();
  Rng rng = make_rng(seed);
  std::vector<double> centers;
  centers.reserve(k);
  centers.push_back(data[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);

  // k-means++ seeding: draw proportional to squared distance to the nearest center.
  std::vector<double> d2(n);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : centers) best = std::min(best, (data[i] - c) * (data[i] - c));
      d2[i] = best;
      total += best;
    }
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] > 0.0 && u < d2[i]) {
        pick = i;
        break;
      }
      u -= d2[i];
    }
    if (d2[pick] == 0.0) {
      pick = static_cast<std::size_t>(std::max_element(d2.begin(), d2.end()) - d2.begin());
    }
    centers.push_back(data[pick]);
  }

  std::vector<std::size_t> label(n, k);
  std::vector<double> sums(k);
  std::vector<std::size_t> counts(k);
  auto assign = [&]() {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::abs(data[i] - centers[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = std::abs(data[i] - centers[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (label[i] != best) {
        label[i] = best;
        changed = true;
      }
    }
    return changed;
  };

  for (std::size_t iter = 0; iter < kMaxLloydIterations; ++iter) {
    const bool changed = assign();
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[label[i]] += data[i];
      ++counts[label[i]];
    }
    bool reseeded = false;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Re-seed an empty cluster from the point farthest from its center.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = std::abs(data[i] - centers[label[i]]);
          if (d > far_d && counts[label[i]] > 1) {
            far_d = d;
            far = i;
          }
        }
        --counts[label[far]];
        sums[label[far]] -= data[far];
        label[far] = c;
        counts[c] = 1;
        sums[c] = data[far];
        reseeded = true;
      }
    }
    for (std::size_t c = 0; c < k; ++c) centers[c] = sums[c] / static_cast<double>(counts[c]);
    if (!changed && !reseeded && iter > 0) break;
  }

  const double floor = kVarianceFloorFraction * global_var;
  std::vector<double> ss(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = data[i] - centers[label[i]];
    ss[label[i]] += d * d;
  }
  std::vector<GammaComponent> comps;
  comps.reserve(k);
  for (std::size_t c = 0; c < k; ++c) {
    const double cnt = static_cast<double>(counts[c]);
    const double var = std::max(ss[c] / cnt, floor);
    comps.push_back(moment_match(cnt / static_cast<double>(n), centers[c], var));
  }
  return MixtureModel::normalized(std::move(comps));
}

Responsibilities e_step(const MixtureModel& model, std::span<const double> data,
                        double& loglik) {
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto k = static_cast<Eigen::Index>(model.k());
  Responsibilities r{Eigen::MatrixXd(n, k)};
  std::vector<double> offset(model.k());
  for (std::size_t j = 0; j < model.k(); ++j) {
    const auto& c = model[j];
    offset[j] = std::log(c.weight) + c.shape * std::log(c.rate) - log_gamma(c.shape);
  }
  loglik = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = data[static_cast<std::size_t>(i)];
    if (!(x > 0.0) || !std::isfinite(x)) {
      std::ostringstream msg;
      msg << "E-step: data point " << i << " = " << x << " is not finite and positive";
      throw FitError(msg.str());
    }
    const double lx = std::log(x);
    double peak = kNegInf;
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto& c = model[static_cast<std::size_t>(j)];
      const double v = offset[static_cast<std::size_t>(j)] + (c.shape - 1.0) * lx - c.rate * x;
      r.phi(i, j) = v;
      peak = std::max(peak, v);
    }
    if (!std::isfinite(peak)) {
      std::ostringstream msg;
      msg << "E-step: data point " << i << " = " << x
          << " has zero density under every component";
      throw FitError(msg.str());
    }
    double s = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double e = std::exp(r.phi(i, j) - peak);
      r.phi(i, j) = e;
      s += e;
    }
    r.phi.row(i) /= s;
    loglik += peak + std::log(s);
  }
  return r;
}

Responsibilities e_step(const MixtureModel& model, std::span<const double> data) {
  double ll = 0.0;
  return e_step(model, data, ll);
}

double log_likelihood(const MixtureModel& model, std::span<const double> data) {
  double ll = 0.0;
  for (double x : data) ll += mixture_log_pdf(model, x);
  return ll;
}

namespace {

struct WeightedMoments {
  double total = 0.0;
  double mean = 0.0;
  double var = 0.0;
};

WeightedMoments weighted_moments(std::span<const double> data,
                                 const Eigen::Ref<const Eigen::VectorXd>& w) {
  WeightedMoments m;
  for (std::size_t i = 0; i < data.size(); ++i) {
    m.total += w[static_cast<Eigen::Index>(i)];
    m.mean += w[static_cast<Eigen::Index>(i)] * data[i];
  }
  if (!(m.total > 0.0)) return m;
  m.mean /= m.total;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double d = data[i] - m.mean;
    m.var += w[static_cast<Eigen::Index>(i)] * d * d;
  }
  m.var /= m.total;
  return m;
}

}  // namespace

MixtureModel m_step(const Responsibilities& resp, std::span<const double> data) {
  if (static_cast<std::size_t>(resp.rows()) != data.size()) {
    throw std::invalid_argument("M-step: responsibilities and data differ in length");
  }
  const double floor = kVarianceFloorFraction * sample_variance(data);
  const double n = static_cast<double>(data.size());
  std::vector<GammaComponent> comps;
  comps.reserve(static_cast<std::size_t>(resp.cols()));
  for (Eigen::Index k = 0; k < resp.cols(); ++k) {
    const auto m = weighted_moments(data, resp.phi.col(k));
    if (!(m.total > 0.0)) {
      std::ostringstream msg;
      msg << "M-step: component " << k << " has no responsibility mass";
      throw FitError(msg.str());
    }
    if (!(m.var > 0.0)) {
      std::ostringstream msg;
      msg << "M-step: component " << k << " has zero weighted variance";
      throw FitError(msg.str());
    }
    comps.push_back(moment_match(m.total / n, m.mean, std::max(m.var, floor)));
  }
  return MixtureModel::normalized(std::move(comps));
}

GammaComponent weighted_gamma_mle(std::span<const double> data,
                                  const Eigen::Ref<const Eigen::VectorXd>& weights) {
  double total = 0.0, mean = 0.0, mean_log = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double w = weights[static_cast<Eigen::Index>(i)];
    total += w;
    mean += w * data[i];
    mean_log += w * std::log(data[i]);
  }
  if (!(total > 0.0)) throw FitError("weighted Gamma MLE: no weight mass");
  mean /= total;
  mean_log /= total;
  // Solve ln(a) - digamma(a) = s, s > 0 by Jensen's inequality.
  const double s = std::log(mean) - mean_log;
  if (!(s > 0.0)) throw FitError("weighted Gamma MLE: degenerate component");
  double a = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
  for (int it = 0; it < 100; ++it) {
    const double f = std::log(a) - digamma(a) - s;
    const double fp = 1.0 / a - trigamma(a);
    double next = a - f / fp;
    if (!(next > 0.0)) next = 0.5 * a;
    const bool done = std::abs(next - a) <= 1e-14 * a;
    a = next;
    if (done) break;
  }
  return {total / static_cast<double>(data.size()), a, a / mean};
}

namespace {

EmFitResult run_em(std::span<const double> data, const EmOptions& opts, std::uint64_t seed) {
  MixtureModel model = kmeans_init(data, opts.k, seed);
  Eigen::VectorXd log_x(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    log_x[static_cast<Eigen::Index>(i)] = std::log(data[i]);
  }

  EmFitResult result{model, 0.0, 0, false, {}, 0};
  double ll = 0.0;
  Responsibilities resp = e_step(model, data, ll);
  result.log_likelihood_trace.push_back(ll);

  const double floor_var = kVarianceFloorFraction * sample_variance(data);
  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    std::optional<MixtureModel> proposal;
    if (!opts.monotone_guard) {
      proposal = m_step(resp, data);
    } else {
      // Candidates stay aligned with the columns of resp (m_step re-sorts).
      std::vector<GammaComponent> comps;
      comps.reserve(model.k());
      for (std::size_t k = 0; k < model.k(); ++k) {
        const auto col = resp.phi.col(static_cast<Eigen::Index>(k));
        const auto m = weighted_moments(data, col);
        if (!(m.total > 0.0) || !(m.var > 0.0)) {
          std::ostringstream msg;
          msg << "M-step: component " << k << " is empty or degenerate";
          throw FitError(msg.str());
        }
        const double weight = m.total / static_cast<double>(data.size());
        GammaComponent cand = moment_match(weight, m.mean, std::max(m.var, floor_var));
        const auto& old = model[k];
        const double q_old = component_q(data, log_x, col, old.shape, old.rate);
        if (component_q(data, log_x, col, cand.shape, cand.rate) < q_old) {
          ++result.guarded_updates;
          cand = weighted_gamma_mle(data, col);
          if (component_q(data, log_x, col, cand.shape, cand.rate) < q_old) {
            cand.shape = old.shape;
            cand.rate = old.rate;
          }
          cand.weight = weight;
        }
        comps.push_back(cand);
      }
      proposal = MixtureModel::normalized(std::move(comps));
    }
    model = std::move(*proposal);
    double next_ll = 0.0;
    resp = e_step(model, data, next_ll);
    result.log_likelihood_trace.push_back(next_ll);
    ++result.iterations;
    const double rel = std::abs(next_ll - ll) / std::max(std::abs(next_ll), 1e-300);
    ll = next_ll;
    if (rel < opts.tol) {
      result.converged = true;
      break;
    }
  }
  result.model = model;
  result.log_likelihood = ll;
  return result;
}

}  // namespace

EmFitResult fit_em(std::span<const double> data, const EmOptions& opts) {
  opts.validate();
  require_positive_data(data);
  std::optional<EmFitResult> best;
  for (std::size_t r = 0; r < opts.restarts; ++r) {
    const std::uint64_t seed = opts.restarts == 1 ? opts.seed : derive_seed(opts.seed, r);
    EmFitResult run = run_em(data, opts, seed);
    if (!best || run.log_likelihood > best->log_likelihood) best = std::move(run);
  }
  return std::move(*best);
}

}  // namespace gammamix
