#include "gammamix/dpgmm_fit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "gammamix/data_pipeline.hpp"
#include "gammamix/em.hpp"
#include "gammamix/error.hpp"
#include "gammamix/noncentered.hpp"
#include "gammamix/special_math.hpp"

namespace gammamix {

namespace {

constexpr std::size_t kMaxInitK = 20;

// Block labels: the concentration and each stick alone, each component's
// six coordinates together.
std::vector<int> component_blocks(const DpgmmLayout& layout) {
  std::vector<int> blocks(layout.dimension());
  const auto k = layout.truncation();
  for (std::size_t i = 0; i < k; ++i) blocks[i] = static_cast<int>(i);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t f = 0; f < DpgmmLayout::kFieldCount; ++f) {
      blocks[static_cast<std::size_t>(layout.component(c, static_cast<DpgmmLayout::Field>(f)))] =
          static_cast<int>(k + c);
    }
  }
  return blocks;
}

// Inverse of the block-diagonal negative Hessian at w, from central
// differences of the gradient, with eigenvalues clamped to [1e-2, 1e8].
Eigen::MatrixXd laplace_inverse_metric(const Target& target, const Eigen::VectorXd& w,
                                       const std::vector<int>& blocks) {
  const auto n = w.size();
  constexpr double h = 1e-4;
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd gp, gm;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd p = w, m = w;
    p[i] += h;
    m[i] -= h;
    target.log_density_gradient(p, gp);
    target.log_density_gradient(m, gm);
    if (!gp.allFinite() || !gm.allFinite()) return {};
    for (Eigen::Index r = 0; r < n; ++r) {
      if (blocks[static_cast<std::size_t>(r)] == blocks[static_cast<std::size_t>(i)]) {
        hess(r, i) = -(gp[r] - gm[r]) / (2.0 * h);
      }
    }
  }
  hess = 0.5 * (hess + hess.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess);
  if (eig.info() != Eigen::Success) return {};
  const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(1e-2).cwiseMin(1e8);
  Eigen::MatrixXd inv = eig.eigenvectors() * lam.cwiseInverse().asDiagonal() *
                        eig.eigenvectors().transpose();
  // Eigenvectors of a block-diagonal matrix can mix blocks that share an
  // eigenvalue; cut those couplings again.
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (blocks[static_cast<std::size_t>(i)] != blocks[static_cast<std::size_t>(j)]) inv(i, j) = 0.0;
    }
  }
  return 0.5 * (inv + inv.transpose());
}

// Mean over draws computed as x0 + mean(x - x0), so a constant sequence
// returns its value exactly.
struct RunningMean {
  double first = 0.0;
  double offset_sum = 0.0;
  std::size_t n = 0;

  void add(double x) {
    if (n == 0) first = x;
    offset_sum += x - first;
    ++n;
  }
  [[nodiscard]] double value() const { return first + offset_sum / static_cast<double>(n); }
};

}  // namespace

void DpgmmOptions::validate() const {
  if (truncation < 2) throw std::invalid_argument("truncation must be >= 2");
  hyperpriors.validate();
  sampler.validate();
  if (!(threshold >= 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("threshold must lie in [0, 1)");
  }
  if (init_k > truncation) throw std::invalid_argument("init_k cannot exceed the truncation");
  if (!(init_jitter >= 0.0) || !std::isfinite(init_jitter)) {
    throw std::invalid_argument("init_jitter must be finite and >= 0");
  }
}

std::vector<std::size_t> min_cost_assignment(const Eigen::MatrixXd& cost) {
  // Shortest augmenting paths with potentials (Hungarian method), 1-based.
  const auto n = static_cast<std::size_t>(cost.rows());
  const auto m = static_cast<std::size_t>(cost.cols());
  if (n > m) throw std::invalid_argument("assignment needs rows <= columns");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> match(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) -
                           u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> out(n);
  for (std::size_t j = 1; j <= m; ++j) {
    if (match[j] != 0) out[match[j] - 1] = j - 1;
  }
  return out;
}

namespace {

struct DrawComponent {
  double weight, shape, rate;
};

// Log mean, log standard deviation and weight.
Eigen::Vector3d features(const DrawComponent& c) {
  return {std::log(c.shape) - std::log(c.rate), 0.5 * std::log(c.shape) - std::log(c.rate), c.weight};
}

}  // namespace

DpgmmSummary summarize(const Trace& trace, double threshold, LabelAlignment alignment) {
  if (trace.total_draws() == 0) throw std::invalid_argument("summarize needs a non-empty trace");
  const auto layout = DpgmmLayout::from_dimension(trace.dimension());
  const std::size_t k = layout.truncation();

  // Every draw in canonical order.
  std::vector<std::vector<DrawComponent>> draws;
  std::vector<double> lp;
  RunningMean last_stick;
  std::vector<std::size_t> order(k), occupied(k + 1, 0);
  for (const auto& chain : trace.chains) {
    for (Eigen::Index r = 0; r < chain.draws.rows(); ++r) {
      const LatentState s = constrain(chain.draws.row(r).transpose());
      const auto pi = stick_break(s.sticks);
      last_stick.add(pi.back());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (pi[a] != pi[b]) return pi[a] > pi[b];
        return s.components[a].shape < s.components[b].shape;
      });
      std::vector<DrawComponent> d(k);
      for (std::size_t rank = 0; rank < k; ++rank) {
        const auto c = order[rank];
        d[rank] = {pi[c], s.components[c].shape, s.components[c].rate};
      }
      ++occupied[static_cast<std::size_t>(
          std::count_if(pi.begin(), pi.end(), [&](double w) { return w > threshold; }))];
      draws.push_back(std::move(d));
      const auto idx = static_cast<std::size_t>(r);
      lp.push_back(idx < chain.log_density.size() ? chain.log_density[idx] : kNegInf);
    }
  }

  // slot_of[d][s] = rank in draw d feeding slot s.
  std::size_t slots = k;
  std::vector<std::vector<std::size_t>> slot_of(draws.size());
  if (alignment == LabelAlignment::Canonical) {
    for (auto& v : slot_of) {
      v.resize(k);
      std::iota(v.begin(), v.end(), std::size_t{0});
    }
  } else {
    slots = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::max_element(occupied.begin(), occupied.end()) - occupied.begin()));
    const std::size_t candidates = std::min(k, slots + 2);
    std::size_t best = 0;
    for (std::size_t d = 1; d < draws.size(); ++d) {
      if (lp[d] > lp[best]) best = d;
    }
    std::vector<Eigen::Vector3d> ref(slots);
    for (std::size_t j = 0; j < slots; ++j) ref[j] = features(draws[best][j]);
    Eigen::MatrixXd cost(static_cast<Eigen::Index>(slots), static_cast<Eigen::Index>(candidates));
    for (int pass = 0; pass < 50; ++pass) {
      bool changed = false;
      std::vector<Eigen::Vector3d> sum(slots, Eigen::Vector3d::Zero());
      for (std::size_t d = 0; d < draws.size(); ++d) {
        for (std::size_t j = 0; j < slots; ++j) {
          for (std::size_t c = 0; c < candidates; ++c) {
            cost(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) =
                (features(draws[d][c]) - ref[j]).squaredNorm();
          }
        }
        auto assign = min_cost_assignment(cost);
        changed = changed || assign != slot_of[d];
        slot_of[d] = std::move(assign);
        for (std::size_t j = 0; j < slots; ++j) sum[j] += features(draws[d][slot_of[d][j]]);
      }
      if (!changed) break;
      for (std::size_t j = 0; j < slots; ++j) ref[j] = sum[j] / static_cast<double>(draws.size());
    }
  }

  std::vector<RunningMean> weight(slots), shape(slots), rate(slots);
  for (std::size_t d = 0; d < draws.size(); ++d) {
    for (std::size_t j = 0; j < slots; ++j) {
      const auto& c = draws[d][slot_of[d][j]];
      weight[j].add(c.weight);
      shape[j].add(c.shape);
      rate[j].add(c.rate);
    }
  }

  DpgmmSummary out;
  std::vector<GammaComponent> kept;
  for (std::size_t j = 0; j < slots; ++j) {
    const double w = weight[j].value();
    out.mean_weights.push_back(w);
    if (w > threshold) kept.push_back({w, shape[j].value(), rate[j].value()});
  }
  if (kept.empty()) kept.push_back({1.0, shape[0].value(), rate[0].value()});
  out.model = MixtureModel::normalized(std::move(kept));
  out.k_effective = effective_components(out.model, threshold);
  out.truncation_saturated = last_stick.value() > threshold;
  return out;
}

std::size_t select_k_by_bic(std::span<const double> data, std::size_t max_k, std::uint64_t seed) {
  const double log_n = std::log(static_cast<double>(data.size()));
  std::size_t best_k = 1;
  double best = std::numeric_limits<double>::infinity();
  std::size_t worse_in_a_row = 0;
  for (std::size_t k = 1; k <= max_k; ++k) {
    EmOptions eo;
    eo.k = k;
    eo.restarts = 3;
    eo.seed = seed;
    double bic;
    try {
      const auto fit = fit_em(data, eo);
      bic = -2.0 * fit.log_likelihood + static_cast<double>(3 * k - 1) * log_n;
    } catch (const std::exception&) {
      break;  // too few distinct values or a degenerate cluster
    }
    if (bic < best) {
      best = bic;
      best_k = k;
      worse_in_a_row = 0;
    } else if (++worse_in_a_row == 3) {
      break;
    }
  }
  return best_k;
}

DpgmmFit fit_dpgmm(std::span<const double> data, const DpgmmOptions& opts) {
  opts.validate();
  if (data.empty()) throw InputError("DPGMM fit needs data");
  const std::size_t k = opts.truncation;
  const std::uint64_t seed = opts.sampler.seed;

  DpgmmFit result;
  std::size_t init_k = opts.init_k;
  if (init_k == 0) init_k = select_k_by_bic(data, std::min(k, kMaxInitK), seed);
  EmOptions eo;
  eo.k = init_k;
  eo.restarts = 3;
  eo.seed = seed;
  try {
    result.init_model = fit_em(data, eo).model;
  } catch (const std::exception& e) {
    throw SamplerInitError(std::string("EM initialization failed: ") + e.what());
  }
  const Eigen::VectorXd u0 =
      unconstrain(state_from_mixture(result.init_model, k, opts.hyperpriors));

  const DpgmmPosterior posterior(data, k, opts.hyperpriors);
  Rng jitter_rng = make_rng(seed, 0x6a177e5);
  std::normal_distribution<double> jitter(0.0, opts.init_jitter);
  std::vector<Eigen::VectorXd> inits;
  for (std::size_t c = 0; c < opts.sampler.chains; ++c) {
    Eigen::VectorXd u = u0;
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] += jitter(jitter_rng);
    inits.push_back(std::move(u));
  }

  SamplerConfig cfg = opts.sampler;
  if (opts.method == DpgmmMethod::Rwm) {
    result.trace = rwm_sample(posterior, inits, cfg);
  } else {
    const NoncenteredDpgmm target(posterior, result.init_model.k());
    for (auto& w : inits) w = target.from_model(w);
    cfg.metric = MetricKind::Dense;
    cfg.metric_blocks = component_blocks(posterior.layout());
    cfg.initial_inverse_metric =
        laplace_inverse_metric(target, target.from_model(u0), cfg.metric_blocks);
    cfg.initial_max_tree_depth = 3;
    result.trace = nuts_sample(target, inits, cfg);
    for (auto& chain : result.trace.chains) {
      for (Eigen::Index r = 0; r < chain.draws.rows(); ++r) {
        const Eigen::VectorXd u = target.to_model(chain.draws.row(r).transpose());
        chain.draws.row(r) = u.transpose();
        chain.log_density[static_cast<std::size_t>(r)] = posterior.log_density(u);
      }
      // The adapted metric lives in sampling coordinates; keep only the
      // per-chain step size and drop the rest to avoid confusion.
      chain.inverse_metric.resize(0);
      chain.dense_inverse_metric.resize(0, 0);
    }
  }

  result.diagnostics = diagnostics(result.trace);
  result.summary = summarize(result.trace, opts.threshold, opts.alignment);
  result.warnings = result.diagnostics.warnings;
  if (result.summary.truncation_saturated) {
    result.warnings.push_back("truncation saturated: the last component holds weight above " +
                              format_double(opts.threshold) + "; consider a larger truncation");
  }
  return result;
}

void write_trace_csv(const std::filesystem::path& path, const Trace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  const auto layout = DpgmmLayout::from_dimension(trace.dimension());
  out << "chain,draw,log_posterior,divergent";
  for (const auto& name : layout.names()) out << ',' << name;
  out << '\n';
  for (std::size_t c = 0; c < trace.chains.size(); ++c) {
    const auto& chain = trace.chains[c];
    for (Eigen::Index r = 0; r < chain.draws.rows(); ++r) {
      const auto row = static_cast<std::size_t>(r);
      const LatentState s = constrain(chain.draws.row(r).transpose());
      out << c << ',' << r << ',' << format_double(chain.log_density[row]) << ','
          << (row < chain.divergent.size() ? int(chain.divergent[row]) : 0) << ','
          << format_double(s.concentration);
      for (double v : s.sticks) out << ',' << format_double(v);
      for (const auto& comp : s.components) {
        for (double v : {comp.lambda, comp.kappa, comp.nu, comp.v, comp.shape, comp.rate}) {
          out << ',' << format_double(v);
        }
      }
      out << '\n';
    }
  }
  if (!out) throw InputError("failed writing " + path.string());
}

}  // namespace gammamix
