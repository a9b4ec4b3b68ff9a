#include "gammamix/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>

#include <Eigen/Cholesky>

#include "gammamix/error.hpp"
#include "gammamix/rng.hpp"

namespace gammamix {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Nesterov dual averaging of log step size.
class DualAveraging {
 public:
  DualAveraging(double delta) : delta_(delta) {}

  void restart(double step) {
    mu_ = std::log(10.0 * step);
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }

  double update(double accept_stat) {
    ++counter_;
    accept_stat = std::min(1.0, accept_stat);
    const double eta = 1.0 / (counter_ + kT0);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(counter_) / kGamma;
    const double x_eta = std::pow(counter_, -kKappa);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }

  [[nodiscard]] double final_step() const { return std::exp(x_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
  double delta_;
  double mu_ = 0.0;
  double counter_ = 0.0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
};

class Welford {
 public:
  explicit Welford(Eigen::Index dim) : mean_(Eigen::VectorXd::Zero(dim)), m2_(mean_) {}
  void add(const Eigen::VectorXd& q) {
    ++n_;
    const Eigen::VectorXd delta = q - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta.cwiseProduct(q - mean_);
  }
  void reset() {
    n_ = 0;
    mean_.setZero();
    m2_.setZero();
  }
  [[nodiscard]] std::size_t count() const { return n_; }
  // Sample variance shrunk toward 1e-3, as in common NUTS implementations.
  [[nodiscard]] Eigen::VectorXd regularized_variance() const {
    const double n = static_cast<double>(n_);
    const Eigen::VectorXd var = m2_ / (n - 1.0);
    return (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
  }

 private:
  std::size_t n_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

// Covariance accumulator for dense metric adaptation.
class WelfordCovariance {
 public:
  explicit WelfordCovariance(Eigen::Index dim)
      : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::MatrixXd::Zero(dim, dim)) {}
  void add(const Eigen::VectorXd& q) {
    ++n_;
    const Eigen::VectorXd delta = q - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_.noalias() += (q - mean_) * delta.transpose();
  }
  void reset() {
    n_ = 0;
    mean_.setZero();
    m2_.setZero();
  }
  [[nodiscard]] Eigen::MatrixXd regularized_covariance() const {
    const double n = static_cast<double>(n_);
    Eigen::MatrixXd cov = (n / ((n + 5.0) * (n - 1.0))) * m2_;
    cov.diagonal().array() += 1e-3 * (5.0 / (n + 5.0));
    return 0.5 * (cov + cov.transpose());
  }

 private:
  std::size_t n_ = 0;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd m2_;
};

// Euclidean metric, diagonal or dense; stores the inverse metric.
class Metric {
 public:
  Metric(MetricKind kind, Eigen::Index dim, std::vector<int> blocks, const Eigen::MatrixXd& initial)
      : kind_(kind), blocks_(std::move(blocks)), diag_(Eigen::VectorXd::Ones(dim)), welford_(dim),
        welford_cov_(kind == MetricKind::Dense ? dim : 0) {
    if (kind_ == MetricKind::Dense) {
      dense_ = Eigen::MatrixXd::Identity(dim, dim);
      chol_ = dense_;
      if (initial.size() > 0) set_dense(initial);
    } else if (initial.size() > 0) {
      diag_ = initial.diagonal();
    }
  }

  void add_sample(const Eigen::VectorXd& q) {
    if (kind_ == MetricKind::Dense) {
      welford_cov_.add(q);
    } else {
      welford_.add(q);
    }
  }

  void close_window() {
    if (kind_ == MetricKind::Dense) {
      Eigen::MatrixXd cov = welford_cov_.regularized_covariance();
      if (!blocks_.empty()) {
        for (Eigen::Index j = 0; j < cov.cols(); ++j) {
          for (Eigen::Index i = 0; i < cov.rows(); ++i) {
            if (blocks_[static_cast<std::size_t>(i)] != blocks_[static_cast<std::size_t>(j)]) {
              cov(i, j) = 0.0;
            }
          }
        }
      }
      set_dense(cov);
      welford_cov_.reset();
    } else {
      diag_ = welford_.regularized_variance();
      welford_.reset();
    }
  }

  // Draws p ~ N(0, M).
  template <typename Gen>
  void sample_momentum(Eigen::VectorXd& p, Gen& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    p.resize(diag_.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = normal(rng);
    if (kind_ == MetricKind::Dense) {
      chol_.transpose().triangularView<Eigen::Upper>().solveInPlace(p);
    } else {
      p.array() /= diag_.array().sqrt();
    }
  }

  [[nodiscard]] Eigen::VectorXd sharp(const Eigen::VectorXd& p) const {
    if (kind_ == MetricKind::Dense) return dense_ * p;
    return diag_.cwiseProduct(p);
  }

  [[nodiscard]] double kinetic(const Eigen::VectorXd& p) const { return 0.5 * p.dot(sharp(p)); }

  [[nodiscard]] const Eigen::VectorXd& diagonal() const { return diag_; }
  [[nodiscard]] const Eigen::MatrixXd& dense() const { return dense_; }

 private:
  // Keeps the previous metric if m is not positive definite.
  void set_dense(const Eigen::MatrixXd& m) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) return;
    dense_ = m;
    chol_ = llt.matrixL();
    diag_ = dense_.diagonal();
  }

  MetricKind kind_;
  std::vector<int> blocks_;
  Eigen::VectorXd diag_;
  Eigen::MatrixXd dense_;
  Eigen::MatrixXd chol_;
  Welford welford_;
  WelfordCovariance welford_cov_;
};

// Warmup windows: initial buffer, doubling slow windows, terminal buffer.
struct WarmupSchedule {
  std::size_t init_buffer = 75;
  std::size_t term_buffer = 50;
  std::vector<std::size_t> window_ends;  // iteration index closing each window

  WarmupSchedule(std::size_t warmup, bool metric) {
    std::size_t base = 25;
    if (warmup < init_buffer + term_buffer + base) {
      init_buffer = static_cast<std::size_t>(0.15 * static_cast<double>(warmup));
      term_buffer = static_cast<std::size_t>(0.1 * static_cast<double>(warmup));
      base = warmup - init_buffer - term_buffer;
    }
    if (!metric || warmup < 20) return;
    const std::size_t stop = warmup - term_buffer;
    std::size_t start = init_buffer;
    std::size_t size = base;
    while (start < stop) {
      std::size_t end = start + size;
      if (end + 2 * size > stop) end = stop;
      window_ends.push_back(end);
      start = end;
      size *= 2;
    }
  }
};

struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;  // gradient of the log density at q
  double log_density = 0.0;
};

class NutsChain {
 public:
  NutsChain(const Target& target, const SamplerConfig& cfg, Rng rng)
      : target_(target), cfg_(cfg), rng_(std::move(rng)),
        metric_(cfg.metric, static_cast<Eigen::Index>(target.dimension()), cfg.metric_blocks,
                cfg.initial_inverse_metric),
        dual_(cfg.target_accept) {}

  ChainTrace run(const Eigen::VectorXd& init) {
    const auto dim = static_cast<Eigen::Index>(target_.dimension());
    if (init.size() != dim) throw std::invalid_argument("initial point has the wrong dimension");
    z_.q = init;
    z_.log_density = target_.log_density_gradient(z_.q, z_.grad);
    if (!std::isfinite(z_.log_density) || !z_.grad.allFinite()) {
      throw SamplerInitError("log density or gradient is not finite at the initial point");
    }

    const bool adapting = cfg_.adapt && cfg_.warmup > 0;
    if (cfg_.step_size) {
      step_ = *cfg_.step_size;
    } else {
      step_ = 1.0;
    }
    if (adapting) {
      if (!cfg_.step_size) init_step_size();
      dual_.restart(step_);
    }

    WarmupSchedule schedule(cfg_.warmup, adapting && cfg_.adapt_metric);
    std::size_t next_window = 0;

    ChainTrace out;
    if (cfg_.save_warmup) {
      out.warmup_draws.resize(static_cast<Eigen::Index>(cfg_.warmup), dim);
      out.warmup_log_density.reserve(cfg_.warmup);
    }
    for (std::size_t it = 0; it < cfg_.warmup; ++it) {
      early_ = it < schedule.init_buffer;
      transition();
      if (cfg_.save_warmup) {
        out.warmup_draws.row(static_cast<Eigen::Index>(it)) = z_.q.transpose();
        out.warmup_log_density.push_back(z_.log_density);
      }
      if (!adapting) continue;
      step_ = dual_.update(last_.accept_stat);
      if (next_window < schedule.window_ends.size() && it >= schedule.init_buffer) {
        metric_.add_sample(z_.q);
        if (it + 1 == schedule.window_ends[next_window]) {
          metric_.close_window();
          ++next_window;
          init_step_size();
          dual_.restart(step_);
        }
      }
    }
    if (adapting) step_ = dual_.final_step();
    early_ = false;

    out.draws.resize(static_cast<Eigen::Index>(cfg_.draws), dim);
    out.log_density.reserve(cfg_.draws);
    for (std::size_t d = 0; d < cfg_.draws; ++d) {
      transition();
      out.draws.row(static_cast<Eigen::Index>(d)) = z_.q.transpose();
      out.log_density.push_back(z_.log_density);
      out.divergent.push_back(last_.divergent ? 1 : 0);
      out.accept_stat.push_back(last_.accept_stat);
      out.tree_depth.push_back(last_.depth);
      out.leapfrog_steps.push_back(last_.leapfrogs);
    }
    out.step_size = step_;
    out.inverse_metric = metric_.diagonal();
    out.dense_inverse_metric = metric_.dense();
    return out;
  }

 private:
  struct TransitionInfo {
    double accept_stat = 0.0;
    bool divergent = false;
    int depth = 0;
    int leapfrogs = 0;
  };

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }

  void sample_momentum(PhasePoint& z) { metric_.sample_momentum(z.p, rng_); }

  [[nodiscard]] double hamiltonian(const PhasePoint& z) const {
    return -z.log_density + metric_.kinetic(z.p);
  }
  [[nodiscard]] Eigen::VectorXd sharp(const Eigen::VectorXd& p) const { return metric_.sharp(p); }

  void leapfrog(PhasePoint& z, double eps) const {
    z.p += 0.5 * eps * z.grad;
    z.q += eps * sharp(z.p);
    z.log_density = target_.log_density_gradient(z.q, z.grad);
    if (!std::isfinite(z.log_density) || !z.grad.allFinite()) {
      z.log_density = -kInf;
      return;
    }
    z.p += 0.5 * eps * z.grad;
  }

  // Doubles or halves the step size until one leapfrog step crosses an
  // acceptance probability of 0.8.
  void init_step_size() {
    PhasePoint z = z_;
    sample_momentum(z);
    double h0 = hamiltonian(z);
    PhasePoint trial = z;
    leapfrog(trial, step_);
    double delta = h0 - hamiltonian(trial);
    if (std::isnan(delta)) delta = -kInf;
    const int direction = delta > std::log(0.8) ? 1 : -1;
    for (int guard = 0; guard < 100; ++guard) {
      sample_momentum(z);
      h0 = hamiltonian(z);
      trial = z;
      leapfrog(trial, step_);
      delta = h0 - hamiltonian(trial);
      if (std::isnan(delta)) delta = -kInf;
      if (direction == 1 && !(delta > std::log(0.8))) break;
      if (direction == -1 && !(delta < std::log(0.8))) break;
      step_ = direction == 1 ? 2.0 * step_ : 0.5 * step_;
      if (step_ > 1e7 || step_ < 1e-300) break;
    }
    step_ = std::clamp(step_, 1e-12, 1e7);
  }

  static bool no_u_turn(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
                        const Eigen::VectorXd& rho) {
    return p_sharp_plus.dot(rho) > 0.0 && p_sharp_minus.dot(rho) > 0.0;
  }

  bool build_tree(int depth, PhasePoint& z, PhasePoint& z_propose, Eigen::VectorXd& p_sharp_beg,
                  Eigen::VectorXd& p_sharp_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg,
                  Eigen::VectorXd& p_end, double h0, double sign, int& n_leapfrog,
                  double& log_sum_weight, double& sum_metro_prob) {
    if (depth == 0) {
      leapfrog(z, sign * step_);
      ++n_leapfrog;
      double h = hamiltonian(z);
      if (std::isnan(h) || z.log_density == -kInf) h = kInf;
      if (h - h0 > cfg_.max_energy_error) last_.divergent = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro_prob += h0 - h > 0.0 ? 1.0 : std::exp(h0 - h);
      z_propose = z;
      p_sharp_beg = sharp(z.p);
      p_sharp_end = p_sharp_beg;
      rho += z.p;
      p_beg = z.p;
      p_end = p_beg;
      return !last_.divergent;
    }

    const Eigen::Index dim = z.q.size();
    double log_sum_weight_init = -kInf;
    Eigen::VectorXd p_init_end(dim), p_sharp_init_end(dim);
    Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(dim);
    if (!build_tree(depth - 1, z, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg,
                    p_init_end, h0, sign, n_leapfrog, log_sum_weight_init, sum_metro_prob)) {
      return false;
    }

    PhasePoint z_propose_final = z;
    double log_sum_weight_final = -kInf;
    Eigen::VectorXd p_final_beg(dim), p_sharp_final_beg(dim);
    Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(dim);
    if (!build_tree(depth - 1, z, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
                    p_final_beg, p_end, h0, sign, n_leapfrog, log_sum_weight_final,
                    sum_metro_prob)) {
      return false;
    }

    const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = z_propose_final;
    } else if (uniform() < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = z_propose_final;
    }

    const Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = no_u_turn(p_sharp_beg, p_sharp_end, rho_subtree);
    persist = persist && no_u_turn(p_sharp_beg, p_sharp_final_beg, rho_init + p_final_beg);
    persist = persist && no_u_turn(p_sharp_init_end, p_sharp_end, rho_final + p_init_end);
    return persist;
  }

  void transition() {
    last_ = TransitionInfo{};
    sample_momentum(z_);
    const Eigen::Index dim = z_.q.size();

    PhasePoint z_fwd = z_, z_bck = z_, z_sample = z_, z_propose = z_;
    Eigen::VectorXd p_fwd_fwd = z_.p, p_sharp_fwd_fwd = sharp(z_.p);
    Eigen::VectorXd p_fwd_bck = p_fwd_fwd, p_sharp_fwd_bck = p_sharp_fwd_fwd;
    Eigen::VectorXd p_bck_fwd = p_fwd_fwd, p_sharp_bck_fwd = p_sharp_fwd_fwd;
    Eigen::VectorXd p_bck_bck = p_fwd_fwd, p_sharp_bck_bck = p_sharp_fwd_fwd;
    Eigen::VectorXd rho = z_.p;

    double log_sum_weight = 0.0;
    const double h0 = hamiltonian(z_);
    int n_leapfrog = 0;
    double sum_metro_prob = 0.0;
    int depth = 0;

    std::size_t depth_limit = cfg_.max_tree_depth;
    if (early_ && cfg_.initial_max_tree_depth) {
      depth_limit = std::min(depth_limit, *cfg_.initial_max_tree_depth);
    }
    const int max_depth = static_cast<int>(depth_limit);
    while (depth < max_depth) {
      Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(dim);
      Eigen::VectorXd rho_bck = Eigen::VectorXd::Zero(dim);
      bool valid = false;
      double log_sum_weight_subtree = -kInf;

      if (uniform() > 0.5) {
        PhasePoint z = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_fwd;
        p_sharp_bck_fwd = p_sharp_fwd_fwd;
        valid = build_tree(depth, z, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd,
                           p_fwd_bck, p_fwd_fwd, h0, 1.0, n_leapfrog, log_sum_weight_subtree,
                           sum_metro_prob);
        z_fwd = std::move(z);
      } else {
        PhasePoint z = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_bck;
        p_sharp_fwd_bck = p_sharp_bck_bck;
        valid = build_tree(depth, z, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck,
                           p_bck_fwd, p_bck_bck, h0, -1.0, n_leapfrog, log_sum_weight_subtree,
                           sum_metro_prob);
        z_bck = std::move(z);
      }
      if (!valid) break;
      ++depth;

      if (log_sum_weight_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (uniform() < std::exp(log_sum_weight_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

      rho = rho_bck + rho_fwd;
      bool persist = no_u_turn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      persist = persist && no_u_turn(p_sharp_bck_bck, p_sharp_fwd_bck, rho_bck + p_fwd_bck);
      persist = persist && no_u_turn(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_fwd + p_bck_fwd);
      if (!persist) break;
    }

    last_.depth = depth;
    last_.leapfrogs = n_leapfrog;
    last_.accept_stat = n_leapfrog > 0 ? sum_metro_prob / n_leapfrog : 0.0;
    z_ = std::move(z_sample);
  }

  const Target& target_;
  const SamplerConfig& cfg_;
  Rng rng_;
  Metric metric_;
  DualAveraging dual_;
  double step_ = 1.0;
  PhasePoint z_;
  TransitionInfo last_;
  bool early_ = false;  // inside the initial warmup buffer
};

class RwmChain {
 public:
  RwmChain(const Target& target, const SamplerConfig& cfg, Rng rng)
      : target_(target), cfg_(cfg), rng_(std::move(rng)),
        scales_(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(target.dimension()))) {}

  ChainTrace run(const Eigen::VectorXd& init) {
    const auto dim = static_cast<Eigen::Index>(target_.dimension());
    if (init.size() != dim) throw std::invalid_argument("initial point has the wrong dimension");
    q_ = init;
    lp_ = target_.log_density(q_);
    if (!std::isfinite(lp_)) {
      throw SamplerInitError("log density is not finite at the initial point");
    }
    double scale = cfg_.step_size ? *cfg_.step_size : 2.38 / std::sqrt(static_cast<double>(dim));
    const bool adapting = cfg_.adapt && cfg_.warmup > 0;

    // Per-coordinate scales come from the draws between 10% and 50% of
    // warmup; the global scale follows a Robbins-Monro recursion throughout.
    Welford welford(dim);
    const std::size_t collect_from = cfg_.warmup / 10;
    const std::size_t rescale_at = cfg_.warmup / 2;
    double log_scale = std::log(std::max(scale, 1e-300));
    std::size_t rm_counter = 0;
    ChainTrace out;
    if (cfg_.save_warmup) {
      out.warmup_draws.resize(static_cast<Eigen::Index>(cfg_.warmup), dim);
      out.warmup_log_density.reserve(cfg_.warmup);
    }
    for (std::size_t it = 0; it < cfg_.warmup; ++it) {
      const double acc = step(scale);
      if (cfg_.save_warmup) {
        out.warmup_draws.row(static_cast<Eigen::Index>(it)) = q_.transpose();
        out.warmup_log_density.push_back(lp_);
      }
      if (!adapting || scale == 0.0) continue;
      ++rm_counter;
      log_scale += (acc - kTargetAccept) / std::pow(static_cast<double>(rm_counter) + 1.0, 0.6);
      scale = std::exp(log_scale);
      if (it >= collect_from && it < rescale_at) welford.add(q_);
      if (it + 1 == rescale_at && welford.count() > 2) {
        scales_ = welford.regularized_variance().cwiseSqrt();
        log_scale = std::log(2.38 / std::sqrt(static_cast<double>(dim)));
        scale = std::exp(log_scale);
        rm_counter = 0;
      }
    }

    out.draws.resize(static_cast<Eigen::Index>(cfg_.draws), dim);
    for (std::size_t d = 0; d < cfg_.draws; ++d) {
      const double acc = step(scale);
      out.draws.row(static_cast<Eigen::Index>(d)) = q_.transpose();
      out.log_density.push_back(lp_);
      out.divergent.push_back(0);
      out.accept_stat.push_back(acc);
      out.tree_depth.push_back(0);
      out.leapfrog_steps.push_back(0);
    }
    out.step_size = scale;
    out.inverse_metric = scales_.cwiseProduct(scales_);
    return out;
  }

 private:
  static constexpr double kTargetAccept = 0.234;

  double step(double scale) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd proposal = q_;
    for (Eigen::Index i = 0; i < proposal.size(); ++i) {
      proposal[i] += scale * scales_[i] * normal(rng_);
    }
    const double lp = scale == 0.0 ? lp_ : target_.log_density(proposal);
    const double log_ratio = lp - lp_;
    const double acc = std::isfinite(lp) ? std::min(1.0, std::exp(log_ratio)) : 0.0;
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    if (u < acc) {
      q_ = std::move(proposal);
      lp_ = lp;
    }
    return acc;
  }

  const Target& target_;
  const SamplerConfig& cfg_;
  Rng rng_;
  Eigen::VectorXd scales_;
  Eigen::VectorXd q_;
  double lp_ = 0.0;
};

template <typename Chain>
Trace run_chains(const char* method, const Target& target,
                 const std::vector<Eigen::VectorXd>& inits, const SamplerConfig& cfg) {
  cfg.validate();
  if (!cfg.metric_blocks.empty() && cfg.metric_blocks.size() != target.dimension()) {
    throw std::invalid_argument("metric blocks must label every coordinate");
  }
  const auto dim = static_cast<Eigen::Index>(target.dimension());
  if (cfg.initial_inverse_metric.size() > 0 &&
      (cfg.initial_inverse_metric.rows() != dim || cfg.initial_inverse_metric.cols() != dim)) {
    throw std::invalid_argument("initial inverse metric has the wrong shape");
  }
  if (inits.size() != cfg.chains) {
    throw std::invalid_argument("need exactly one initial point per chain");
  }
  Trace trace;
  trace.method = method;
  trace.chains.resize(cfg.chains);
  std::vector<std::exception_ptr> errors(cfg.chains);
  auto work = [&](std::size_t c) {
    try {
      Chain chain(target, cfg, make_rng(cfg.seed, c));
      trace.chains[c] = chain.run(inits[c]);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (cfg.parallel && cfg.chains > 1) {
    std::vector<std::thread> threads;
    for (std::size_t c = 0; c < cfg.chains; ++c) threads.emplace_back(work, c);
    for (auto& t : threads) t.join();
  } else {
    for (std::size_t c = 0; c < cfg.chains; ++c) work(c);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return trace;
}

}  // namespace

void SamplerConfig::validate() const {
  if (chains < 1) throw std::invalid_argument("sampler needs at least one chain");
  if (draws < 1) throw std::invalid_argument("sampler needs draws >= 1");
  if (adapt && warmup > 0 && warmup < 100) {
    throw std::invalid_argument("adaptation needs warmup >= 100");
  }
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw std::invalid_argument("target_accept must lie in (0, 1)");
  }
  if (!metric_blocks.empty() && metric != MetricKind::Dense) {
    throw std::invalid_argument("metric blocks need a dense metric");
  }
  if (max_tree_depth < 1) throw std::invalid_argument("max_tree_depth must be >= 1");
  if (initial_max_tree_depth && *initial_max_tree_depth < 1) {
    throw std::invalid_argument("initial_max_tree_depth must be >= 1");
  }
  if (step_size && (!std::isfinite(*step_size) || *step_size < 0.0)) {
    throw std::invalid_argument("step size must be finite and >= 0");
  }
}

std::size_t Trace::divergences() const noexcept {
  std::size_t n = 0;
  for (const auto& c : chains) n += static_cast<std::size_t>(std::count(c.divergent.begin(), c.divergent.end(), 1));
  return n;
}

Trace nuts_sample(const Target& target, const std::vector<Eigen::VectorXd>& inits,
                  const SamplerConfig& cfg) {
  return run_chains<NutsChain>("nuts", target, inits, cfg);
}

Trace nuts_sample(const Target& target, const Eigen::VectorXd& init, const SamplerConfig& cfg) {
  return nuts_sample(target, std::vector<Eigen::VectorXd>(cfg.chains, init), cfg);
}

Trace rwm_sample(const Target& target, const std::vector<Eigen::VectorXd>& inits,
                 const SamplerConfig& cfg) {
  return run_chains<RwmChain>("rwm", target, inits, cfg);
}

Trace rwm_sample(const Target& target, const Eigen::VectorXd& init, const SamplerConfig& cfg) {
  return rwm_sample(target, std::vector<Eigen::VectorXd>(cfg.chains, init), cfg);
}

}  // namespace gammamix
