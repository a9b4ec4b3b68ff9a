#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <boost/math/distributions/gamma.hpp>

#include "gammamix/diagnostics.hpp"
#include "gammamix/error.hpp"
#include "gammamix/sampler.hpp"

using namespace gammamix;

namespace {

// Independent normals with per-coordinate scale.
class Normal final : public Target {
 public:
  explicit Normal(Eigen::VectorXd sd) : sd_(std::move(sd)) {}
  std::size_t dimension() const override { return sd_.size(); }
  double log_density(const Eigen::VectorXd& q) const override {
    return -0.5 * q.cwiseQuotient(sd_).squaredNorm();
  }
  double log_density_gradient(const Eigen::VectorXd& q, Eigen::VectorXd& g) const override {
    g = -q.cwiseQuotient(sd_.cwiseProduct(sd_));
    return log_density(q);
  }

 private:
  Eigen::VectorXd sd_;
};

// Correlated 2-D normal with correlation rho.
class Correlated final : public Target {
 public:
  explicit Correlated(double rho) {
    Eigen::Matrix2d s;
    s << 1.0, rho, rho, 1.0;
    prec_ = s.inverse();
  }
  std::size_t dimension() const override { return 2; }
  double log_density(const Eigen::VectorXd& q) const override { return -0.5 * q.dot(prec_ * q); }
  double log_density_gradient(const Eigen::VectorXd& q, Eigen::VectorXd& g) const override {
    g = -prec_ * q;
    return log_density(q);
  }

 private:
  Eigen::Matrix2d prec_;
};

// y = log x with x ~ Gamma(shape, rate), Jacobian included.
class LogGamma final : public Target {
 public:
  LogGamma(double shape, double rate) : a_(shape), b_(rate) {}
  std::size_t dimension() const override { return 1; }
  double log_density(const Eigen::VectorXd& q) const override {
    return a_ * q[0] - b_ * std::exp(q[0]);
  }
  double log_density_gradient(const Eigen::VectorXd& q, Eigen::VectorXd& g) const override {
    g.resize(1);
    g[0] = a_ - b_ * std::exp(q[0]);
    return log_density(q);
  }

 private:
  double a_, b_;
};

// Equal mixture of N(-m, 1) and N(m, 1).
class Bimodal final : public Target {
 public:
  explicit Bimodal(double m) : m_(m) {}
  std::size_t dimension() const override { return 1; }
  double log_density(const Eigen::VectorXd& q) const override {
    const double a = -0.5 * (q[0] - m_) * (q[0] - m_), b = -0.5 * (q[0] + m_) * (q[0] + m_);
    const double hi = std::max(a, b);
    return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
  }
  double log_density_gradient(const Eigen::VectorXd& q, Eigen::VectorXd& g) const override {
    const double lp = log_density(q);
    const double wa = std::exp(-0.5 * (q[0] - m_) * (q[0] - m_) - lp);
    const double wb = std::exp(-0.5 * (q[0] + m_) * (q[0] + m_) - lp);
    g.resize(1);
    g[0] = -wa * (q[0] - m_) - wb * (q[0] + m_);
    return lp;
  }

 private:
  double m_;
};

class Flat final : public Target {
 public:
  std::size_t dimension() const override { return 1; }
  double log_density(const Eigen::VectorXd&) const override { return -INFINITY; }
  double log_density_gradient(const Eigen::VectorXd&, Eigen::VectorXd& g) const override {
    g = Eigen::VectorXd::Zero(1);
    return -INFINITY;
  }
};

std::vector<double> column(const Trace& t, Eigen::Index c) {
  std::vector<double> out;
  for (const auto& ch : t.chains) {
    for (Eigen::Index r = 0; r < ch.draws.rows(); ++r) out.push_back(ch.draws(r, c));
  }
  return out;
}

double mean(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / x.size();
}

double variance(const std::vector<double>& x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / (x.size() - 1);
}

SamplerConfig quick(std::size_t chains = 4, std::uint64_t seed = 1) {
  SamplerConfig c;
  c.chains = chains;
  c.warmup = 500;
  c.draws = 1000;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("NUTS: 10-D standard normal moments, R-hat and ESS") {
  const Normal target(Eigen::VectorXd::Ones(10));
  const Trace t = nuts_sample(target, Eigen::VectorXd::Constant(10, 0.5), quick());
  REQUIRE(t.chain_count() == 4);
  REQUIRE(t.draws_per_chain() == 1000);
  CHECK(t.divergences() == 0);
  const Diagnostics d = diagnostics(t);
  for (Eigen::Index i = 0; i < 10; ++i) {
    const auto x = column(t, i);
    const double se = 1.0 / std::sqrt(d.ess[i]);
    INFO("coordinate " << i);
    CHECK(std::abs(mean(x)) < 4.0 * se);
    CHECK(std::abs(variance(x) - 1.0) < 0.15);
    CHECK(d.split_r_hat[i] < 1.01);
    CHECK(d.ess[i] > 400.0);
  }
}

TEST_CASE("NUTS: Gamma(3, 2) through a log coordinate") {
  const LogGamma target(3.0, 2.0);
  const Trace t = nuts_sample(target, Eigen::VectorXd::Zero(1), quick(4, 2));
  auto y = column(t, 0);
  std::vector<double> x(y.size());
  std::transform(y.begin(), y.end(), x.begin(), [](double v) { return std::exp(v); });
  CHECK(std::abs(mean(x) - 1.5) < 0.05);
  CHECK(std::abs(variance(x) - 0.75) < 0.08);

  // One-sample Kolmogorov-Smirnov on a thinned subsequence; draws are
  // roughly independent after thinning by 4.
  std::vector<double> thin;
  for (std::size_t i = 0; i < x.size(); i += 4) thin.push_back(x[i]);
  std::sort(thin.begin(), thin.end());
  const boost::math::gamma_distribution<double> g(3.0, 0.5);
  double dmax = 0.0;
  const double n = thin.size();
  for (std::size_t i = 0; i < thin.size(); ++i) {
    const double f = boost::math::cdf(g, thin[i]);
    dmax = std::max({dmax, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
  }
  CHECK(dmax < 1.63 / std::sqrt(n));
}

TEST_CASE("NUTS: deterministic for a fixed seed, independent of threading") {
  const Normal target(Eigen::VectorXd::LinSpaced(5, 0.5, 3.0));
  SamplerConfig c = quick(3, 42);
  c.warmup = 200;
  c.draws = 200;
  const Trace a = nuts_sample(target, Eigen::VectorXd::Zero(5), c);
  c.parallel = false;
  const Trace b = nuts_sample(target, Eigen::VectorXd::Zero(5), c);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(a.chains[k].draws == b.chains[k].draws);
    CHECK(a.chains[k].log_density == b.chains[k].log_density);
  }
  c.seed = 43;
  const Trace other = nuts_sample(target, Eigen::VectorXd::Zero(5), c);
  CHECK(other.chains[0].draws != a.chains[0].draws);
  CHECK(a.chains[0].draws != a.chains[1].draws);
}

TEST_CASE("NUTS: tiny fixed step without adaptation barely moves") {
  const Normal target(Eigen::VectorXd::Ones(3));
  SamplerConfig c = quick(1);
  c.adapt = false;
  c.step_size = 1e-12;
  c.max_tree_depth = 2;
  c.warmup = 0;
  c.draws = 50;
  const Eigen::VectorXd start = Eigen::VectorXd::Constant(3, 0.7);
  const Trace t = nuts_sample(target, start, c);
  for (Eigen::Index r = 0; r < t.chains[0].draws.rows(); ++r) {
    CHECK((t.chains[0].draws.row(r).transpose() - start).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("NUTS: the metric adapts to coordinate scales") {
  Eigen::VectorXd sd(4);
  sd << 0.01, 1.0, 10.0, 100.0;
  const Normal target(sd);
  SamplerConfig c = quick(2, 5);
  c.warmup = 1000;
  const Trace t = nuts_sample(target, Eigen::VectorXd::Zero(4), c);
  const Eigen::VectorXd m = t.chains[0].inverse_metric;
  for (Eigen::Index i = 0; i < 4; ++i) {
    INFO("coordinate " << i);
    CHECK(m[i] / (sd[i] * sd[i]) > 0.5);
    CHECK(m[i] / (sd[i] * sd[i]) < 2.0);
    CHECK(std::sqrt(variance(column(t, i))) / sd[i] == doctest::Approx(1.0).epsilon(0.15));
  }
  CHECK(mean(std::vector<double>(t.chains[0].tree_depth.begin(), t.chains[0].tree_depth.end())) < 4.0);
}

TEST_CASE("NUTS: dense metric learns a correlation") {
  const Correlated target(0.95);
  SamplerConfig c = quick(2, 6);
  c.metric = MetricKind::Dense;
  const Trace t = nuts_sample(target, Eigen::VectorXd::Zero(2), c);
  const Eigen::MatrixXd& m = t.chains[0].dense_inverse_metric;
  REQUIRE(m.rows() == 2);
  CHECK(m(0, 1) / std::sqrt(m(0, 0) * m(1, 1)) > 0.8);
  const auto x = column(t, 0), y = column(t, 1);
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my);
  sxy /= x.size() - 1;
  CHECK(sxy / std::sqrt(variance(x) * variance(y)) == doctest::Approx(0.95).epsilon(0.03));
}

TEST_CASE("NUTS: block-restricted dense metric drops cross-block terms") {
  const Correlated target(0.9);
  SamplerConfig c = quick(1, 7);
  c.metric = MetricKind::Dense;
  c.metric_blocks = {0, 1};
  const Trace t = nuts_sample(target, Eigen::VectorXd::Zero(2), c);
  CHECK(t.chains[0].dense_inverse_metric(0, 1) == 0.0);
  c.metric_blocks = {0};
  CHECK_THROWS_AS(nuts_sample(target, Eigen::VectorXd::Zero(2), c), std::invalid_argument);
}

TEST_CASE("NUTS: initial inverse metric is used when adaptation is off") {
  Eigen::VectorXd sd(2);
  sd << 1.0, 50.0;
  const Normal target(sd);
  SamplerConfig c = quick(1, 8);
  c.adapt_metric = false;
  c.initial_inverse_metric = Eigen::MatrixXd::Identity(2, 2);
  c.initial_inverse_metric(1, 1) = 2500.0;
  const Trace t = nuts_sample(target, Eigen::VectorXd::Zero(2), c);
  CHECK(t.chains[0].inverse_metric[1] == 2500.0);
  CHECK(mean(std::vector<double>(t.chains[0].tree_depth.begin(), t.chains[0].tree_depth.end())) < 3.5);

  c.initial_inverse_metric = Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(nuts_sample(target, Eigen::VectorXd::Zero(2), c), std::invalid_argument);
}

TEST_CASE("NUTS: early tree depth cap applies only to the initial buffer") {
  Eigen::VectorXd sd(2);
  sd << 0.01, 10.0;
  const Normal target(sd);
  SamplerConfig c = quick(1, 9);
  c.warmup = 300;
  c.draws = 100;
  c.save_warmup = true;
  c.initial_max_tree_depth = 1;
  c.adapt_metric = false;
  const Trace t = nuts_sample(target, Eigen::VectorXd::Zero(2), c);
  // Without metric adaptation the scales stay badly matched, so the
  // post-buffer trees are deep.
  CHECK(*std::max_element(t.chains[0].tree_depth.begin(), t.chains[0].tree_depth.end()) > 1);
  // The cap does change the early warmup trajectory.
  SamplerConfig uncapped = c;
  uncapped.initial_max_tree_depth.reset();
  const Trace u = nuts_sample(target, Eigen::VectorXd::Zero(2), uncapped);
  REQUIRE(u.chains[0].warmup_draws.rows() == 300);
  CHECK(u.chains[0].warmup_draws.topRows(75) != t.chains[0].warmup_draws.topRows(75));
  c.initial_max_tree_depth = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("NUTS: reports a non-finite start") {
  const Flat target;
  CHECK_THROWS_AS(nuts_sample(target, Eigen::VectorXd::Zero(1), quick(1)), SamplerInitError);
  CHECK_THROWS_AS(rwm_sample(target, Eigen::VectorXd::Zero(1), quick(1)), SamplerInitError);
}

TEST_CASE("NUTS: separated bimodal target visits both modes across chains") {
  const Bimodal target(3.0);
  SamplerConfig c = quick(4, 10);
  std::vector<Eigen::VectorXd> inits = {Eigen::VectorXd::Constant(1, -3.0), Eigen::VectorXd::Constant(1, 3.0),
                                        Eigen::VectorXd::Constant(1, -2.0), Eigen::VectorXd::Constant(1, 2.0)};
  const Trace t = nuts_sample(target, inits, c);
  const auto x = column(t, 0);
  const double positive = std::count_if(x.begin(), x.end(), [](double v) { return v > 0; });
  CHECK(positive / x.size() > 0.2);
  CHECK(positive / x.size() < 0.8);
  CHECK(std::abs(variance(x) - 10.0) < 2.0);
}

TEST_CASE("RWM: 1-D normal moments and acceptance") {
  const Normal target(Eigen::VectorXd::Constant(1, 2.0));
  SamplerConfig c = quick(4, 11);
  c.warmup = 1000;
  c.draws = 5000;
  const Trace t = rwm_sample(target, Eigen::VectorXd::Zero(1), c);
  const auto x = column(t, 0);
  CHECK(std::abs(mean(x)) < 0.15);
  CHECK(std::abs(variance(x) - 4.0) < 0.4);
  const auto& acc = t.chains[0].accept_stat;
  const double rate = mean(acc);
  CHECK(rate > 0.15);
  CHECK(rate < 0.6);
}

TEST_CASE("NUTS beats RWM on ESS per draw in 5-D") {
  Eigen::VectorXd sd(5);
  sd << 1, 2, 3, 4, 5;
  const Normal target(sd);
  SamplerConfig c = quick(2, 12);
  const Trace nuts = nuts_sample(target, Eigen::VectorXd::Zero(5), c);
  const Trace rwm = rwm_sample(target, Eigen::VectorXd::Zero(5), c);
  const auto dn = diagnostics(nuts), dr = diagnostics(rwm);
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(dn.ess[i] > dr.ess[i]);
}

TEST_CASE("SamplerConfig validation") {
  SamplerConfig c;
  CHECK_NOTHROW(c.validate());
  c.chains = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.target_accept = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.draws = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.max_tree_depth = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
