#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "gammamix/dpgmm_model.hpp"
#include "gammamix/evaluation.hpp"
#include "gammamix/rng.hpp"

using namespace gammamix;

namespace {

std::vector<double> random_masses(std::size_t n, Rng& rng, bool with_zeros) {
  std::gamma_distribution<double> g(0.5, 1.0);
  std::bernoulli_distribution zero(0.2);
  std::vector<double> m(n);
  double s = 0.0;
  for (double& v : m) {
    v = with_zeros && zero(rng) ? 0.0 : g(rng);
    s += v;
  }
  if (s == 0.0) m[0] = s = 1.0;
  for (double& v : m) v /= s;
  return m;
}

EmpiricalPdf pdf_from_masses(std::vector<double> edges, const std::vector<double>& masses) {
  EmpiricalPdf p;
  p.edges = std::move(edges);
  for (std::size_t b = 0; b < masses.size(); ++b) p.densities.push_back(masses[b] / p.width(b));
  return p;
}

Trace one_state_trace(const LatentState& s, std::size_t draws) {
  const Eigen::VectorXd u = unconstrain(s);
  ChainTrace c;
  c.draws = u.transpose().replicate(draws, 1);
  c.log_density.assign(draws, 0.0);
  c.divergent.assign(draws, 0);
  Trace t;
  t.chains = {c, c};
  return t;
}

}  // namespace

TEST_CASE("KL two-bin hand case") {
  const std::vector<double> p = {0.5, 0.5}, q = {0.25, 0.75};
  const double want = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  CHECK(std::abs(kl_divergence(p, q) - want) < 1e-15);
  CHECK(std::abs(kl_divergence(p, q) - 0.143841) < 1e-6);
}

TEST_CASE("KL skips empty bins and floors q") {
  CHECK(kl_divergence(std::vector<double>{0.0, 1.0}, std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(std::log(2.0)));
  const double floored = kl_divergence(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0});
  CHECK(floored == doctest::Approx(-std::log(kKlFloor)));
  CHECK(std::isfinite(floored));
  CHECK_THROWS_AS(kl_divergence(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}),
                  std::invalid_argument);
}

TEST_CASE("KL is non-negative on random pairs (Gibbs)") {
  Rng rng = make_rng(1);
  std::uniform_int_distribution<std::size_t> len(2, 200);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = len(rng);
    const auto p = random_masses(n, rng, true);
    const auto q = random_masses(n, rng, false);
    CHECK(kl_divergence(p, q) >= -1e-15);
    CHECK(std::abs(kl_divergence(p, p)) < 1e-15);
  }
}

TEST_CASE("KL of a model against its own discretization is zero") {
  const MixtureModel m({{0.5, 100.0, 16.0}, {0.3, 80.0, 10.0}, {0.2, 400.0, 80.0}});
  std::vector<double> edges(101);
  for (std::size_t i = 0; i <= 100; ++i) edges[i] = 3.0 + 0.1 * i;
  for (auto how : {Discretization::Midpoint, Discretization::ExactCdf}) {
    const auto pdf = pdf_from_masses(edges, discretize(m, edges, how));
    CHECK(kl_divergence(pdf, m, how) < 1e-9);
  }
}

TEST_CASE("discretize is normalized and close to exact integration") {
  const MixtureModel m({{0.7, 5.0, 1.0}, {0.3, 30.0, 3.0}});
  std::vector<double> edges(101);
  for (std::size_t i = 0; i <= 100; ++i) edges[i] = 0.5 + 0.2 * i;
  const auto mid = discretize(m, edges);
  const auto exact = discretize(m, edges, Discretization::ExactCdf);
  double s = 0.0, worst = 0.0;
  for (std::size_t b = 0; b < mid.size(); ++b) {
    s += mid[b];
    worst = std::max(worst, std::abs(mid[b] - exact[b]));
  }
  CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(worst < 1e-3);
  CHECK_THROWS_AS(discretize(m, std::vector<double>{1.0}), std::invalid_argument);
  CHECK_THROWS_AS(discretize(m, std::vector<double>{1.0, 1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("KL does not depend on component order") {
  const auto x = sample(MixtureModel({{0.6, 8.0, 2.0}, {0.4, 40.0, 4.0}}), 3000, 4);
  const auto pdf = build_empirical_pdf(x, 100);
  const GammaComponent a{0.5, 7.0, 2.0}, b{0.3, 41.0, 4.1}, c{0.2, 20.0, 3.0};
  const double k1 = kl_divergence(pdf, MixtureModel({a, b, c}));
  CHECK(kl_divergence(pdf, MixtureModel({c, a, b})) == k1);
  CHECK(kl_divergence(pdf, MixtureModel({b, c, a})) == k1);
  CHECK(k1 > 0.0);
}

TEST_CASE("KL of a fitted truth on a large sample is small") {
  const MixtureModel m({{0.6, 8.0, 2.0}, {0.4, 40.0, 4.0}});
  const auto pdf = build_empirical_pdf(sample(m, 100000, 5), 100);
  CHECK(kl_divergence(pdf, m) < 0.01);
  CHECK(kl_divergence(pdf, MixtureModel({{1.0, 3.0, 1.0}})) > 0.1);
}

TEST_CASE("component_trace of a constant state is a single spike") {
  const MixtureModel m({{0.5, 100.0, 16.0}, {0.3, 80.0, 10.0}, {0.2, 400.0, 80.0}});
  const LatentState s = state_from_mixture(m, 10);
  const auto ct = component_trace(one_state_trace(s, 25), 0.001);
  REQUIRE(ct.counts.size() == 50);
  REQUIRE(ct.histogram.size() == 11);
  CHECK(ct.mode() == 3);
  CHECK(ct.histogram[3] == 50);
  for (std::size_t n : ct.counts) CHECK(n == 3);
  // At a threshold below the spare weights every component counts.
  CHECK(component_trace(one_state_trace(s, 3), 1e-9).mode() == 10);
  CHECK(component_trace(Trace{}).counts.empty());
}
