#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "gammamix/dpgmm_fit.hpp"
#include "gammamix/evaluation.hpp"

using namespace gammamix;
namespace fs = std::filesystem;

namespace {

Trace constant_trace(const LatentState& s, std::size_t chains, std::size_t draws) {
  const Eigen::VectorXd u = unconstrain(s);
  ChainTrace c;
  c.draws = u.transpose().replicate(draws, 1);
  c.log_density.assign(draws, -1.0);
  c.divergent.assign(draws, 0);
  Trace t;
  t.method = "NUTS";
  t.chains.assign(chains, c);
  return t;
}

const MixtureModel kThree({{0.5, 30.0, 10.0}, {0.3, 60.0, 8.0}, {0.2, 200.0, 20.0}});

}  // namespace

TEST_CASE("summarize of a constant trace reproduces its state") {
  LatentState s = state_from_mixture(kThree, 8);
  const DpgmmSummary sum = summarize(constant_trace(s, 2, 10), 1e-9);
  const MixtureModel direct = mixture_from_state(s);
  REQUIRE(sum.model.k() == direct.k());
  for (std::size_t k = 0; k < direct.k(); ++k) {
    CHECK(sum.model[k].weight == doctest::Approx(direct[k].weight).epsilon(1e-12));
    CHECK(sum.model[k].shape == doctest::Approx(direct[k].shape).epsilon(1e-12));
    CHECK(sum.model[k].rate == doctest::Approx(direct[k].rate).epsilon(1e-12));
  }
  CHECK(sum.mean_weights.size() == 8);

  const DpgmmSummary cut = summarize(constant_trace(s, 2, 10), 0.001);
  CHECK(cut.k_effective == 3);
  CHECK(cut.model.k() == 3);
  CHECK(cut.model[0].shape == doctest::Approx(30.0).epsilon(1e-12));
  CHECK_FALSE(cut.truncation_saturated);
}

TEST_CASE("summarize undoes label switching") {
  LatentState a = state_from_mixture(kThree, 3);
  LatentState b = a;
  // Same mixture with the first two components stored in swapped slots.
  std::swap(b.components[0], b.components[1]);
  const auto pa = stick_break(a.sticks);
  b.sticks[0] = pa[1];
  b.sticks[1] = pa[0] / (1.0 - pa[1]);
  Trace t = constant_trace(a, 1, 4);
  t.chains.push_back(constant_trace(b, 1, 4).chains[0]);
  const DpgmmSummary s = summarize(t, 0.001);
  REQUIRE(s.model.k() == 3);
  CHECK(s.model[0].shape == doctest::Approx(30.0).epsilon(1e-10));
  CHECK(s.model[1].shape == doctest::Approx(60.0).epsilon(1e-10));
}

TEST_CASE("min_cost_assignment matches brute force") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 4;
    const int m = n + trial % 3;
    Eigen::MatrixXd c(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) c(i, j) = u(rng);
    std::vector<int> cols(m);
    std::iota(cols.begin(), cols.end(), 0);
    double best = INFINITY;
    do {
      double total = 0.0;
      for (int i = 0; i < n; ++i) total += c(i, cols[i]);
      best = std::min(best, total);
    } while (std::next_permutation(cols.begin(), cols.end()));
    const auto got = min_cost_assignment(c);
    REQUIRE(got.size() == std::size_t(n));
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += c(i, Eigen::Index(got[i]));
    std::vector<std::size_t> sorted = got;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    CHECK(total == doctest::Approx(best).epsilon(1e-12));
  }
  CHECK_THROWS_AS(min_cost_assignment(Eigen::MatrixXd::Zero(3, 2)), std::invalid_argument);
}

TEST_CASE("matched alignment follows components whose weight ranks swap") {
  // Two draws of the same three shapes; the top two swap weight ranks.
  const MixtureModel first({{0.45, 30.0, 10.0}, {0.35, 60.0, 8.0}, {0.2, 200.0, 20.0}});
  const MixtureModel second({{0.35, 30.0, 10.0}, {0.45, 60.0, 8.0}, {0.2, 200.0, 20.0}});
  Trace t = constant_trace(state_from_mixture(first, 3), 1, 5);
  t.chains.push_back(constant_trace(state_from_mixture(second, 3), 1, 5).chains[0]);

  const DpgmmSummary matched = summarize(t, 0.001);
  REQUIRE(matched.model.k() == 3);
  CHECK(matched.model[0].weight == doctest::Approx(0.4).epsilon(1e-9));
  CHECK(matched.model[1].weight == doctest::Approx(0.4).epsilon(1e-9));
  std::vector<double> shapes;
  for (const auto& c : matched.model.components()) shapes.push_back(c.shape);
  std::sort(shapes.begin(), shapes.end());
  CHECK(shapes[0] == doctest::Approx(30.0).epsilon(1e-9));
  CHECK(shapes[1] == doctest::Approx(60.0).epsilon(1e-9));
  CHECK(shapes[2] == doctest::Approx(200.0).epsilon(1e-9));

  // Per-rank averaging blends the two.
  const DpgmmSummary ranked = summarize(t, 0.001, LabelAlignment::Canonical);
  REQUIRE(ranked.model.k() == 3);
  CHECK(ranked.model[0].weight == doctest::Approx(0.45).epsilon(1e-9));
  CHECK(ranked.model[0].shape == doctest::Approx(45.0).epsilon(1e-9));
  CHECK(ranked.mean_weights.size() == 3);
}

TEST_CASE("matched alignment uses the most common occupied count") {
  const LatentState s3 = state_from_mixture(kThree, 6);
  const LatentState s2 = state_from_mixture(MixtureModel({{0.6, 30.0, 10.0}, {0.4, 60.0, 8.0}}), 6);
  Trace t = constant_trace(s3, 1, 7);
  t.chains.push_back(constant_trace(s2, 1, 3).chains[0]);
  const DpgmmSummary sum = summarize(t, 0.01);
  CHECK(sum.mean_weights.size() == 3);
  CHECK(sum.k_effective == 3);
  CHECK(summarize(t, 0.01, LabelAlignment::Canonical).mean_weights.size() == 6);
}

TEST_CASE("summarize flags a saturated truncation") {
  // K = 2 with the leftover stick carrying substantial weight.
  const LatentState s = state_from_mixture(MixtureModel({{0.6, 30.0, 10.0}, {0.4, 60.0, 8.0}}), 2);
  const DpgmmSummary sum = summarize(constant_trace(s, 1, 5), 0.001);
  CHECK(sum.truncation_saturated);
  CHECK(sum.k_effective == 2);
}

TEST_CASE("DpgmmOptions validation") {
  DpgmmOptions o;
  CHECK_NOTHROW(o.validate());
  o.truncation = 0;
  CHECK_THROWS_AS(o.validate(), std::invalid_argument);
  o = {};
  o.threshold = 1.0;
  CHECK_THROWS_AS(o.validate(), std::invalid_argument);
  o = {};
  o.init_k = 31;
  CHECK_THROWS_AS(o.validate(), std::invalid_argument);
}

TEST_CASE("select_k_by_bic finds two well separated components") {
  const auto x = sample(MixtureModel({{0.5, 10.0, 10.0}, {0.5, 100.0, 10.0}}), 1000, 3);
  CHECK(select_k_by_bic(x, 6, 1) == 2);
}

TEST_CASE("fit_dpgmm on a short run recovers a two-component mixture") {
  const MixtureModel truth({{0.6, 10.0, 10.0}, {0.4, 100.0, 10.0}});
  const auto x = sample(truth, 400, 11);
  DpgmmOptions o;
  o.truncation = 10;
  o.sampler.chains = 2;
  o.sampler.warmup = 300;
  o.sampler.draws = 200;
  o.sampler.seed = 5;
  const DpgmmFit fit = fit_dpgmm(x, o);
  CHECK(fit.trace.chain_count() == 2);
  CHECK(fit.trace.draws_per_chain() == 200);
  CHECK(fit.trace.dimension() == 70);
  CHECK(fit.summary.k_effective == 2);
  CHECK(fit.init_model.k() == 2);
  const auto pdf = build_empirical_pdf(x, 50);
  CHECK(kl_divergence(pdf, fit.summary.model) < 0.05);
  // Stored log densities are the model posterior at the stored draws.
  const DpgmmPosterior post(x, 10);
  const auto& c = fit.trace.chains[1];
  CHECK(c.log_density[7] == doctest::Approx(post.log_density(c.draws.row(7).transpose())).epsilon(1e-10));
  CHECK(component_trace(fit.trace, 0.001).mode() == 2);

  // Same seed, same draws.
  const DpgmmFit again = fit_dpgmm(x, o);
  CHECK(again.trace.chains[0].draws == fit.trace.chains[0].draws);
}

TEST_CASE("fit_dpgmm with random-walk Metropolis") {
  const auto x = sample(MixtureModel({{0.6, 10.0, 10.0}, {0.4, 100.0, 10.0}}), 300, 12);
  DpgmmOptions o;
  o.truncation = 5;
  o.method = DpgmmMethod::Rwm;
  o.sampler.chains = 2;
  o.sampler.warmup = 500;
  o.sampler.draws = 500;
  const DpgmmFit fit = fit_dpgmm(x, o);
  CHECK(fit.trace.method == "rwm");
  CHECK(fit.summary.model.k() >= 1);
}

TEST_CASE("write_trace_csv writes one row per draw") {
  const LatentState s = state_from_mixture(kThree, 4);
  const Trace t = constant_trace(s, 2, 3);
  const fs::path p = fs::temp_directory_path() / "gammamix_test_trace.csv";
  write_trace_csv(p, t);
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("chain,draw,log_posterior,divergent,a,V[1],", 0) == 0);
  CHECK(header.find("rate[4]") != std::string::npos);
  int rows = 0;
  std::string last;
  for (std::string line; std::getline(in, line);) {
    ++rows;
    last = line;
  }
  CHECK(rows == 6);
  CHECK(last.rfind("1,2,-1,0,1,", 0) == 0);
}
