#include "gammamix/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

#include "gammamix/special_math.hpp"

namespace gammamix {

namespace {

void validate(const std::vector<GammaComponent>& comps) {
  if (comps.empty()) throw std::invalid_argument("mixture needs at least one component");
  double total = 0.0;
  for (const auto& c : comps) {
    if (!std::isfinite(c.weight) || !(c.weight > 0.0) || c.weight > 1.0) {
      throw std::invalid_argument("component weight must lie in (0, 1], got " +
                                  std::to_string(c.weight));
    }
    if (!std::isfinite(c.shape) || !(c.shape > 0.0) || !std::isfinite(c.rate) ||
        !(c.rate > 0.0)) {
      throw std::invalid_argument("component shape and rate must be finite and > 0");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > MixtureModel::kWeightSumTolerance) {
    throw std::invalid_argument("component weights sum to " + std::to_string(total));
  }
}

bool canonical_less(const GammaComponent& a, const GammaComponent& b) {
  if (a.weight != b.weight) return a.weight > b.weight;
  if (a.shape != b.shape) return a.shape < b.shape;
  return a.rate < b.rate;
}

}  // namespace

MixtureModel::MixtureModel(std::vector<GammaComponent> components)
    : components_(std::move(components)) {
  validate(components_);
  std::stable_sort(components_.begin(), components_.end(), canonical_less);
}

MixtureModel MixtureModel::normalized(std::vector<GammaComponent> components) {
  double total = 0.0;
  for (const auto& c : components) total += c.weight;
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw std::invalid_argument("cannot normalize weights with non-positive total");
  }
  for (auto& c : components) c.weight /= total;
  return MixtureModel(std::move(components));
}

MixtureModel MixtureModel::from_shape_scale(std::span<const double> weights,
                                            std::span<const double> shapes,
                                            std::span<const double> scales) {
  if (weights.size() != shapes.size() || weights.size() != scales.size()) {
    throw std::invalid_argument("shape-scale table columns differ in length");
  }
  std::vector<GammaComponent> comps;
  comps.reserve(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    comps.push_back({weights[i], shapes[i], 1.0 / scales[i]});
  }
  return normalized(std::move(comps));
}

double MixtureModel::mean() const noexcept {
  double m = 0.0;
  for (const auto& c : components_) m += c.weight * c.mean();
  return m;
}

double mixture_log_pdf(const MixtureModel& model, double x) {
  if (std::isnan(x) || x < 0.0) throw std::domain_error("mixture_log_pdf: x must be >= 0");
  double terms[64];
  std::vector<double> heap;
  double* t = terms;
  if (model.k() > 64) {
    heap.resize(model.k());
    t = heap.data();
  }
  double peak = kNegInf;
  for (std::size_t k = 0; k < model.k(); ++k) {
    const auto& c = model[k];
    t[k] = std::log(c.weight) + gamma_log_pdf(x, c.shape, c.rate);
    peak = std::max(peak, t[k]);
  }
  if (peak == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t k = 0; k < model.k(); ++k) s += std::exp(t[k] - peak);
  return peak + std::log(s);
}

double mixture_cdf(const MixtureModel& model, double x) {
  if (!(x > 0.0)) return 0.0;
  if (std::isinf(x)) return 1.0;
  double p = 0.0;
  for (const auto& c : model.components()) {
    p += c.weight * boost::math::gamma_p(c.shape, c.rate * x);
  }
  return std::min(p, 1.0);
}

std::vector<double> sample(const MixtureModel& model, std::size_t n, Rng& rng) {
  std::vector<double> cumulative(model.k());
  double acc = 0.0;
  for (std::size_t k = 0; k < model.k(); ++k) {
    acc += model[k].weight;
    cumulative[k] = acc;
  }
  std::vector<std::gamma_distribution<double>> kernels;
  kernels.reserve(model.k());
  for (const auto& c : model.components()) kernels.emplace_back(c.shape, 1.0 / c.rate);

  std::uniform_real_distribution<double> unif(0.0, acc);
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = unif(rng);
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    std::size_t k = std::min<std::size_t>(it - cumulative.begin(), model.k() - 1);
    double x = kernels[k](rng);
    // Gamma draws with tiny shape can underflow; keep samples strictly positive.
    if (!(x > 0.0)) x = std::numeric_limits<double>::min();
    out.push_back(x);
  }
  return out;
}

std::vector<double> sample(const MixtureModel& model, std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return sample(model, n, rng);
}

std::size_t effective_components(const MixtureModel& model, double threshold) {
  if (!(threshold >= 0.0) || !(threshold < 1.0)) {
    throw std::invalid_argument("effective-component threshold must lie in [0, 1)");
  }
  return static_cast<std::size_t>(
      std::count_if(model.components().begin(), model.components().end(),
                    [threshold](const GammaComponent& c) { return c.weight > threshold; }));
}

nlohmann::json to_json(const MixtureModel& model) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : model.components()) {
    comps.push_back({{"weight", c.weight}, {"shape", c.shape}, {"rate", c.rate}});
  }
  return {{"components", comps}};
}

MixtureModel mixture_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("components") || !j["components"].is_array()) {
    throw std::invalid_argument("mixture JSON needs a \"components\" array");
  }
  std::vector<GammaComponent> comps;
  for (const auto& c : j["components"]) {
    for (const char* key : {"weight", "shape", "rate"}) {
      if (!c.contains(key) || !c[key].is_number()) {
        throw std::invalid_argument(std::string("mixture component missing numeric \"") +
                                    key + "\"");
      }
    }
    comps.push_back({c["weight"].get<double>(), c["shape"].get<double>(),
                     c["rate"].get<double>()});
  }
  return MixtureModel(std::move(comps));
}

}  // namespace gammamix
