#include "gammamix/dpgmm_model.hpp"

#include <boost/math/distributions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "gammamix/special_math.hpp"

namespace gammamix {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

// ln Gamma overflows a little above 1e305.
bool gamma_argument_ok(double v) { return v > 0.0 && v < 1e300; }

double logistic(double u) {
  return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
}

}  // namespace

void HyperPriors::validate() const {
  for (double v : {lambda_shape, lambda_scale, kappa_rate, nu_shape, nu_rate, v_shape, v_scale}) {
    if (!positive_finite(v)) throw std::invalid_argument("hyperpriors must be finite and > 0");
  }
}

nlohmann::json to_json(const HyperPriors& hp) {
  return {{"lambda_shape", hp.lambda_shape}, {"lambda_scale", hp.lambda_scale},
          {"kappa_rate", hp.kappa_rate},     {"nu_shape", hp.nu_shape},
          {"nu_rate", hp.nu_rate},           {"v_shape", hp.v_shape},
          {"v_scale", hp.v_scale}};
}

HyperPriors hyperpriors_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("hyperpriors must be a JSON object");
  HyperPriors hp;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) {
      throw std::invalid_argument("hyperprior \"" + key + "\" must be a number");
    }
    const double v = value.get<double>();
    if (key == "lambda_shape") hp.lambda_shape = v;
    else if (key == "lambda_scale") hp.lambda_scale = v;
    else if (key == "kappa_rate") hp.kappa_rate = v;
    else if (key == "nu_shape") hp.nu_shape = v;
    else if (key == "nu_rate") hp.nu_rate = v;
    else if (key == "v_shape") hp.v_shape = v;
    else if (key == "v_scale") hp.v_scale = v;
    else throw std::invalid_argument("unknown hyperprior key \"" + key + "\"");
  }
  hp.validate();
  return hp;
}

void LatentState::validate() const {
  if (components.empty()) throw std::invalid_argument("latent state needs K >= 1");
  if (sticks.size() + 1 != components.size()) {
    throw std::invalid_argument("latent state needs K-1 stick fractions");
  }
  if (!positive_finite(concentration)) {
    throw std::invalid_argument("concentration must be finite and > 0");
  }
  for (double v : sticks) {
    if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument("stick fractions must lie in (0, 1)");
  }
  for (const auto& c : components) {
    for (double p : {c.lambda, c.kappa, c.nu, c.v, c.shape, c.rate}) {
      if (!positive_finite(p)) {
        throw std::invalid_argument("component parameters must be finite and > 0");
      }
    }
  }
}

DpgmmLayout::DpgmmLayout(std::size_t truncation) : k_(truncation) {
  if (truncation < 1) throw std::invalid_argument("truncation must be >= 1");
}

DpgmmLayout DpgmmLayout::from_dimension(std::size_t dim) {
  if (dim == 0 || dim % 7 != 0) {
    throw std::invalid_argument("unconstrained dimension must be a positive multiple of 7");
  }
  return DpgmmLayout(dim / 7);
}

std::vector<std::string> DpgmmLayout::names() const {
  static constexpr const char* kFieldNames[] = {"lambda", "kappa", "nu", "v", "shape", "rate"};
  std::vector<std::string> out(dimension());
  out[0] = "a";
  for (std::size_t j = 0; j + 1 < k_; ++j) out[stick(j)] = "V[" + std::to_string(j + 1) + "]";
  for (std::size_t k = 0; k < k_; ++k) {
    for (std::size_t f = 0; f < kFieldCount; ++f) {
      out[component(k, static_cast<Field>(f))] =
          std::string(kFieldNames[f]) + "[" + std::to_string(k + 1) + "]";
    }
  }
  return out;
}

std::vector<double> stick_break(std::span<const double> sticks) {
  std::vector<double> pi(sticks.size() + 1);
  double remaining = 1.0;
  double used = 0.0;
  for (std::size_t j = 0; j < sticks.size(); ++j) {
    const double v = sticks[j];
    if (!(v > 0.0 && v < 1.0)) {
      throw std::domain_error("stick fraction " + std::to_string(j) + " outside (0, 1)");
    }
    pi[j] = v * remaining;
    remaining *= 1.0 - v;
    used += pi[j];
  }
  pi.back() = std::max(0.0, 1.0 - used);
  return pi;
}

LatentState constrain(const Eigen::VectorXd& u) {
  const auto layout = DpgmmLayout::from_dimension(static_cast<std::size_t>(u.size()));
  const std::size_t k = layout.truncation();
  LatentState s;
  // Values beyond double range are clamped to the nearest representable
  // interior point so the state stays valid.
  auto positive = [](double x) {
    return std::clamp(std::exp(x), std::numeric_limits<double>::min(),
                      std::numeric_limits<double>::max());
  };
  s.concentration = positive(u[DpgmmLayout::concentration()]);
  s.sticks.resize(k - 1);
  for (std::size_t j = 0; j + 1 < k; ++j) {
    s.sticks[j] = std::clamp(logistic(u[layout.stick(j)]), std::numeric_limits<double>::min(),
                             std::nextafter(1.0, 0.0));
  }
  s.components.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    auto at = [&](DpgmmLayout::Field f) { return positive(u[layout.component(c, f)]); };
    s.components[c] = {at(DpgmmLayout::kLambda), at(DpgmmLayout::kKappa),
                       at(DpgmmLayout::kNu),     at(DpgmmLayout::kV),
                       at(DpgmmLayout::kShape),  at(DpgmmLayout::kRate)};
  }
  return s;
}

Eigen::VectorXd unconstrain(const LatentState& state) {
  state.validate();
  const DpgmmLayout layout(state.truncation());
  Eigen::VectorXd u(static_cast<Eigen::Index>(layout.dimension()));
  u[DpgmmLayout::concentration()] = std::log(state.concentration);
  for (std::size_t j = 0; j < state.sticks.size(); ++j) {
    const double v = state.sticks[j];
    u[layout.stick(j)] = std::log(v) - std::log1p(-v);
  }
  for (std::size_t c = 0; c < state.truncation(); ++c) {
    const auto& p = state.components[c];
    u[layout.component(c, DpgmmLayout::kLambda)] = std::log(p.lambda);
    u[layout.component(c, DpgmmLayout::kKappa)] = std::log(p.kappa);
    u[layout.component(c, DpgmmLayout::kNu)] = std::log(p.nu);
    u[layout.component(c, DpgmmLayout::kV)] = std::log(p.v);
    u[layout.component(c, DpgmmLayout::kShape)] = std::log(p.shape);
    u[layout.component(c, DpgmmLayout::kRate)] = std::log(p.rate);
  }
  return u;
}

double log_jacobian(const Eigen::VectorXd& u) {
  const auto layout = DpgmmLayout::from_dimension(static_cast<std::size_t>(u.size()));
  double lj = u[DpgmmLayout::concentration()];
  for (std::size_t j = 0; j + 1 < layout.truncation(); ++j) {
    const double x = u[layout.stick(j)];
    lj += -softplus(-x) - softplus(x);  // log V + log(1 - V)
  }
  for (std::size_t c = 0; c < layout.truncation(); ++c) {
    for (std::size_t f = 0; f < DpgmmLayout::kFieldCount; ++f) {
      lj += u[layout.component(c, static_cast<DpgmmLayout::Field>(f))];
    }
  }
  return lj;
}

double log_prior(const LatentState& state, const HyperPriors& hp) {
  state.validate();
  const double a = state.concentration;
  double lp = gamma_log_pdf(a, 1.0, 1.0);
  for (double v : state.sticks) lp += log_pdf_beta(v, 1.0, a);
  for (const auto& c : state.components) {
    lp += log_pdf_inverse_gamma(c.lambda, hp.lambda_shape, hp.lambda_scale);
    lp += log_pdf_exponential(c.kappa, hp.kappa_rate);
    lp += gamma_log_pdf(c.nu, hp.nu_shape, hp.nu_rate);
    lp += log_pdf_inverse_gamma(c.v, hp.v_shape, hp.v_scale);
    lp += log_pdf_inverse_gamma(c.shape, c.lambda, c.kappa);
    lp += gamma_log_pdf(c.rate, c.nu, c.v);
  }
  return lp;
}

double log_likelihood(const LatentState& state, std::span<const double> data) {
  const auto pi = stick_break(state.sticks);
  std::vector<double> terms(pi.size());
  double ll = 0.0;
  for (double x : data) {
    double peak = kNegInf;
    for (std::size_t k = 0; k < pi.size(); ++k) {
      const auto& c = state.components[k];
      terms[k] = pi[k] > 0.0 ? std::log(pi[k]) + gamma_log_pdf(x, c.shape, c.rate) : kNegInf;
      peak = std::max(peak, terms[k]);
    }
    if (peak == kNegInf) return kNegInf;
    double s = 0.0;
    for (double t : terms) s += std::exp(t - peak);
    ll += peak + std::log(s);
  }
  return ll;
}

DpgmmPosterior::DpgmmPosterior(std::span<const double> data, std::size_t truncation,
                               HyperPriors hp)
    : layout_(truncation), hp_(hp), x_(static_cast<Eigen::Index>(data.size())),
      log_x_(static_cast<Eigen::Index>(data.size())) {
  hp_.validate();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!positive_finite(data[i])) {
      throw std::invalid_argument("DPGMM data must be finite and > 0 (point " +
                                  std::to_string(i) + ")");
    }
    x_[static_cast<Eigen::Index>(i)] = data[i];
    log_x_[static_cast<Eigen::Index>(i)] = std::log(data[i]);
  }
}

double DpgmmPosterior::log_density(const Eigen::VectorXd& u) const {
  return evaluate(u, nullptr);
}

double DpgmmPosterior::log_density_gradient(const Eigen::VectorXd& u,
                                            Eigen::VectorXd& grad) const {
  return evaluate(u, &grad);
}

double DpgmmPosterior::evaluate(const Eigen::VectorXd& u, Eigen::VectorXd* grad) const {
  const std::size_t kk = layout_.truncation();
  const auto k = static_cast<Eigen::Index>(kk);
  if (static_cast<std::size_t>(u.size()) != layout_.dimension()) {
    throw std::invalid_argument("unconstrained state has the wrong dimension");
  }
  if (grad) grad->setZero(u.size());
  if (!u.allFinite()) {
    if (grad) grad->setConstant(kNaN);
    return kNegInf;
  }

  // Concentration and sticks.
  const double ua = u[DpgmmLayout::concentration()];
  const double a = std::exp(ua);
  Eigen::VectorXd log_pi(k);
  Eigen::VectorXd stick_v(std::max<Eigen::Index>(k - 1, 0));
  double log_rest = 0.0;
  double lp = -a + ua;  // Gamma(1,1) prior + Jacobian of exp
  for (std::size_t j = 0; j + 1 < kk; ++j) {
    const double x = u[layout_.stick(j)];
    const double log_v = -softplus(-x);
    const double log_1mv = -softplus(x);
    stick_v[static_cast<Eigen::Index>(j)] = logistic(x);
    log_pi[static_cast<Eigen::Index>(j)] = log_v + log_rest;
    log_rest += log_1mv;
    lp += ua + (a - 1.0) * log_1mv;  // Beta(1, a) prior
    lp += log_v + log_1mv;           // Jacobian of logistic
  }
  log_pi[k - 1] = log_rest;
  if (grad) {
    (*grad)[DpgmmLayout::concentration()] =
        -a + 1.0 + static_cast<double>(kk - 1) + a * log_rest;
    for (std::size_t j = 0; j + 1 < kk; ++j) {
      const double v = stick_v[static_cast<Eigen::Index>(j)];
      (*grad)[layout_.stick(j)] = -(a - 1.0) * v + 1.0 - 2.0 * v;
    }
  }

  // Hyperparameters and component priors.
  Eigen::VectorXd shape(k), shape_m1(k), rate(k), log_rate(k), offset(k), dig_shape(k);
  const double c_lambda = hp_.lambda_shape * std::log(hp_.lambda_scale) - log_gamma(hp_.lambda_shape);
  const double c_kappa = std::log(hp_.kappa_rate);
  const double c_nu = hp_.nu_shape * std::log(hp_.nu_rate) - log_gamma(hp_.nu_shape);
  const double c_v = hp_.v_shape * std::log(hp_.v_scale) - log_gamma(hp_.v_shape);
  for (std::size_t c = 0; c < kk; ++c) {
    const double ul = u[layout_.component(c, DpgmmLayout::kLambda)];
    const double uk = u[layout_.component(c, DpgmmLayout::kKappa)];
    const double un = u[layout_.component(c, DpgmmLayout::kNu)];
    const double uv = u[layout_.component(c, DpgmmLayout::kV)];
    const double us = u[layout_.component(c, DpgmmLayout::kShape)];
    const double ur = u[layout_.component(c, DpgmmLayout::kRate)];
    const double lambda = std::exp(ul), kappa = std::exp(uk), nu = std::exp(un);
    const double alpha = std::exp(us), beta = std::exp(ur);
    // kappa, v and beta only enter through products formed in log space, so
    // underflow to zero is harmless; the Gamma-function arguments must be
    // representable.
    if (!gamma_argument_ok(lambda) || !gamma_argument_ok(nu) || !gamma_argument_ok(alpha)) {
      if (grad) grad->setConstant(kNaN);
      return kNegInf;
    }
    const double lg_lambda = log_gamma(lambda), lg_nu = log_gamma(nu);
    const double inv_lambda = std::exp(-ul), inv_v = std::exp(-uv);
    const double kappa_over_alpha = std::exp(uk - us);
    const double v_beta = std::exp(uv + ur);

    lp += c_lambda - (hp_.lambda_shape + 1.0) * ul - hp_.lambda_scale * inv_lambda;
    lp += c_kappa - hp_.kappa_rate * kappa;
    lp += c_nu + (hp_.nu_shape - 1.0) * un - hp_.nu_rate * nu;
    lp += c_v - (hp_.v_shape + 1.0) * uv - hp_.v_scale * inv_v;
    lp += lambda * uk - lg_lambda - (lambda + 1.0) * us - kappa_over_alpha;
    lp += nu * uv - lg_nu + (nu - 1.0) * ur - v_beta;
    lp += ul + uk + un + uv + us + ur;

    const auto ci = static_cast<Eigen::Index>(c);
    shape[ci] = alpha;
    shape_m1[ci] = alpha - 1.0;
    rate[ci] = beta;
    log_rate[ci] = ur;
    offset[ci] = log_pi[ci] + alpha * ur - log_gamma(alpha);

    if (grad) {
      auto& g = *grad;
      g[layout_.component(c, DpgmmLayout::kLambda)] =
          -(hp_.lambda_shape + 1.0) + hp_.lambda_scale * inv_lambda +
          lambda * (uk - digamma(lambda) - us) + 1.0;
      g[layout_.component(c, DpgmmLayout::kKappa)] =
          -hp_.kappa_rate * kappa + lambda - kappa_over_alpha + 1.0;
      g[layout_.component(c, DpgmmLayout::kNu)] =
          (hp_.nu_shape - 1.0) - hp_.nu_rate * nu + nu * (uv - digamma(nu) + ur) + 1.0;
      g[layout_.component(c, DpgmmLayout::kV)] =
          -(hp_.v_shape + 1.0) + hp_.v_scale * inv_v + nu - v_beta + 1.0;
      g[layout_.component(c, DpgmmLayout::kShape)] =
          -(lambda + 1.0) + kappa_over_alpha + 1.0;
      g[layout_.component(c, DpgmmLayout::kRate)] = (nu - 1.0) - v_beta + 1.0;
      dig_shape[ci] = digamma(alpha);
    }
  }

  if (x_.size() == 0) {
    if (std::isfinite(lp)) return lp;
    if (grad) grad->setConstant(kNaN);
    return kNegInf;
  }

  // Likelihood: component-major so the per-point reductions are contiguous.
  thread_local Eigen::MatrixXd work;
  work.resize(k, x_.size());
  work.noalias() = shape_m1 * log_x_.transpose();
  work.noalias() -= rate * x_.transpose();
  work.colwise() += offset;
  const Eigen::RowVectorXd peak = work.colwise().maxCoeff();
  work.rowwise() -= peak;
  // Terms this far below the peak cannot change the sums; zeroing them keeps
  // exp and the products below off the subnormal range.
  work = (work.array() < -600.0).select(0.0, work.array().exp()).matrix();
  const Eigen::RowVectorXd total = work.colwise().sum();
  const double ll = (peak.array() + total.array().log()).sum();
  if (!std::isfinite(ll)) {
    if (grad) grad->setConstant(kNaN);
    return kNegInf;
  }
  lp += ll;
  if (!std::isfinite(lp)) {
    if (grad) grad->setConstant(kNaN);
    return kNegInf;
  }

  if (grad) {
    work.array().rowwise() /= total.array();
    const Eigen::VectorXd mass = work.rowwise().sum();
    const Eigen::VectorXd mass_log_x = work * log_x_;
    const Eigen::VectorXd mass_x = work * x_;
    auto& g = *grad;
    // d log pi_k / d logit V_j: (1 - V_j) for k == j, -V_j for k > j.
    double tail = mass[k - 1];
    for (std::size_t jj = kk - 1; jj-- > 0;) {
      const auto j = static_cast<Eigen::Index>(jj);
      const double v = stick_v[j];
      g[layout_.stick(jj)] += mass[j] * (1.0 - v) - v * tail;
      tail += mass[j];
    }
    for (std::size_t c = 0; c < kk; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      g[layout_.component(c, DpgmmLayout::kShape)] +=
          shape[ci] * (mass[ci] * (log_rate[ci] - dig_shape[ci]) + mass_log_x[ci]);
      g[layout_.component(c, DpgmmLayout::kRate)] += mass[ci] * shape[ci] - rate[ci] * mass_x[ci];
    }
  }
  return lp;
}

double log_posterior_unnormalized(const Eigen::VectorXd& u, std::span<const double> data,
                                  const HyperPriors& hp) {
  const auto layout = DpgmmLayout::from_dimension(static_cast<std::size_t>(u.size()));
  return DpgmmPosterior(data, layout.truncation(), hp).log_density(u);
}

Eigen::VectorXd grad_log_posterior(const Eigen::VectorXd& u, std::span<const double> data,
                                   const HyperPriors& hp) {
  const auto layout = DpgmmLayout::from_dimension(static_cast<std::size_t>(u.size()));
  Eigen::VectorXd g;
  DpgmmPosterior(data, layout.truncation(), hp).log_density_gradient(u, g);
  return g;
}

LatentState state_from_mixture(const MixtureModel& model, std::size_t truncation,
                               const HyperPriors& hp, double spare_mass) {
  if (truncation < 1) throw std::invalid_argument("truncation must be >= 1");
  if (model.k() > truncation) {
    throw std::invalid_argument("starting mixture has more components than the truncation");
  }
  if (!(spare_mass > 0.0 && spare_mass < 1.0)) {
    throw std::invalid_argument("spare mass must lie in (0, 1)");
  }
  hp.validate();
  const std::size_t used = model.k();
  const bool has_spare = used < truncation;
  const double occupied_mass = has_spare ? 1.0 - spare_mass : 1.0;

  LatentState s;
  s.concentration = 1.0;
  s.sticks.resize(truncation - 1);
  double remaining = 1.0;
  for (std::size_t j = 0; j + 1 < truncation; ++j) {
    if (j < used) {
      s.sticks[j] = std::clamp(model[j].weight * occupied_mass / remaining, 1e-9, 1.0 - 1e-9);
      remaining *= 1.0 - s.sticks[j];
    } else {
      s.sticks[j] = 1.0 - std::pow(0.5, 1.0 / s.concentration);  // Beta(1, a) median
    }
  }

  auto gamma_median = [](double shape) {
    return boost::math::quantile(boost::math::gamma_distribution<double>(shape, 1.0), 0.5);
  };
  s.components.resize(truncation);
  for (std::size_t k = 0; k < truncation; ++k) {
    DpComponent c;
    if (k < used) {
      c.shape = model[k].shape;
      c.rate = model[k].rate;
      c.lambda = 1.0;
      c.kappa = 2.0 * c.shape;  // InvGamma(1, kappa) mode kappa/2 at the shape
      c.nu = 2.0;
      c.v = 1.0 / c.rate;       // Gamma(2, v) mode 1/v at the rate
    } else {
      c.lambda = hp.lambda_scale / gamma_median(hp.lambda_shape);
      c.kappa = std::log(2.0) / hp.kappa_rate;
      c.nu = gamma_median(hp.nu_shape) / hp.nu_rate;
      c.v = hp.v_scale / gamma_median(hp.v_shape);
      c.shape = c.kappa / gamma_median(c.lambda);
      c.rate = gamma_median(c.nu) / c.v;
    }
    s.components[k] = c;
  }
  s.validate();
  return s;
}

MixtureModel mixture_from_state(const LatentState& state) {
  const auto pi = stick_break(state.sticks);
  std::vector<GammaComponent> comps;
  for (std::size_t k = 0; k < pi.size(); ++k) {
    if (pi[k] > 0.0) comps.push_back({pi[k], state.components[k].shape, state.components[k].rate});
  }
  return MixtureModel::normalized(std::move(comps));
}

}  // namespace gammamix
