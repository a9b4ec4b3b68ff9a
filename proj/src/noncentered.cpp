#include "gammamix/noncentered.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "gammamix/special_math.hpp"

namespace gammamix {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Hyperparameters outside this range carry no posterior mass worth the
// overflow risk in the polygamma functions.
constexpr double kMinHyper = 1e-100;
constexpr double kMaxHyper = 1e100;

bool in_range(double x) { return x >= kMinHyper && x <= kMaxHyper; }

// Smooth map z -> y = log G for G ~ Gamma(s, 1):
//   y = log s + r z - (l - r) softplus(-z),  l = sqrt(psi'(s)),  r = l / sqrt(1 + l^2).
// The left tail of log G has width l and the right edge width r, so z is of
// order one for every shape. Derivatives are with respect to z and log s.
struct ShapeMap {
  double y;
  double dy_dz;
  double dy_ds;
  double log_jac;  // log dy/dz
  double dlj_dz;
  double dlj_ds;
};

ShapeMap shape_map(double log_s, double z) {
  const double s = std::exp(log_s);
  const double tri = trigamma(s);
  const double l = std::sqrt(tri);
  const double dl = s * tetragamma(s) / (2.0 * l);
  const double q = std::sqrt(1.0 + tri);
  const double r = l / q;
  const double dr = dl / (q * q * q);
  const double sp = softplus(-z);
  const double sig = std::exp(-sp);       // logistic(z)
  const double sig_neg = std::exp(-softplus(z));  // logistic(-z)
  ShapeMap m;
  m.y = log_s + r * z - (l - r) * sp;
  m.dy_dz = r + (l - r) * sig_neg;
  m.dy_ds = 1.0 + dr * z - (dl - dr) * sp;
  m.log_jac = std::log(m.dy_dz);
  m.dlj_dz = -(l - r) * sig_neg * sig / m.dy_dz;
  m.dlj_ds = (dr + (dl - dr) * sig_neg) / m.dy_dz;
  return m;
}

// Inverse of shape_map in z, by Newton iteration on the monotone map.
double shape_map_inverse(double log_s, double y) {
  double z = 0.0;
  for (int it = 0; it < 200; ++it) {
    const ShapeMap m = shape_map(log_s, z);
    const double step = (m.y - y) / m.dy_dz;
    // The map is convex for z < 0; damp large steps for safety.
    z -= std::clamp(step, -10.0, 10.0);
    if (std::abs(step) < 1e-13 * std::max(1.0, std::abs(z))) break;
  }
  return z;
}

// log(1 - exp(-t)) for t > 0.
double log1mexp(double t) {
  return t < 0.6931471805599453 ? std::log(-std::expm1(-t)) : std::log1p(-std::exp(-t));
}

}  // namespace

NoncenteredDpgmm::NoncenteredDpgmm(const DpgmmPosterior& posterior, std::size_t occupied)
    : posterior_(posterior), layout_(DpgmmLayout::from_dimension(posterior.dimension())),
      occupied_(occupied) {
  if (occupied_ < 1 || occupied_ > layout_.truncation()) {
    throw std::invalid_argument("occupied component count must lie in [1, truncation]");
  }
}

Eigen::VectorXd NoncenteredDpgmm::to_model(const Eigen::VectorXd& w) const {
  if (static_cast<std::size_t>(w.size()) != layout_.dimension()) {
    throw std::invalid_argument("sampling state has the wrong dimension");
  }
  Eigen::VectorXd u = w;
  const double ua = w[DpgmmLayout::concentration()];
  for (std::size_t j = occupied_; j + 1 < layout_.truncation(); ++j) {
    const double t = std::exp(w[layout_.stick(j)] - ua);
    u[layout_.stick(j)] = log1mexp(t) + t;
  }
  for (std::size_t c = occupied_; c < layout_.truncation(); ++c) {
    const auto lam = shape_map(w[layout_.component(c, DpgmmLayout::kLambda)],
                               w[layout_.component(c, DpgmmLayout::kShape)]);
    const auto nu = shape_map(w[layout_.component(c, DpgmmLayout::kNu)],
                              w[layout_.component(c, DpgmmLayout::kRate)]);
    u[layout_.component(c, DpgmmLayout::kShape)] =
        w[layout_.component(c, DpgmmLayout::kKappa)] - lam.y;
    u[layout_.component(c, DpgmmLayout::kRate)] = nu.y - w[layout_.component(c, DpgmmLayout::kV)];
  }
  return u;
}

Eigen::VectorXd NoncenteredDpgmm::from_model(const Eigen::VectorXd& u) const {
  if (static_cast<std::size_t>(u.size()) != layout_.dimension()) {
    throw std::invalid_argument("unconstrained state has the wrong dimension");
  }
  Eigen::VectorXd w = u;
  const double ua = u[DpgmmLayout::concentration()];
  for (std::size_t j = occupied_; j + 1 < layout_.truncation(); ++j) {
    const double x = u[layout_.stick(j)];
    // -log(1 - V) = softplus(x); its log is x when softplus underflows.
    w[layout_.stick(j)] = ua + (x < -30.0 ? x + std::log1p(-0.5 * std::exp(x)) : std::log(softplus(x)));
  }
  for (std::size_t c = occupied_; c < layout_.truncation(); ++c) {
    w[layout_.component(c, DpgmmLayout::kShape)] = shape_map_inverse(
        u[layout_.component(c, DpgmmLayout::kLambda)],
        u[layout_.component(c, DpgmmLayout::kKappa)] - u[layout_.component(c, DpgmmLayout::kShape)]);
    w[layout_.component(c, DpgmmLayout::kRate)] = shape_map_inverse(
        u[layout_.component(c, DpgmmLayout::kNu)],
        u[layout_.component(c, DpgmmLayout::kRate)] + u[layout_.component(c, DpgmmLayout::kV)]);
  }
  return w;
}

double NoncenteredDpgmm::log_density(const Eigen::VectorXd& w) const {
  return evaluate(w, nullptr);
}

double NoncenteredDpgmm::log_density_gradient(const Eigen::VectorXd& w,
                                              Eigen::VectorXd& grad) const {
  return evaluate(w, &grad);
}

double NoncenteredDpgmm::evaluate(const Eigen::VectorXd& w, Eigen::VectorXd* grad) const {
  if (static_cast<std::size_t>(w.size()) != layout_.dimension()) {
    throw std::invalid_argument("sampling state has the wrong dimension");
  }
  auto reject = [&] {
    if (grad) grad->setConstant(w.size(), kNaN);
    return kNegInf;
  };
  if (!w.allFinite()) return reject();

  const std::size_t kk = layout_.truncation();
  const double ua = w[DpgmmLayout::concentration()];
  Eigen::VectorXd u = w;
  double log_jac = 0.0;

  // Per-stick: du/dy = r; d log r / dy = h. The concentration receives the negatives.
  Eigen::VectorXd stick_r(static_cast<Eigen::Index>(kk)), stick_h(static_cast<Eigen::Index>(kk));
  for (std::size_t j = occupied_; j + 1 < kk; ++j) {
    const double t = std::exp(w[layout_.stick(j)] - ua);
    if (!(t > 0.0) || !std::isfinite(t)) return reject();
    const double l1m = log1mexp(t);
    u[layout_.stick(j)] = l1m + t;
    const auto jj = static_cast<Eigen::Index>(j);
    stick_r[jj] = t * std::exp(-l1m);
    stick_h[jj] = 1.0 - t / std::expm1(t);
    log_jac += std::log(t) - l1m;
  }

  std::vector<ShapeMap> lam_m, nu_m;
  lam_m.reserve(kk - occupied_);
  nu_m.reserve(kk - occupied_);
  for (std::size_t c = occupied_; c < kk; ++c) {
    const double ul = w[layout_.component(c, DpgmmLayout::kLambda)];
    const double un = w[layout_.component(c, DpgmmLayout::kNu)];
    if (!in_range(std::exp(ul)) || !in_range(std::exp(un))) return reject();
    lam_m.push_back(shape_map(ul, w[layout_.component(c, DpgmmLayout::kShape)]));
    nu_m.push_back(shape_map(un, w[layout_.component(c, DpgmmLayout::kRate)]));
    u[layout_.component(c, DpgmmLayout::kShape)] =
        w[layout_.component(c, DpgmmLayout::kKappa)] - lam_m.back().y;
    u[layout_.component(c, DpgmmLayout::kRate)] =
        nu_m.back().y - w[layout_.component(c, DpgmmLayout::kV)];
    log_jac += lam_m.back().log_jac + nu_m.back().log_jac;
  }

  if (!grad) {
    const double lp = posterior_.log_density(u);
    return std::isfinite(lp) ? lp + log_jac : kNegInf;
  }

  Eigen::VectorXd gu;
  const double lp = posterior_.log_density_gradient(u, gu);
  if (!std::isfinite(lp) || !gu.allFinite()) return reject();

  Eigen::VectorXd& g = *grad;
  g = gu;
  for (std::size_t j = occupied_; j + 1 < kk; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double d = gu[layout_.stick(j)] * stick_r[jj] + stick_h[jj];
    g[layout_.stick(j)] = d;
    g[DpgmmLayout::concentration()] -= d;
  }
  for (std::size_t c = occupied_; c < kk; ++c) {
    const auto& lm = lam_m[c - occupied_];
    const auto& nm = nu_m[c - occupied_];
    const double g_shape = gu[layout_.component(c, DpgmmLayout::kShape)];
    const double g_rate = gu[layout_.component(c, DpgmmLayout::kRate)];
    g[layout_.component(c, DpgmmLayout::kShape)] = -g_shape * lm.dy_dz + lm.dlj_dz;
    g[layout_.component(c, DpgmmLayout::kKappa)] += g_shape;
    g[layout_.component(c, DpgmmLayout::kLambda)] += -g_shape * lm.dy_ds + lm.dlj_ds;
    g[layout_.component(c, DpgmmLayout::kRate)] = g_rate * nm.dy_dz + nm.dlj_dz;
    g[layout_.component(c, DpgmmLayout::kV)] -= g_rate;
    g[layout_.component(c, DpgmmLayout::kNu)] += g_rate * nm.dy_ds + nm.dlj_ds;
  }
  return lp + log_jac;
}

}  // namespace gammamix
