#include "gammamix/special_math.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/polygamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <cmath>
#include <string>

namespace gammamix {

namespace {

void require_positive(double v, const char* what) {
  if (!std::isfinite(v) || !(v > 0.0)) {
    throw std::domain_error(std::string(what) + " must be finite and > 0, got " +
                            std::to_string(v));
  }
}

}  // namespace

PositiveReal::PositiveReal(double value) : value_(value) {
  require_positive(value, "PositiveReal");
}

double log_gamma(double x) {
  require_positive(x, "log_gamma argument");
  return boost::math::lgamma(x);
}

double digamma(double x) {
  require_positive(x, "digamma argument");
  return boost::math::digamma(x);
}

double trigamma(double x) {
  require_positive(x, "trigamma argument");
  return boost::math::trigamma(x);
}

double tetragamma(double x) {
  require_positive(x, "tetragamma argument");
  return boost::math::polygamma(2, x);
}

double gamma_log_pdf(double x, double shape, double rate) {
  require_positive(shape, "gamma shape");
  require_positive(rate, "gamma rate");
  if (std::isnan(x) || x < 0.0) {
    throw std::domain_error("gamma_log_pdf: x must be >= 0");
  }
  if (x == 0.0) {
    if (shape > 1.0) return kNegInf;
    if (shape == 1.0) return std::log(rate);
    throw std::domain_error("gamma_log_pdf: density diverges at x = 0 for shape < 1");
  }
  return shape * std::log(rate) - boost::math::lgamma(shape) +
         (shape - 1.0) * std::log(x) - rate * x;
}

double log_pdf_inverse_gamma(double x, double shape, double scale) {
  require_positive(shape, "inverse-gamma shape");
  require_positive(scale, "inverse-gamma scale");
  if (std::isnan(x) || !(x > 0.0)) return kNegInf;
  if (std::isinf(x)) return kNegInf;
  return shape * std::log(scale) - boost::math::lgamma(shape) -
         (shape + 1.0) * std::log(x) - scale / x;
}

double log_pdf_exponential(double x, double rate) {
  require_positive(rate, "exponential rate");
  if (std::isnan(x) || x < 0.0 || std::isinf(x)) return kNegInf;
  return std::log(rate) - rate * x;
}

double log_pdf_beta(double x, double a, double b) {
  require_positive(a, "beta a");
  require_positive(b, "beta b");
  if (std::isnan(x) || x < 0.0 || x > 1.0) return kNegInf;
  const double norm =
      boost::math::lgamma(a + b) - boost::math::lgamma(a) - boost::math::lgamma(b);
  // Boundary points: the factor with a zero exponent contributes nothing.
  auto term = [](double exponent, double base) {
    if (exponent == 0.0) return 0.0;
    if (base == 0.0) {
      return exponent > 0.0 ? kNegInf : std::numeric_limits<double>::infinity();
    }
    return exponent * std::log(base);
  };
  return norm + term(a - 1.0, x) + term(b - 1.0, 1.0 - x);
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

}  // namespace gammamix
