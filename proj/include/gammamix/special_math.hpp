#pragma once

// Special functions and log-densities used throughout the library.
// All densities are log-space only. Invalid parameters raise
// std::domain_error; points outside a support return -inf.

#include <limits>
#include <stdexcept>

namespace gammamix {

/// Strictly positive, finite real. Construction validates.
class PositiveReal {
 public:
  explicit PositiveReal(double value);
  [[nodiscard]] double value() const noexcept { return value_; }
  operator double() const noexcept { return value_; }

 private:
  double value_;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// ln Gamma(x) for finite x > 0.
double log_gamma(double x);

/// psi(x) = d/dx ln Gamma(x) for finite x > 0.
double digamma(double x);

/// psi'(x) for finite x > 0. Used by the weighted Gamma MLE.
double trigamma(double x);

/// psi''(x) for finite x > 0.
double tetragamma(double x);

/// Gamma log-density in shape-rate form:
///   shape*ln(rate) - lnGamma(shape) + (shape-1)*ln(x) - rate*x.
/// At x == 0: -inf for shape > 1, ln(rate) for shape == 1, and a domain
/// error for shape < 1 where the density is unbounded.
double gamma_log_pdf(double x, double shape, double rate);

/// Inverse-Gamma log-density with shape and scale:
///   shape*ln(scale) - lnGamma(shape) - (shape+1)*ln(x) - scale/x.
double log_pdf_inverse_gamma(double x, double shape, double scale);

/// Exponential log-density ln(rate) - rate*x on [0, inf).
double log_pdf_exponential(double x, double rate);

/// Beta(a, b) log-density on [0, 1].
double log_pdf_beta(double x, double a, double b);

/// ln(1 + exp(x)) without overflow.
double softplus(double x);

}  // namespace gammamix
