#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "qsc/common.hpp"

namespace qsc {

// Half-scaled Gaussian integral phi(u) = (1/sqrt(pi)) * int_0^u exp(-t^2) dt
// = erf(u)/2.  This is the CDF convention used by the quantized-likelihood
// expressions: a real observation N(s, sigma^2/2) lands below t with
// probability 1/2 + phi((t-s)/sigma).
inline double phi(double u) { return 0.5 * std::erf(u); }

// Scaled complementary error function exp(x^2) erfc(x), x >= 0.
inline double erfcx(double x) {
  if (x < 26.0) return std::exp(x * x) * std::erfc(x);
  // Asymptotic tail; relative error < 1e-14 for x >= 26.
  const double u = 1.0 / (2.0 * x * x);
  const double s =
      1.0 - u * (1.0 - 3.0 * u * (1.0 - 5.0 * u * (1.0 - 7.0 * u * (1.0 - 9.0 * u))));
  return s / (x * kSqrtPi);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(kTwoPi);
}

// Inverse standard normal CDF: Acklam's rational approximation polished with
// one Halley step, giving ~1e-15 relative accuracy on (0,1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("normal_quantile: p must lie in (0,1)");
  }
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(kTwoPi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

// E[X | a <= X < b] for X ~ N(0, sd^2); a and b may be infinite.
inline double truncated_normal_mean(double a, double b, double sd) {
  if (!(sd > 0.0)) throw std::domain_error("truncated_normal_mean: sd must be positive");
  if (!(a < b)) throw std::domain_error("truncated_normal_mean: need a < b");
  const double za = a / sd;
  const double zb = b / sd;
  const double pa = std::isinf(za) ? 0.0 : normal_pdf(za);
  const double pb = std::isinf(zb) ? 0.0 : normal_pdf(zb);
  double mass;
  if (za >= 0.0) {
    mass = 0.5 * (std::erfc(za * kInvSqrt2) -
                  (std::isinf(zb) ? 0.0 : std::erfc(zb * kInvSqrt2)));
  } else if (zb <= 0.0) {
    mass = 0.5 * (std::erfc(-zb * kInvSqrt2) -
                  (std::isinf(za) ? 0.0 : std::erfc(-za * kInvSqrt2)));
  } else {
    mass = normal_cdf(zb) - normal_cdf(za);
  }
  if (mass <= 0.0) {
    throw std::domain_error("truncated_normal_mean: interval mass underflows");
  }
  return sd * (pa - pb) / mass;
}

// phi(b) - phi(a) for a <= b, evaluated without tail cancellation.
inline double interval_probability(double a, double b) {
  if (a >= 0.0) {
    return 0.5 * ((std::isinf(a) ? 0.0 : std::erfc(a)) -
                  (std::isinf(b) ? 0.0 : std::erfc(b)));
  }
  if (b <= 0.0) {
    return 0.5 * ((std::isinf(b) ? 0.0 : std::erfc(-b)) -
                  (std::isinf(a) ? 0.0 : std::erfc(-a)));
  }
  return phi(b) - phi(a);
}

}  // namespace qsc
