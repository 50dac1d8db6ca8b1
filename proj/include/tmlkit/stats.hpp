#pragma once

// Student-t confidence intervals for small samples. The t quantile comes
// from inverting the regularized incomplete beta function (continued
// fraction, modified Lentz) by bisection.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tml {
namespace detail {

// Continued-fraction core of the regularized incomplete beta function,
// valid for x < (a+1)/(a+2).
inline double beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-15;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double reg_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0))
    throw std::invalid_argument("incomplete beta: parameters must be positive");
  if (x < 0.0 || x > 1.0)
    throw std::invalid_argument("incomplete beta: x outside [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  double front = std::exp(std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0))
    return front * detail::beta_cf(a, b, x) / a;
  return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

// CDF of Student's t with nu degrees of freedom.
inline double student_t_cdf(double t, double nu) {
  if (!(nu > 0.0))
    throw std::invalid_argument("student t: degrees of freedom must be positive");
  double x = nu / (nu + t * t);
  double tail = 0.5 * reg_incomplete_beta(nu / 2.0, 0.5, x);
  return t >= 0.0 ? 1.0 - tail : tail;
}

// Quantile (inverse CDF) by bisection on the monotone CDF.
inline double student_t_quantile(double p, double nu) {
  if (!(p > 0.0) || !(p < 1.0))
    throw std::invalid_argument("student t quantile: p outside (0,1)");
  if (p == 0.5) return 0.0;
  if (p < 0.5) return -student_t_quantile(1.0 - p, nu);
  double lo = 0.0, hi = 1.0;
  while (student_t_cdf(hi, nu) < p) {
    hi *= 2.0;
    if (hi > 1e12)
      throw std::runtime_error("student t quantile: bracket expansion failed");
  }
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if (student_t_cdf(mid, nu) < p) lo = mid;
    else hi = mid;
    if (hi - lo <= 1e-14 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

struct CiSummary {
  double mean = 0.0;
  double half_width = 0.0;
  int64_t n = 0;
};

// mean +- t(0.975, n-1) * s / sqrt(n), sample standard deviation.
inline CiSummary aggregate_ci(const std::vector<double>& values,
                              double confidence = 0.95) {
  if (values.size() < 2)
    throw std::invalid_argument("aggregate_ci: need at least 2 values, got " +
                                std::to_string(values.size()));
  int64_t n = static_cast<int64_t>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  double sd = std::sqrt(ss / static_cast<double>(n - 1));
  double t = student_t_quantile(0.5 + confidence / 2.0,
                                static_cast<double>(n - 1));
  return {mean, t * sd / std::sqrt(static_cast<double>(n)), n};
}

}  // namespace tml
