#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sda {

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_log_pdf(double x) { return -0.5 * (kLogTwoPi + x * x); }

// Phi(x), full relative precision in the left tail via erfc.
inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0);
}

// Inverse standard normal CDF (Acklam's rational approximation with one
// Halley refinement step; accurate to ~1e-15 over (0,1)).
double normal_quantile(double p);

struct TruncatedDraw {
  double prob;   // Phi(upper) - Phi(lower)
  double value;  // exact draw from the truncated standard normal
};

// Inverse-CDF draw from a standard normal truncated to [lower, upper],
// driven by one uniform. Reflected into the left tail for stability.
TruncatedDraw truncated_std_normal(double lower, double upper, double unif);

// Trapezoid rule over (t, value) points with strictly increasing t. The
// interval [0, t_1] is covered by extending the first value flat.
double trapezoid_integrate(std::span<const double> t,
                           std::span<const double> value);

inline double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double sample_variance(std::span<const double> x) {
  if (x.size() < 2) throw std::invalid_argument("sample_variance: need >= 2");
  double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double sample_sd(std::span<const double> x) {
  return std::sqrt(sample_variance(x));
}

// Pearson correlation of consecutive pairs is used in CRN diagnostics.
double correlation(std::span<const double> x, std::span<const double> y);

// Box probability of a bivariate normal via quadrature on the conditional
// decomposition. Exact up to quadrature error (~1e-12); used where an exact
// bivariate likelihood is required.
double bvn_box_prob(double mu1, double mu2, double s1, double s2, double rho,
                    double l1, double u1, double l2, double u2);

// Effective sample size via Geyer's initial positive sequence.
double effective_sample_size(std::span<const double> chain);

}  // namespace sda
