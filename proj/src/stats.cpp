#include "sda/stats.hpp"

#include <array>
#include <limits>

namespace sda {

namespace {

// Acklam's coefficients for the inverse normal CDF.
constexpr std::array<double, 6> kA = {
    -3.969683028665376e+01, 2.209460984245205e+02,  -2.759285104469687e+02,
    1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
constexpr std::array<double, 5> kB = {
    -5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
    6.680131188771972e+01, -1.328068155288572e+01};
constexpr std::array<double, 6> kC = {
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
    -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
constexpr std::array<double, 4> kD = {7.784695709041462e-03,
                                      3.224671290700398e-01,
                                      2.445134137142996e+00,
                                      3.754408661907416e+00};

double acklam(double p) {
  constexpr double p_low = 0.02425;
  double q, x;
  if (p < p_low) {
    q = std::sqrt(-2.0 * std::log(p));
    x = (((((kC[0] * q + kC[1]) * q + kC[2]) * q + kC[3]) * q + kC[4]) * q +
         kC[5]) /
        ((((kD[0] * q + kD[1]) * q + kD[2]) * q + kD[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    q = p - 0.5;
    double r = q * q;
    x = (((((kA[0] * r + kA[1]) * r + kA[2]) * r + kA[3]) * r + kA[4]) * r +
         kA[5]) *
        q /
        (((((kB[0] * r + kB[1]) * r + kB[2]) * r + kB[3]) * r + kB[4]) * r +
         1.0);
  } else {
    q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((kC[0] * q + kC[1]) * q + kC[2]) * q + kC[3]) * q + kC[4]) * q +
          kC[5]) /
        ((((kD[0] * q + kD[1]) * q + kD[2]) * q + kD[3]) * q + 1.0);
  }
  return x;
}

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  double x = acklam(p);
  // One Halley refinement step against the erfc-based CDF.
  double e = normal_cdf(x) - p;
  double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

TruncatedDraw truncated_std_normal(double lower, double upper, double unif) {
  if (!(upper > lower)) return {0.0, 0.5 * (lower + upper)};
  if (lower + upper > 0.0) {
    TruncatedDraw r = truncated_std_normal(-upper, -lower, 1.0 - unif);
    return {r.prob, -r.value};
  }
  double pl = normal_cdf(lower);
  double pu = normal_cdf(upper);
  double prob = pu - pl;
  if (!(prob > 0.0)) return {0.0, lower};
  double p = pl + unif * prob;
  p = std::clamp(p, std::numeric_limits<double>::min(),
                 1.0 - std::numeric_limits<double>::epsilon());
  double y = std::clamp(normal_quantile(p), lower, upper);
  return {prob, y};
}

double trapezoid_integrate(std::span<const double> t,
                           std::span<const double> value) {
  if (t.size() != value.size() || t.size() < 2)
    throw std::invalid_argument("trapezoid_integrate: need >= 2 points");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1]))
      throw std::invalid_argument(
          "trapezoid_integrate: abscissae must be strictly increasing");
  if (t.front() < 0.0)
    throw std::invalid_argument("trapezoid_integrate: negative abscissa");
  double total = t.front() * value.front();  // flat extension over [0, t_1]
  for (std::size_t i = 1; i < t.size(); ++i)
    total += 0.5 * (value[i] + value[i - 1]) * (t[i] - t[i - 1]);
  return total;
}

double correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("correlation: size mismatch");
  double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

double bvn_box_prob(double mu1, double mu2, double s1, double s2, double rho,
                    double l1, double u1, double l2, double u2) {
  if (!(s1 > 0.0 && s2 > 0.0) || !(std::abs(rho) < 1.0))
    throw std::invalid_argument("bvn_box_prob: invalid parameters");
  // Standardize; integrate the conditional probability over margin 1.
  double a = (l1 - mu1) / s1, b = (u1 - mu1) / s1;
  double c = (l2 - mu2) / s2, d = (u2 - mu2) / s2;
  double sc = std::sqrt(1.0 - rho * rho);

  // 16-point Gauss-Legendre nodes/weights on [-1, 1].
  static constexpr std::array<double, 8> gx = {
      0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
      0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
      0.9445750230732326, 0.9894009349916499};
  static constexpr std::array<double, 8> gw = {
      0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
      0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
      0.0622535239386479, 0.0271524594117541};

  const int panels = 48;
  double total = 0.0;
  double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    double mid = a + (p + 0.5) * h;
    double half = 0.5 * h;
    for (int k = 0; k < 8; ++k) {
      for (int sgn = -1; sgn <= 1; sgn += 2) {
        double x = mid + sgn * half * gx[k];
        double cd = (normal_cdf((d - rho * x) / sc) -
                     normal_cdf((c - rho * x) / sc));
        total += gw[k] * half * normal_pdf(x) * cd;
      }
    }
  }
  return total;
}

double effective_sample_size(std::span<const double> chain) {
  const std::size_t n = chain.size();
  if (n < 4) return static_cast<double>(n);
  double m = mean(chain);
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = chain[i] - m;
  double c0 = 0.0;
  for (double v : centered) c0 += v * v;
  c0 /= static_cast<double>(n);
  if (c0 <= 0.0) return static_cast<double>(n);

  auto acov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += centered[i] * centered[i + lag];
    return s / static_cast<double>(n);
  };

  double sum = 0.0;
  for (std::size_t lag = 1; lag + 1 < n; lag += 2) {
    double pair = acov(lag) + acov(lag + 1);
    if (pair <= 0.0) break;
    sum += pair;
  }
  double tau = 1.0 + 2.0 * sum / c0;
  return static_cast<double>(n) / std::max(tau, 1.0);
}

}  // namespace sda
