#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sda/integral.hpp"

namespace sda {

// t_i = (i/T)^exponent, i = 1..T; strictly increasing with t_T = 1.
struct TemperatureLadder {
  int T = 100;
  double exponent = 5.0;

  std::vector<double> values() const {
    std::vector<double> t(static_cast<std::size_t>(T));
    for (int i = 1; i <= T; ++i)
      t[i - 1] = std::pow(static_cast<double>(i) / T, exponent);
    return t;
  }
};

struct LogLikEstimate {
  double value = 0.0;     // estimate of A = exponent_count * log C
  double variance = 0.0;  // sample-based variance of the estimate
  std::string method;     // "path" | "taylor"
  long exponent_count = 0;
};

// Blocking granularity for the path sampler's uniforms.
enum class PathBlocking { temperature, particle };

// Path sampler (thermodynamic integration over the temperature ladder) for
// A = exponent_count * log \int_B g(z) dz with Gaussian g.
LogLikEstimate path_sampler_log_integral(
    const GaussianDist& dist, const Box& box, const TemperatureLadder& ladder,
    std::size_t M, long exponent_count, const UniformBlockStore& u,
    PathBlocking blocking = PathBlocking::temperature,
    std::uint64_t key_offset = 0);

// Generic path sampler over a caller-supplied q_t sampler. The sampler is
// handed (t, stream) and must return a draw from q_t on the box.
LogLikEstimate path_sampler_log_integral_generic(
    const std::function<double(const Eigen::VectorXd&)>& log_density,
    const std::function<Eigen::VectorXd(double, UniformStream&)>& sampler,
    const Box& box, const TemperatureLadder& ladder, std::size_t M,
    long exponent_count, const UniformBlockStore& u,
    PathBlocking blocking = PathBlocking::temperature,
    std::uint64_t key_offset = 0);

// Taylor estimator of A from unbiased replicates of C (Eq.-level contract:
// mean log replicate plus half the relative-variance correction, scaled by
// the exponent). Requires all replicates positive and M >= 2.
LogLikEstimate taylor_log_integral(const IntegralEstimate& estimate,
                                   long exponent_count);

}  // namespace sda
