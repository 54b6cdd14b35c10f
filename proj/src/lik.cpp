#include "sda/lik.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

#include "sda/stats.hpp"

namespace sda {

int poisson_draw(double lambda, double unif) {
  if (!(lambda > 0.0)) throw std::invalid_argument("poisson_draw: lambda <= 0");
  double p = std::exp(-lambda);
  double cum = p;
  int k = 0;
  while (unif > cum && k < 10000) {
    ++k;
    p *= lambda / k;
    cum += p;
  }
  return k;
}

namespace {
std::atomic<std::size_t> g_below_bound{0};
}

std::size_t poisson_below_bound_count() { return g_below_bound.load(); }
void reset_poisson_below_bound_count() { g_below_bound.store(0); }

SignedLogLik poisson_estimator(
    const std::function<double(std::size_t)>& replicate_source,
    const PoissonConfig& config, double a, UniformStream& chi_stream) {
  if (!(config.lambda > 0.0))
    throw std::invalid_argument("poisson_estimator: lambda <= 0");
  if (!std::isfinite(a))
    throw std::invalid_argument("poisson_estimator: a not finite");
  const int chi = poisson_draw(config.lambda, chi_stream.next());

  SignedLogLik out;
  out.method = "poisson";
  out.log_abs = a + config.lambda;
  out.sign = +1;
  for (int h = 0; h < chi; ++h) {
    double factor = (replicate_source(static_cast<std::size_t>(h)) - a) /
                    config.lambda;
    if (factor == 0.0) {
      // Exact zero: sentinel that forces proposal rejection downstream.
      out.sign = +1;
      out.log_abs = -std::numeric_limits<double>::infinity();
      return out;
    }
    if (factor < 0.0) {
      out.sign = -out.sign;
      ++g_below_bound;
    }
    out.log_abs += std::log(std::abs(factor));
  }
  return out;
}

double soft_lower_bound_generic(long exponent_count, int d, double q,
                                const PoissonConfig& config) {
  if (!(q >= 0.0 && q < 0.5))
    throw std::invalid_argument("soft_lower_bound: q outside [0, 0.5)");
  double a_star = static_cast<double>(exponent_count) *
                  std::pow(config.gamma, d) * d * std::log1p(-2.0 * q);
  return a_star - config.lambda;
}

double soft_lower_bound_marginal_cdf(long exponent_count,
                                     const GaussianDist& dist, const Box& box,
                                     const PoissonConfig& config) {
  const int d = static_cast<int>(dist.dim());
  // Marginal variances from the Cholesky factor rows.
  double sum = 0.0;
  for (int i = 0; i < d; ++i) {
    double sd = dist.chol.row(i).norm();
    double p = normal_cdf((box.upper[i] - dist.mu[i]) / sd) -
               normal_cdf((box.lower[i] - dist.mu[i]) / sd);
    sum += std::log(std::max(p, 1e-300));
  }
  double a_star =
      static_cast<double>(exponent_count) * std::pow(config.gamma, d) * sum;
  return a_star - config.lambda;
}

SignedLogLik bias_corrected_exp(const LogLikEstimate& est) {
  if (est.method != "taylor")
    throw std::invalid_argument("bias_corrected_exp: needs a taylor estimate");
  if (!std::isfinite(est.variance))
    throw std::invalid_argument("bias_corrected_exp: non-finite variance");
  SignedLogLik out;
  out.method = "bias_corrected";
  out.sign = +1;
  out.log_abs = est.value - 0.5 * est.variance;
  return out;
}

SignedLogLik symbolic_loglik(const RectangleSymbol& symbol,
                             const GaussianDist& dist,
                             const SymbolicLikConfig& config,
                             const UniformBlockStore& u,
                             std::uint64_t key_offset) {
  if (symbol.dim() != dist.dim())
    throw std::invalid_argument("symbolic_loglik: dimension mismatch");
  Box box{symbol.lower, symbol.upper};
  const long exponent = symbol.n_r();

  SignedLogLik out;
  out.sign = +1;
  out.log_abs = 0.0;

  if (exponent > 0) {
    if (config.estimator == EstimatorChoice::approximate_taylor) {
      IntegralEstimate c =
          sov_truncated_normal(dist, box, config.M, u, key_offset);
      out.accumulate(
          bias_corrected_exp(taylor_log_integral(c, exponent)));
      out.method = "taylor";
    } else {
      double a;
      if (config.poisson.bound_mode == BoundMode::marginal_cdf)
        a = soft_lower_bound_marginal_cdf(exponent, dist, box, config.poisson);
      else
        a = soft_lower_bound_generic(exponent, static_cast<int>(dist.dim()),
                                     symbol.q, config.poisson);
      auto replicate = [&](std::size_t h) {
        return path_sampler_log_integral(
                   dist, box, config.ladder, config.path_M, exponent, u,
                   config.blocking,
                   key_offset + (h + 1) * 0x10000000ULL)
            .value;
      };
      UniformStream chi = u.stream(0, key_offset + 0xC41ULL);
      out.accumulate(poisson_estimator(replicate, config.poisson, a, chi));
      out.method = "poisson";
    }
  } else {
    out.method = "empty_box_term";
  }

  double micro = dist.log_density_rows(symbol.boundary_points) +
                 dist.log_density_rows(symbol.external_points);
  if (!std::isfinite(micro))
    throw std::runtime_error("symbolic_loglik: non-finite micro-data density");
  out.add_log(micro);
  return out;
}

}  // namespace sda
