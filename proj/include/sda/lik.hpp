#pragma once

#include <functional>
#include <limits>
#include <string>

#include "sda/loglik.hpp"
#include "sda/symbols.hpp"

namespace sda {

// A likelihood estimate kept in log space with an explicit sign.
struct SignedLogLik {
  double log_abs = -std::numeric_limits<double>::infinity();
  int sign = +1;
  std::string method;

  bool finite() const { return std::isfinite(log_abs); }

  SignedLogLik& accumulate(const SignedLogLik& other) {
    log_abs += other.log_abs;
    sign *= other.sign;
    return *this;
  }
  SignedLogLik& add_log(double log_term) {
    log_abs += log_term;
    return *this;
  }
};

enum class BoundMode { generic, marginal_cdf };

struct PoissonConfig {
  double lambda = 3.0;
  double gamma = 0.97;
  BoundMode bound_mode = BoundMode::generic;
};

// Poisson(lambda) draw by inversion on a single uniform.
int poisson_draw(double lambda, double unif);

// Diagnostic: number of Poisson-estimator factors observed below the soft
// lower bound (each flips the estimate's sign).
std::size_t poisson_below_bound_count();
void reset_poisson_below_bound_count();

// Unbiased estimator of exp(A) from independent unbiased estimates of A:
// exp(a + lambda) * prod_{h=1..chi} (A_hat^(h) - a) / lambda. The replicate
// source is handed the replicate index h for deterministic stream keying.
SignedLogLik poisson_estimator(
    const std::function<double(std::size_t)>& replicate_source,
    const PoissonConfig& config, double a, UniformStream& chi_stream);

// Soft lower bound a = A_P^* - lambda. Generic mode uses
// A_P^* = n_r * gamma^d * d * log(1 - 2q); marginal_cdf mode uses the product
// of Gaussian marginal box probabilities instead of (1-2q)^d.
double soft_lower_bound_generic(long exponent_count, int d, double q,
                                const PoissonConfig& config);
double soft_lower_bound_marginal_cdf(long exponent_count,
                                     const GaussianDist& dist, const Box& box,
                                     const PoissonConfig& config);

// exp(A_T - s(A_T)/2); always sign-positive.
SignedLogLik bias_corrected_exp(const LogLikEstimate& est);

enum class EstimatorChoice { exact_path_poisson, approximate_taylor };

struct SymbolicLikConfig {
  EstimatorChoice estimator = EstimatorChoice::approximate_taylor;
  std::size_t M = 2000;               // integral replicates (Taylor)
  TemperatureLadder ladder;           // exact method
  std::size_t path_M = 2000;          // draws per temperature (exact method)
  PoissonConfig poisson;
  PathBlocking blocking = PathBlocking::temperature;
};

// Log |L_{B_1}| for one rectangle under a Gaussian micro-data model: the
// estimated box term plus exact boundary and external log-density terms.
SignedLogLik symbolic_loglik(const RectangleSymbol& symbol,
                             const GaussianDist& dist,
                             const SymbolicLikConfig& config,
                             const UniformBlockStore& u,
                             std::uint64_t key_offset = 0);

}  // namespace sda
