#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "sda/models.hpp"
#include "sda/rng.hpp"

namespace sda {

struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::Index dim() const { return lower.size(); }
  double log_volume() const { return (upper - lower).array().log().sum(); }
  double volume() const { return std::exp(log_volume()); }
  bool contains(const Eigen::VectorXd& x) const {
    return (x.array() >= lower.array()).all() &&
           (x.array() <= upper.array()).all();
  }
};

struct IntegralEstimate {
  double value = 0.0;               // mean of replicates
  std::vector<double> replicates;   // the M per-replicate values
  std::string method;

  std::size_t M() const { return replicates.size(); }
};

// Uniform-to-draw layout shared by all estimators: replicate m reads from
// block m % U under key (key_offset + m), so single-block updates implement
// common random numbers.
inline UniformStream replicate_stream(const UniformBlockStore& u,
                                      std::size_t m,
                                      std::uint64_t key_offset = 0) {
  return u.stream(m % u.num_blocks(), key_offset + m);
}

// Plain Monte Carlo: C^(m) = vol(B) * g(z_m), z_m uniform in the box.
IntegralEstimate mc_uniform_integral(
    const std::function<double(const Eigen::VectorXd&)>& log_density,
    const Box& box, std::size_t M, const UniformBlockStore& u,
    std::uint64_t key_offset = 0);

// One SOV pass: evaluates the box probability replicate via sequential
// conditioning. `centered_*` are box bounds with the mean already subtracted;
// `sample_out`, when non-null, receives the underlying draw (in uncentered
// coordinates minus mu). Note the draw follows the sequential proposal
// distribution, not the truncated normal itself, so it must only be used
// with its importance weight (the returned replicate value).
double sov_replicate(const Eigen::MatrixXd& chol,
                     const Eigen::VectorXd& centered_lower,
                     const Eigen::VectorXd& centered_upper,
                     UniformStream& stream, Eigen::VectorXd* sample_out);

// Separation-of-variables estimator of P(lower <= X <= upper), X ~ N(mu,
// Sigma). Unbiased; replicates lie in [0, 1].
IntegralEstimate sov_truncated_normal(const GaussianDist& dist, const Box& box,
                                      std::size_t M, const UniformBlockStore& u,
                                      std::uint64_t key_offset = 0);

// Exact draw from N(mu, Sigma) truncated to the box (rejection from the
// uniform distribution on the box, envelope at the boxed density mode).
Eigen::VectorXd truncated_normal_sample(const GaussianDist& dist,
                                        const Box& box, UniformStream& stream);

// Draw from q_t proportional to g^t restricted to the box, by rejection from
// the uniform distribution on the box. The Gaussian overload computes the
// envelope from the boxed mode; the generic one requires the maximum of
// log g over the box.
Eigen::VectorXd sample_q_t_gaussian(const GaussianDist& dist, const Box& box,
                                    double t, UniformStream& stream);

inline constexpr int kRejectionCap = 2000000;

Eigen::VectorXd sample_q_t_rejection(
    const std::function<double(const Eigen::VectorXd&)>& log_density,
    double log_density_max, const Box& box, double t, UniformStream& stream);

// Conditional-integral estimator for the grouped regression model: draws
// predictors from the mixture truncated to the predictor box (rejection) and
// averages the response-interval normal CDF differences. The predictor box
// occupies box margins 1..d; margin 0 is the response interval.
struct RegressionGroupContext {
  int group = 0;
  double x2bar = 0.0;  // group mean of the second predictor
};

IntegralEstimate conditional_regression_integral(
    const HeteroRegParams& params, const NormalMixture& mixture,
    const Box& box, const RegressionGroupContext& ctx, std::size_t M,
    const UniformBlockStore& u, std::uint64_t key_offset = 0);

// Predictor draw used by the estimator above, exposed for caching.
Eigen::VectorXd truncated_mixture_draw(const NormalMixture& mixture,
                                       const Eigen::VectorXd& lower,
                                       const Eigen::VectorXd& upper,
                                       UniformStream& stream);

}  // namespace sda
