#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "sda/lik.hpp"
#include "sda/rng.hpp"

namespace sda {

// Adaptive Gaussian random-walk proposal: running covariance recursion plus
// Robbins-Monro scaling toward a target acceptance rate.
class AdaptiveProposal {
 public:
  explicit AdaptiveProposal(Eigen::Index dim, double target_accept = 0.234,
                            int adapt_start = 200);

  Eigen::VectorXd propose(const Eigen::VectorXd& current,
                          std::mt19937_64& rng) const;
  void update(const Eigen::VectorXd& sample, bool accepted);

  double scale() const { return std::exp(log_scale_); }
  const Eigen::MatrixXd& covariance() const { return cov_; }

 private:
  Eigen::Index dim_;
  double target_accept_;
  int adapt_start_;
  long iteration_ = 0;
  double log_scale_;
  double rm_c_;  // Robbins-Monro constant: step c/i, first move ~0.1
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd emp_cov_;
  mutable Eigen::MatrixXd chol_;
  mutable bool chol_valid_ = false;
};

struct SignedDraw {
  Eigen::VectorXd theta;
  double log_abs_lik = 0.0;
  int sign = +1;
  bool accepted = false;      // any block update accepted this iteration
  int accepted_blocks = 0;    // number of accepted block updates
};

struct PmmhConfig {
  long iterations = 10000;
  long burn_in = -1;  // default: half the chain
  std::size_t num_blocks = 100;
  std::uint64_t seed = 1;
  double target_accept = 0.234;
  int adapt_start = 200;

  long effective_burn_in() const {
    return burn_in >= 0 ? burn_in : iterations / 2;
  }
};

// Target: theta and the current uniform block store -> signed log-likelihood.
using SignedTarget =
    std::function<SignedLogLik(const Eigen::VectorXd&, const UniformBlockStore&)>;
using LogPrior = std::function<double(const Eigen::VectorXd&)>;

struct ChainResult {
  std::vector<SignedDraw> draws;
  double acceptance_rate = 0.0;       // over all proposals, adaptation included
  std::size_t num_param_blocks = 1;

  // Acceptance over post-burn-in proposals, i.e. after the adaptive scale has
  // settled near its target.
  double acceptance_after(long burn_in) const;
  Eigen::VectorXd signed_posterior_mean(long burn_in) const;
  void to_csv(const std::string& path) const;
};

// Algorithm: per iteration refresh one uniformly chosen block of u, propose
// theta' from the adaptive random walk, accept on the |L|-weighted ratio, and
// record the sign of the current estimate.
ChainResult signed_block_pmmh(const SignedTarget& target, const LogPrior& prior,
                              const Eigen::VectorXd& theta0,
                              const PmmhConfig& config);

// Metropolis-within-Gibbs variant: parameter indices are partitioned into
// blocks, each with its own adaptive proposal; every block update refreshes
// one uniform block jointly with the sub-vector proposal.
ChainResult signed_block_pmmh_mwg(const SignedTarget& target,
                                  const LogPrior& prior,
                                  const Eigen::VectorXd& theta0,
                                  const std::vector<std::vector<int>>& blocks,
                                  const PmmhConfig& config);

// Sign-weighted posterior expectation of psi over post-burn-in draws.
double signed_expectation(const std::vector<SignedDraw>& chain,
                          const std::function<double(const Eigen::VectorXd&)>& psi,
                          long burn_in = 0);

}  // namespace sda
