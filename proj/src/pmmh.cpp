#include "sda/pmmh.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace sda {

AdaptiveProposal::AdaptiveProposal(Eigen::Index dim, double target_accept,
                                   int adapt_start)
    : dim_(dim),
      target_accept_(target_accept),
      adapt_start_(adapt_start),
      mean_(Eigen::VectorXd::Zero(dim)),
      cov_(0.01 * Eigen::MatrixXd::Identity(dim, dim)),
      emp_cov_(Eigen::MatrixXd::Zero(dim, dim)) {
  // Initial scale follows the usual 2.38/sqrt(dim) random-walk heuristic;
  // Robbins-Monro then steers toward the target acceptance rate.
  log_scale_ = std::log(2.38 / std::sqrt(static_cast<double>(dim)));
  rm_c_ = 0.4 / (1.0 - target_accept);
}

Eigen::VectorXd AdaptiveProposal::propose(const Eigen::VectorXd& current,
                                          std::mt19937_64& rng) const {
  if (!chol_valid_) {
    Eigen::MatrixXd c = cov_;
    c.diagonal().array() += 1e-9;
    chol_ = Eigen::LLT<Eigen::MatrixXd>(c).matrixL();
    chol_valid_ = true;
  }
  std::normal_distribution<double> z;
  Eigen::VectorXd v(dim_);
  for (Eigen::Index i = 0; i < dim_; ++i) v[i] = z(rng);
  return current + scale() * (chol_ * v);
}

void AdaptiveProposal::update(const Eigen::VectorXd& sample, bool accepted) {
  ++iteration_;
  const double i = static_cast<double>(iteration_);
  // Polynomial step decay: 1/i freezes the scale before it can track the
  // covariance adaptation; i^{-0.6} keeps enough late-chain mobility while
  // still vanishing.
  log_scale_ +=
      (rm_c_ / std::pow(i, 0.6)) * ((accepted ? 1.0 : 0.0) - target_accept_);
  if (iteration_ == 1) {
    mean_ = sample;
    emp_cov_.setZero(dim_, dim_);
    return;
  }
  // Haario-style running covariance; it only feeds proposals once the
  // non-adaptive burn-in has passed.
  Eigen::VectorXd delta = sample - mean_;
  mean_ += delta / i;
  emp_cov_ += (delta * (sample - mean_).transpose() - emp_cov_) / i;
  if (iteration_ >= adapt_start_) {
    cov_ = emp_cov_;
    chol_valid_ = false;
  }
}

double ChainResult::acceptance_after(long burn_in) const {
  long acc = 0, total = 0;
  for (std::size_t i = static_cast<std::size_t>(burn_in); i < draws.size();
       ++i) {
    acc += draws[i].accepted_blocks;
    total += static_cast<long>(num_param_blocks);
  }
  return total == 0 ? 0.0 : static_cast<double>(acc) / static_cast<double>(total);
}

Eigen::VectorXd ChainResult::signed_posterior_mean(long burn_in) const {
  if (draws.empty()) throw std::runtime_error("empty chain");
  const Eigen::Index d = draws.front().theta.size();
  Eigen::VectorXd num = Eigen::VectorXd::Zero(d);
  double den = 0.0;
  for (std::size_t i = static_cast<std::size_t>(burn_in); i < draws.size();
       ++i) {
    num += draws[i].sign * draws[i].theta;
    den += draws[i].sign;
  }
  if (den == 0.0)
    throw std::runtime_error("signed_posterior_mean: sign sum is zero");
  return num / den;
}

void ChainResult::to_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const Eigen::Index d = draws.empty() ? 0 : draws.front().theta.size();
  out << "iteration";
  for (Eigen::Index j = 0; j < d; ++j) out << ",theta" << j;
  out << ",log_abs_lik,sign,accepted\n";
  out.precision(12);
  for (std::size_t i = 0; i < draws.size(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < d; ++j) out << "," << draws[i].theta[j];
    out << "," << draws[i].log_abs_lik << "," << draws[i].sign << ","
        << (draws[i].accepted ? 1 : 0) << "\n";
  }
}

ChainResult signed_block_pmmh(const SignedTarget& target, const LogPrior& prior,
                              const Eigen::VectorXd& theta0,
                              const PmmhConfig& config) {
  std::vector<std::vector<int>> one_block(1);
  for (int j = 0; j < theta0.size(); ++j) one_block[0].push_back(j);
  return signed_block_pmmh_mwg(target, prior, theta0, one_block, config);
}

ChainResult signed_block_pmmh_mwg(const SignedTarget& target,
                                  const LogPrior& prior,
                                  const Eigen::VectorXd& theta0,
                                  const std::vector<std::vector<int>>& blocks,
                                  const PmmhConfig& config) {
  std::mt19937_64 rng(config.seed);
  UniformBlockStore u(config.num_blocks, rng);

  Eigen::VectorXd theta = theta0;
  SignedLogLik cur = target(theta, u);
  if (!cur.finite() || !std::isfinite(prior(theta)))
    throw std::runtime_error(
        "signed_block_pmmh: non-finite likelihood or prior at theta0");

  std::vector<AdaptiveProposal> proposals;
  proposals.reserve(blocks.size());
  for (const auto& b : blocks)
    proposals.emplace_back(static_cast<Eigen::Index>(b.size()),
                           config.target_accept, config.adapt_start);

  std::uniform_int_distribution<std::size_t> pick_block(
      0, config.num_blocks - 1);

  ChainResult result;
  result.draws.reserve(static_cast<std::size_t>(config.iterations));
  long accepted_count = 0, proposal_count = 0;

  result.num_param_blocks = blocks.size();
  for (long iter = 0; iter < config.iterations; ++iter) {
    bool any_accept = false;
    int accepted_blocks = 0;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      // Joint proposal of (theta_block, one refreshed u block).
      UniformBlockStore u_prop = u.with_refreshed_block(pick_block(rng), rng);

      Eigen::VectorXd sub(blocks[b].size());
      for (std::size_t j = 0; j < blocks[b].size(); ++j)
        sub[j] = theta[blocks[b][j]];
      Eigen::VectorXd sub_prop = proposals[b].propose(sub, rng);
      Eigen::VectorXd theta_prop = theta;
      for (std::size_t j = 0; j < blocks[b].size(); ++j)
        theta_prop[blocks[b][j]] = sub_prop[j];

      double lp_prop = prior(theta_prop);
      bool accept = false;
      if (std::isfinite(lp_prop)) {
        SignedLogLik prop_ll = target(theta_prop, u_prop);
        double log_alpha =
            prop_ll.log_abs + lp_prop - cur.log_abs - prior(theta);
        if (std::log(canonical(rng)) < log_alpha) {
          accept = true;
          theta = theta_prop;
          u = u_prop;
          cur = prop_ll;
        }
      }
      ++proposal_count;
      if (accept) {
        ++accepted_count;
        ++accepted_blocks;
        any_accept = true;
      }
      Eigen::VectorXd sub_now(blocks[b].size());
      for (std::size_t j = 0; j < blocks[b].size(); ++j)
        sub_now[j] = theta[blocks[b][j]];
      proposals[b].update(sub_now, accept);
    }
    SignedDraw draw;
    draw.theta = theta;
    draw.log_abs_lik = cur.log_abs;
    draw.sign = cur.sign;
    draw.accepted = any_accept;
    draw.accepted_blocks = accepted_blocks;
    result.draws.push_back(std::move(draw));
  }
  result.acceptance_rate =
      static_cast<double>(accepted_count) / static_cast<double>(proposal_count);
  return result;
}

double signed_expectation(const std::vector<SignedDraw>& chain,
                          const std::function<double(const Eigen::VectorXd&)>& psi,
                          long burn_in) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = static_cast<std::size_t>(burn_in); i < chain.size();
       ++i) {
    num += psi(chain[i].theta) * chain[i].sign;
    den += chain[i].sign;
  }
  if (den == 0.0)
    throw std::runtime_error("signed_expectation: sign sum is zero");
  return num / den;
}

}  // namespace sda
