#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sda/loglik.hpp"
#include "sda/pmmh.hpp"
#include "sda/stats.hpp"

using namespace sda;

namespace {

SignedDraw mk(double psi, int sign) {
  SignedDraw d;
  d.theta = Eigen::VectorXd::Constant(1, psi);
  d.sign = sign;
  return d;
}

double first(const Eigen::VectorXd& t) { return t[0]; }

}  // namespace

TEST_CASE("signed expectation hand arithmetic") {
  std::vector<SignedDraw> chain{mk(2, +1), mk(4, +1), mk(10, -1)};
  CHECK(signed_expectation(chain, first) == doctest::Approx(-4.0));
  CHECK(signed_expectation(chain, [](const Eigen::VectorXd&) { return 1.0; }) ==
        doctest::Approx(1.0));
  // All-positive signs reduce to the plain average.
  std::vector<SignedDraw> pos{mk(1, +1), mk(2, +1), mk(6, +1)};
  CHECK(signed_expectation(pos, first) == doctest::Approx(3.0));
}

TEST_CASE("zero sign sum is an error, not a NaN") {
  std::vector<SignedDraw> chain{mk(1, +1), mk(2, -1)};
  CHECK_THROWS(signed_expectation(chain, first));
}

TEST_CASE("block refresh leaves the other blocks bit-identical") {
  std::mt19937_64 rng(5);
  UniformBlockStore u(6, rng);
  UniformBlockStore v = u.with_refreshed_block(2, rng);
  for (std::size_t b = 0; b < 6; ++b) {
    if (b == 2)
      CHECK(v.block_seed(b) != u.block_seed(b));
    else
      CHECK(v.block_seed(b) == u.block_seed(b));
  }
  CHECK_THROWS(u.with_refreshed_block(6, rng));

  // Replay: the same rng state produces the same refreshed block.
  std::mt19937_64 r1(77), r2(77);
  CHECK(u.with_refreshed_block(0, r1).block_seed(0) ==
        u.with_refreshed_block(0, r2).block_seed(0));
}

TEST_CASE("constant likelihood samples the prior") {
  SignedTarget target = [](const Eigen::VectorXd&, const UniformBlockStore&) {
    SignedLogLik l;
    l.log_abs = 0.0;
    return l;
  };
  LogPrior prior = [](const Eigen::VectorXd& t) { return -0.5 * t.squaredNorm(); };
  PmmhConfig cfg;
  cfg.iterations = 30000;
  cfg.num_blocks = 4;
  cfg.seed = 3;
  ChainResult chain =
      signed_block_pmmh(target, prior, Eigen::VectorXd::Zero(1), cfg);
  long burn = cfg.effective_burn_in();
  std::vector<double> xs;
  for (std::size_t i = burn; i < chain.draws.size(); ++i)
    xs.push_back(chain.draws[i].theta[0]);
  double ess = effective_sample_size(xs);
  double se = 1.0 / std::sqrt(std::max(ess, 50.0));
  CHECK(std::abs(mean(xs)) < 3 * se);
  CHECK(sample_variance(xs) == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("exact Gaussian likelihood matches the conjugate posterior") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0.7, 1.0);
  long n = 50;
  double sum = 0.0;
  std::vector<double> xs(n);
  for (long i = 0; i < n; ++i) {
    xs[i] = nd(rng);
    sum += xs[i];
  }
  // x_i ~ N(mu, 1), prior mu ~ N(0, 1): posterior N(sum/(n+1), 1/(n+1)).
  SignedTarget target = [&](const Eigen::VectorXd& t,
                            const UniformBlockStore&) {
    double ll = 0.0;
    for (double x : xs) ll += -0.5 * (x - t[0]) * (x - t[0]);
    SignedLogLik l;
    l.log_abs = ll;
    return l;
  };
  LogPrior prior = [](const Eigen::VectorXd& t) { return -0.5 * t.squaredNorm(); };
  PmmhConfig cfg;
  cfg.iterations = 30000;
  cfg.num_blocks = 2;
  cfg.seed = 4;
  ChainResult chain =
      signed_block_pmmh(target, prior, Eigen::VectorXd::Zero(1), cfg);
  long burn = cfg.effective_burn_in();
  std::vector<double> draws;
  for (std::size_t i = burn; i < chain.draws.size(); ++i)
    draws.push_back(chain.draws[i].theta[0]);
  double post_mean = sum / (n + 1.0);
  double post_var = 1.0 / (n + 1.0);
  double ess = effective_sample_size(draws);
  double se = std::sqrt(post_var / std::max(ess, 50.0));
  CHECK(std::abs(mean(draws) - post_mean) < 4 * se);
  CHECK(sample_variance(draws) == doctest::Approx(post_var).epsilon(0.2));
  CHECK(chain.signed_posterior_mean(burn)[0] ==
        doctest::Approx(mean(draws)).epsilon(1e-12));
  // Adaptation drives the post-burn-in acceptance to its target.
  CHECK(chain.acceptance_after(burn) == doctest::Approx(0.234).epsilon(0.25));
}

TEST_CASE("chains replay bit-for-bit under a fixed seed") {
  SignedTarget target = [](const Eigen::VectorXd& t, const UniformBlockStore& u) {
    // Likelihood depends on u so the test covers block refresh replay too.
    UniformStream s = u.stream(0, 0);
    SignedLogLik l;
    l.log_abs = -0.5 * t.squaredNorm() + 0.01 * s.next();
    return l;
  };
  LogPrior prior = [](const Eigen::VectorXd& t) { return -0.5 * t.squaredNorm(); };
  PmmhConfig cfg;
  cfg.iterations = 2000;
  cfg.num_blocks = 8;
  cfg.seed = 12;
  ChainResult a = signed_block_pmmh(target, prior, Eigen::VectorXd::Zero(2), cfg);
  ChainResult b = signed_block_pmmh(target, prior, Eigen::VectorXd::Zero(2), cfg);
  REQUIRE(a.draws.size() == b.draws.size());
  for (std::size_t i = 0; i < a.draws.size(); ++i) {
    CHECK(a.draws[i].theta == b.draws[i].theta);
    CHECK(a.draws[i].log_abs_lik == b.draws[i].log_abs_lik);
    CHECK(a.draws[i].sign == b.draws[i].sign);
  }
}

TEST_CASE("Metropolis-within-Gibbs blocks target a 3-d Gaussian") {
  Eigen::VectorXd target_mean(3);
  target_mean << 1.0, -2.0, 0.5;
  SignedTarget target = [&](const Eigen::VectorXd& t,
                            const UniformBlockStore&) {
    SignedLogLik l;
    l.log_abs = -0.5 * (t - target_mean).squaredNorm();
    return l;
  };
  LogPrior prior = [](const Eigen::VectorXd&) { return 0.0; };
  std::vector<std::vector<int>> blocks{{0}, {1, 2}};
  PmmhConfig cfg;
  cfg.iterations = 30000;
  cfg.num_blocks = 4;
  cfg.seed = 21;
  ChainResult chain = signed_block_pmmh_mwg(target, prior,
                                            Eigen::VectorXd::Zero(3), blocks, cfg);
  long burn = cfg.effective_burn_in();
  Eigen::VectorXd m = chain.signed_posterior_mean(burn);
  for (int j = 0; j < 3; ++j)
    CHECK(m[j] == doctest::Approx(target_mean[j]).epsilon(0.1));
  CHECK(chain.acceptance_after(burn) == doctest::Approx(0.234).epsilon(0.3));
}

TEST_CASE("one-block updates keep successive estimates highly correlated") {
  // Approximate likelihood at fixed theta: Taylor-corrected SOV with U = M:
  // refreshing one block perturbs a single replicate.
  GaussianDist dist = GaussianDist::from_covariance(
      Eigen::VectorXd::Zero(2),
      (Eigen::MatrixXd(2, 2) << 1.0, 0.5, 0.5, 1.0).finished());
  Box box{Eigen::VectorXd::Constant(2, -2.0), Eigen::VectorXd::Constant(2, 2.0)};
  std::size_t U = 100, M = 100;
  std::mt19937_64 rng(31);
  UniformBlockStore u(U, rng);
  auto loglik = [&](const UniformBlockStore& store) {
    IntegralEstimate est = sov_truncated_normal(dist, box, M, store);
    return bias_corrected_exp(taylor_log_integral(est, 100)).log_abs;
  };
  int iters = 2000;
  std::vector<double> prev(iters), next(iters);
  double current = loglik(u);
  std::uniform_int_distribution<std::size_t> pick(0, U - 1);
  for (int i = 0; i < iters; ++i) {
    u.refresh_block(pick(rng), rng);
    double fresh = loglik(u);
    prev[i] = current;
    next[i] = fresh;
    current = fresh;
  }
  CHECK(correlation(prev, next) > 0.88);  // target (U-1)/U - 0.1
}
