// End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
// the process exits nonzero if any criterion fails.

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sda/experiments.hpp"
#include "sda/lik.hpp"
#include "sda/loglik.hpp"
#include "sda/stats.hpp"

using namespace sda;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("CRITERION %d: %s -- %s\n", criterion, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

UniformBlockStore make_store(std::size_t blocks, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return UniformBlockStore(blocks, rng);
}

// --------------------------------------------------------------------------
// 1. Path vs Taylor estimators on the equicorrelated reference problem.

void criterion1() {
  EstimatorComparisonConfig cfg;  // d in {2,3,5}, 200 replicates, oracle 1e6
  std::vector<EstimatorCell> cells = run_estimator_cells(cfg);
  const double reference[3] = {-8.649, -12.226, -18.462};
  bool pass = true;
  std::ostringstream detail;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const EstimatorCell& c = cells[i];
    bool ok_oracle = std::abs(c.path_mean - c.oracle) <= 0.10;
    bool ok_ref = std::abs(c.path_mean - reference[i]) <= 0.10;
    bool ok_var = c.taylor_var < 0.5 * c.path_var;
    bool ok_taylor = c.d != 2 || std::abs(c.taylor_mean - c.path_mean) <= 0.10;
    pass = pass && ok_oracle && ok_ref && ok_var && ok_taylor;
    detail << "d=" << c.d << " path=" << c.path_mean
           << " taylor=" << c.taylor_mean << " oracle=" << c.oracle
           << " vars=" << c.path_var << "/" << c.taylor_var << "; ";
  }
  report(1, pass, detail.str());
}

// --------------------------------------------------------------------------
// 2. Poisson estimator: unbiasedness, closed-form variance, optimal bound.

void criterion2() {
  const double A = -10.0, var = 0.5, lambda = 3.0;
  const long n = 100000;
  PoissonConfig cfg;

  auto run_grid_point = [&](double a, std::uint64_t seed, double& out_mean,
                            double& out_var) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(A, std::sqrt(var));
    std::vector<double> values(n);
    for (long i = 0; i < n; ++i) {
      auto source = [&](std::size_t) { return nd(rng); };
      UniformStream chi(mix_seed(seed, static_cast<std::uint64_t>(i)));
      SignedLogLik est = poisson_estimator(source, cfg, a, chi);
      values[i] = est.sign * std::exp(est.log_abs);
    }
    out_mean = mean(values);
    out_var = sample_variance(values);
  };

  // Closed-form variance for Gaussian replicates.
  auto variance_formula = [&](double a) {
    return std::exp((A - a) * (A - a) / lambda + var / lambda + lambda +
                    2 * a) -
           std::exp(2 * A);
  };

  double m, v;
  run_grid_point(A - lambda, 1001, m, v);
  double se = std::sqrt(v / n);
  bool ok_mean = std::abs(m - std::exp(A)) < 3 * se;
  double v_formula = variance_formula(A - lambda);
  bool ok_var = std::abs(v - v_formula) < 0.10 * v_formula;

  // Variance minimized at the grid point nearest a_opt = A - lambda.
  std::vector<double> grid;
  for (int j = 5; j >= 0; --j) grid.push_back(A - j * lambda);
  std::size_t argmin = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < grid.size(); ++j) {
    double gm, gv;
    run_grid_point(grid[j], 2000 + j, gm, gv);
    if (gv < best) {
      best = gv;
      argmin = j;
    }
  }
  bool ok_grid = grid[argmin] == A - lambda;

  std::ostringstream detail;
  detail << "mean=" << m << " (target " << std::exp(A) << ", 3se=" << 3 * se
         << "), var=" << v << " vs formula " << v_formula
         << ", grid argmin a=" << grid[argmin] << " (a_opt " << A - lambda
         << ")";
  report(2, ok_mean && ok_var && ok_grid, detail.str());
}

// --------------------------------------------------------------------------
// 3. Trivial exactness suite.

void criterion3() {
  bool pass = true;
  std::ostringstream detail;

  // Constant-density path sampler.
  {
    Box box{Eigen::VectorXd::Constant(2, -1.0),
            Eigen::VectorXd::Constant(2, 2.0)};
    const double c = 0.37;
    auto log_density = [&](const Eigen::VectorXd&) { return std::log(c); };
    auto sampler = [&](double, UniformStream& s) {
      Eigen::VectorXd z(2);
      for (int j = 0; j < 2; ++j)
        z[j] = box.lower[j] + (box.upper[j] - box.lower[j]) * s.next();
      return z;
    };
    auto u = make_store(10, 31);
    LogLikEstimate est = path_sampler_log_integral_generic(
        log_density, sampler, box, TemperatureLadder{}, 100, 25, u);
    double target = 25 * std::log(c * box.volume());
    bool ok = std::abs(est.value - target) < 1e-10;
    pass = pass && ok;
    detail << "const-path err=" << std::abs(est.value - target) << "; ";
  }

  // Zero-variance Taylor.
  {
    IntegralEstimate est;
    est.replicates.assign(20, 0.2);
    est.value = 0.2;
    LogLikEstimate out = taylor_log_integral(est, 40);
    bool ok = std::abs(out.value - 40 * std::log(0.2)) < 1e-12 &&
              out.variance < 1e-18;
    pass = pass && ok;
    detail << "taylor exact=" << (ok ? "yes" : "no") << "; ";
  }

  // chi = 0 Poisson estimator.
  {
    PoissonConfig cfg;
    std::uint64_t seed = 0;
    for (;; ++seed) {
      UniformStream probe(seed);
      if (poisson_draw(cfg.lambda, probe.next()) == 0) break;
    }
    auto source = [](std::size_t) { return 0.0; };
    UniformStream chi(seed);
    SignedLogLik est = poisson_estimator(source, cfg, -9.0, chi);
    bool ok = est.sign == +1 && std::abs(est.log_abs - (-6.0)) < 1e-12;
    pass = pass && ok;
    detail << "chi0 log=" << est.log_abs << "; ";
  }

  // All-external symbol (the q -> 0.5 limit) equals the full-data
  // log-likelihood.
  {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd rows(100, 2);
    for (int i = 0; i < 100; ++i) {
      rows(i, 0) = nd(rng);
      rows(i, 1) = nd(rng);
    }
    RectangleSymbol s;
    s.lower = Eigen::VectorXd::Constant(2, 50.0);
    s.upper = Eigen::VectorXd::Constant(2, 51.0);
    s.n_total = 100;
    s.boundary_points.resize(0, 2);
    s.external_points = rows;
    s.q = 0.5;
    GaussianDist dist = GaussianDist::from_covariance(
        Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
    auto u = make_store(10, 32);
    SymbolicLikConfig cfg;
    SignedLogLik est = symbolic_loglik(s, dist, cfg, u);
    double full = dist.log_density_rows(rows);
    bool ok = est.sign == +1 && std::abs(est.log_abs - full) < 1e-9;
    pass = pass && ok;
    detail << "q0.5 err=" << std::abs(est.log_abs - full);
  }

  report(3, pass, detail.str());
}

// --------------------------------------------------------------------------
// 4. Correlation recovery from min-max rectangles.

void criterion4() {
  Table1Config cfg;
  cfg.rho_grid = {0.0, 0.5, 0.9};
  cfg.m_grid = {20};
  cfg.n_grid = {5, 1000};
  cfg.replicates = 30;
  ResultTable table = run_table1(cfg);

  // Reference sds for (rho, n) cells at m = 20.
  struct Cell {
    double rho;
    long n;
    double ref_sd;
  };
  std::vector<Cell> cells{{0.0, 5, 0.108},  {0.0, 1000, 0.037},
                          {0.5, 5, 0.084},  {0.5, 1000, 0.029},
                          {0.9, 5, 0.023},  {0.9, 1000, 0.012}};
  bool pass = true;
  std::ostringstream detail;
  for (const Cell& c : cells) {
    std::ostringstream setting;
    setting << "rho=" << c.rho << ",m=20,n=" << c.n;
    double m = table.value(setting.str(), "rho_hat_mean");
    double sd = table.value(setting.str(), "rho_hat_sd");
    bool ok = std::abs(m - c.rho) <= 0.05 && sd <= 2 * c.ref_sd;
    pass = pass && ok;
    detail << setting.str() << ": mean=" << m << " sd=" << sd << " (ref "
           << c.ref_sd << "); ";
  }
  report(4, pass, detail.str());
}

// --------------------------------------------------------------------------
// 5. Signed PMMH on the factor model, full-data vs symbolic chains.

void criterion5() {
  FactorExperimentConfig cfg;  // d=3, k=1, n=50000, q=0.005, 10000 iterations
  double rmse_full = 0.0, rmse_sda = 0.0, acc = 0.0, neg = 0.0;
  for (int r = 0; r < cfg.replicates; ++r) {
    FactorReplicateResult res = run_factor_replicate(cfg, r);
    rmse_full += res.rmse_mu_full / cfg.replicates;
    rmse_sda += res.rmse_mu_sda / cfg.replicates;
    acc += res.sda_acceptance / cfg.replicates;
    neg += res.sda_negative_sign_fraction / cfg.replicates;
  }
  double ratio = rmse_sda / rmse_full;
  bool ok_rmse = rmse_sda <= 0.03;
  bool ok_ratio = ratio >= 1.0 && ratio <= 8.0;
  bool ok_neg = neg == 0.0;  // the bias-corrected estimator is sign-positive
  bool ok_acc = std::abs(acc - 0.234) <= 0.05;

  // Exact-estimator sign behaviour on a reduced dataset (the full-scale exact
  // chain is computationally out of reach here; see README).
  FactorSignCheckConfig sign_cfg;
  FactorSignCheckResult sign = run_factor_sign_check(sign_cfg);
  bool ok_sign = sign.negative_sign_fraction < 0.25;

  std::ostringstream detail;
  detail << "rmse_mu sda=" << rmse_sda << " full=" << rmse_full
         << " ratio=" << ratio << " acc=" << acc << " neg(approx)=" << neg
         << " neg(exact,n=" << sign_cfg.n << ")=" << sign.negative_sign_fraction;
  report(5, ok_rmse && ok_ratio && ok_neg && ok_acc && ok_sign, detail.str());
}

// --------------------------------------------------------------------------
// 6. Regression pipeline plus the conditional-integral oracle check.

void criterion6() {
  RegressionExperimentConfig cfg;
  RegressionExperimentResult res = run_regression_cells(cfg);
  bool ok_mono = true, ok_time = true;
  double last = std::numeric_limits<double>::infinity();
  for (const RegressionQResult& c : res.cells) {
    if (c.mape > last + 1e-12) ok_mono = false;
    last = c.mape;
    if ((c.prep_seconds + c.sda_seconds) >= res.full_seconds) ok_time = false;
  }
  bool ok_mape = res.cells.back().mape <= 0.10;

  // Conditional integral vs a 1e7-draw joint Monte Carlo oracle.
  HeteroRegParams p;
  p.intercepts = Eigen::VectorXd::Constant(1, 1.0);
  p.beta1 = 0.5;
  p.beta2 = -0.25;
  p.alpha0 = 0.1;
  p.alpha1 = 0.3;
  NormalMixture mix;
  mix.weights = (Eigen::VectorXd(2) << 0.6, 0.4).finished();
  mix.means = {(Eigen::VectorXd(2) << 0.0, 1.0).finished(),
               (Eigen::VectorXd(2) << 1.0, 2.0).finished()};
  mix.covs = {Eigen::MatrixXd::Identity(2, 2),
              0.5 * Eigen::MatrixXd::Identity(2, 2)};
  mix.finalize();
  Box box;
  box.lower = (Eigen::VectorXd(3) << 0.5, -0.8, 0.2).finished();
  box.upper = (Eigen::VectorXd(3) << 2.5, 1.5, 2.2).finished();
  RegressionGroupContext ctx{0, 1.4};
  auto u = make_store(256, 606);
  IntegralEstimate est =
      conditional_regression_integral(p, mix, box, ctx, 200000, u);

  std::mt19937_64 rng(4242);
  std::normal_distribution<double> nd;
  long inside = 0, hit = 0;
  for (long i = 0; i < 10000000; ++i) {
    Eigen::VectorXd x = mix.sample(rng);
    if (x[0] < box.lower[1] || x[0] > box.upper[1] || x[1] < box.lower[2] ||
        x[1] > box.upper[2])
      continue;
    ++inside;
    double mu = p.intercepts[0] + p.beta1 * x[0] + p.beta2 * x[1];
    double sd = std::exp(0.5 * p.log_sigma2(x[1], ctx.x2bar));
    double y = mu + sd * nd(rng);
    if (y >= box.lower[0] && y <= box.upper[0]) ++hit;
  }
  double oracle = static_cast<double>(hit) / inside;
  double se_o = std::sqrt(oracle * (1 - oracle) / inside);
  double se_e = sample_sd(est.replicates) / std::sqrt(2e5);
  bool ok_oracle = std::abs(est.value - oracle) < 3 * (se_o + se_e);

  std::ostringstream detail;
  for (const RegressionQResult& c : res.cells)
    detail << "q=" << c.q << " mape=" << c.mape << " ratio="
           << (c.prep_seconds + c.sda_seconds) / res.full_seconds << "; ";
  detail << "eq14 est=" << est.value << " oracle=" << oracle
         << " 3se=" << 3 * (se_o + se_e);
  report(6, ok_mono && ok_mape && ok_time && ok_oracle, detail.str());
}

// --------------------------------------------------------------------------
// 7. CRN correlation under one-block updates at U = M = 1000.

void criterion7() {
  Eigen::MatrixXd sigma =
      0.5 * Eigen::MatrixXd::Identity(3, 3) + 0.5 * Eigen::MatrixXd::Ones(3, 3);
  GaussianDist dist =
      GaussianDist::from_covariance(Eigen::VectorXd::Zero(3), sigma);
  Box box{Eigen::VectorXd::Constant(3, -2.0),
          Eigen::VectorXd::Constant(3, 2.0)};
  std::size_t U = 1000, M = 1000;
  std::mt19937_64 rng(707);
  UniformBlockStore u(U, rng);
  auto loglik = [&](const UniformBlockStore& store) {
    IntegralEstimate est = sov_truncated_normal(dist, box, M, store);
    return bias_corrected_exp(taylor_log_integral(est, 100)).log_abs;
  };
  int iters = 10000;
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
  double corr = correlation(prev, next);
  std::ostringstream detail;
  detail << "corr=" << corr << " over " << iters << " one-block updates";
  report(7, corr >= 0.9, detail.str());
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  return g_failures == 0 ? 0 : 1;
}
