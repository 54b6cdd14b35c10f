#pragma once

#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sda/pmmh.hpp"

namespace sda {

struct ResultRow {
  std::string setting;
  std::string metric;
  double value = 0.0;
  double sd = std::numeric_limits<double>::quiet_NaN();
};

struct ResultTable {
  std::vector<ResultRow> rows;

  void add(const std::string& setting, const std::string& metric, double value,
           double sd = std::numeric_limits<double>::quiet_NaN());
  double value(const std::string& setting, const std::string& metric) const;
  void to_csv(const std::string& path) const;
};

// Reproducibility manifest: config, seed, and the git revision if available.
void write_manifest(const std::string& path, const nlohmann::json& config,
                    std::uint64_t seed);

inline int default_threads() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

// ---------------------------------------------------------------------------
// Correlation recovery from min-max rectangles (bivariate normal micro-data).

struct Table1Config {
  std::vector<double> rho_grid{0.0, 0.3, 0.5, 0.7, 0.9};
  std::vector<int> m_grid{20, 50};
  std::vector<long> n_grid{5, 10, 100, 1000};
  int replicates = 100;
  std::uint64_t seed = 101;
  int threads = default_threads();
};

// Exact rectangle log-likelihood for N((2,5), 0.25 I + rho off-diagonal)
// micro-data, box term via bivariate quadrature.
double bvn_rectangle_loglik(const std::vector<RectangleSymbol>& symbols,
                            double rho);
// Maximum-likelihood correlation via golden-section search on (-0.995, 0.995).
double table1_rho_mle(const std::vector<RectangleSymbol>& symbols);

ResultTable run_table1(const Table1Config& config);

// ---------------------------------------------------------------------------
// Exact vs approximate estimators of the powered box integral.

struct EstimatorComparisonConfig {
  std::vector<int> dims{2, 3, 5};
  long exponent_count = 100;  // the power n in C^n
  int T = 100;
  std::size_t M = 2000;
  int replicates = 200;
  std::size_t oracle_M = 1000000;
  std::uint64_t seed = 202;
  int threads = default_threads();
};

struct EstimatorCell {
  int d = 0;
  double oracle = 0.0;  // high-M SOV reference for exponent_count * log C
  double path_mean = 0.0, path_var = 0.0, path_seconds = 0.0;
  double taylor_mean = 0.0, taylor_var = 0.0, taylor_seconds = 0.0;
};

// The shared test distribution: mu = 0, Sigma = 0.5 I + 0.5 11^T, B = [-2,2]^d.
GaussianDist equicorrelated_gaussian(int d);
Box centered_cube(int d, double half_width);

std::vector<EstimatorCell> run_estimator_cells(
    const EstimatorComparisonConfig& config);
ResultTable run_estimator_comparison(const EstimatorComparisonConfig& config);

// ---------------------------------------------------------------------------
// Factor model: full-data vs symbolic chains.

struct FactorExperimentConfig {
  int d = 3;
  int k = 1;
  long n = 50000;
  double q = 0.005;
  long iterations = 10000;
  std::size_t M = 500;  // Taylor replicates; also the number of u blocks
  int replicates = 3;
  std::uint64_t seed = 303;
  int threads = default_threads();
};

// theta layout: [mu (d), lower-triangular loadings (column-major), log diag D].
Eigen::VectorXd factor_to_theta(const FactorParams& params);
FactorParams theta_to_factor(const Eigen::VectorXd& theta, int d, int k);
std::vector<std::vector<int>> factor_blocks(int d, int k);

FactorParams make_factor_truth(int d, int k, std::uint64_t seed);
MicroData sample_gaussian_data(const GaussianDist& dist, long n,
                               std::uint64_t seed);

struct FactorReplicateResult {
  double rmse_mu_full = 0.0, rmse_mu_sda = 0.0;
  double rmse_sigma_full = 0.0, rmse_sigma_sda = 0.0;
  double full_seconds = 0.0, sda_seconds = 0.0;
  double full_acceptance = 0.0, sda_acceptance = 0.0;
  double sda_negative_sign_fraction = 0.0;
};

FactorReplicateResult run_factor_replicate(const FactorExperimentConfig& config,
                                           int replicate);
ResultTable run_factor_experiment(const FactorExperimentConfig& config);

// Exact-estimator chain on a reduced dataset: reports the fraction of
// negative-sign iterations and the acceptance rate.
struct FactorSignCheckConfig {
  int d = 3;
  int k = 1;
  long n = 100;
  double q = 0.005;
  long iterations = 300;
  int T = 100;
  std::size_t path_M = 1000;
  std::size_t num_blocks = 100;
  std::uint64_t seed = 404;
};

struct FactorSignCheckResult {
  double negative_sign_fraction = 0.0;
  double acceptance_rate = 0.0;
  double rmse_mu = 0.0;
};

FactorSignCheckResult run_factor_sign_check(const FactorSignCheckConfig& config);

// ---------------------------------------------------------------------------
// Grouped heteroscedastic regression: full-data vs symbolic chains on
// synthetic groups with mixture predictor laws.

struct RegressionExperimentConfig {
  std::vector<double> q_grid{0.01, 0.05, 0.1};
  int groups = 3;
  long n_per_group = 50000;
  long iterations = 6000;
  std::size_t M = 500;  // conditional integral replicates / u blocks
  long min_component_rows = 2500;
  int K_max = 4;
  // Mixture fitting runs on a subsample: the fitted law is an approximation
  // device, so full-data EM precision buys nothing here.
  long em_subsample = 5000;
  int em_restarts = 2;
  int em_max_iterations = 200;
  std::uint64_t seed = 505;
  int threads = default_threads();
};

struct RegressionData {
  // One entry per group.
  std::vector<Eigen::VectorXd> y;
  std::vector<MicroData> predictors;  // columns x1, x2
  std::vector<double> x2bar;
  HeteroRegParams truth;
};

RegressionData make_regression_data(const RegressionExperimentConfig& config);

// theta layout: [intercepts (G), beta1, beta2, alpha0, alpha1].
Eigen::VectorXd regression_to_theta(const HeteroRegParams& params);
HeteroRegParams theta_to_regression(const Eigen::VectorXd& theta, int groups);

struct RegressionSymbolisation {
  // Per group: fitted predictor mixture and per-component (y, x1, x2)
  // rectangles.
  std::vector<NormalMixture> mixtures;
  std::vector<MixtureRectangleSet> rectangles;
  double prep_seconds = 0.0;
};

RegressionSymbolisation symbolize_regression(const RegressionData& data,
                                             double q,
                                             const RegressionExperimentConfig& config);

// Symbolic likelihood target with theta-independent truncated predictor
// draws cached per u block, so one-block refreshes only redraw one slot.
class RegressionSdaTarget {
 public:
  RegressionSdaTarget(const RegressionData& data,
                      const RegressionSymbolisation& sym, std::size_t M);

  SignedLogLik operator()(const Eigen::VectorXd& theta,
                          const UniformBlockStore& u) const;

 private:
  struct RectangleRef {
    int group = 0;
    const RectangleSymbol* symbol = nullptr;
    const NormalMixture* mixture = nullptr;
    std::uint64_t key_offset = 0;
  };

  void refresh_draws(const UniformBlockStore& u) const;

  const RegressionData* data_;
  std::vector<RectangleRef> rects_;
  std::size_t M_;
  mutable std::vector<std::uint64_t> cached_seeds_;
  mutable std::vector<std::vector<Eigen::VectorXd>> draws_;  // [rect][m]
};

struct RegressionQResult {
  double q = 0.0;
  double mape = 0.0;
  double rmse = 0.0;
  double external_fraction = 0.0;
  double prep_seconds = 0.0;
  double sda_seconds = 0.0;
  double full_seconds = 0.0;
  double sda_acceptance = 0.0;
};

struct RegressionExperimentResult {
  std::vector<RegressionQResult> cells;
  Eigen::VectorXd full_posterior_mean;
  double full_seconds = 0.0;
  double full_acceptance = 0.0;
};

RegressionExperimentResult run_regression_cells(
    const RegressionExperimentConfig& config);
ResultTable run_regression_experiment(const RegressionExperimentConfig& config);

}  // namespace sda
