#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <random>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sda/symbols.hpp"

namespace sda {

// A multivariate normal with a cached Cholesky factor. Both the MVN and the
// factor families reduce to this for density and box-probability work.
struct GaussianDist {
  Eigen::VectorXd mu;
  Eigen::MatrixXd chol;  // lower triangular, Sigma = chol * chol^T
  double log_det = 0.0;  // log |Sigma|

  static GaussianDist from_covariance(const Eigen::VectorXd& mu,
                                      const Eigen::MatrixXd& sigma);

  Eigen::Index dim() const { return mu.size(); }
  double log_density(const Eigen::VectorXd& x) const;
  // Sum of log densities over the rows of a matrix.
  double log_density_rows(const Eigen::MatrixXd& rows) const;
  Eigen::VectorXd sample(std::mt19937_64& rng) const;
  // Maximizer of the density over an axis-aligned box (coordinate descent on
  // the quadratic form).
  Eigen::VectorXd box_mode(const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper) const;
};

struct MvnParams {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;

  GaussianDist dist() const { return GaussianDist::from_covariance(mu, sigma); }
};

// y_i = mu + L f_i + eps_i with f ~ N(0, I_k), eps ~ N(0, D).
struct FactorParams {
  Eigen::VectorXd mu;
  Eigen::MatrixXd loadings;    // d x k, lower triangular
  Eigen::VectorXd diag_noise;  // diagonal of D, positive

  Eigen::Index d() const { return mu.size(); }
  Eigen::Index k() const { return loadings.cols(); }
  Eigen::MatrixXd covariance() const;
  GaussianDist dist() const {
    return GaussianDist::from_covariance(mu, covariance());
  }
};

// Grouped heteroscedastic regression: y = b0_g + b1 x1 + b2 x2 + eps,
// log var(eps) = a0 + a1 (x2 - mean_g(x2)).
struct HeteroRegParams {
  Eigen::VectorXd intercepts;  // one per group
  double beta1 = 0.0;
  double beta2 = 0.0;
  double alpha0 = 0.0;
  double alpha1 = 0.0;

  double log_sigma2(double x2, double x2bar) const {
    return alpha0 + alpha1 * (x2 - x2bar);
  }
  double log_density(double y, double x1, double x2, int group,
                     double x2bar) const;
};

struct NormalMixture {
  Eigen::VectorXd weights;                // K, sums to 1
  std::vector<Eigen::VectorXd> means;     // K x d
  std::vector<Eigen::MatrixXd> covs;      // K covariance matrices
  std::vector<GaussianDist> components;   // cached factors

  int n_components() const { return static_cast<int>(weights.size()); }
  void finalize();                        // rebuild cached GaussianDists
  double log_pdf(const Eigen::VectorXd& x) const;
  // Posterior component responsibilities for one row.
  Eigen::VectorXd responsibilities(const Eigen::VectorXd& x) const;
  int hard_assign(const Eigen::VectorXd& x) const;
  Eigen::VectorXd sample(std::mt19937_64& rng) const;

  nlohmann::json to_json() const;
  static NormalMixture from_json(const nlohmann::json& j);
};

struct EmFit {
  NormalMixture mixture;
  double log_lik = 0.0;
  double bic = 0.0;
  int iterations = 0;
};

struct EmOptions {
  int max_iterations = 500;
  double rel_tol = 1e-8;
  int restarts = 5;
  std::uint64_t seed = 20231;
};

EmFit fit_mixture_em(const MicroData& predictors, int K,
                     const EmOptions& opts = {});

// Smallest K whose BIC improvement over K-1 is below rel_improve, subject to
// every component holding at least min_count hard-assigned rows.
int select_K(const MicroData& predictors, int K_max, long min_count,
             double rel_improve = 0.01, const EmOptions& opts = {});

// Sufficient statistics for fast full-data Gaussian likelihoods.
struct GaussianSuffStats {
  long n = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd scatter;  // sum (x - mean)(x - mean)^T

  static GaussianSuffStats from_data(const Eigen::MatrixXd& rows);
  double log_lik(const GaussianDist& dist) const;
};

}  // namespace sda
