#include "sda/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sda/rng.hpp"
#include "sda/stats.hpp"

namespace sda {

GaussianDist GaussianDist::from_covariance(const Eigen::VectorXd& mu,
                                           const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() != mu.size())
    throw std::invalid_argument("GaussianDist: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("GaussianDist: covariance not positive-definite");
  GaussianDist g;
  g.mu = mu;
  g.chol = llt.matrixL();
  g.log_det = 2.0 * g.chol.diagonal().array().log().sum();
  return g;
}

double GaussianDist::log_density(const Eigen::VectorXd& x) const {
  Eigen::VectorXd v =
      chol.triangularView<Eigen::Lower>().solve(x - mu);
  return -0.5 * (static_cast<double>(dim()) * kLogTwoPi + log_det +
                 v.squaredNorm());
}

double GaussianDist::log_density_rows(const Eigen::MatrixXd& rows) const {
  if (rows.rows() == 0) return 0.0;
  Eigen::MatrixXd centered = rows.transpose().colwise() - mu;
  chol.triangularView<Eigen::Lower>().solveInPlace(centered);
  double quad = centered.squaredNorm();
  return -0.5 * (static_cast<double>(rows.rows()) *
                     (static_cast<double>(dim()) * kLogTwoPi + log_det) +
                 quad);
}

Eigen::VectorXd GaussianDist::sample(std::mt19937_64& rng) const {
  std::normal_distribution<double> z;
  Eigen::VectorXd v(dim());
  for (Eigen::Index i = 0; i < dim(); ++i) v[i] = z(rng);
  return mu + chol * v;
}

Eigen::VectorXd GaussianDist::box_mode(const Eigen::VectorXd& lower,
                                       const Eigen::VectorXd& upper) const {
  const Eigen::Index d = dim();
  Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(d, d);
  chol.triangularView<Eigen::Lower>().solveInPlace(prec);
  prec = prec.transpose() * prec;  // Sigma^{-1}
  Eigen::VectorXd z = mu.cwiseMax(lower).cwiseMin(upper);
  for (int sweep = 0; sweep < 200; ++sweep) {
    double change = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      double off = prec.row(j).dot(z - mu) - prec(j, j) * (z[j] - mu[j]);
      double cand = std::clamp(mu[j] - off / prec(j, j), lower[j], upper[j]);
      change = std::max(change, std::abs(cand - z[j]));
      z[j] = cand;
    }
    if (change < 1e-13) break;
  }
  return z;
}

Eigen::MatrixXd FactorParams::covariance() const {
  if (diag_noise.minCoeff() <= 0.0)
    throw std::invalid_argument("FactorParams: diag_noise must be positive");
  Eigen::MatrixXd sigma = loadings * loadings.transpose();
  sigma.diagonal() += diag_noise;
  return sigma;
}

double HeteroRegParams::log_density(double y, double x1, double x2, int group,
                                    double x2bar) const {
  double m = intercepts[group] + beta1 * x1 + beta2 * x2;
  double ls2 = log_sigma2(x2, x2bar);
  double r = y - m;
  return -0.5 * (kLogTwoPi + ls2 + r * r * std::exp(-ls2));
}

void NormalMixture::finalize() {
  if (weights.size() == 0)
    throw std::invalid_argument("NormalMixture: empty");
  if (std::abs(weights.sum() - 1.0) > 1e-10 || weights.minCoeff() < 0.0)
    throw std::invalid_argument("NormalMixture: weights must sum to 1");
  components.clear();
  for (int k = 0; k < n_components(); ++k)
    components.push_back(GaussianDist::from_covariance(means[k], covs[k]));
}

double NormalMixture::log_pdf(const Eigen::VectorXd& x) const {
  double best = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd terms(n_components());
  for (int k = 0; k < n_components(); ++k) {
    terms[k] = std::log(weights[k]) + components[k].log_density(x);
    best = std::max(best, terms[k]);
  }
  if (!std::isfinite(best)) return best;
  return best + std::log((terms.array() - best).exp().sum());
}

Eigen::VectorXd NormalMixture::responsibilities(const Eigen::VectorXd& x) const {
  Eigen::VectorXd terms(n_components());
  double best = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < n_components(); ++k) {
    terms[k] = std::log(std::max(weights[k], 1e-300)) +
               components[k].log_density(x);
    best = std::max(best, terms[k]);
  }
  Eigen::VectorXd r = (terms.array() - best).exp();
  return r / r.sum();
}

int NormalMixture::hard_assign(const Eigen::VectorXd& x) const {
  Eigen::Index k;
  responsibilities(x).maxCoeff(&k);
  return static_cast<int>(k);
}

Eigen::VectorXd NormalMixture::sample(std::mt19937_64& rng) const {
  double u = canonical(rng);
  double cum = 0.0;
  for (int k = 0; k < n_components(); ++k) {
    cum += weights[k];
    if (u <= cum || k == n_components() - 1) return components[k].sample(rng);
  }
  return components.back().sample(rng);
}

nlohmann::json NormalMixture::to_json() const {
  nlohmann::json j;
  j["weights"] = std::vector<double>(weights.begin(), weights.end());
  auto dump_vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.begin(), v.end());
  };
  auto dump_mat = [](const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      rows.emplace_back(m.row(i).begin(), m.row(i).end());
    return rows;
  };
  for (int k = 0; k < n_components(); ++k) {
    j["means"].push_back(dump_vec(means[k]));
    j["covs"].push_back(dump_mat(covs[k]));
  }
  return j;
}

NormalMixture NormalMixture::from_json(const nlohmann::json& j) {
  NormalMixture m;
  auto w = j.at("weights").get<std::vector<double>>();
  m.weights = Eigen::Map<Eigen::VectorXd>(w.data(), w.size());
  for (const auto& mv : j.at("means")) {
    auto v = mv.get<std::vector<double>>();
    m.means.push_back(Eigen::Map<Eigen::VectorXd>(v.data(), v.size()));
  }
  for (const auto& mc : j.at("covs")) {
    auto rows = mc.get<std::vector<std::vector<double>>>();
    Eigen::MatrixXd cov(rows.size(), rows[0].size());
    for (Eigen::Index i = 0; i < cov.rows(); ++i)
      for (Eigen::Index c = 0; c < cov.cols(); ++c) cov(i, c) = rows[i][c];
    m.covs.push_back(cov);
  }
  m.finalize();
  return m;
}

namespace {

// k-means++ style seeding for EM means.
std::vector<Eigen::VectorXd> seed_means(const Eigen::MatrixXd& rows, int K,
                                        std::mt19937_64& rng) {
  const Eigen::Index n = rows.rows();
  std::vector<Eigen::VectorXd> centers;
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.push_back(rows.row(pick(rng)));
  Eigen::VectorXd dist2 =
      (rows.rowwise() - centers[0].transpose()).rowwise().squaredNorm();
  while (static_cast<int>(centers.size()) < K) {
    double total = dist2.sum();
    if (total <= 0.0) {
      centers.push_back(rows.row(pick(rng)));
    } else {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      Eigen::Index chosen = 0;
      double cum = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        cum += dist2[i];
        if (cum >= target) {
          chosen = i;
          break;
        }
      }
      centers.push_back(rows.row(chosen));
    }
    Eigen::VectorXd nd =
        (rows.rowwise() - centers.back().transpose()).rowwise().squaredNorm();
    dist2 = dist2.cwiseMin(nd);
  }
  return centers;
}

EmFit run_em_once(const Eigen::MatrixXd& rows, int K, const EmOptions& opts,
                  std::mt19937_64& rng) {
  const Eigen::Index n = rows.rows(), d = rows.cols();
  NormalMixture mix;
  mix.weights = Eigen::VectorXd::Constant(K, 1.0 / K);
  mix.means = seed_means(rows, K, rng);
  Eigen::VectorXd col_mean = rows.colwise().mean();
  Eigen::MatrixXd centered = rows.rowwise() - col_mean.transpose();
  Eigen::MatrixXd pooled =
      centered.transpose() * centered / static_cast<double>(n - 1);
  pooled.diagonal().array() += 1e-9;
  for (int k = 0; k < K; ++k) mix.covs.push_back(pooled);
  mix.finalize();

  double prev_ll = -std::numeric_limits<double>::infinity();
  double ll = prev_ll;
  int iter = 0;
  Eigen::MatrixXd resp(n, K);
  for (iter = 0; iter < opts.max_iterations; ++iter) {
    // E-step
    ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd terms(K);
      double best = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < K; ++k) {
        terms[k] = std::log(std::max(mix.weights[k], 1e-300)) +
                   mix.components[k].log_density(rows.row(i));
        best = std::max(best, terms[k]);
      }
      double lse = best + std::log((terms.array() - best).exp().sum());
      ll += lse;
      resp.row(i) = (terms.array() - lse).exp();
    }
    // M-step
    Eigen::VectorXd nk = resp.colwise().sum();
    if (nk.minCoeff() < static_cast<double>(d) + 1.0)
      throw std::runtime_error("fit_mixture_em: degenerate component");
    mix.weights = nk / static_cast<double>(n);
    for (int k = 0; k < K; ++k) {
      Eigen::VectorXd mu = (resp.col(k).transpose() * rows).transpose() / nk[k];
      Eigen::MatrixXd c = rows.rowwise() - mu.transpose();
      Eigen::MatrixXd cov =
          c.transpose() * (resp.col(k).asDiagonal() * c) / nk[k];
      if (cov.norm() < 1e-12)
        throw std::runtime_error(
            "fit_mixture_em: singular component (zero variance)");
      cov.diagonal().array() += 1e-9;
      mix.means[k] = mu;
      mix.covs[k] = cov;
    }
    mix.finalize();
    if (std::isfinite(prev_ll) &&
        std::abs(ll - prev_ll) < opts.rel_tol * std::abs(prev_ll))
      break;
    prev_ll = ll;
  }
  EmFit fit;
  fit.mixture = std::move(mix);
  fit.log_lik = ll;
  // Free parameters: K-1 weights, K*d means, K*d(d+1)/2 covariances.
  double p = (K - 1) + K * d + K * d * (d + 1) / 2.0;
  fit.bic = -2.0 * ll + p * std::log(static_cast<double>(n));
  fit.iterations = iter + 1;
  return fit;
}

}  // namespace

EmFit fit_mixture_em(const MicroData& predictors, int K,
                     const EmOptions& opts) {
  predictors.validate();
  if (K < 1) throw std::invalid_argument("fit_mixture_em: K < 1");
  std::mt19937_64 rng(opts.seed);
  EmFit best;
  bool have = false;
  std::string last_error;
  for (int r = 0; r < std::max(1, opts.restarts); ++r) {
    try {
      EmFit fit = run_em_once(predictors.rows, K, opts, rng);
      if (!have || fit.bic < best.bic) {
        best = std::move(fit);
        have = true;
      }
    } catch (const std::exception& e) {
      last_error = e.what();
    }
  }
  if (!have) throw std::runtime_error("fit_mixture_em failed: " + last_error);
  return best;
}

int select_K(const MicroData& predictors, int K_max, long min_count,
             double rel_improve, const EmOptions& opts) {
  double prev_bic = std::numeric_limits<double>::infinity();
  int chosen = 1;
  for (int K = 1; K <= K_max; ++K) {
    EmFit fit;
    try {
      fit = fit_mixture_em(predictors, K, opts);
    } catch (const std::exception&) {
      break;
    }
    // Enforce the minimum hard-assignment count per component.
    std::vector<long> counts(K, 0);
    for (Eigen::Index i = 0; i < predictors.n(); ++i)
      counts[fit.mixture.hard_assign(predictors.rows.row(i))]++;
    if (*std::min_element(counts.begin(), counts.end()) < min_count) break;
    if (K > 1) {
      double improve = (prev_bic - fit.bic) / std::abs(prev_bic);
      if (improve < rel_improve) break;
    }
    chosen = K;
    prev_bic = fit.bic;
  }
  return chosen;
}

GaussianSuffStats GaussianSuffStats::from_data(const Eigen::MatrixXd& rows) {
  GaussianSuffStats s;
  s.n = rows.rows();
  s.mean = rows.colwise().mean();
  Eigen::MatrixXd c = rows.rowwise() - s.mean.transpose();
  s.scatter = c.transpose() * c;
  return s;
}

double GaussianSuffStats::log_lik(const GaussianDist& dist) const {
  const double d = static_cast<double>(dist.dim());
  Eigen::MatrixXd sol = dist.chol.triangularView<Eigen::Lower>().solve(scatter);
  dist.chol.transpose()
      .triangularView<Eigen::Upper>()
      .solveInPlace(sol);  // Sigma^{-1} S
  Eigen::VectorXd dm =
      dist.chol.triangularView<Eigen::Lower>().solve(mean - dist.mu);
  return -0.5 * (static_cast<double>(n) * (d * kLogTwoPi + dist.log_det) +
                 sol.trace() + static_cast<double>(n) * dm.squaredNorm());
}

}  // namespace sda
