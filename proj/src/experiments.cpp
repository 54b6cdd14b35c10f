#include "sda/experiments.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sda/stats.hpp"

namespace sda {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Static partition of [0, count) across workers; each item owns its seeds so
// the result is independent of the thread count.
void parallel_for(long count, int threads,
                  const std::function<void(long)>& body) {
  if (threads <= 1 || count <= 1) {
    for (long i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<long> next{0};
  auto worker = [&]() {
    for (;;) {
      long i = next.fetch_add(1);
      if (i >= count) return;
      body(i);
    }
  };
  std::vector<std::thread> pool;
  int nthreads = static_cast<int>(std::min<long>(threads, count));
  pool.reserve(static_cast<std::size_t>(nthreads));
  for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

double golden_section_max(const std::function<double(double)>& f, double lo,
                          double hi, double tol = 1e-7) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double x1 = b - r * (b - a), x2 = a + r * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > tol) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + r * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - r * (b - a);
      f1 = f(x1);
    }
  }
  return 0.5 * (a + b);
}

Eigen::VectorXd std_normal_vector(Eigen::Index d, std::mt19937_64& rng) {
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z[i] = normal_quantile(canonical(rng));
  return z;
}

// Sign-weighted posterior mean of a vector-valued function of theta.
Eigen::VectorXd signed_mean(const std::vector<SignedDraw>& draws, long burn_in,
                            const std::function<Eigen::VectorXd(
                                const Eigen::VectorXd&)>& f) {
  Eigen::VectorXd num;
  double den = 0.0;
  for (std::size_t i = static_cast<std::size_t>(burn_in); i < draws.size();
       ++i) {
    Eigen::VectorXd v = f(draws[i].theta) * draws[i].sign;
    if (num.size() == 0)
      num = v;
    else
      num += v;
    den += draws[i].sign;
  }
  if (den == 0.0) throw std::runtime_error("signed_mean: sign sum is zero");
  return num / den;
}

double rmse(const Eigen::VectorXd& est, const Eigen::VectorXd& truth) {
  return std::sqrt((est - truth).squaredNorm() /
                   static_cast<double>(truth.size()));
}

double negative_fraction(const std::vector<SignedDraw>& draws) {
  if (draws.empty()) return 0.0;
  long neg = 0;
  for (const auto& d : draws)
    if (d.sign < 0) ++neg;
  return static_cast<double>(neg) / static_cast<double>(draws.size());
}

}  // namespace

void ResultTable::add(const std::string& setting, const std::string& metric,
                      double v, double sd) {
  rows.push_back({setting, metric, v, sd});
}

double ResultTable::value(const std::string& setting,
                          const std::string& metric) const {
  for (const auto& r : rows)
    if (r.setting == setting && r.metric == metric) return r.value;
  throw std::out_of_range("ResultTable: no row " + setting + "/" + metric);
}

void ResultTable::to_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "setting,metric,value,sd\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.setting << "," << r.metric << "," << r.value << ",";
    if (std::isfinite(r.sd)) out << r.sd;
    out << "\n";
  }
}

void write_manifest(const std::string& path, const nlohmann::json& config,
                    std::uint64_t seed) {
  std::string revision = "unknown";
  if (FILE* pipe = popen("git rev-parse HEAD 2>/dev/null", "r")) {
    char buf[64] = {0};
    if (fgets(buf, sizeof(buf), pipe)) {
      revision = buf;
      while (!revision.empty() &&
             (revision.back() == '\n' || revision.back() == '\r'))
        revision.pop_back();
    }
    pclose(pipe);
  }
  nlohmann::json manifest;
  manifest["config"] = config;
  manifest["seed"] = seed;
  manifest["git_revision"] = revision;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << manifest.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Correlation recovery.

namespace {

constexpr double kT1Mu1 = 2.0, kT1Mu2 = 5.0, kT1Sd = 0.5;

MicroData sample_bvn(double rho, long n, std::mt19937_64& rng) {
  MicroData out;
  out.rows.resize(n, 2);
  const double c = std::sqrt(1.0 - rho * rho);
  for (long i = 0; i < n; ++i) {
    double z1 = normal_quantile(canonical(rng));
    double z2 = normal_quantile(canonical(rng));
    out.rows(i, 0) = kT1Mu1 + kT1Sd * z1;
    out.rows(i, 1) = kT1Mu2 + kT1Sd * (rho * z1 + c * z2);
  }
  return out;
}

}  // namespace

double bvn_rectangle_loglik(const std::vector<RectangleSymbol>& symbols,
                            double rho) {
  Eigen::MatrixXd sigma(2, 2);
  sigma << kT1Sd * kT1Sd, rho * kT1Sd * kT1Sd, rho * kT1Sd * kT1Sd,
      kT1Sd * kT1Sd;
  Eigen::VectorXd mu(2);
  mu << kT1Mu1, kT1Mu2;
  GaussianDist dist = GaussianDist::from_covariance(mu, sigma);

  double ll = 0.0;
  for (const auto& s : symbols) {
    double p = bvn_box_prob(kT1Mu1, kT1Mu2, kT1Sd, kT1Sd, rho, s.lower[0],
                            s.upper[0], s.lower[1], s.upper[1]);
    ll += static_cast<double>(s.n_r()) * std::log(std::max(p, 1e-300));
    ll += dist.log_density_rows(s.boundary_points);
    ll += dist.log_density_rows(s.external_points);
  }
  return ll;
}

double table1_rho_mle(const std::vector<RectangleSymbol>& symbols) {
  return golden_section_max(
      [&](double rho) { return bvn_rectangle_loglik(symbols, rho); }, -0.995,
      0.995);
}

ResultTable run_table1(const Table1Config& config) {
  ResultTable table;
  std::uint64_t cell_id = 0;
  for (double rho : config.rho_grid) {
    for (int m : config.m_grid) {
      for (long n : config.n_grid) {
        ++cell_id;
        std::vector<double> rho_hat(
            static_cast<std::size_t>(config.replicates));
        parallel_for(config.replicates, config.threads, [&](long rep) {
          std::mt19937_64 rng(
              mix_seed(config.seed, cell_id * 1000003ULL +
                                        static_cast<std::uint64_t>(rep)));
          std::vector<RectangleSymbol> symbols;
          symbols.reserve(static_cast<std::size_t>(m));
          for (int j = 0; j < m; ++j)
            symbols.push_back(
                build_minmax_rectangle(sample_bvn(rho, n, rng)));
          rho_hat[static_cast<std::size_t>(rep)] = table1_rho_mle(symbols);
        });
        std::ostringstream setting;
        setting << "rho=" << rho << ",m=" << m << ",n=" << n;
        table.add(setting.str(), "rho_hat_mean", mean(rho_hat),
                  sample_sd(rho_hat) /
                      std::sqrt(static_cast<double>(config.replicates)));
        table.add(setting.str(), "rho_hat_sd", sample_sd(rho_hat));
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Estimator comparison.

GaussianDist equicorrelated_gaussian(int d) {
  Eigen::MatrixXd sigma = 0.5 * Eigen::MatrixXd::Identity(d, d) +
                          0.5 * Eigen::MatrixXd::Ones(d, d);
  return GaussianDist::from_covariance(Eigen::VectorXd::Zero(d), sigma);
}

Box centered_cube(int d, double half_width) {
  Box box;
  box.lower = Eigen::VectorXd::Constant(d, -half_width);
  box.upper = Eigen::VectorXd::Constant(d, half_width);
  return box;
}

std::vector<EstimatorCell> run_estimator_cells(
    const EstimatorComparisonConfig& config) {
  std::vector<EstimatorCell> cells;
  for (std::size_t di = 0; di < config.dims.size(); ++di) {
    const int d = config.dims[di];
    GaussianDist dist = equicorrelated_gaussian(d);
    Box box = centered_cube(d, 2.0);
    TemperatureLadder ladder{config.T, 5.0};

    EstimatorCell cell;
    cell.d = d;
    {
      std::mt19937_64 rng(mix_seed(config.seed, 900 + di));
      UniformBlockStore u(256, rng);
      IntegralEstimate ref =
          sov_truncated_normal(dist, box, config.oracle_M, u);
      cell.oracle = static_cast<double>(config.exponent_count) *
                    std::log(mean(ref.replicates));
    }

    const std::size_t R = static_cast<std::size_t>(config.replicates);
    std::vector<double> path_vals(R), taylor_vals(R), path_sec(R),
        taylor_sec(R);
    parallel_for(config.replicates, config.threads, [&](long rep) {
      std::mt19937_64 rng(
          mix_seed(config.seed, di * 1000003ULL + static_cast<std::uint64_t>(rep)));
      UniformBlockStore u(100, rng);
      auto t0 = Clock::now();
      path_vals[static_cast<std::size_t>(rep)] =
          path_sampler_log_integral(dist, box, ladder, config.M,
                                    config.exponent_count, u)
              .value;
      path_sec[static_cast<std::size_t>(rep)] = seconds_since(t0);
      t0 = Clock::now();
      IntegralEstimate c = sov_truncated_normal(dist, box, config.M, u);
      taylor_vals[static_cast<std::size_t>(rep)] =
          taylor_log_integral(c, config.exponent_count).value;
      taylor_sec[static_cast<std::size_t>(rep)] = seconds_since(t0);
    });
    cell.path_mean = mean(path_vals);
    cell.path_var = sample_variance(path_vals);
    cell.taylor_mean = mean(taylor_vals);
    cell.taylor_var = sample_variance(taylor_vals);
    for (std::size_t r = 0; r < R; ++r) {
      cell.path_seconds += path_sec[r];
      cell.taylor_seconds += taylor_sec[r];
    }
    cells.push_back(cell);
  }
  return cells;
}

ResultTable run_estimator_comparison(const EstimatorComparisonConfig& config) {
  ResultTable table;
  for (const auto& cell : run_estimator_cells(config)) {
    std::string setting = "d=" + std::to_string(cell.d);
    table.add(setting, "oracle", cell.oracle);
    table.add(setting, "path_mean", cell.path_mean);
    table.add(setting, "path_var", cell.path_var);
    table.add(setting, "taylor_mean", cell.taylor_mean);
    table.add(setting, "taylor_var", cell.taylor_var);
    table.add(setting, "path_seconds", cell.path_seconds);
    table.add(setting, "taylor_seconds", cell.taylor_seconds);
    table.add(setting, "time_ratio",
              cell.taylor_seconds / cell.path_seconds);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Factor model experiment.

Eigen::VectorXd factor_to_theta(const FactorParams& params) {
  const int d = static_cast<int>(params.d()), k = static_cast<int>(params.k());
  int nl = 0;
  for (int j = 0; j < k; ++j) nl += d - j;
  Eigen::VectorXd theta(d + nl + d);
  theta.head(d) = params.mu;
  int pos = d;
  for (int j = 0; j < k; ++j)
    for (int i = j; i < d; ++i) theta[pos++] = params.loadings(i, j);
  theta.tail(d) = params.diag_noise.array().log();
  return theta;
}

FactorParams theta_to_factor(const Eigen::VectorXd& theta, int d, int k) {
  FactorParams p;
  p.mu = theta.head(d);
  p.loadings = Eigen::MatrixXd::Zero(d, k);
  int pos = d;
  for (int j = 0; j < k; ++j)
    for (int i = j; i < d; ++i) p.loadings(i, j) = theta[pos++];
  p.diag_noise = theta.tail(d).array().exp();
  return p;
}

std::vector<std::vector<int>> factor_blocks(int d, int k) {
  int nl = 0;
  for (int j = 0; j < k; ++j) nl += d - j;
  std::vector<std::vector<int>> blocks(3);
  for (int i = 0; i < d; ++i) blocks[0].push_back(i);
  for (int i = 0; i < nl; ++i) blocks[1].push_back(d + i);
  for (int i = 0; i < d; ++i) blocks[2].push_back(d + nl + i);
  return blocks;
}

FactorParams make_factor_truth(int d, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FactorParams p;
  p.mu = Eigen::VectorXd::LinSpaced(d, -1.0, 1.0);
  p.loadings = Eigen::MatrixXd::Zero(d, k);
  for (int j = 0; j < k; ++j)
    for (int i = j; i < d; ++i)
      p.loadings(i, j) = -0.5 + canonical(rng);
  p.diag_noise.resize(d);
  for (int i = 0; i < d; ++i)
    p.diag_noise[i] = std::exp(0.25 * canonical(rng));
  return p;
}

MicroData sample_gaussian_data(const GaussianDist& dist, long n,
                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MicroData out;
  out.rows.resize(n, dist.dim());
  for (long i = 0; i < n; ++i)
    out.rows.row(i) =
        (dist.mu + dist.chol * std_normal_vector(dist.dim(), rng)).transpose();
  return out;
}

namespace {

// Moment-based start: top-k eigenpairs of the sample covariance for the
// loadings, residual diagonal for the noise.
Eigen::VectorXd factor_init(const MicroData& data, int d, int k) {
  Eigen::VectorXd mu = data.rows.colwise().mean();
  Eigen::MatrixXd centered = data.rows.rowwise() - mu.transpose();
  Eigen::MatrixXd s = centered.transpose() * centered /
                      static_cast<double>(data.n() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
  FactorParams p;
  p.mu = mu;
  p.loadings = Eigen::MatrixXd::Zero(d, k);
  for (int j = 0; j < k; ++j) {
    int idx = d - 1 - j;  // eigenvalues ascending
    double lam = std::max(eig.eigenvalues()[idx] - eig.eigenvalues().head(d - k).mean(), 0.05);
    Eigen::VectorXd col = eig.eigenvectors().col(idx) * std::sqrt(lam);
    if (col[j] < 0.0) col = -col;
    p.loadings.col(j) = col;
  }
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < j; ++i) p.loadings(i, j) = 0.0;
  p.diag_noise =
      (s.diagonal() - (p.loadings * p.loadings.transpose()).diagonal())
          .cwiseMax(0.05);
  return factor_to_theta(p);
}

LogPrior gaussian_prior(double sd) {
  double v2 = 2.0 * sd * sd;
  return [v2](const Eigen::VectorXd& theta) {
    return -theta.squaredNorm() / v2;
  };
}

Eigen::VectorXd lower_tri_vec(const Eigen::MatrixXd& m) {
  const Eigen::Index d = m.rows();
  Eigen::VectorXd out(d * (d + 1) / 2);
  Eigen::Index pos = 0;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j; i < d; ++i) out[pos++] = m(i, j);
  return out;
}

}  // namespace

FactorReplicateResult run_factor_replicate(const FactorExperimentConfig& config,
                                           int replicate) {
  const int d = config.d, k = config.k;
  FactorParams truth =
      make_factor_truth(d, k, mix_seed(config.seed, 77ULL + replicate));
  MicroData data = sample_gaussian_data(truth.dist(), config.n,
                                        mix_seed(config.seed, 978ULL + replicate));
  RectangleSymbol symbol = build_quantile_rectangle(data, config.q);

  Eigen::VectorXd theta0 = factor_init(data, d, k);
  auto blocks = factor_blocks(d, k);
  LogPrior prior = gaussian_prior(10.0);

  SignedTarget full_target = [&](const Eigen::VectorXd& theta,
                                 const UniformBlockStore&) {
    GaussianDist dist = theta_to_factor(theta, d, k).dist();
    SignedLogLik out;
    out.method = "full";
    out.log_abs = dist.log_density_rows(data.rows);
    return out;
  };

  SymbolicLikConfig sda_cfg;
  sda_cfg.estimator = EstimatorChoice::approximate_taylor;
  sda_cfg.M = config.M;
  SignedTarget sda_target = [&](const Eigen::VectorXd& theta,
                                const UniformBlockStore& u) {
    GaussianDist dist = theta_to_factor(theta, d, k).dist();
    return symbolic_loglik(symbol, dist, sda_cfg, u);
  };

  PmmhConfig full_cfg;
  full_cfg.iterations = config.iterations;
  full_cfg.num_blocks = 1;
  full_cfg.seed = mix_seed(config.seed, 5000ULL + replicate);

  PmmhConfig sda_pmmh_cfg = full_cfg;
  sda_pmmh_cfg.num_blocks = config.M;
  sda_pmmh_cfg.seed = mix_seed(config.seed, 6000ULL + replicate);

  FactorReplicateResult r;
  auto t0 = Clock::now();
  ChainResult full = signed_block_pmmh_mwg(full_target, prior, theta0, blocks,
                                           full_cfg);
  r.full_seconds = seconds_since(t0);
  t0 = Clock::now();
  ChainResult sda = signed_block_pmmh_mwg(sda_target, prior, theta0, blocks,
                                          sda_pmmh_cfg);
  r.sda_seconds = seconds_since(t0);

  const long burn = full_cfg.effective_burn_in();
  auto mu_of = [&](const Eigen::VectorXd& theta) -> Eigen::VectorXd {
    return theta.head(d);
  };
  auto sigma_of = [&](const Eigen::VectorXd& theta) -> Eigen::VectorXd {
    return lower_tri_vec(theta_to_factor(theta, d, k).covariance());
  };
  Eigen::VectorXd sigma_truth = lower_tri_vec(truth.covariance());

  r.rmse_mu_full = rmse(signed_mean(full.draws, burn, mu_of), truth.mu);
  r.rmse_mu_sda = rmse(signed_mean(sda.draws, burn, mu_of), truth.mu);
  r.rmse_sigma_full = rmse(signed_mean(full.draws, burn, sigma_of), sigma_truth);
  r.rmse_sigma_sda = rmse(signed_mean(sda.draws, burn, sigma_of), sigma_truth);
  r.full_acceptance = full.acceptance_after(burn);
  r.sda_acceptance = sda.acceptance_after(burn);
  r.sda_negative_sign_fraction = negative_fraction(sda.draws);
  return r;
}

ResultTable run_factor_experiment(const FactorExperimentConfig& config) {
  std::vector<FactorReplicateResult> reps(
      static_cast<std::size_t>(config.replicates));
  parallel_for(config.replicates, config.threads, [&](long rep) {
    reps[static_cast<std::size_t>(rep)] =
        run_factor_replicate(config, static_cast<int>(rep));
  });

  auto avg = [&](const std::function<double(const FactorReplicateResult&)>& f) {
    double s = 0.0;
    for (const auto& r : reps) s += f(r);
    return s / static_cast<double>(reps.size());
  };

  ResultTable table;
  std::string setting =
      "d=" + std::to_string(config.d) + ",n=" + std::to_string(config.n);
  double mu_full = avg([](const auto& r) { return r.rmse_mu_full; });
  double mu_sda = avg([](const auto& r) { return r.rmse_mu_sda; });
  double sg_full = avg([](const auto& r) { return r.rmse_sigma_full; });
  double sg_sda = avg([](const auto& r) { return r.rmse_sigma_sda; });
  double t_full = avg([](const auto& r) { return r.full_seconds; });
  double t_sda = avg([](const auto& r) { return r.sda_seconds; });
  table.add(setting, "rmse_mu_full", mu_full);
  table.add(setting, "rmse_mu_sda", mu_sda);
  table.add(setting, "rmse_mu_ratio", mu_sda / mu_full);
  table.add(setting, "rmse_sigma_full", sg_full);
  table.add(setting, "rmse_sigma_sda", sg_sda);
  table.add(setting, "rmse_sigma_ratio", sg_sda / sg_full);
  table.add(setting, "full_seconds", t_full);
  table.add(setting, "sda_seconds", t_sda);
  table.add(setting, "time_ratio", t_sda / t_full);
  table.add(setting, "full_acceptance",
            avg([](const auto& r) { return r.full_acceptance; }));
  table.add(setting, "sda_acceptance",
            avg([](const auto& r) { return r.sda_acceptance; }));
  table.add(setting, "sda_negative_sign_fraction",
            avg([](const auto& r) { return r.sda_negative_sign_fraction; }));
  return table;
}

FactorSignCheckResult run_factor_sign_check(const FactorSignCheckConfig& config) {
  const int d = config.d, k = config.k;
  FactorParams truth = make_factor_truth(d, k, mix_seed(config.seed, 77ULL));
  MicroData data =
      sample_gaussian_data(truth.dist(), config.n, mix_seed(config.seed, 978ULL));
  RectangleSymbol symbol = build_quantile_rectangle(data, config.q);

  SymbolicLikConfig cfg;
  cfg.estimator = EstimatorChoice::exact_path_poisson;
  cfg.ladder.T = config.T;
  cfg.path_M = config.path_M;
  cfg.poisson.bound_mode = BoundMode::marginal_cdf;

  SignedTarget target = [&](const Eigen::VectorXd& theta,
                            const UniformBlockStore& u) {
    GaussianDist dist = theta_to_factor(theta, d, k).dist();
    return symbolic_loglik(symbol, dist, cfg, u);
  };

  PmmhConfig pmmh_cfg;
  pmmh_cfg.iterations = config.iterations;
  pmmh_cfg.num_blocks = config.num_blocks;
  pmmh_cfg.seed = mix_seed(config.seed, 5000ULL);

  ChainResult chain = signed_block_pmmh_mwg(
      target, gaussian_prior(10.0), factor_init(data, d, k),
      factor_blocks(d, k), pmmh_cfg);

  FactorSignCheckResult result;
  result.negative_sign_fraction = negative_fraction(chain.draws);
  const long burn = pmmh_cfg.effective_burn_in();
  result.acceptance_rate = chain.acceptance_after(burn);
  result.rmse_mu = rmse(
      signed_mean(chain.draws, burn,
                  [&](const Eigen::VectorXd& theta) -> Eigen::VectorXd {
                    return theta.head(d);
                  }),
      truth.mu);
  return result;
}

// ---------------------------------------------------------------------------
// Regression experiment.

RegressionData make_regression_data(const RegressionExperimentConfig& config) {
  RegressionData data;
  const int G = config.groups;
  data.truth.intercepts = Eigen::VectorXd::LinSpaced(G, 1.5, 1.5 + 0.5 * (G - 1));
  data.truth.beta1 = 1.2;
  data.truth.beta2 = -0.5;
  data.truth.alpha0 = 0.4;
  data.truth.alpha1 = 0.8;

  for (int g = 0; g < G; ++g) {
    NormalMixture mix;
    mix.weights = Eigen::VectorXd(2);
    mix.weights << 0.6, 0.4;
    Eigen::VectorXd m0(2), m1(2);
    m0 << 0.3 * g, 3.0 + 0.1 * g;
    m1 << 2.0 + 0.3 * g, 3.8 + 0.1 * g;
    Eigen::MatrixXd c0(2, 2), c1(2, 2);
    c0 << 1.0, 0.3, 0.3, 0.5;
    c1 << 1.5, -0.2, -0.2, 0.4;
    mix.means = {m0, m1};
    mix.covs = {c0, c1};
    mix.finalize();

    std::mt19937_64 rng(mix_seed(config.seed, 31ULL + g));
    MicroData pred;
    pred.rows.resize(config.n_per_group, 2);
    pred.column_names = {"x1", "x2"};
    for (long i = 0; i < config.n_per_group; ++i)
      pred.rows.row(i) = mix.sample(rng).transpose();
    double x2bar = pred.rows.col(1).mean();

    Eigen::VectorXd y(config.n_per_group);
    for (long i = 0; i < config.n_per_group; ++i) {
      double x1 = pred.rows(i, 0), x2 = pred.rows(i, 1);
      double sd = std::exp(0.5 * data.truth.log_sigma2(x2, x2bar));
      y[i] = data.truth.intercepts[g] + data.truth.beta1 * x1 +
             data.truth.beta2 * x2 + sd * normal_quantile(canonical(rng));
    }
    data.y.push_back(std::move(y));
    data.predictors.push_back(std::move(pred));
    data.x2bar.push_back(x2bar);
  }
  return data;
}

Eigen::VectorXd regression_to_theta(const HeteroRegParams& params) {
  const int G = static_cast<int>(params.intercepts.size());
  Eigen::VectorXd theta(G + 4);
  theta.head(G) = params.intercepts;
  theta[G] = params.beta1;
  theta[G + 1] = params.beta2;
  theta[G + 2] = params.alpha0;
  theta[G + 3] = params.alpha1;
  return theta;
}

HeteroRegParams theta_to_regression(const Eigen::VectorXd& theta, int groups) {
  HeteroRegParams p;
  p.intercepts = theta.head(groups);
  p.beta1 = theta[groups];
  p.beta2 = theta[groups + 1];
  p.alpha0 = theta[groups + 2];
  p.alpha1 = theta[groups + 3];
  return p;
}

RegressionSymbolisation symbolize_regression(
    const RegressionData& data, double q,
    const RegressionExperimentConfig& config) {
  RegressionSymbolisation sym;
  auto t0 = Clock::now();
  EmOptions opts;
  opts.seed = mix_seed(config.seed, 808ULL);
  opts.restarts = config.em_restarts;
  opts.max_iterations = config.em_max_iterations;
  for (std::size_t g = 0; g < data.predictors.size(); ++g) {
    const MicroData& full = data.predictors[g];
    MicroData fit_data = full;
    long min_rows = config.min_component_rows;
    if (config.em_subsample > 0 && full.n() > config.em_subsample) {
      // Strided subsample for the mixture fit; rows are exchangeable.
      const long stride = full.n() / config.em_subsample;
      fit_data.rows.resize(config.em_subsample, full.d());
      for (long i = 0; i < config.em_subsample; ++i)
        fit_data.rows.row(i) = full.rows.row(i * stride);
      min_rows = std::max(1L, min_rows * config.em_subsample / full.n());
    }
    int K = select_K(fit_data, config.K_max, min_rows, 0.01, opts);
    NormalMixture mix = fit_mixture_em(fit_data, K, opts).mixture;
    sym.rectangles.push_back(build_component_rectangles(
        data.y[g], full, mix, q, config.min_component_rows));
    sym.mixtures.push_back(std::move(mix));
  }
  sym.prep_seconds = seconds_since(t0);
  return sym;
}

RegressionSdaTarget::RegressionSdaTarget(const RegressionData& data,
                                         const RegressionSymbolisation& sym,
                                         std::size_t M)
    : data_(&data), M_(M) {
  std::uint64_t offset = 0;
  for (std::size_t g = 0; g < sym.rectangles.size(); ++g) {
    for (const auto& comp : sym.rectangles[g].components) {
      RectangleRef ref;
      ref.group = static_cast<int>(g);
      ref.symbol = &comp.rectangle;
      ref.mixture = &sym.mixtures[g];
      ref.key_offset = offset;
      offset += 0x1000000ULL;
      rects_.push_back(ref);
    }
  }
  draws_.assign(rects_.size(), std::vector<Eigen::VectorXd>(M_));
}

void RegressionSdaTarget::refresh_draws(const UniformBlockStore& u) const {
  const std::size_t U = u.num_blocks();
  const bool full_refresh = cached_seeds_.size() != U;
  if (full_refresh) cached_seeds_.assign(U, 0);
  for (std::size_t m = 0; m < M_; ++m) {
    const std::size_t b = m % U;
    if (!full_refresh && cached_seeds_[b] == u.block_seed(b)) continue;
    for (std::size_t r = 0; r < rects_.size(); ++r) {
      const auto& ref = rects_[r];
      UniformStream stream = u.stream(b, ref.key_offset + m);
      const Eigen::Index dx = ref.symbol->dim() - 1;
      draws_[r][m] = truncated_mixture_draw(*ref.mixture,
                                            ref.symbol->lower.tail(dx),
                                            ref.symbol->upper.tail(dx), stream);
    }
  }
  for (std::size_t b = 0; b < U; ++b) cached_seeds_[b] = u.block_seed(b);
}

SignedLogLik RegressionSdaTarget::operator()(const Eigen::VectorXd& theta,
                                             const UniformBlockStore& u) const {
  refresh_draws(u);
  const int G = static_cast<int>(data_->predictors.size());
  HeteroRegParams params = theta_to_regression(theta, G);

  SignedLogLik out;
  out.method = "regression_sda";
  out.log_abs = 0.0;
  for (std::size_t r = 0; r < rects_.size(); ++r) {
    const auto& ref = rects_[r];
    const RectangleSymbol& s = *ref.symbol;
    const double x2bar = data_->x2bar[static_cast<std::size_t>(ref.group)];
    const double yl = s.lower[0], yu = s.upper[0];

    // Streaming Taylor accumulation over the conditional replicates; this is
    // the hot loop of the chain, so avoid per-evaluation allocations.
    double sum_c = 0.0, sumsq_c = 0.0, sum_l = 0.0, sumsq_l = 0.0;
    for (std::size_t m = 0; m < M_; ++m) {
      const Eigen::VectorXd& x = draws_[r][m];
      double mu = params.intercepts[ref.group] + params.beta1 * x[0] +
                  params.beta2 * x[1];
      double sd = std::exp(0.5 * params.log_sigma2(x[1], x2bar));
      double p = std::max(
          normal_cdf((yu - mu) / sd) - normal_cdf((yl - mu) / sd), 1e-300);
      double lp = std::log(p);
      sum_c += p;
      sumsq_c += p * p;
      sum_l += lp;
      sumsq_l += lp * lp;
    }
    const double Md = static_cast<double>(M_);
    const double mean_c = sum_c / Md;
    const double var_c = (sumsq_c - Md * mean_c * mean_c) / (Md - 1.0);
    const double mean_l = sum_l / Md;
    const double var_l = (sumsq_l - Md * mean_l * mean_l) / (Md - 1.0);
    const double nr = static_cast<double>(s.n_r());
    const double value = nr * (mean_l + var_c / (2.0 * mean_c * mean_c));
    const double variance = nr * nr * var_l / Md;
    out.add_log(value - 0.5 * variance);

    // Boundary and external rows enter through the conditional density; the
    // predictor law does not depend on theta and drops as a constant.
    for (const auto* pts : {&s.boundary_points, &s.external_points}) {
      for (Eigen::Index i = 0; i < pts->rows(); ++i)
        out.add_log(params.log_density((*pts)(i, 0), (*pts)(i, 1),
                                       (*pts)(i, 2), ref.group, x2bar));
    }
  }
  return out;
}

namespace {

double regression_full_loglik(const RegressionData& data,
                              const HeteroRegParams& params) {
  double ll = 0.0;
  for (std::size_t g = 0; g < data.predictors.size(); ++g) {
    const auto& x = data.predictors[g].rows;
    const auto& y = data.y[g];
    const double x2bar = data.x2bar[g];
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double m = params.intercepts[static_cast<int>(g)] +
                 params.beta1 * x(i, 0) + params.beta2 * x(i, 1);
      double ls2 = params.alpha0 + params.alpha1 * (x(i, 1) - x2bar);
      double e = y[i] - m;
      ll += -0.5 * (kLogTwoPi + ls2 + e * e * std::exp(-ls2));
    }
  }
  return ll;
}

// Least-squares start for the mean parameters; residual variance for alpha0.
Eigen::VectorXd regression_init(const RegressionData& data) {
  const int G = static_cast<int>(data.predictors.size());
  long n = 0;
  for (const auto& p : data.predictors) n += p.n();
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, G + 2);
  Eigen::VectorXd Y(n);
  long row = 0;
  for (int g = 0; g < G; ++g) {
    const auto& p = data.predictors[static_cast<std::size_t>(g)];
    for (Eigen::Index i = 0; i < p.n(); ++i, ++row) {
      X(row, g) = 1.0;
      X(row, G) = p.rows(i, 0);
      X(row, G + 1) = p.rows(i, 1);
      Y[row] = data.y[static_cast<std::size_t>(g)][i];
    }
  }
  Eigen::VectorXd beta = (X.transpose() * X).ldlt().solve(X.transpose() * Y);
  double rss = (Y - X * beta).squaredNorm() / static_cast<double>(n);
  Eigen::VectorXd theta(G + 4);
  theta.head(G + 2) = beta;
  theta[G + 2] = std::log(std::max(rss, 1e-6));
  theta[G + 3] = 0.0;
  return theta;
}

std::vector<std::vector<int>> regression_blocks(int G) {
  std::vector<std::vector<int>> blocks(3);
  for (int g = 0; g < G; ++g) blocks[0].push_back(g);
  blocks[1] = {G, G + 1};
  blocks[2] = {G + 2, G + 3};
  return blocks;
}

}  // namespace

RegressionExperimentResult run_regression_cells(
    const RegressionExperimentConfig& config) {
  RegressionData data = make_regression_data(config);
  const int G = config.groups;
  Eigen::VectorXd theta0 = regression_init(data);
  LogPrior prior = gaussian_prior(10.0);
  auto blocks = regression_blocks(G);

  SignedTarget full_target = [&](const Eigen::VectorXd& theta,
                                 const UniformBlockStore&) {
    SignedLogLik out;
    out.method = "regression_full";
    out.log_abs =
        regression_full_loglik(data, theta_to_regression(theta, G));
    return out;
  };

  PmmhConfig full_cfg;
  full_cfg.iterations = config.iterations;
  full_cfg.num_blocks = 1;
  full_cfg.seed = mix_seed(config.seed, 42ULL);

  RegressionExperimentResult result;
  auto t0 = Clock::now();
  ChainResult full =
      signed_block_pmmh_mwg(full_target, prior, theta0, blocks, full_cfg);
  result.full_seconds = seconds_since(t0);
  const long burn = full_cfg.effective_burn_in();
  result.full_acceptance = full.acceptance_after(burn);
  result.full_posterior_mean = full.signed_posterior_mean(burn);

  const long n_total = static_cast<long>(G) * config.n_per_group;
  for (double q : config.q_grid) {
    RegressionQResult cell;
    cell.q = q;
    RegressionSymbolisation sym = symbolize_regression(data, q, config);
    cell.prep_seconds = sym.prep_seconds;
    long external = 0;
    for (const auto& set : sym.rectangles) external += set.total_external();
    cell.external_fraction =
        static_cast<double>(external) / static_cast<double>(n_total);

    RegressionSdaTarget sda_target(data, sym, config.M);
    PmmhConfig sda_cfg;
    sda_cfg.iterations = config.iterations;
    sda_cfg.num_blocks = config.M;
    sda_cfg.seed = mix_seed(config.seed, 4242ULL + static_cast<std::uint64_t>(q * 1e6));

    t0 = Clock::now();
    ChainResult sda = signed_block_pmmh_mwg(
        [&](const Eigen::VectorXd& theta, const UniformBlockStore& u) {
          return sda_target(theta, u);
        },
        prior, theta0, blocks, sda_cfg);
    cell.sda_seconds = seconds_since(t0);
    cell.sda_acceptance = sda.acceptance_after(burn);

    Eigen::VectorXd sda_mean = sda.signed_posterior_mean(burn);
    const Eigen::VectorXd& f = result.full_posterior_mean;
    double mape = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i)
      mape += std::abs(f[i] - sda_mean[i]) / std::abs(f[i]);
    cell.mape = mape / static_cast<double>(f.size());
    cell.rmse = rmse(sda_mean, f);
    result.cells.push_back(cell);
  }
  return result;
}

ResultTable run_regression_experiment(const RegressionExperimentConfig& config) {
  RegressionExperimentResult res = run_regression_cells(config);
  ResultTable table;
  table.add("full", "seconds", res.full_seconds);
  table.add("full", "acceptance", res.full_acceptance);
  for (const auto& cell : res.cells) {
    std::ostringstream setting;
    setting << "q=" << cell.q;
    table.add(setting.str(), "mape", cell.mape);
    table.add(setting.str(), "rmse", cell.rmse);
    table.add(setting.str(), "external_fraction", cell.external_fraction);
    table.add(setting.str(), "prep_seconds", cell.prep_seconds);
    table.add(setting.str(), "sda_seconds", cell.sda_seconds);
    table.add(setting.str(), "time_ratio",
              (cell.prep_seconds + cell.sda_seconds) / res.full_seconds);
    table.add(setting.str(), "acceptance", cell.sda_acceptance);
  }
  return table;
}

}  // namespace sda
