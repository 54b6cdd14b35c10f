// Command-line harness for the symbolic-likelihood experiments: data
// symbolization, chain sampling, and the reproduction studies.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sda/experiments.hpp"

namespace {

namespace fs = std::filesystem;

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

int run_table1_cmd(const sda::Table1Config& config, const std::string& out_dir) {
  ensure_dir(out_dir);
  sda::ResultTable table = sda::run_table1(config);
  table.to_csv(out_dir + "/table1.csv");
  nlohmann::json cfg{{"experiment", "table1"},
                     {"replicates", config.replicates},
                     {"rho_grid", config.rho_grid},
                     {"m_grid", config.m_grid},
                     {"n_grid", config.n_grid}};
  sda::write_manifest(out_dir + "/table1_manifest.json", cfg, config.seed);
  for (const auto& r : table.rows)
    std::cout << r.setting << " " << r.metric << " = " << r.value << "\n";
  return 0;
}

int run_estimators_cmd(const sda::EstimatorComparisonConfig& config,
                       const std::string& out_dir) {
  ensure_dir(out_dir);
  sda::ResultTable table = sda::run_estimator_comparison(config);
  table.to_csv(out_dir + "/estimators.csv");
  nlohmann::json cfg{{"experiment", "estimators"},
                     {"dims", config.dims},
                     {"replicates", config.replicates},
                     {"T", config.T},
                     {"M", config.M}};
  sda::write_manifest(out_dir + "/estimators_manifest.json", cfg, config.seed);
  for (const auto& r : table.rows)
    std::cout << r.setting << " " << r.metric << " = " << r.value << "\n";
  return 0;
}

int run_factor_cmd(const sda::FactorExperimentConfig& config,
                   const std::string& out_dir) {
  ensure_dir(out_dir);
  sda::ResultTable table = sda::run_factor_experiment(config);
  table.to_csv(out_dir + "/factor.csv");
  nlohmann::json cfg{{"experiment", "factor"}, {"d", config.d},
                     {"k", config.k},          {"n", config.n},
                     {"q", config.q},          {"iterations", config.iterations},
                     {"M", config.M},          {"replicates", config.replicates}};
  sda::write_manifest(out_dir + "/factor_manifest.json", cfg, config.seed);
  for (const auto& r : table.rows)
    std::cout << r.setting << " " << r.metric << " = " << r.value << "\n";
  return 0;
}

int run_regression_cmd(const sda::RegressionExperimentConfig& config,
                       const std::string& out_dir) {
  ensure_dir(out_dir);
  sda::ResultTable table = sda::run_regression_experiment(config);
  table.to_csv(out_dir + "/regression.csv");
  nlohmann::json cfg{{"experiment", "regression"},
                     {"q_grid", config.q_grid},
                     {"groups", config.groups},
                     {"n_per_group", config.n_per_group},
                     {"iterations", config.iterations},
                     {"M", config.M}};
  sda::write_manifest(out_dir + "/regression_manifest.json", cfg, config.seed);
  for (const auto& r : table.rows)
    std::cout << r.setting << " " << r.metric << " = " << r.value << "\n";
  return 0;
}

int run_symbolize_cmd(const std::string& input, const std::string& output,
                      double q) {
  sda::MicroData data = sda::MicroData::from_csv(input);
  sda::RectangleSymbol symbol = sda::build_quantile_rectangle(data, q);
  std::ofstream out(output);
  if (!out) throw std::runtime_error("cannot write " + output);
  out << symbol.to_json().dump(2) << "\n";
  std::cout << "n=" << symbol.n_total << " n_b=" << symbol.n_b()
            << " n_e=" << symbol.n_e() << " n_r=" << symbol.n_r() << "\n";
  return 0;
}

// One signed PMMH chain for an unrestricted multivariate normal model fitted
// to a rectangle symbol. theta = [mu, lower-triangular Cholesky factor with
// log-transformed diagonal].
int run_sample_cmd(const std::string& symbol_path, const std::string& output,
                   long iterations, std::size_t M, bool exact,
                   std::uint64_t seed) {
  sda::RectangleSymbol symbol =
      sda::RectangleSymbol::from_json(load_json(symbol_path));
  const int d = static_cast<int>(symbol.dim());
  const int nl = d * (d + 1) / 2;

  auto theta_to_dist = [d, nl](const Eigen::VectorXd& theta) {
    sda::GaussianDist dist;
    dist.mu = theta.head(d);
    dist.chol = Eigen::MatrixXd::Zero(d, d);
    int pos = d;
    for (int j = 0; j < d; ++j) {
      for (int i = j; i < d; ++i) {
        dist.chol(i, j) = (i == j) ? std::exp(theta[pos]) : theta[pos];
        ++pos;
      }
    }
    dist.log_det = 2.0 * dist.chol.diagonal().array().log().sum();
    return dist;
  };

  sda::SymbolicLikConfig cfg;
  cfg.estimator = exact ? sda::EstimatorChoice::exact_path_poisson
                        : sda::EstimatorChoice::approximate_taylor;
  cfg.M = M;
  if (exact) cfg.poisson.bound_mode = sda::BoundMode::marginal_cdf;

  sda::SignedTarget target = [&](const Eigen::VectorXd& theta,
                                 const sda::UniformBlockStore& u) {
    return sda::symbolic_loglik(symbol, theta_to_dist(theta), cfg, u);
  };
  sda::LogPrior prior = [](const Eigen::VectorXd& theta) {
    return -theta.squaredNorm() / 200.0;
  };

  // Moment start from the rectangle: box midpoint and width-based scales.
  Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(d + nl);
  theta0.head(d) = 0.5 * (symbol.lower + symbol.upper);
  int pos = d;
  for (int j = 0; j < d; ++j)
    for (int i = j; i < d; ++i, ++pos)
      if (i == j)
        theta0[pos] = std::log((symbol.upper[i] - symbol.lower[i]) / 4.0);

  sda::PmmhConfig pmmh_cfg;
  pmmh_cfg.iterations = iterations;
  pmmh_cfg.num_blocks = M;
  pmmh_cfg.seed = seed;
  sda::ChainResult chain =
      sda::signed_block_pmmh(target, prior, theta0, pmmh_cfg);
  chain.to_csv(output);

  Eigen::VectorXd post =
      chain.signed_posterior_mean(pmmh_cfg.effective_burn_in());
  std::cout << "acceptance = " << chain.acceptance_rate << "\n";
  std::cout << "posterior mean mu = " << post.head(d).transpose() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Likelihood-based inference from random-rectangle data summaries"};
  app.require_subcommand(1);

  std::string out_dir = "results";
  int threads = sda::default_threads();
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--threads", threads, "Worker threads");

  sda::Table1Config t1;
  auto* c_table1 = app.add_subcommand("table1", "Correlation recovery study");
  c_table1->add_option("--replicates", t1.replicates);
  c_table1->add_option("--rho", t1.rho_grid, "Correlation grid");
  c_table1->add_option("--m", t1.m_grid, "Rectangles per likelihood");
  c_table1->add_option("--n", t1.n_grid, "Micro-data points per rectangle");
  c_table1->add_option("--seed", t1.seed);

  sda::EstimatorComparisonConfig ec;
  auto* c_est = app.add_subcommand("estimators", "Exact vs approximate estimators");
  c_est->add_option("--dims", ec.dims);
  c_est->add_option("--replicates", ec.replicates);
  c_est->add_option("--temperatures", ec.T);
  c_est->add_option("--draws", ec.M);
  c_est->add_option("--oracle-draws", ec.oracle_M);
  c_est->add_option("--seed", ec.seed);

  sda::FactorExperimentConfig fc;
  auto* c_factor = app.add_subcommand("factor", "Factor model full vs SDA chains");
  c_factor->add_option("--d", fc.d);
  c_factor->add_option("--n", fc.n);
  c_factor->add_option("--q", fc.q);
  c_factor->add_option("--iterations", fc.iterations);
  c_factor->add_option("--draws", fc.M);
  c_factor->add_option("--replicates", fc.replicates);
  c_factor->add_option("--seed", fc.seed);

  sda::RegressionExperimentConfig rc;
  auto* c_reg = app.add_subcommand("regression", "Grouped regression full vs SDA chains");
  c_reg->add_option("--q", rc.q_grid, "Rectangle specification grid");
  c_reg->add_option("--groups", rc.groups);
  c_reg->add_option("--n-per-group", rc.n_per_group);
  c_reg->add_option("--iterations", rc.iterations);
  c_reg->add_option("--draws", rc.M);
  c_reg->add_option("--seed", rc.seed);

  std::string sym_input, sym_output = "symbol.json";
  double sym_q = 0.005;
  auto* c_sym = app.add_subcommand("symbolize", "CSV micro-data to rectangle JSON");
  c_sym->add_option("input", sym_input, "Input CSV")->required();
  c_sym->add_option("--output", sym_output, "Output JSON path");
  c_sym->add_option("--q", sym_q, "Quantile level in [0, 0.5)");

  std::string chain_symbol, chain_output = "chain.csv";
  long chain_iters = 5000;
  std::size_t chain_M = 500;
  bool chain_exact = false;
  std::uint64_t chain_seed = 1;
  auto* c_sample = app.add_subcommand("sample", "Run one PMMH chain on a symbol");
  c_sample->add_option("symbol", chain_symbol, "Rectangle JSON")->required();
  c_sample->add_option("--output", chain_output, "Chain CSV path");
  c_sample->add_option("--iterations", chain_iters);
  c_sample->add_option("--draws", chain_M, "Integral replicates / u blocks");
  c_sample->add_flag("--exact", chain_exact, "Use the exact estimator");
  c_sample->add_option("--seed", chain_seed);

  CLI11_PARSE(app, argc, argv);

  t1.threads = ec.threads = fc.threads = rc.threads = threads;
  try {
    if (c_table1->parsed()) return run_table1_cmd(t1, out_dir);
    if (c_est->parsed()) return run_estimators_cmd(ec, out_dir);
    if (c_factor->parsed()) return run_factor_cmd(fc, out_dir);
    if (c_reg->parsed()) return run_regression_cmd(rc, out_dir);
    if (c_sym->parsed()) return run_symbolize_cmd(sym_input, sym_output, sym_q);
    if (c_sample->parsed())
      return run_sample_cmd(chain_symbol, chain_output, chain_iters, chain_M,
                            chain_exact, chain_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
