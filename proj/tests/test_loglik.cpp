#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sda/loglik.hpp"
#include "sda/stats.hpp"

using namespace sda;

namespace {

UniformBlockStore make_store(std::size_t blocks, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return UniformBlockStore(blocks, rng);
}

Box cube(int d, double half) {
  return Box{Eigen::VectorXd::Constant(d, -half),
             Eigen::VectorXd::Constant(d, half)};
}

GaussianDist equicorrelated(int d) {
  Eigen::MatrixXd sigma =
      0.5 * Eigen::MatrixXd::Identity(d, d) + 0.5 * Eigen::MatrixXd::Ones(d, d);
  return GaussianDist::from_covariance(Eigen::VectorXd::Zero(d), sigma);
}

}  // namespace

TEST_CASE("temperature ladder shape") {
  TemperatureLadder ladder;
  auto t = ladder.values();
  REQUIRE(t.size() == 100);
  CHECK(t.back() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(t.front() == doctest::Approx(std::pow(0.01, 5)).epsilon(1e-12));
  for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i] > t[i - 1]);
}

TEST_CASE("trapezoid rule is exact for constants and linear functions") {
  std::vector<double> t{0.0, 0.5, 1.0};
  std::vector<double> c{2.5, 2.5, 2.5};
  CHECK(trapezoid_integrate(t, c) == doctest::Approx(2.5).epsilon(1e-15));
  std::vector<double> lin{0.0, 0.5, 1.0};
  CHECK(trapezoid_integrate(t, lin) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("trapezoid on the power ladder matches a fine grid") {
  TemperatureLadder ladder;
  auto t = ladder.values();
  auto f = [](double x) { return std::log(0.1 + x); };
  std::vector<double> v(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) v[i] = f(t[i]);
  double coarse = trapezoid_integrate(t, v);

  long N = 100000;
  std::vector<double> tf(N), vf(N);
  for (long i = 1; i <= N; ++i) {
    tf[i - 1] = static_cast<double>(i) / N;
    vf[i - 1] = f(tf[i - 1]);
  }
  double fine = trapezoid_integrate(tf, vf);
  CHECK(coarse == doctest::Approx(fine).epsilon(1e-3));
}

TEST_CASE("trapezoid rejects unsorted abscissae") {
  std::vector<double> t{0.0, 0.5, 0.5};
  std::vector<double> v{1.0, 1.0, 1.0};
  CHECK_THROWS(trapezoid_integrate(t, v));
  std::vector<double> t2{0.5, 0.2, 1.0};
  CHECK_THROWS(trapezoid_integrate(t2, v));
}

TEST_CASE("path sampler is exact for a constant density") {
  Box box = cube(2, 1.5);
  const double c = 0.21;
  auto log_density = [&](const Eigen::VectorXd&) { return std::log(c); };
  auto sampler = [&](double, UniformStream& s) {
    Eigen::VectorXd z(2);
    z[0] = box.lower[0] + (box.upper[0] - box.lower[0]) * s.next();
    z[1] = box.lower[1] + (box.upper[1] - box.lower[1]) * s.next();
    return z;
  };
  auto u = make_store(10, 1);
  long n_r = 37;
  LogLikEstimate est = path_sampler_log_integral_generic(
      log_density, sampler, box, TemperatureLadder{}, 200, n_r, u);
  double expect = n_r * std::log(c * box.volume());
  CHECK(est.value == doctest::Approx(expect).epsilon(1e-10));
  CHECK(est.variance == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("path sampler replays deterministically and scales linearly") {
  GaussianDist dist = equicorrelated(2);
  Box box = cube(2, 2.0);
  auto u = make_store(100, 2);
  LogLikEstimate a =
      path_sampler_log_integral(dist, box, TemperatureLadder{}, 200, 100, u);
  LogLikEstimate b =
      path_sampler_log_integral(dist, box, TemperatureLadder{}, 200, 100, u);
  CHECK(a.value == b.value);
  CHECK(a.variance == b.variance);
  LogLikEstimate twice =
      path_sampler_log_integral(dist, box, TemperatureLadder{}, 200, 200, u);
  CHECK(twice.value == doctest::Approx(2 * a.value).epsilon(1e-12));
  CHECK(twice.variance == doctest::Approx(4 * a.variance).epsilon(1e-10));
}

TEST_CASE("path sampler is unbiased on the d = 2 reference configuration") {
  // Sigma = 0.5 I + 0.5 11^T, box [-2,2]^2, exponent 100: reference value
  // -8.649 (quadrature-grade SOV value -8.653).
  GaussianDist dist = equicorrelated(2);
  Box box = cube(2, 2.0);
  int reps = 20;
  std::vector<double> values(reps);
  for (int r = 0; r < reps; ++r) {
    auto u = make_store(100, 100 + r);
    values[r] = path_sampler_log_integral(dist, box, TemperatureLadder{}, 2000,
                                          100, u)
                    .value;
  }
  double m = mean(values);
  double se = sample_sd(values) / std::sqrt(static_cast<double>(reps));
  CHECK(std::abs(m - (-8.649)) < 3 * se + 0.05);
  // Replicate variance in the ballpark of the reference 0.109.
  CHECK(sample_variance(values) > 0.03);
  CHECK(sample_variance(values) < 0.35);
}

TEST_CASE("Taylor estimator with zero-variance replicates is exact") {
  IntegralEstimate est;
  est.method = "sov";
  est.replicates.assign(50, 0.42);
  est.value = 0.42;
  LogLikEstimate out = taylor_log_integral(est, 30);
  CHECK(out.value == doctest::Approx(30 * std::log(0.42)).epsilon(1e-14));
  CHECK(out.variance == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("Taylor estimator hand example") {
  IntegralEstimate est;
  est.method = "sov";
  est.replicates = {0.5, 1.5};
  est.value = 1.0;
  LogLikEstimate out = taylor_log_integral(est, 1);
  // mean log = (log 0.5 + log 1.5)/2 ~ -0.1438; Var = 0.5, mean^2 = 1
  // -> value = -0.1438 + 0.25 = 0.1062.
  double mean_log = 0.5 * (std::log(0.5) + std::log(1.5));
  CHECK(out.value == doctest::Approx(mean_log + 0.25).epsilon(1e-12));
  CHECK(out.value == doctest::Approx(0.1062).epsilon(1e-3));
}

TEST_CASE("Taylor estimator rejects bad replicates") {
  IntegralEstimate bad;
  bad.replicates = {0.5};
  CHECK_THROWS(taylor_log_integral(bad, 1));
  bad.replicates = {0.5, 0.0};
  CHECK_THROWS(taylor_log_integral(bad, 1));
}

TEST_CASE("Taylor scaling: exponent doubles value, quadruples variance") {
  IntegralEstimate est;
  est.method = "sov";
  est.replicates = {0.3, 0.5, 0.4, 0.45, 0.35};
  est.value = 0.4;
  LogLikEstimate a = taylor_log_integral(est, 10);
  LogLikEstimate b = taylor_log_integral(est, 20);
  CHECK(b.value == doctest::Approx(2 * a.value).epsilon(1e-12));
  CHECK(b.variance == doctest::Approx(4 * a.variance).epsilon(1e-12));
}
