#include "sda/loglik.hpp"

#include <cmath>
#include <stdexcept>

#include "sda/stats.hpp"

namespace sda {

namespace {

LogLikEstimate path_sampler_impl(
    const std::function<double(const Eigen::VectorXd&)>& log_density,
    const std::function<Eigen::VectorXd(double, UniformStream&)>& sampler,
    const Box& box, const TemperatureLadder& ladder, std::size_t M,
    long exponent_count, const UniformBlockStore& u, PathBlocking blocking,
    std::uint64_t key_offset) {
  if (M < 1) throw std::invalid_argument("path_sampler: M < 1");
  const std::vector<double> temps = ladder.values();
  const std::size_t T = temps.size();
  if (T < 2 || !(temps.front() > 0.0) || temps.back() != 1.0)
    throw std::invalid_argument("path_sampler: invalid ladder");
  const std::size_t U = u.num_blocks();

  std::vector<double> integrand(T), var_mean(T);
  for (std::size_t i = 0; i < T; ++i) {
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      // Disjoint streams per (temperature, particle); the block index is the
      // temperature or the particle depending on the blocking mode.
      std::size_t block =
          (blocking == PathBlocking::temperature ? i % U : m % U);
      UniformStream s = u.stream(block, key_offset + i * M + m);
      Eigen::VectorXd z = sampler(temps[i], s);
      double v = log_density(z);
      if (!std::isfinite(v))
        throw std::runtime_error("path_sampler: non-finite log-density draw");
      sum += v;
      sumsq += v * v;
    }
    double m1 = sum / static_cast<double>(M);
    integrand[i] = m1;
    var_mean[i] =
        M > 1 ? (sumsq - static_cast<double>(M) * m1 * m1) /
                    (static_cast<double>(M - 1) * static_cast<double>(M))
              : 0.0;
  }

  double integral = trapezoid_integrate(temps, integrand);

  // Trapezoid weights, including the flat extension over [0, t_1].
  std::vector<double> w(T, 0.0);
  w[0] = temps[0] + 0.5 * (temps[1] - temps[0]);
  w[T - 1] = 0.5 * (temps[T - 1] - temps[T - 2]);
  for (std::size_t i = 1; i + 1 < T; ++i)
    w[i] = 0.5 * (temps[i + 1] - temps[i - 1]);

  double var = 0.0;
  for (std::size_t i = 0; i < T; ++i) var += w[i] * w[i] * var_mean[i];

  const double c = static_cast<double>(exponent_count);
  LogLikEstimate est;
  est.method = "path";
  est.exponent_count = exponent_count;
  est.value = c * (integral + box.log_volume());
  est.variance = c * c * var;
  return est;
}

}  // namespace

LogLikEstimate path_sampler_log_integral(
    const GaussianDist& dist, const Box& box, const TemperatureLadder& ladder,
    std::size_t M, long exponent_count, const UniformBlockStore& u,
    PathBlocking blocking, std::uint64_t key_offset) {
  auto log_density = [&dist](const Eigen::VectorXd& z) {
    return dist.log_density(z);
  };
  const double log_max = dist.log_density(dist.box_mode(box.lower, box.upper));
  auto sampler = [&log_density, log_max, &box](double t, UniformStream& s) {
    return sample_q_t_rejection(log_density, log_max, box, t, s);
  };
  return path_sampler_impl(log_density, sampler, box, ladder, M,
                           exponent_count, u, blocking, key_offset);
}

LogLikEstimate path_sampler_log_integral_generic(
    const std::function<double(const Eigen::VectorXd&)>& log_density,
    const std::function<Eigen::VectorXd(double, UniformStream&)>& sampler,
    const Box& box, const TemperatureLadder& ladder, std::size_t M,
    long exponent_count, const UniformBlockStore& u, PathBlocking blocking,
    std::uint64_t key_offset) {
  return path_sampler_impl(log_density, sampler, box, ladder, M,
                           exponent_count, u, blocking, key_offset);
}

LogLikEstimate taylor_log_integral(const IntegralEstimate& estimate,
                                   long exponent_count) {
  const std::size_t M = estimate.M();
  if (M < 2) throw std::invalid_argument("taylor_log_integral: M < 2");
  std::vector<double> logs(M);
  for (std::size_t m = 0; m < M; ++m) {
    if (!(estimate.replicates[m] > 0.0))
      throw std::invalid_argument(
          "taylor_log_integral: non-positive replicate");
    logs[m] = std::log(estimate.replicates[m]);
  }
  const double mean_c = mean(estimate.replicates);
  const double var_c = sample_variance(estimate.replicates);
  const double log_c_hat = mean(logs) + var_c / (2.0 * mean_c * mean_c);

  const double c = static_cast<double>(exponent_count);
  LogLikEstimate est;
  est.method = "taylor";
  est.exponent_count = exponent_count;
  est.value = c * log_c_hat;
  // Variance of the mean of log replicates, scaled by the exponent.
  est.variance = c * c * sample_variance(logs) / static_cast<double>(M);
  return est;
}

}  // namespace sda
