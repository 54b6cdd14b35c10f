#include "sda/integral.hpp"

#include <cmath>
#include <stdexcept>

#include "sda/stats.hpp"

namespace sda {

IntegralEstimate mc_uniform_integral(
    const std::function<double(const Eigen::VectorXd&)>& log_density,
    const Box& box, std::size_t M, const UniformBlockStore& u,
    std::uint64_t key_offset) {
  if (!((box.upper - box.lower).minCoeff() > 0.0))
    throw std::invalid_argument("mc_uniform_integral: zero-volume box");
  const double vol = box.volume();
  IntegralEstimate est;
  est.method = "mc_uniform";
  est.replicates.resize(M);
  Eigen::VectorXd z(box.dim());
  for (std::size_t m = 0; m < M; ++m) {
    UniformStream s = replicate_stream(u, m, key_offset);
    for (Eigen::Index j = 0; j < box.dim(); ++j)
      z[j] = box.lower[j] + s.next() * (box.upper[j] - box.lower[j]);
    est.replicates[m] = vol * std::exp(log_density(z));
  }
  est.value = mean(est.replicates);
  return est;
}

double sov_replicate(const Eigen::MatrixXd& chol,
                     const Eigen::VectorXd& centered_lower,
                     const Eigen::VectorXd& centered_upper,
                     UniformStream& stream, Eigen::VectorXd* sample_out) {
  const Eigen::Index d = chol.rows();
  Eigen::VectorXd y(d);
  double prob = 1.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    double shift = 0.0;
    for (Eigen::Index j = 0; j < i; ++j) shift += chol(i, j) * y[j];
    double li = (centered_lower[i] - shift) / chol(i, i);
    double ui = (centered_upper[i] - shift) / chol(i, i);
    TruncatedDraw draw = truncated_std_normal(li, ui, stream.next());
    prob *= draw.prob;
    y[i] = draw.value;
    if (!(prob > 0.0)) {  // degenerate interval: replicate value 0
      prob = 0.0;
      y.tail(d - i - 1).setZero();
      break;
    }
  }
  if (sample_out) *sample_out = chol * y;
  return prob;
}

IntegralEstimate sov_truncated_normal(const GaussianDist& dist, const Box& box,
                                      std::size_t M, const UniformBlockStore& u,
                                      std::uint64_t key_offset) {
  if (box.dim() != dist.dim())
    throw std::invalid_argument("sov_truncated_normal: dimension mismatch");
  Eigen::VectorXd cl = box.lower - dist.mu;
  Eigen::VectorXd cu = box.upper - dist.mu;
  IntegralEstimate est;
  est.method = "sov";
  est.replicates.resize(M);
  for (std::size_t m = 0; m < M; ++m) {
    UniformStream s = replicate_stream(u, m, key_offset);
    est.replicates[m] = sov_replicate(dist.chol, cl, cu, s, nullptr);
  }
  est.value = mean(est.replicates);
  return est;
}

Eigen::VectorXd truncated_normal_sample(const GaussianDist& dist,
                                        const Box& box,
                                        UniformStream& stream) {
  return sample_q_t_gaussian(dist, box, 1.0, stream);
}

Eigen::VectorXd sample_q_t_gaussian(const GaussianDist& dist, const Box& box,
                                    double t, UniformStream& stream) {
  // q_t is N(mu, Sigma/t) truncated to the box; g^t is maximised over the
  // box at the same point as g, so the density mode gives the envelope.
  double log_max = dist.log_density(dist.box_mode(box.lower, box.upper));
  auto log_density = [&dist](const Eigen::VectorXd& z) {
    return dist.log_density(z);
  };
  return sample_q_t_rejection(log_density, log_max, box, t, stream);
}

Eigen::VectorXd sample_q_t_rejection(
    const std::function<double(const Eigen::VectorXd&)>& log_density,
    double log_density_max, const Box& box, double t, UniformStream& stream) {
  if (!(t > 0.0 && t <= 1.0))
    throw std::invalid_argument("sample_q_t: t outside (0,1]");
  Eigen::VectorXd z(box.dim());
  for (int attempt = 0; attempt < kRejectionCap; ++attempt) {
    for (Eigen::Index j = 0; j < box.dim(); ++j)
      z[j] = box.lower[j] + stream.next() * (box.upper[j] - box.lower[j]);
    double log_accept = t * (log_density(z) - log_density_max);
    if (std::log(stream.next()) < log_accept) return z;
  }
  throw std::runtime_error("sample_q_t: rejection budget exhausted");
}

Eigen::VectorXd truncated_mixture_draw(const NormalMixture& mixture,
                                       const Eigen::VectorXd& lower,
                                       const Eigen::VectorXd& upper,
                                       UniformStream& stream) {
  const int K = mixture.n_components();
  const Eigen::Index d = lower.size();
  Eigen::VectorXd x(d);
  for (int attempt = 0; attempt < kRejectionCap; ++attempt) {
    double u = stream.next();
    int comp = K - 1;
    double cum = 0.0;
    for (int k = 0; k < K; ++k) {
      cum += mixture.weights[k];
      if (u <= cum) {
        comp = k;
        break;
      }
    }
    const GaussianDist& g = mixture.components[comp];
    Eigen::VectorXd v(d);
    for (Eigen::Index j = 0; j < d; ++j)
      v[j] = normal_quantile(stream.next());
    x = g.mu + g.chol * v;
    if ((x.array() >= lower.array()).all() &&
        (x.array() <= upper.array()).all())
      return x;
  }
  throw std::runtime_error(
      "truncated_mixture_draw: rejection rate exceeded the configured cap");
}

IntegralEstimate conditional_regression_integral(
    const HeteroRegParams& params, const NormalMixture& mixture,
    const Box& box, const RegressionGroupContext& ctx, std::size_t M,
    const UniformBlockStore& u, std::uint64_t key_offset) {
  if (box.dim() != 3)
    throw std::invalid_argument(
        "conditional_regression_integral: box must be (y, x1, x2)");
  const double y_l = box.lower[0], y_u = box.upper[0];
  Eigen::VectorXd xl = box.lower.tail(2), xu = box.upper.tail(2);
  IntegralEstimate est;
  est.method = "conditional_regression";
  est.replicates.resize(M);
  for (std::size_t m = 0; m < M; ++m) {
    UniformStream s = replicate_stream(u, m, key_offset);
    Eigen::VectorXd x = truncated_mixture_draw(mixture, xl, xu, s);
    double mu_y =
        params.intercepts[ctx.group] + params.beta1 * x[0] + params.beta2 * x[1];
    double sd = std::exp(0.5 * params.log_sigma2(x[1], ctx.x2bar));
    est.replicates[m] =
        normal_cdf((y_u - mu_y) / sd) - normal_cdf((y_l - mu_y) / sd);
  }
  est.value = mean(est.replicates);
  return est;
}

}  // namespace sda
