#include "oscinv/gmm.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace oscinv {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kTimeClamp = 1e-6;

double clamp_time(double t) {
  if (t < kTimeClamp) return kTimeClamp;
  if (t > 1.0 - kTimeClamp) return 1.0 - kTimeClamp;
  return t;
}

void check_args(const GaussianMixture& mix, const Vec& x, double t) {
  if (!(t > 0.0 && t < 1.0)) {
    throw std::domain_error("time t must lie strictly inside (0,1), got " + std::to_string(t));
  }
  if (x.size() != mix.dim()) {
    throw std::domain_error("point dimension " + std::to_string(x.size()) +
                            " does not match mixture dimension " + std::to_string(mix.dim()));
  }
}

/// Per-component log responsibilities log(a_k N(x; (1-t)mu_k, s_k I)),
/// returned unnormalized together with their log-sum-exp.
struct LogPosterior {
  Vec log_terms;
  double log_norm;
};

LogPosterior log_posterior(const GaussianMixture& mix, const Vec& x, double t) {
  const int kn = mix.component_count();
  const int d = mix.dim();
  Vec log_terms(kn);
  for (int k = 0; k < kn; ++k) {
    const MixtureComponent& c = mix.component(k);
    const double s = (1.0 - t) * (1.0 - t) * c.sigma * c.sigma + t * t;
    const double sq = (x - (1.0 - t) * c.mean).squaredNorm();
    log_terms[k] = std::log(c.weight) - 0.5 * sq / s - 0.5 * d * (kLog2Pi + std::log(s));
  }
  const double m = log_terms.maxCoeff();
  double acc = 0.0;
  for (int k = 0; k < kn; ++k) acc += std::exp(log_terms[k] - m);
  return {std::move(log_terms), m + std::log(acc)};
}

}  // namespace

GaussianMixture::GaussianMixture(std::vector<MixtureComponent> components, int dim)
    : components_(std::move(components)), dim_(dim) {
  if (dim_ < 1) throw std::invalid_argument("mixture dimension must be positive");
  if (components_.empty()) throw std::invalid_argument("mixture needs at least one component");
  double weight_sum = 0.0;
  for (const MixtureComponent& c : components_) {
    if (!(c.weight > 0.0 && c.weight <= 1.0)) {
      throw std::invalid_argument("component weights must lie in (0,1]");
    }
    if (!(c.sigma > 0.0)) throw std::invalid_argument("component sigma must be positive");
    if (c.mean.size() != dim_) {
      throw std::invalid_argument("component mean length does not match mixture dimension");
    }
    weight_sum += c.weight;
  }
  if (std::abs(weight_sum - 1.0) > 1e-12) {
    throw std::invalid_argument("component weights must sum to 1, got " + std::to_string(weight_sum));
  }
}

double marginal_log_density(const GaussianMixture& mix, const Vec& x, double t) {
  check_args(mix, x, t);
  return log_posterior(mix, x, clamp_time(t)).log_norm;
}

ConditionalStats conditional_stats(const GaussianMixture& mix, const Vec& x, double t) {
  check_args(mix, x, t);
  t = clamp_time(t);
  const int kn = mix.component_count();
  const int d = mix.dim();

  const LogPosterior post = log_posterior(mix, x, t);
  ConditionalStats out;
  out.responsibilities.resize(kn);
  out.component_variances.resize(kn);
  out.cond_mean_data = Vec::Zero(d);
  out.cond_mean_noise = Vec::Zero(d);
  for (int k = 0; k < kn; ++k) {
    const MixtureComponent& c = mix.component(k);
    const double s = (1.0 - t) * (1.0 - t) * c.sigma * c.sigma + t * t;
    const double r = std::exp(post.log_terms[k] - post.log_norm);
    const Vec dev = x - (1.0 - t) * c.mean;
    out.responsibilities[k] = r;
    out.component_variances[k] = s;
    // Gaussian conditioning of the joint (X_data, X_t) within component k:
    // Cov(X_data, X_t) = (1-t) sigma_k^2 I, Cov(X_noise, X_t) = t I.
    out.cond_mean_data += r * (c.mean + ((1.0 - t) * c.sigma * c.sigma / s) * dev);
    out.cond_mean_noise += r * ((t / s) * dev);
  }
  return out;
}

Vec analytic_velocity(const GaussianMixture& mix, const Vec& x, double t) {
  const ConditionalStats st = conditional_stats(mix, x, t);
  return st.cond_mean_noise - st.cond_mean_data;
}

Mat analytic_jacobian(const GaussianMixture& mix, const Vec& x, double t) {
  check_args(mix, x, t);
  t = clamp_time(t);
  const int kn = mix.component_count();
  const int d = mix.dim();

  const LogPosterior post = log_posterior(mix, x, t);

  // v = sum_k r_k h_k with h_k = c_k (x - (1-t)mu_k) - mu_k and
  // c_k = (t - (1-t)sigma_k^2) / s_k.  Differentiating,
  // J = (sum_k r_k c_k) I + sum_k h_k (dr_k/dx)^T.
  Vec r(kn), ck(kn);
  std::vector<Vec> h(kn), g(kn);
  Vec g_bar = Vec::Zero(d);
  double c_mean = 0.0;
  for (int k = 0; k < kn; ++k) {
    const MixtureComponent& c = mix.component(k);
    const double s = (1.0 - t) * (1.0 - t) * c.sigma * c.sigma + t * t;
    r[k] = std::exp(post.log_terms[k] - post.log_norm);
    ck[k] = (t - (1.0 - t) * c.sigma * c.sigma) / s;
    const Vec dev = x - (1.0 - t) * c.mean;
    h[k] = ck[k] * dev - c.mean;
    g[k] = -dev / s;
    g_bar += r[k] * g[k];
    c_mean += r[k] * ck[k];
  }
  Mat jac = c_mean * Mat::Identity(d, d);
  for (int k = 0; k < kn; ++k) {
    jac += h[k] * (r[k] * (g[k] - g_bar)).transpose();
  }
  return jac;
}

std::pair<Vec, Vec> sample_pair(const GaussianMixture& mix, Rng& rng) {
  const int d = mix.dim();
  std::vector<double> weights(mix.component_count());
  for (int k = 0; k < mix.component_count(); ++k) weights[k] = mix.component(k).weight;
  const int k = rng.categorical(weights);
  const MixtureComponent& c = mix.component(k);
  Vec x_data(d), x_noise(d);
  for (int i = 0; i < d; ++i) x_data[i] = c.mean[i] + c.sigma * rng.normal();
  for (int i = 0; i < d; ++i) x_noise[i] = rng.normal();
  return {std::move(x_data), std::move(x_noise)};
}

}  // namespace oscinv
