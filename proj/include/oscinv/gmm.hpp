#pragma once

#include <utility>
#include <vector>

#include "oscinv/rng.hpp"
#include "oscinv/types.hpp"

namespace oscinv {

struct MixtureComponent {
  double weight = 0.0;
  Vec mean;
  double sigma = 0.0;  // isotropic spread, covariance sigma^2 * I
};

/// Target data distribution: a mixture of isotropic Gaussians in R^d.
/// The source (noise) distribution is always the standard normal N(0, I).
/// Interpolation convention throughout: X_t = t * X_noise + (1-t) * X_data,
/// so t = 0 is data and t = 1 is noise.
class GaussianMixture {
 public:
  /// Validates: K >= 1, weights in (0,1] summing to 1 within 1e-12,
  /// sigma_k > 0, all means of length dim. Throws std::invalid_argument.
  GaussianMixture(std::vector<MixtureComponent> components, int dim);

  int dim() const { return dim_; }
  int component_count() const { return static_cast<int>(components_.size()); }
  const MixtureComponent& component(int k) const { return components_[k]; }
  const std::vector<MixtureComponent>& components() const { return components_; }

 private:
  std::vector<MixtureComponent> components_;
  int dim_;
};

/// Posterior decomposition of the interpolation marginal at (x, t).
struct ConditionalStats {
  Vec responsibilities;       // r_k, non-negative, sums to 1
  Vec cond_mean_data;         // E[X_data | X_t = x]
  Vec cond_mean_noise;        // E[X_noise | X_t = x]
  Vec component_variances;    // s_k = (1-t)^2 sigma_k^2 + t^2
};

/// log pi_t(x) where X_t = t*X_noise + (1-t)*X_data, evaluated by
/// log-sum-exp over components of log a_k + log N(x; (1-t)mu_k, s_k I).
/// Throws std::domain_error if t is outside (0,1) or x has the wrong length.
double marginal_log_density(const GaussianMixture& mix, const Vec& x, double t);

/// Responsibilities and conditional endpoint means at (x, t).
ConditionalStats conditional_stats(const GaussianMixture& mix, const Vec& x, double t);

/// v(x,t) = E[X_noise - X_data | X_t = x]. With this sign the Euler sampler
/// moves toward data as sigma decreases and the one-step prediction
/// z - t*v(z,t) lands on the data manifold.
Vec analytic_velocity(const GaussianMixture& mix, const Vec& x, double t);

/// Exact d(velocity)/dx, including the responsibility-gradient terms
/// dr_k/dx = r_k (g_k - sum_j r_j g_j) with g_k = -(x - (1-t)mu_k) / s_k.
Mat analytic_jacobian(const GaussianMixture& mix, const Vec& x, double t);

/// Independent coupling draw: x_data from the mixture (categorical on the
/// weights, then the component Gaussian), x_noise standard normal.
std::pair<Vec, Vec> sample_pair(const GaussianMixture& mix, Rng& rng);

}  // namespace oscinv
