#pragma once

#include <functional>
#include <span>
#include <vector>

#include "oscinv/field.hpp"
#include "oscinv/types.hpp"

namespace oscinv {

/// Objective on the one-step prediction. gradient may be left empty, in which
/// case the optimizer differentiates the whole objective by finite
/// differences.
struct RgbLoss {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
};

/// ||u - target||^2 with its exact gradient.
RgbLoss squared_distance_loss(Vec target);

/// Post-inversion optimization problem: minimize
///   rgb_loss(z - gamma * v(z, gamma)) + beta * gp_loss(z)
/// over z, where gp_loss anchors z to the reference cluster.
class PostOptProblem {
 public:
  /// Validates beta >= 0, kernel_scale > 0, and beta == 0 when there are no
  /// references.
  PostOptProblem(const VelocityField& field, double gamma, RgbLoss rgb_loss,
                 std::vector<Vec> references, double beta, double kernel_scale);

  const VelocityField& field() const { return *field_; }
  double gamma() const { return gamma_; }
  const RgbLoss& rgb_loss() const { return rgb_loss_; }
  const std::vector<Vec>& references() const { return references_; }
  double beta() const { return beta_; }
  double kernel_scale() const { return kernel_scale_; }

 private:
  const VelocityField* field_;  // non-owning
  double gamma_;
  RgbLoss rgb_loss_;
  std::vector<Vec> references_;
  double beta_;
  double kernel_scale_;
};

/// Squared maximum mean discrepancy between the point mass at z and the
/// empirical reference distribution, under the RBF kernel
/// k(a,b) = exp(-||a-b||^2 / (2 l^2)):
///   k(z,z) - (2/N) sum_i k(z, z'_i) + (1/N^2) sum_{i,j} k(z'_i, z'_j).
double gp_loss(const Vec& z, std::span<const Vec> references, double kernel_scale);

/// Closed-form gradient of gp_loss in z.
Vec gp_loss_gradient(const Vec& z, std::span<const Vec> references, double kernel_scale);

double objective(const PostOptProblem& problem, const Vec& z);

/// Analytic chain rule (I - gamma J_v)^T grad_rgb + beta grad_gp when both the
/// field Jacobian and the rgb gradient are available; otherwise central
/// finite differences on the full objective with h = 1e-4 (1 + ||z||).
Vec gradient_of_objective(const PostOptProblem& problem, const Vec& z);

struct OptResult {
  Vec z_opt;
  std::vector<double> objective_trace;      // non-increasing by construction
  std::vector<double> gradient_norm_trace;  // aligned with objective_trace
  int iterations = 0;
  bool converged = false;
};

/// Gradient descent with Armijo backtracking (c = 1e-4, halving). Stops at
/// gradient norm < tol or max_iters; a failed line search (step < 1e-12)
/// returns converged = false with the best point found.
OptResult optimize(const PostOptProblem& problem, const Vec& init, int max_iters, double tol);

/// Median pairwise distance of the references; the default kernel scale.
double median_pairwise_distance(std::span<const Vec> points);

}  // namespace oscinv
