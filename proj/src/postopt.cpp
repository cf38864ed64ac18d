#include "oscinv/postopt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oscinv {

namespace {

double rbf(const Vec& a, const Vec& b, double scale) {
  return std::exp(-(a - b).squaredNorm() / (2.0 * scale * scale));
}

}  // namespace

RgbLoss squared_distance_loss(Vec target) {
  RgbLoss loss;
  loss.value = [target](const Vec& u) { return (u - target).squaredNorm(); };
  loss.gradient = [target](const Vec& u) -> Vec { return 2.0 * (u - target); };
  return loss;
}

PostOptProblem::PostOptProblem(const VelocityField& field, double gamma, RgbLoss rgb_loss,
                               std::vector<Vec> references, double beta, double kernel_scale)
    : field_(&field),
      gamma_(gamma),
      rgb_loss_(std::move(rgb_loss)),
      references_(std::move(references)),
      beta_(beta),
      kernel_scale_(kernel_scale) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be non-negative");
  if (!(kernel_scale > 0.0)) throw std::invalid_argument("kernel scale must be positive");
  if (references_.empty() && beta_ != 0.0) {
    throw std::invalid_argument("beta must be 0 when there are no references");
  }
  if (!rgb_loss_.value) throw std::invalid_argument("rgb loss must provide a value function");
}

double gp_loss(const Vec& z, std::span<const Vec> references, double kernel_scale) {
  if (references.empty()) throw std::invalid_argument("gp_loss needs at least one reference");
  const double n = static_cast<double>(references.size());
  double cross = 0.0;
  for (const Vec& r : references) cross += rbf(z, r, kernel_scale);
  double ref_ref = 0.0;
  for (const Vec& a : references) {
    for (const Vec& b : references) ref_ref += rbf(a, b, kernel_scale);
  }
  return 1.0 - (2.0 / n) * cross + ref_ref / (n * n);
}

Vec gp_loss_gradient(const Vec& z, std::span<const Vec> references, double kernel_scale) {
  if (references.empty()) throw std::invalid_argument("gp_loss needs at least one reference");
  const double n = static_cast<double>(references.size());
  const double inv_sq = 1.0 / (kernel_scale * kernel_scale);
  Vec grad = Vec::Zero(z.size());
  for (const Vec& r : references) {
    grad += (2.0 / n) * inv_sq * rbf(z, r, kernel_scale) * (z - r);
  }
  return grad;
}

double objective(const PostOptProblem& problem, const Vec& z) {
  const Vec prediction = z - problem.gamma() * problem.field().eval(z, problem.gamma());
  double value = problem.rgb_loss().value(prediction);
  if (problem.beta() > 0.0) {
    value += problem.beta() * gp_loss(z, problem.references(), problem.kernel_scale());
  }
  return value;
}

Vec gradient_of_objective(const PostOptProblem& problem, const Vec& z) {
  const int d = static_cast<int>(z.size());
  if (problem.field().has_analytic_jacobian() && problem.rgb_loss().gradient) {
    const double gamma = problem.gamma();
    const Vec prediction = z - gamma * problem.field().eval(z, gamma);
    const Mat pullback = Mat::Identity(d, d) - gamma * problem.field().jacobian(z, gamma);
    Vec grad = pullback.transpose() * problem.rgb_loss().gradient(prediction);
    if (problem.beta() > 0.0) {
      grad += problem.beta() * gp_loss_gradient(z, problem.references(), problem.kernel_scale());
    }
    return grad;
  }
  const double h = 1e-4 * (1.0 + z.norm());
  Vec grad(d);
  Vec probe = z;
  for (int j = 0; j < d; ++j) {
    probe[j] = z[j] + h;
    const double plus = objective(problem, probe);
    probe[j] = z[j] - h;
    const double minus = objective(problem, probe);
    probe[j] = z[j];
    grad[j] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

OptResult optimize(const PostOptProblem& problem, const Vec& init, int max_iters, double tol) {
  if (!init.allFinite()) throw std::invalid_argument("optimize: initial point is not finite");
  constexpr double kArmijoSlope = 1e-4;
  constexpr double kMinStep = 1e-12;

  OptResult result;
  Vec z = init;
  double value = objective(problem, z);
  result.objective_trace.push_back(value);

  int iter = 0;
  for (; iter < max_iters; ++iter) {
    const Vec grad = gradient_of_objective(problem, z);
    const double grad_norm = grad.norm();
    result.gradient_norm_trace.push_back(grad_norm);
    if (grad_norm < tol) {
      result.converged = true;
      break;
    }
    double step = 1.0;
    bool accepted = false;
    while (step >= kMinStep) {
      const Vec candidate = z - step * grad;
      const double candidate_value = objective(problem, candidate);
      if (candidate_value <= value - kArmijoSlope * step * grad_norm * grad_norm) {
        z = candidate;
        value = candidate_value;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // line-search failure: report the best point so far
    result.objective_trace.push_back(value);
  }
  while (result.gradient_norm_trace.size() < result.objective_trace.size()) {
    result.gradient_norm_trace.push_back(gradient_of_objective(problem, z).norm());
  }
  result.z_opt = std::move(z);
  result.iterations = iter;
  return result;
}

double median_pairwise_distance(std::span<const Vec> points) {
  std::vector<double> distances;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      distances.push_back((points[i] - points[j]).norm());
    }
  }
  if (distances.empty()) return 1.0;
  const std::size_t mid = distances.size() / 2;
  std::nth_element(distances.begin(), distances.begin() + mid, distances.end());
  return distances[mid];
}

}  // namespace oscinv
