#include "oscinv/inversion.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace oscinv {

FixedPointMap::FixedPointMap(const VelocityField& field, Vec target, double gamma)
    : field_(&field), target_(std::move(target)), gamma_(gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("gamma must lie strictly inside (0,1), got " +
                                std::to_string(gamma));
  }
  if (target_.size() != field.dim()) {
    throw std::invalid_argument("target dimension does not match field dimension");
  }
}

Vec one_step_predict(const FixedPointMap& map, const Vec& z) {
  return z - map.gamma() * map.field().eval(z, map.gamma());
}

namespace {

InversionTrajectory run_iteration(const VelocityField& field, const std::vector<Vec>& targets,
                                  double gamma, int iterations, const Vec& start) {
  InversionTrajectory traj;
  traj.iterates.reserve(iterations + 1);
  traj.step_distances.reserve(iterations);
  traj.one_step_preds.reserve(iterations + 1);

  const std::size_t m = targets.size();
  Vec z = start;
  traj.iterates.push_back(z);
  traj.one_step_preds.push_back(z - gamma * field.eval(z, gamma));
  for (int k = 0; k < iterations; ++k) {
    const Vec v = field.eval(z, gamma);
    Vec next = targets[static_cast<std::size_t>(k) % m] + gamma * v;
    if (!next.allFinite()) {
      throw std::runtime_error("inversion produced a non-finite iterate at step " +
                               std::to_string(k + 1));
    }
    traj.step_distances.push_back((next - z).norm());
    z = std::move(next);
    traj.iterates.push_back(z);
    traj.one_step_preds.push_back(z - gamma * field.eval(z, gamma));
  }
  return traj;
}

}  // namespace

InversionTrajectory invert(const FixedPointMap& map, int iterations) {
  if (iterations < 1) throw std::invalid_argument("iteration count must be positive");
  return run_iteration(map.field(), {map.target()}, map.gamma(), iterations, map.target());
}

InversionTrajectory group_invert(const VelocityField& field, const std::vector<Vec>& targets,
                                 double gamma, int iterations) {
  if (targets.empty()) throw std::invalid_argument("group inversion needs at least one target");
  if (iterations < 1) throw std::invalid_argument("iteration count must be positive");
  for (const Vec& y : targets) {
    if (y.size() != field.dim()) {
      throw std::invalid_argument("group target dimension does not match field dimension");
    }
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("gamma must lie strictly inside (0,1)");
  }
  const Vec& start = targets[1 % targets.size()];
  return run_iteration(field, targets, gamma, iterations, start);
}

ClusterReport detect_period(const InversionTrajectory& traj, int window, double tol) {
  const int total = static_cast<int>(traj.iterates.size());
  if (window < 1 || tol <= 0.0) throw std::invalid_argument("window and tol must be positive");
  if (total < 2 * window) {
    throw std::invalid_argument("trajectory too short: need at least 2*window = " +
                                std::to_string(2 * window) + " iterates, have " +
                                std::to_string(total));
  }
  const int first = total - window;  // global index of the first tail iterate
  const int d = static_cast<int>(traj.iterates.front().size());

  Vec tail_mean = Vec::Zero(d);
  for (int i = first; i < total; ++i) tail_mean += traj.iterates[i];
  tail_mean /= static_cast<double>(window);
  double ms = 0.0;
  for (int i = first; i < total; ++i) ms += (traj.iterates[i] - tail_mean).squaredNorm();
  const double scale = std::max(std::sqrt(ms / window), 1e-12);

  ClusterReport report;
  report.mean_of_means = tail_mean;
  for (int p = 1; p <= window / 2; ++p) {
    double dmax = 0.0;
    for (int i = first; i + p < total; ++i) {
      dmax = std::max(dmax, (traj.iterates[i] - traj.iterates[i + p]).norm());
    }
    if (dmax < tol * scale) {
      report.period = p;
      report.phase_means.assign(p, Vec::Zero(d));
      report.phase_spreads.assign(p, 0.0);
      std::vector<int> counts(p, 0);
      for (int i = first; i < total; ++i) {
        const int phase = i % p;
        report.phase_means[phase] += traj.iterates[i];
        ++counts[phase];
      }
      for (int q = 0; q < p; ++q) report.phase_means[q] /= static_cast<double>(counts[q]);
      for (int i = first; i < total; ++i) {
        const int phase = i % p;
        report.phase_spreads[phase] += (traj.iterates[i] - report.phase_means[phase]).squaredNorm();
      }
      report.mean_of_means = Vec::Zero(d);
      for (int q = 0; q < p; ++q) {
        report.phase_spreads[q] = std::sqrt(report.phase_spreads[q] / counts[q]);
        report.mean_of_means += report.phase_means[q];
      }
      report.mean_of_means /= static_cast<double>(p);
      return report;
    }
  }
  report.period = 0;  // aperiodic; mean_of_means stays the tail mean
  return report;
}

RootResult find_root(const FixedPointMap& map, const Vec& init, double tol) {
  if (!init.allFinite()) throw std::invalid_argument("find_root: initial point is not finite");
  const int d = static_cast<int>(init.size());
  constexpr int kMaxIterations = 500;
  constexpr int kDivergenceLimit = 5;

  Vec z = init;
  Vec residual_vec = map.apply(z) - z;
  double residual = residual_vec.norm();

  RootResult best;
  best.z_star = z;
  best.residual = residual;
  best.method = RootMethod::kNewton;

  bool newton = true;
  int growth_streak = 0;
  int iter = 0;
  for (; iter < kMaxIterations && residual >= tol; ++iter) {
    Vec next;
    if (newton) {
      const Mat jac_g =
          map.gamma() * map.field().jacobian(z, map.gamma()) - Mat::Identity(d, d);
      next = z - jac_g.partialPivLu().solve(residual_vec);
    } else {
      next = 0.5 * (z + map.apply(z));
    }
    if (!next.allFinite()) {
      if (newton) {  // restart the averaged iteration from the best point
        newton = false;
        growth_streak = 0;
        z = best.z_star;
        residual_vec = map.apply(z) - z;
        residual = residual_vec.norm();
        continue;
      }
      break;
    }
    z = std::move(next);
    residual_vec = map.apply(z) - z;
    const double next_residual = residual_vec.norm();
    if (next_residual > residual) {
      if (++growth_streak >= kDivergenceLimit && newton) {
        newton = false;
        growth_streak = 0;
        z = best.z_star;
        residual_vec = map.apply(z) - z;
        residual = residual_vec.norm();
        continue;
      }
    } else {
      growth_streak = 0;
    }
    residual = next_residual;
    if (residual < best.residual) {
      best.z_star = z;
      best.residual = residual;
      best.method = newton ? RootMethod::kNewton : RootMethod::kAveragedIteration;
    }
  }
  best.iterations = iter;
  return best;
}

JacobianReport spectral_norm(const VelocityField& field, const Vec& z, double gamma) {
  const int d = static_cast<int>(z.size());
  const Mat jac = gamma * field.jacobian(z, gamma);

  // Fixed-seed start vector keeps repeated evaluations deterministic.
  Rng rng(0x05c111ULL);
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.normal();
  v.normalize();

  double sigma = 0.0;
  for (int it = 0; it < 100; ++it) {
    Vec w = jac.transpose() * (jac * v);
    const double norm = w.norm();
    if (norm == 0.0) {
      sigma = 0.0;
      break;
    }
    w /= norm;
    const double next_sigma = (jac * w).norm();
    const bool settled = std::abs(next_sigma - sigma) <= 1e-12 * std::max(1.0, next_sigma);
    v = std::move(w);
    sigma = next_sigma;
    if (settled) break;
  }

  JacobianReport report;
  report.spectral_norm = sigma;
  report.top_singular_vector = v;
  report.eval_point = z;
  report.t = gamma;
  return report;
}

Theorem3Report verify_theorem3(const VelocityField& field, const Vec& y, double gamma,
                               int iterations, int window, double tol) {
  const FixedPointMap map(field, y, gamma);
  const InversionTrajectory traj = invert(map, iterations);
  Theorem3Report report;
  report.clusters = detect_period(traj, window, tol);
  if (report.clusters.period != 2) {
    report.applicable = false;
    return report;
  }
  report.applicable = true;
  report.root = find_root(map, report.clusters.mean_of_means, 1e-12);
  const double separation =
      (report.clusters.phase_means[0] - report.clusters.phase_means[1]).norm();
  report.averaging_error = (report.clusters.mean_of_means - report.root.z_star).norm();
  report.relative_averaging_error =
      separation > 0.0 ? report.averaging_error / separation
                       : std::numeric_limits<double>::infinity();
  return report;
}

std::vector<SweepRow> stability_sweep(const GaussianMixture& mix, const Vec& y,
                                      const std::vector<double>& gamma_grid, int iterations,
                                      int window, double tol) {
  const AnalyticMixtureField field(mix);
  std::vector<SweepRow> rows;
  rows.reserve(gamma_grid.size());
  for (double gamma : gamma_grid) {
    SweepRow row;
    row.gamma = gamma;
    try {
      const FixedPointMap map(field, y, gamma);
      const InversionTrajectory traj = invert(map, iterations);
      const ClusterReport clusters = detect_period(traj, window, tol);
      row.period = clusters.period;
      row.converged = clusters.period == 1;
      const RootResult root = find_root(map, clusters.mean_of_means, 1e-12);
      row.root_residual = root.residual;
      row.spectral_norm_at_root = spectral_norm(field, root.z_star, gamma).spectral_norm;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace oscinv
