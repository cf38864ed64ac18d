#pragma once

#include <string>
#include <vector>

#include "oscinv/field.hpp"
#include "oscinv/gmm.hpp"
#include "oscinv/types.hpp"

namespace oscinv {

/// The fixed-point map f(z) = y + gamma * v(z, gamma) whose fixed points are
/// the exact one-step inversions of the target y at intermediate time gamma.
class FixedPointMap {
 public:
  FixedPointMap(const VelocityField& field, Vec target, double gamma);

  const VelocityField& field() const { return *field_; }
  const Vec& target() const { return target_; }
  double gamma() const { return gamma_; }

  Vec apply(const Vec& z) const { return target_ + gamma_ * field_->eval(z, gamma_); }

 private:
  const VelocityField* field_;  // non-owning
  Vec target_;
  double gamma_;
};

/// One-step prediction back to the data manifold: z - gamma * v(z, gamma).
Vec one_step_predict(const FixedPointMap& map, const Vec& z);

struct InversionTrajectory {
  std::vector<Vec> iterates;          // z^(0) .. z^(K)
  std::vector<double> step_distances; // ||z^(k+1) - z^(k)||, size K
  std::vector<Vec> one_step_preds;    // prediction at each iterate, size K+1
};

/// Fixed-point iteration z^(k+1) = f(z^(k)) with z^(0) = y.
/// Throws std::runtime_error naming the step on a non-finite iterate.
InversionTrajectory invert(const FixedPointMap& map, int iterations);

/// Group iteration z^(k+1) = y_(k mod m) + gamma * v(z^(k), gamma) with
/// z^(0) = y_(1 mod m). For m = 1 this is bitwise-identical to invert.
InversionTrajectory group_invert(const VelocityField& field, const std::vector<Vec>& targets,
                                 double gamma, int iterations);

struct ClusterReport {
  int period = 0;                    // 0 aperiodic, 1 converged, >=2 cycle length
  std::vector<Vec> phase_means;      // one per residue class, empty when period = 0
  std::vector<double> phase_spreads; // RMS radius per phase
  Vec mean_of_means;                 // unweighted phase-mean average; tail mean when period = 0
};

/// Examines the last `window` iterates: returns the smallest period p with
/// max_k ||z^(k) - z^(k+p)|| < tol * scale, where scale is the RMS distance
/// of tail iterates to their mean (floored at 1e-12). Phases partition the
/// tail by global iterate index mod p.
ClusterReport detect_period(const InversionTrajectory& traj, int window, double tol);

enum class RootMethod { kNewton, kAveragedIteration };

struct RootResult {
  Vec z_star;
  double residual = 0.0;  // ||f(z*) - z*||, reported, never asserted zero
  RootMethod method = RootMethod::kNewton;
  int iterations = 0;
};

/// Newton iteration on g(z) = f(z) - z using the field Jacobian; falls back
/// to the averaged iteration z <- (z + f(z))/2 after 5 consecutive residual
/// increases. Stops when the residual drops below tol or after 500 steps,
/// returning the best point seen either way.
RootResult find_root(const FixedPointMap& map, const Vec& init, double tol);

struct JacobianReport {
  double spectral_norm = 0.0;
  Vec top_singular_vector;
  Vec eval_point;
  double t = 0.0;
};

/// Largest singular value of J_f = gamma * dv/dz at (z, gamma), by power
/// iteration on J^T J (100 iterations or relative change < 1e-12).
JacobianReport spectral_norm(const VelocityField& field, const Vec& z, double gamma);

struct Theorem3Report {
  bool applicable = false;  // detect_period found p = 2
  ClusterReport clusters;
  RootResult root;
  double averaging_error = 0.0;           // ||(z' + z'')/2 - z*||
  double relative_averaging_error = 0.0;  // averaging_error / ||z' - z''||
};

/// Runs invert + detect_period; when the tail is a 2-cycle, finds the exact
/// root from the phase-mean average and reports how well the average
/// approximates it.
Theorem3Report verify_theorem3(const VelocityField& field, const Vec& y, double gamma,
                               int iterations, int window, double tol);

struct SweepRow {
  double gamma = 0.0;
  int period = 0;
  double spectral_norm_at_root = 0.0;
  double root_residual = 0.0;
  bool converged = false;  // period == 1
  std::string error;       // non-empty when the row failed
};

/// For each gamma: invert from y, detect the period, locate the root from the
/// phase-mean average and evaluate the spectral norm there. Row failures are
/// recorded and the sweep continues.
std::vector<SweepRow> stability_sweep(const GaussianMixture& mix, const Vec& y,
                                      const std::vector<double>& gamma_grid, int iterations,
                                      int window, double tol);

}  // namespace oscinv
