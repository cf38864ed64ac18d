#pragma once

#include <utility>

#include "oscinv/gmm.hpp"
#include "oscinv/types.hpp"

namespace oscinv {

/// A velocity field v(x, t) on R^d x (0,1). eval must be deterministic:
/// identical inputs give bitwise-identical outputs.
class VelocityField {
 public:
  virtual ~VelocityField() = default;

  virtual int dim() const = 0;
  virtual Vec eval(const Vec& x, double t) const = 0;

  /// True when jacobian() is exact rather than the finite-difference default.
  virtual bool has_analytic_jacobian() const { return false; }

  /// dv/dx at (x, t); the base implementation uses central differences.
  virtual Mat jacobian(const Vec& x, double t) const;
};

/// Exact conditional-expectation field of a Gaussian mixture target.
class AnalyticMixtureField final : public VelocityField {
 public:
  explicit AnalyticMixtureField(GaussianMixture mix) : mix_(std::move(mix)) {}

  int dim() const override { return mix_.dim(); }
  Vec eval(const Vec& x, double t) const override { return analytic_velocity(mix_, x, t); }
  bool has_analytic_jacobian() const override { return true; }
  Mat jacobian(const Vec& x, double t) const override { return analytic_jacobian(mix_, x, t); }

  const GaussianMixture& mixture() const { return mix_; }

 private:
  GaussianMixture mix_;
};

}  // namespace oscinv
