#pragma once

#include <vector>

#include "oscinv/field.hpp"
#include "oscinv/schedule.hpp"
#include "oscinv/types.hpp"

namespace oscinv {

/// Euler sampler: z_{t-1} = z_t + (sigma_{t-1} - sigma_t) v(z_t, sigma_t),
/// integrating from t = T (noise) down to t = 0 (data). Field evaluation
/// times are clamped into (0,1); the returned trajectory holds T+1 states in
/// generation order, so front() == z_T and back() == z_0.
/// Throws std::runtime_error naming the step if an iterate goes non-finite.
std::vector<Vec> euler_sample(const VelocityField& field, const TimeSchedule& schedule,
                              const Vec& z_noise);

}  // namespace oscinv
