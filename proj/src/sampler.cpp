#include "oscinv/sampler.hpp"

#include <stdexcept>
#include <string>

namespace oscinv {

namespace {
constexpr double kTimeClamp = 1e-6;
}

Mat VelocityField::jacobian(const Vec& x, double t) const {
  const int d = dim();
  const double h = 6e-6 * (1.0 + x.cwiseAbs().maxCoeff());
  Mat jac(d, d);
  Vec probe = x;
  for (int j = 0; j < d; ++j) {
    probe[j] = x[j] + h;
    const Vec plus = eval(probe, t);
    probe[j] = x[j] - h;
    const Vec minus = eval(probe, t);
    probe[j] = x[j];
    jac.col(j) = (plus - minus) / (2.0 * h);
  }
  return jac;
}

std::vector<Vec> euler_sample(const VelocityField& field, const TimeSchedule& schedule,
                              const Vec& z_noise) {
  if (!z_noise.allFinite()) throw std::runtime_error("euler_sample: starting point is not finite");
  const int total = schedule.total_steps();
  std::vector<Vec> trajectory;
  trajectory.reserve(total + 1);
  trajectory.push_back(z_noise);
  Vec z = z_noise;
  for (int step = total; step >= 1; --step) {
    double t_eval = schedule.sigma(step);
    if (t_eval > 1.0 - kTimeClamp) t_eval = 1.0 - kTimeClamp;
    if (t_eval < kTimeClamp) t_eval = kTimeClamp;
    z += (schedule.sigma(step - 1) - schedule.sigma(step)) * field.eval(z, t_eval);
    if (!z.allFinite()) {
      throw std::runtime_error("euler_sample: non-finite state after step " +
                               std::to_string(step) + " (sigma " +
                               std::to_string(schedule.sigma(step)) + ")");
    }
    trajectory.push_back(z);
  }
  return trajectory;
}

}  // namespace oscinv
