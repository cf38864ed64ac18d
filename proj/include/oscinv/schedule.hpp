#pragma once

#include <stdexcept>
#include <vector>

namespace oscinv {

/// Discrete noise schedule sigma(0) = 0 < sigma(1) < ... < sigma(T) = 1.
class TimeSchedule {
 public:
  /// sigma values indexed by step, size T+1; endpoints must be exactly 0 and 1
  /// and the sequence strictly increasing.
  explicit TimeSchedule(std::vector<double> sigma) : sigma_(std::move(sigma)) {
    if (sigma_.size() < 2) throw std::invalid_argument("schedule needs at least one step");
    if (sigma_.front() != 0.0 || sigma_.back() != 1.0) {
      throw std::invalid_argument("schedule endpoints must be sigma(0)=0 and sigma(T)=1");
    }
    for (std::size_t i = 1; i < sigma_.size(); ++i) {
      if (!(sigma_[i] > sigma_[i - 1])) {
        throw std::invalid_argument("schedule must be strictly increasing");
      }
    }
  }

  /// The identity schedule sigma(t) = t/T.
  static TimeSchedule identity(int total_steps) {
    if (total_steps < 1) throw std::invalid_argument("total_steps must be positive");
    std::vector<double> sigma(total_steps + 1);
    for (int i = 0; i <= total_steps; ++i) {
      sigma[i] = static_cast<double>(i) / static_cast<double>(total_steps);
    }
    sigma.front() = 0.0;
    sigma.back() = 1.0;
    return TimeSchedule(std::move(sigma));
  }

  int total_steps() const { return static_cast<int>(sigma_.size()) - 1; }
  double sigma(int step) const { return sigma_.at(step); }

 private:
  std::vector<double> sigma_;
};

}  // namespace oscinv
