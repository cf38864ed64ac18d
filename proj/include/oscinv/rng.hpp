#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace oscinv {

/// splitmix64 step: advances the state and returns the next value.
/// Used both as a standalone mixer and to expand seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Per-trial seed derivation: trials are independent streams of a base seed.
/// seed_k = splitmix64(base + (k+1) * golden-ratio increment).
inline std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t trial_index) {
  std::uint64_t state = base_seed + (trial_index + 1) * 0x9e3779b97f4a7c15ULL;
  return splitmix64(state);
}

/// Deterministic random stream. std::mt19937_64 output is fully specified by
/// the standard; uniform and normal draws are derived from it by fixed
/// arithmetic (no std::*_distribution, whose algorithms are
/// implementation-defined), so replays are bit-identical across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = kTwoPi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Index draw from unnormalized non-negative weights (inverse CDF).
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    for (std::size_t k = 0; k + 1 < weights.size(); ++k) {
      u -= weights[k];
      if (u < 0.0) return static_cast<int>(k);
    }
    return static_cast<int>(weights.size()) - 1;
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace oscinv
