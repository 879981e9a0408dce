#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace specrisk {

// SplitMix64 (Steele, Lea, Flood 2014). The state walks a fixed odd-constant
// orbit and each output is a bijective hash of the counter, so perturbing the
// seed yields a statistically independent stream. That makes per-replicate
// streams cheap: replicate k runs on split_seed(seed, k) and never touches the
// parent stream, which is what keeps results independent of thread count.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform01_open() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

  // Standard normal, Marsaglia polar method. Generates pairs and caches the
  // spare, so the draw sequence is still a pure function of the seed.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  // N(0, sigma^2) conditioned on [-bound, bound], by rejection. The acceptance
  // rate is 2*Phi(bound/sigma) - 1, fine for bound/sigma >= 0.1.
  double truncated_normal(double bound, double sigma) {
    if (!(bound > 0.0) || !(sigma > 0.0)) {
      throw std::invalid_argument("truncated_normal: bound and sigma must be positive");
    }
    for (int i = 0; i < 100000; ++i) {
      const double z = sigma * normal();
      if (z >= -bound && z <= bound) return z;
    }
    throw std::runtime_error("truncated_normal: rejection sampler failed to accept");
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  return seed ^ (stream * 0x9E3779B97F4A7C15ull);
}

// Var of N(0, sigma^2) conditioned on [-bound, bound]:
//   sigma^2 * (1 - 2*alpha*phi(alpha) / (2*Phi(alpha) - 1)),  alpha = bound/sigma.
// For alpha >= ~9 the correction underflows and the result equals sigma^2.
inline double truncated_normal_variance(double bound, double sigma_sq) {
  if (!(bound > 0.0) || !(sigma_sq > 0.0)) {
    throw std::invalid_argument("truncated_normal_variance: arguments must be positive");
  }
  const double sigma = std::sqrt(sigma_sq);
  const double alpha = bound / sigma;
  const double phi = std::exp(-0.5 * alpha * alpha) / std::sqrt(2.0 * M_PI);
  const double mass = std::erf(alpha / std::sqrt(2.0));  // = 2*Phi(alpha) - 1
  return sigma_sq * (1.0 - 2.0 * alpha * phi / mass);
}

}  // namespace specrisk
