#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "qsc/common.hpp"

namespace qsc {

// SplitMix64 step; used to expand seeds into engine state and to derive
// independent substream seeds.
inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Deterministic seed for a named substream (matrix / noise / trial ...).
// Different salts give statistically independent streams for the same base
// seed, so parallel trials stay reproducible without shared state.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t x = base ^ (0xD1B54A32D192ED03ULL * (salt + 1));
  return splitmix64(x);
}

namespace seed_salt {
inline constexpr std::uint64_t matrix = 0x11;
inline constexpr std::uint64_t noise = 0x22;
inline constexpr std::uint64_t signal = 0x33;
inline constexpr std::uint64_t coefficients = 0x44;
inline constexpr std::uint64_t trial_base = 0x1000;
}  // namespace seed_salt

// xoshiro256++ with Box-Muller normals.  Self-contained so that runs are
// bit-reproducible across standard libraries and platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t x = seed ^ (0x9E3779B97F4A7C15ULL * (stream + 1));
    for (auto& s : state_) s = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the paired draw is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    const double v = uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    spare_ = r * std::sin(kTwoPi * v);
    has_spare_ = true;
    return r * std::cos(kTwoPi * v);
  }

  // CN(0,1): real and imaginary parts each N(0, 1/2).
  Complex complex_normal() {
    const double a = normal();
    const double b = normal();
    return {a * kInvSqrt2, b * kInvSqrt2};
  }

 private:
  static std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace qsc
