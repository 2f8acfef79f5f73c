#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace idpp {

// Seeded RNG with hand-rolled distributions. std::uniform_real_distribution
// is implementation-defined, so we derive doubles from raw mt19937_64 output
// to keep runs reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; one value per call keeps the stream order obvious.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    // guard against log(0)
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) { return engine_() % n; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace idpp
