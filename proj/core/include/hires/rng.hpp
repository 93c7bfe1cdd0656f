#pragma once

#include <cmath>
#include <cstdint>

namespace hires {

// SplitMix64 generator with hand-rolled distributions. std:: engines are
// portable but std:: distributions are implementation-defined, which would
// break byte-identical corpus regeneration across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Modulo reduction; the bias is irrelevant at the
  // range sizes used here and the mapping stays platform-stable.
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
  }

  // Box-Muller, one draw per call (the sine partner is discarded so the
  // consumed stream length does not depend on call history).
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  uint64_t state_;
};

// Derives an independent stream seed from a base seed and a stream index.
inline uint64_t mix_seed(uint64_t base, uint64_t stream) {
  Rng r(base ^ (0x9E3779B97F4A7C15ull * (stream + 1)));
  return r.next_u64();
}

}  // namespace hires
