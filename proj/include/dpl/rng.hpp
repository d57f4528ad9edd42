#pragma once

// Seeded deterministic RNG used everywhere in the project: a PCG32 core
// (64-bit state, fixed increment) seeded through splitmix64. Identical seeds
// produce identical streams on every platform; no global state.

#include <cmath>
#include <cstdint>

namespace dpl {

inline constexpr uint64_t kSplitmixGamma = 0x9e3779b97f4a7c15ull;

inline uint64_t splitmix64(uint64_t x) {
  x += kSplitmixGamma;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// k-th element of the splitmix64 stream started at `seed`. Gives O(1)
// derivation of independent sub-streams (per sample, per epoch, per stage)
// without replaying the stream.
inline uint64_t derive_seed(uint64_t seed, uint64_t k) {
  return splitmix64(seed + k * kSplitmixGamma);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(splitmix64(seed)) {}

  uint32_t next_u32() {
    const uint64_t old = state_;
    state_ = old * 6364136223846793005ull + 1442695040888963407ull;
    const auto xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    const auto rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  // In [0, 1). 24-bit resolution so the float conversion can never round
  // up to 1.0.
  float next_f32() {
    return static_cast<float>(next_u32() >> 8) * 0x1.0p-24f;
  }

  // Requires lo <= hi; lo == hi returns exactly lo.
  float uniform(float lo, float hi) { return lo + (hi - lo) * next_f32(); }

  // Standard normal via Box-Muller (cosine branch). Consumes exactly two
  // uniforms per call so the stream layout is position-independent.
  float normal() {
    const float u1 = 1.0f - next_f32();  // (0, 1], keeps the log finite
    const float u2 = next_f32();
    const float r = std::sqrt(-2.0f * std::log(u1));
    return r * std::cos(6.2831853071795864769f * u2);
  }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
};

}  // namespace dpl
