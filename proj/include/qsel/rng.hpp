#pragma once

#include <cmath>
#include <cstdint>

namespace qsel {

// Deterministic RNG pinned in-repo so that archives and reports are byte-identical
// across reruns and toolchains (std::normal_distribution is implementation-defined).
struct Rng {
  std::uint64_t state;

  explicit Rng(std::uint64_t seed) : state(seed) {}

  // splitmix64
  std::uint64_t next_u64() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform on [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // standard normal via Box-Muller; two uniforms per draw, no cached state
  double next_gaussian() {
    double u1 = 1.0 - next_double();  // (0, 1], keeps the log finite
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }
};

// Stable derivation of per-role sub-seeds from one base seed.
inline std::uint64_t seed_mix(std::uint64_t base, std::uint64_t tag) {
  Rng r(base ^ (tag * 0xD1B54A32D192ED03ull));
  return r.next_u64();
}

}  // namespace qsel
