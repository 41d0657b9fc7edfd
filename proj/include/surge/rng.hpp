#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

namespace surge {

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

// Counter-based generator: every draw is a pure function of (seed, stream,
// counter), so replicas can own disjoint streams and replay exactly.
struct Rng {
  std::uint64_t key = 0;
  std::uint64_t counter = 0;

  static Rng make(std::uint64_t seed, std::uint64_t stream) {
    Rng r;
    r.key = detail::mix64(seed ^ detail::mix64(stream * 0x100000001b3ULL + 0x5851f42d4c957f2dULL));
    return r;
  }

  std::uint64_t next_u64() { return detail::mix64(key + 0x9e3779b97f4a7c15ULL * ++counter); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; consumes two uniforms per call
  double normal() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }
};

// Stream ids keep independent uses of the same run seed decorrelated.
namespace rng_stream {
inline constexpr std::uint64_t kWeights = 1;
inline constexpr std::uint64_t kData = 2;
inline constexpr std::uint64_t kTheoryModel = 3;
inline constexpr std::uint64_t kTheorySamples = 4;
inline constexpr std::uint64_t kNoise = 5;
inline std::uint64_t layer_stream(std::uint64_t base, std::uint64_t layer) {
  return base * 0x10001ULL + layer;
}
}  // namespace rng_stream

}  // namespace surge
