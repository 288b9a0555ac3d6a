#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cilbench {

// Stable 64-bit FNV-1a; std::hash is not portable across standard libraries.
std::uint64_t fnv1a64(std::string_view s);

std::uint64_t splitmix64(std::uint64_t x);

// Counter-based seed derivation: the same inputs give the same stream on any
// platform, with no shared state between callers.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

// Mersenne twister with distribution code owned here, since the standard
// distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace cilbench
