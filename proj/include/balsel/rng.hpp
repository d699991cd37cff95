#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace balsel {

// SplitMix64 generator. Standard-library distributions are not bit-stable
// across implementations, so everything that must reproduce byte-identical
// artifacts draws from this instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Exponential(1); finite for every draw since next_double() < 1.
  double next_exponential() { return -std::log1p(-next_double()); }

  // Uniform integer in [0, n); n must be > 0.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t state_;
};

// Deterministic seed derivation for independent streams.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return mix_seed(mix_seed(a, b, c), d);
}

// Index of the category a uniform draw u in [0,1) falls into, given
// probabilities that sum to 1. Residue past the last boundary maps to the
// final category.
inline std::size_t pick_category(double u, std::span<const double> probabilities) {
  double cumulative = 0.0;
  for (std::size_t c = 0; c + 1 < probabilities.size(); ++c) {
    cumulative += probabilities[c];
    if (u < cumulative) return c;
  }
  return probabilities.size() - 1;
}

}  // namespace balsel
