#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace keynet {

// SplitMix64 finalizer. Used for seed derivation only.
std::uint64_t splitmix64(std::uint64_t x);

// Deterministic, splittable generator. Every random quantity in the library
// is drawn from an Rng built from an explicit seed; there is no hidden
// entropy source. Uniform reals, bounded integers and shuffles are computed
// here rather than through <random> distributions so that their output does
// not depend on the standard library implementation.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  // Child generator for an independent named stream. split(k) depends only on
  // (seed, k), never on how many values were drawn from *this.
  Rng split(std::uint64_t stream) const;

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  // Uniform on [0, n) without modulo bias. n must be > 0.
  std::uint64_t below(std::uint64_t n);

  // Standard normal (Box-Muller on uniform()).
  double normal();

  // Random permutation of 0..n-1 (Fisher-Yates).
  std::vector<std::size_t> permutation(std::size_t n);

  // UniformRandomBitGenerator interface so std distributions can consume the
  // stream where bit-exact portability is not required.
  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace keynet
