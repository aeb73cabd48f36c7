#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace sapo {

/// Seeded random source. Draws are bit-reproducible across runs and platforms
/// because uniforms are built from raw engine output rather than a
/// library-defined distribution.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Index drawn from an unnormalized-free probability vector by inverse CDF.
  std::size_t categorical(std::span<const double> probs);

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Mixes a base seed with stream identifiers so independent consumers
/// (rollouts, partitions, evaluation) never share a sequence.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

}  // namespace sapo
