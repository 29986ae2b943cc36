#pragma once

#include <cstdint>

namespace hzo {

/// xoshiro256** seeded through splitmix64.
///
/// The generator is part of the reproducibility contract: every report
/// records the seed, and the same seed yields the same stream on any
/// platform. Normal deviates use Box-Muller on 53-bit uniforms so they do
/// not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi);

  /// Standard normal deviate.
  double normal();

  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Independent generator for a sub-task, derived from this generator's seed
  /// and `stream`. Does not advance this generator.
  Rng split(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace hzo
