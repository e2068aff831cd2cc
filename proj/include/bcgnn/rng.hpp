#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace bcgnn {

/// Seeded pseudo-random stream used everywhere in the project.
///
/// The engine is always std::mt19937_64. Uniform doubles take the top 53 bits
/// of one engine output, normals use the Box-Muller transform, so every draw
/// is fully specified and replayable from the seed alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// True with probability p.
  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n) {
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % bound);
  }

  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 mix of (seed, stream); used to derive independent sub-streams
/// (parameter init, per-epoch drops, ...) from one run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace bcgnn
