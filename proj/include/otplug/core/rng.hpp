#pragma once

#include <cstdint>

namespace otplug {

/// Counter-based generator: draw k of stream s under seed is a fixed
/// function of (seed, s, k), so replications can run in any order or on
/// any thread and still reproduce bit-exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform draw in [0,1) with 53 random bits.
  double uniform();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  /// Independent generator for a sub-stream, keyed by this generator's
  /// seed and stream.
  Rng fork(std::uint64_t sub_stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Seed of replication `rep` at sample size `n` under a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t n, std::uint64_t rep);

}  // namespace otplug
