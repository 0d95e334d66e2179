#include "otplug/core/rng.hpp"

namespace otplug {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), key_(mix64(mix64(seed) ^ (stream * kGolden + 0x632BE59BD9B4E019ULL))) {}

std::uint64_t Rng::next_u64() {
  const std::uint64_t c = counter_++;
  return mix64(key_ + (c + 1) * kGolden);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

Rng Rng::fork(std::uint64_t sub_stream) const {
  return Rng(mix64(key_ ^ 0xD1B54A32D192ED03ULL), sub_stream);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t n, std::uint64_t rep) {
  std::uint64_t h = mix64(base + kGolden);
  h = mix64(h ^ (n + 0x9FB21C651E98DF25ULL));
  h = mix64(h ^ (rep + 0xC13FA9A902A6328FULL));
  return h;
}

}  // namespace otplug
