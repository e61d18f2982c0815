#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace lkmrl {

/// Named sub-streams derived from a single episode or run seed.
enum class Stream : std::uint64_t {
  Car = 1,
  Pedestrian = 2,
  Trainer = 3,
  Init = 4,
  Cola = 5,
  Episode = 6,
};

/// SplitMix64 finalizer over (seed, stream); used to derive independent seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);
inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream) {
  return derive_seed(seed, static_cast<std::uint64_t>(stream));
}

/// mt19937_64 with bit-level conversions so draws are identical across
/// standard library implementations (std distributions are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform index in [0, n); n must be positive.
  std::size_t index(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace lkmrl
