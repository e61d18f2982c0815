#include "lkmrl/rng.hpp"

namespace lkmrl {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::size_t Rng::index(std::size_t n) {
  // Lemire's multiply-shift with rejection; unbiased.
  const unsigned __int128 range = n;
  std::uint64_t x = engine_();
  unsigned __int128 m = static_cast<unsigned __int128>(x) * range;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - static_cast<std::uint64_t>(n)) % n;
    while (low < threshold) {
      x = engine_();
      m = static_cast<unsigned __int128>(x) * range;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::size_t>(m >> 64);
}

}  // namespace lkmrl
