#pragma once

#include <cstddef>
#include <span>

namespace lkmrl::stats {

inline constexpr double kZ95TwoSided = 1.959963984540054;
inline constexpr double kZ95OneSided = 1.6448536269514722;

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;  // unbiased; 0 for fewer than two samples
  std::size_t n = 0;
};

MeanVar mean_var(std::span<const double> xs);

/// Normal-approximation interval for mean(a - b) over paired samples.
struct PairedInterval {
  double mean_diff = 0.0;
  double se = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n = 0;

  bool excludes_zero() const { return lo > 0.0 || hi < 0.0; }
};

PairedInterval paired_interval(std::span<const double> a, std::span<const double> b,
                               double z = kZ95TwoSided);

/// Interval for a single sample's mean.
PairedInterval mean_interval(std::span<const double> xs, double z = kZ95TwoSided);

}  // namespace lkmrl::stats
