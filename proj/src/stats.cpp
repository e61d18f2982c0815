#include "lkmrl/stats.hpp"

#include <cmath>
#include <vector>

#include "lkmrl/errors.hpp"

namespace lkmrl::stats {

MeanVar mean_var(std::span<const double> xs) {
  MeanVar out;
  out.n = xs.size();
  if (xs.empty()) return out;
  double s = 0.0;
  for (double x : xs) s += x;
  out.mean = s / static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.var = ss / static_cast<double>(xs.size() - 1);
  return out;
}

PairedInterval mean_interval(std::span<const double> xs, double z) {
  const MeanVar mv = mean_var(xs);
  PairedInterval out;
  out.n = mv.n;
  out.mean_diff = mv.mean;
  out.se = mv.n > 0 ? std::sqrt(mv.var / static_cast<double>(mv.n)) : 0.0;
  out.lo = out.mean_diff - z * out.se;
  out.hi = out.mean_diff + z * out.se;
  return out;
}

PairedInterval paired_interval(std::span<const double> a, std::span<const double> b, double z) {
  if (a.size() != b.size()) throw UsageError("paired_interval: samples differ in length");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return mean_interval(d, z);
}

}  // namespace lkmrl::stats
