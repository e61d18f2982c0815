#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lkmrl::selftest {

struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;  // the measured quantity the check thresholds
  std::string detail;
};

/// Max relative error between backprop and central differences over every
/// parameter of `nets` random networks (log-prob, entropy and value heads).
double gradcheck_max_rel_error(int nets, std::uint64_t seed);

/// Max |sum(p) - 1| over random logit vectors, including extreme ones.
double softmax_max_error(int trials, std::uint64_t seed);

/// Minimum KL(p || q) over random pairs; `self_max` receives max |KL(p || p)|.
double kl_min_over_pairs(int pairs, std::uint64_t seed, double* self_max);

/// Max parameter change after Adam steps with an all-zero gradient.
double adam_zero_grad_drift(std::uint64_t seed);

/// Max |scalar - avx2| over the kernel entry points; 0 when AVX2 is absent.
double kernel_max_mismatch(std::uint64_t seed);

/// Environment invariants over scripted rollouts; returns the violation count.
long env_invariant_violations(int episodes, std::uint64_t seed);

std::vector<Check> run_all(std::uint64_t seed);

}  // namespace lkmrl::selftest
