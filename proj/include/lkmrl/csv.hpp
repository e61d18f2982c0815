#pragma once

#include <cstdio>
#include <string>

namespace lkmrl {

/// Fixed CSV formatting for reals: 17 significant digits (round-trips a double), "C" locale.
inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace lkmrl
