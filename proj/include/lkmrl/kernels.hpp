#pragma once

#include <cstddef>
#include <string_view>

// Dense float64 kernels behind the MLP. Each variant is a table of plain
// function pointers; the active table is chosen once at startup from CPU
// features and can be pinned with LKMRL_KERNELS=scalar|avx2.
//
// Matrices are row-major, `rows x cols`, with no padding.

namespace lkmrl::kernels {

struct KernelTable {
  const char* name;

  double (*dot)(const double* x, const double* y, std::size_t n);

  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);

  // y = W x + b
  void (*affine)(const double* w, const double* x, const double* b, double* y,
                 std::size_t rows, std::size_t cols);

  // out += W^T d
  void (*affine_transpose_accumulate)(const double* w, const double* d,
                                      double* out, std::size_t rows,
                                      std::size_t cols);

  // G += d x^T
  void (*outer_accumulate)(const double* d, const double* x, double* g,
                           std::size_t rows, std::size_t cols);

  // Bias-corrected Adam ascent: p += lr * mhat / (sqrt(vhat) + eps).
  void (*adam_ascent)(double* p, const double* g, double* m, double* v,
                      std::size_t n, double lr, double beta1, double beta2,
                      double eps, double bias1, double bias2);
};

const KernelTable& scalar();

/// nullptr when the AVX2 variant was not compiled in or the CPU lacks it.
const KernelTable* avx2();

bool cpu_has_avx2_fma();

/// Kernel table used by the networks.
const KernelTable& active();

/// Pins the active table (tests and benchmarks). Not thread-safe with
/// concurrent kernel use.
void set_active(const KernelTable& table);

/// Finds a table by name ("scalar", "avx2"); nullptr if unavailable.
const KernelTable* by_name(std::string_view name);

}  // namespace lkmrl::kernels
