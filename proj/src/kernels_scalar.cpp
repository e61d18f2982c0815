#include <cmath>

#include "lkmrl/kernels.hpp"

namespace lkmrl::kernels {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void affine_scalar(const double* w, const double* x, const double* b,
                   double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = b[r] + dot_scalar(w + r * cols, x, cols);
  }
}

void affine_transpose_accumulate_scalar(const double* w, const double* d,
                                        double* out, std::size_t rows,
                                        std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (d[r] != 0.0) axpy_scalar(d[r], w + r * cols, out, cols);
  }
}

void outer_accumulate_scalar(const double* d, const double* x, double* g,
                             std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (d[r] != 0.0) axpy_scalar(d[r], x, g + r * cols, cols);
  }
}

void adam_ascent_scalar(double* p, const double* g, double* m, double* v,
                        std::size_t n, double lr, double beta1, double beta2,
                        double eps, double bias1, double bias2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] / bias1;
    const double vhat = v[i] / bias2;
    p[i] += lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

const KernelTable& scalar() {
  static const KernelTable table{
      "scalar",
      dot_scalar,
      axpy_scalar,
      affine_scalar,
      affine_transpose_accumulate_scalar,
      outer_accumulate_scalar,
      adam_ascent_scalar,
  };
  return table;
}

}  // namespace lkmrl::kernels
