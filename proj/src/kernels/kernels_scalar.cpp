#include "nncert/kernels.hpp"

namespace nncert::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void scale_scalar(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = alpha * x[i];
}

void relu_scalar(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void affine_scalar(const double* a, std::size_t rows, std::size_t cols, const double* x,
                   const double* c, double* out) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot_scalar(a + r * cols, x, cols) + c[r];
}

void interval_affine_scalar(const double* a, std::size_t rows, std::size_t cols,
                            const double* lo, const double* hi, const double* c, double* out_lo,
                            double* out_hi) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* w = a + r * cols;
    double up = 0.0;
    double down = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (w[j] > 0.0) {
        up += w[j] * hi[j];
        down += w[j] * lo[j];
      } else {
        up += w[j] * lo[j];
        down += w[j] * hi[j];
      }
    }
    out_lo[r] = down + c[r];
    out_hi[r] = up + c[r];
  }
}

constexpr Table kScalar{dot_scalar,    axpy_scalar,   scale_scalar,
                        relu_scalar,   affine_scalar, interval_affine_scalar};

}  // namespace

const Table& scalar_table() noexcept { return kScalar; }

}  // namespace nncert::kernels
