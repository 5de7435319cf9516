#include "explore/simd/kernels.hpp"

namespace explore::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_scalar(const double* w, std::size_t rows, std::size_t cols, const double* x,
                 const double* bias, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = dot_scalar(w + r * cols, x, cols);
    y[r] = bias ? acc + bias[r] : acc;
  }
}

void gemv_t_acc_scalar(const double* w, std::size_t rows, std::size_t cols, const double* dy,
                       double* dx) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (dy[r] == 0.0) continue;
    axpy_scalar(dy[r], w + r * cols, dx, cols);
  }
}

void ger_acc_scalar(double* g, std::size_t rows, std::size_t cols, const double* dy,
                    const double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (dy[r] == 0.0) continue;
    axpy_scalar(dy[r], x, g + r * cols, cols);
  }
}

void gemm_nt_scalar(const double* w, std::size_t rows, std::size_t cols, const double* x,
                    std::size_t n, const double* bias, double* y) {
  for (std::size_t i = 0; i < n; ++i) gemv_scalar(w, rows, cols, x + i * cols, bias, y + i * rows);
}

void gemm_nn_acc_scalar(const double* w, std::size_t rows, std::size_t cols, const double* g,
                        std::size_t n, double* dx) {
  for (std::size_t i = 0; i < n; ++i) gemv_t_acc_scalar(w, rows, cols, g + i * rows, dx + i * cols);
}

void gemm_tn_acc_scalar(double* dw, std::size_t rows, std::size_t cols, const double* g,
                        const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) ger_acc_scalar(dw, rows, cols, g + i * rows, x + i * cols);
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{dot_scalar,         axpy_scalar,       gemv_scalar,
                                 gemv_t_acc_scalar,  ger_acc_scalar,    gemm_nt_scalar,
                                 gemm_nn_acc_scalar, gemm_tn_acc_scalar};
  return table;
}

}  // namespace explore::simd
