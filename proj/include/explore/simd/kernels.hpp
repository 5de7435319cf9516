#pragma once

// Dense f64 inner loops used by the network layers and the tape.
//
// Every kernel has a portable scalar reference and, on x86-64, an AVX2+FMA
// variant. The active backend is chosen once at startup from CPU features
// (override with EXPLORE_SIMD=scalar|avx2) and can be switched at runtime
// for equivalence testing. Results between backends agree to rounding, not
// bit-for-bit; each backend on its own is deterministic.

#include <cstddef>
#include <span>
#include <string_view>

namespace explore::simd {

enum class Backend { scalar, avx2 };

std::string_view backend_name(Backend b);

bool backend_supported(Backend b);

Backend active_backend();

/// Throws std::invalid_argument if the backend is not supported on this CPU.
void set_backend(Backend b);

/// RAII switch used by tests and benchmarks.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) : saved_(active_backend()) { set_backend(b); }
  ~ScopedBackend() { set_backend(saved_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend saved_;
};

/// Raw kernel table. Matrices are row-major `rows x cols`.
struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = W x (+ bias if non-null)
  void (*gemv)(const double* w, std::size_t rows, std::size_t cols, const double* x,
               const double* bias, double* y);
  // dx += W^T dy
  void (*gemv_t_acc)(const double* w, std::size_t rows, std::size_t cols, const double* dy,
                     double* dx);
  // G += dy x^T
  void (*ger_acc)(double* g, std::size_t rows, std::size_t cols, const double* dy,
                  const double* x);
  // Batched forms over n row vectors (X is n x cols, Y and G are n x rows).
  // Y = X W^T (+ bias per row if non-null)
  void (*gemm_nt)(const double* w, std::size_t rows, std::size_t cols, const double* x,
                  std::size_t n, const double* bias, double* y);
  // dX += G W
  void (*gemm_nn_acc)(const double* w, std::size_t rows, std::size_t cols, const double* g,
                      std::size_t n, double* dx);
  // dW += G^T X
  void (*gemm_tn_acc)(double* dw, std::size_t rows, std::size_t cols, const double* g,
                      const double* x, std::size_t n);
};

const KernelTable& scalar_kernels();
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_kernels();
#endif
const KernelTable& kernels();

// Checked span front-ends over the active table.

double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void gemv(std::span<const double> w, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<const double> bias, std::span<double> y);
void gemv_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                std::span<const double> dy, std::span<double> dx);
void ger_acc(std::span<double> g, std::size_t rows, std::size_t cols,
             std::span<const double> dy, std::span<const double> x);
void gemm_nt(std::span<const double> w, std::size_t rows, std::size_t cols,
             std::span<const double> x, std::size_t n, std::span<const double> bias,
             std::span<double> y);
void gemm_nn_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                 std::span<const double> g, std::size_t n, std::span<double> dx);
void gemm_tn_acc(std::span<double> dw, std::size_t rows, std::size_t cols,
                 std::span<const double> g, std::span<const double> x, std::size_t n);

}  // namespace explore::simd
