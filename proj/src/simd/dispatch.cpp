#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "explore/simd/kernels.hpp"

namespace explore::simd {
namespace {

bool cpu_has_avx2() {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& table_for(Backend b) {
#if defined(__x86_64__) || defined(_M_X64)
  if (b == Backend::avx2) return avx2_kernels();
#endif
  return scalar_kernels();
}

Backend initial_backend() {
  if (const char* env = std::getenv("EXPLORE_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Backend::scalar;
    if (v == "avx2" && cpu_has_avx2()) return Backend::avx2;
  }
  return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> b{initial_backend()};
  return b;
}

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("simd: ") + what);
}

}  // namespace

std::string_view backend_name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

bool backend_supported(Backend b) { return b == Backend::scalar || cpu_has_avx2(); }

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (!backend_supported(b)) throw std::invalid_argument("simd: backend not supported on this CPU");
  current().store(b, std::memory_order_relaxed);
}

const KernelTable& kernels() { return table_for(active_backend()); }

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot size mismatch");
  return kernels().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), "axpy size mismatch");
  kernels().axpy(alpha, x.data(), y.data(), x.size());
}

void gemv(std::span<const double> w, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<const double> bias, std::span<double> y) {
  require(w.size() == rows * cols && x.size() == cols && y.size() == rows, "gemv shape mismatch");
  require(bias.empty() || bias.size() == rows, "gemv bias size mismatch");
  kernels().gemv(w.data(), rows, cols, x.data(), bias.empty() ? nullptr : bias.data(), y.data());
}

void gemv_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                std::span<const double> dy, std::span<double> dx) {
  require(w.size() == rows * cols && dy.size() == rows && dx.size() == cols,
          "gemv_t shape mismatch");
  kernels().gemv_t_acc(w.data(), rows, cols, dy.data(), dx.data());
}

void ger_acc(std::span<double> g, std::size_t rows, std::size_t cols,
             std::span<const double> dy, std::span<const double> x) {
  require(g.size() == rows * cols && dy.size() == rows && x.size() == cols, "ger shape mismatch");
  kernels().ger_acc(g.data(), rows, cols, dy.data(), x.data());
}

void gemm_nt(std::span<const double> w, std::size_t rows, std::size_t cols,
             std::span<const double> x, std::size_t n, std::span<const double> bias,
             std::span<double> y) {
  require(w.size() == rows * cols && x.size() == n * cols && y.size() == n * rows,
          "gemm_nt shape mismatch");
  require(bias.empty() || bias.size() == rows, "gemm_nt bias size mismatch");
  kernels().gemm_nt(w.data(), rows, cols, x.data(), n, bias.empty() ? nullptr : bias.data(),
                    y.data());
}

void gemm_nn_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                 std::span<const double> g, std::size_t n, std::span<double> dx) {
  require(w.size() == rows * cols && g.size() == n * rows && dx.size() == n * cols,
          "gemm_nn shape mismatch");
  kernels().gemm_nn_acc(w.data(), rows, cols, g.data(), n, dx.data());
}

void gemm_tn_acc(std::span<double> dw, std::size_t rows, std::size_t cols,
                 std::span<const double> g, std::span<const double> x, std::size_t n) {
  require(dw.size() == rows * cols && g.size() == n * rows && x.size() == n * cols,
          "gemm_tn shape mismatch");
  kernels().gemm_tn_acc(dw.data(), rows, cols, g.data(), x.data(), n);
}

}  // namespace explore::simd
