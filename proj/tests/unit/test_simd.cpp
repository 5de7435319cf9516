#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "explore/num/rng.hpp"
#include "explore/simd/kernels.hpp"

using namespace explore;

namespace {

std::vector<double> random_vec(num::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("scalar backend is always available") {
  CHECK(simd::backend_supported(simd::Backend::scalar));
  simd::ScopedBackend guard(simd::Backend::scalar);
  CHECK(simd::active_backend() == simd::Backend::scalar);
}

TEST_CASE("avx2 kernels match the scalar reference") {
  if (!simd::backend_supported(simd::Backend::avx2)) {
    MESSAGE("AVX2 not available; equivalence test skipped");
    return;
  }
  const auto& ref = simd::scalar_kernels();
  const auto& fast = simd::avx2_kernels();
  num::Rng rng(7);
  // odd sizes exercise every remainder path
  for (std::size_t rows : {1u, 3u, 4u, 5u, 17u, 64u}) {
    for (std::size_t cols : {1u, 2u, 3u, 4u, 7u, 8u, 9u, 33u, 256u}) {
      auto w = random_vec(rng, rows * cols);
      auto x = random_vec(rng, cols);
      auto b = random_vec(rng, rows);
      auto dy = random_vec(rng, rows);
      const double tol = 1e-13 * static_cast<double>(cols);

      CHECK(std::abs(ref.dot(w.data(), x.data(), cols) - fast.dot(w.data(), x.data(), cols)) <= tol);

      std::vector<double> y1(rows), y2(rows);
      ref.gemv(w.data(), rows, cols, x.data(), b.data(), y1.data());
      fast.gemv(w.data(), rows, cols, x.data(), b.data(), y2.data());
      CHECK(max_abs_diff(y1, y2) <= tol);
      ref.gemv(w.data(), rows, cols, x.data(), nullptr, y1.data());
      fast.gemv(w.data(), rows, cols, x.data(), nullptr, y2.data());
      CHECK(max_abs_diff(y1, y2) <= tol);

      auto dx1 = random_vec(rng, cols);
      auto dx2 = dx1;
      ref.gemv_t_acc(w.data(), rows, cols, dy.data(), dx1.data());
      fast.gemv_t_acc(w.data(), rows, cols, dy.data(), dx2.data());
      CHECK(max_abs_diff(dx1, dx2) <= 1e-13 * static_cast<double>(rows));

      auto g1 = random_vec(rng, rows * cols);
      auto g2 = g1;
      ref.ger_acc(g1.data(), rows, cols, dy.data(), x.data());
      fast.ger_acc(g2.data(), rows, cols, dy.data(), x.data());
      CHECK(max_abs_diff(g1, g2) <= 1e-14);

      auto a1 = random_vec(rng, cols);
      auto a2 = a1;
      ref.axpy(0.37, x.data(), a1.data(), cols);
      fast.axpy(0.37, x.data(), a2.data(), cols);
      CHECK(max_abs_diff(a1, a2) <= 1e-15);
    }
  }
}

TEST_CASE("avx2 batched kernels match the scalar reference") {
  if (!simd::backend_supported(simd::Backend::avx2)) {
    MESSAGE("AVX2 not available; equivalence test skipped");
    return;
  }
  const auto& ref = simd::scalar_kernels();
  const auto& fast = simd::avx2_kernels();
  num::Rng rng(8);
  for (std::size_t n : {1u, 2u, 3u, 5u, 48u}) {
    for (std::size_t rows : {1u, 3u, 4u, 6u, 17u}) {
      for (std::size_t cols : {1u, 3u, 4u, 7u, 8u, 13u, 66u}) {
        auto w = random_vec(rng, rows * cols);
        auto x = random_vec(rng, n * cols);
        auto b = random_vec(rng, rows);
        auto g = random_vec(rng, n * rows);
        const double tol = 1e-13 * static_cast<double>(cols + rows + n);

        std::vector<double> y1(n * rows), y2(n * rows);
        ref.gemm_nt(w.data(), rows, cols, x.data(), n, b.data(), y1.data());
        fast.gemm_nt(w.data(), rows, cols, x.data(), n, b.data(), y2.data());
        CHECK(max_abs_diff(y1, y2) <= tol);
        ref.gemm_nt(w.data(), rows, cols, x.data(), n, nullptr, y1.data());
        fast.gemm_nt(w.data(), rows, cols, x.data(), n, nullptr, y2.data());
        CHECK(max_abs_diff(y1, y2) <= tol);

        auto dx1 = random_vec(rng, n * cols);
        auto dx2 = dx1;
        ref.gemm_nn_acc(w.data(), rows, cols, g.data(), n, dx1.data());
        fast.gemm_nn_acc(w.data(), rows, cols, g.data(), n, dx2.data());
        CHECK(max_abs_diff(dx1, dx2) <= tol);

        auto dw1 = random_vec(rng, rows * cols);
        auto dw2 = dw1;
        ref.gemm_tn_acc(dw1.data(), rows, cols, g.data(), x.data(), n);
        fast.gemm_tn_acc(dw2.data(), rows, cols, g.data(), x.data(), n);
        CHECK(max_abs_diff(dw1, dw2) <= tol);
      }
    }
  }
}

TEST_CASE("batched kernels equal a loop of single-vector kernels") {
  num::Rng rng(9);
  const std::size_t n = 5, rows = 6, cols = 7;
  auto w = random_vec(rng, rows * cols);
  auto x = random_vec(rng, n * cols);
  auto b = random_vec(rng, rows);
  auto g = random_vec(rng, n * rows);
  std::vector<double> y(n * rows), dx(n * cols, 0.0), dw(rows * cols, 0.0);
  simd::gemm_nt(w, rows, cols, x, n, b, y);
  simd::gemm_nn_acc(w, rows, cols, g, n, dx);
  simd::gemm_tn_acc(dw, rows, cols, g, x, n);
  std::vector<double> dw_loop(rows * cols, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> xi(x.data() + i * cols, cols), gi(g.data() + i * rows, rows);
    std::vector<double> yi(rows), dxi(cols, 0.0);
    simd::gemv(w, rows, cols, xi, b, yi);
    simd::gemv_t_acc(w, rows, cols, gi, dxi);
    simd::ger_acc(dw_loop, rows, cols, gi, xi);
    for (std::size_t r = 0; r < rows; ++r) CHECK(y[i * rows + r] == doctest::Approx(yi[r]).epsilon(1e-12));
    for (std::size_t c = 0; c < cols; ++c) CHECK(dx[i * cols + c] == doctest::Approx(dxi[c]).epsilon(1e-12));
  }
  for (std::size_t k = 0; k < dw.size(); ++k) CHECK(dw[k] == doctest::Approx(dw_loop[k]).epsilon(1e-12));
  CHECK_THROWS_AS(simd::gemm_nt(w, rows, cols, x, n + 1, b, y), std::invalid_argument);
}

TEST_CASE("each backend is deterministic") {
  num::Rng rng(11);
  auto w = random_vec(rng, 256 * 66);
  auto x = random_vec(rng, 66);
  for (auto b : {simd::Backend::scalar, simd::Backend::avx2}) {
    if (!simd::backend_supported(b)) continue;
    simd::ScopedBackend guard(b);
    std::vector<double> y1(256), y2(256);
    simd::gemv(w, 256, 66, x, {}, y1);
    simd::gemv(w, 256, 66, x, {}, y2);
    CHECK(y1 == y2);
  }
}

TEST_CASE("span front-ends reject shape mismatches") {
  std::vector<double> w(6), x(2), y(3);
  CHECK_THROWS_AS(simd::gemv(w, 3, 2, std::vector<double>(3), {}, y), std::invalid_argument);
  CHECK_THROWS_AS(simd::dot(x, y), std::invalid_argument);
  CHECK_NOTHROW(simd::gemv(w, 3, 2, x, {}, y));
}
