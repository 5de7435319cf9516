#include <doctest.h>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>
#include <limits>
#include <numbers>

#include "explore/num/distributions.hpp"
#include "explore/num/special.hpp"
#include "mc_oracles.hpp"

using namespace explore;
using namespace explore::num;
using doctest::Approx;

TEST_CASE("lgamma examples and oracle agreement") {
  CHECK(num::lgamma(1.0) == 0.0);
  CHECK(num::lgamma(2.0) == 0.0);
  CHECK(num::lgamma(0.5) == Approx(0.5723649429).epsilon(1e-10));
  CHECK(std::abs(num::lgamma(0.5) - 0.5 * std::log(std::numbers::pi)) < 1e-13);

  // Boost is the independent oracle. Absolute error 1e-12 is only
  // representable while |lnΓ| is small; beyond that the bound is a few ulps.
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double x = std::exp(rng.uniform(std::log(1e-3), std::log(1e6)));
    const double ref = boost::math::lgamma(x);
    const double tol = std::max(1e-12, 8 * std::numeric_limits<double>::epsilon() * std::abs(ref));
    REQUIRE_MESSAGE(std::abs(num::lgamma(x) - ref) <= tol, "x=" << x);
  }
}

TEST_CASE("digamma examples and oracle agreement") {
  CHECK(num::digamma(1.0) == Approx(-0.5772156649).epsilon(1e-10));
  CHECK(num::digamma(2.0) == Approx(0.4227843351).epsilon(1e-10));
  CHECK(num::digamma(0.5) == Approx(-1.9635100260).epsilon(1e-10));
  CHECK(std::abs(num::digamma(0.5) - (-std::numbers::egamma - 2 * std::numbers::ln2)) < 1e-12);
  Rng rng(2);
  for (int i = 0; i < 2000; ++i) {
    const double x = std::exp(rng.uniform(std::log(1e-3), std::log(1e6)));
    REQUIRE_MESSAGE(std::abs(num::digamma(x) - boost::math::digamma(x)) <= 1e-10, "x=" << x);
  }
}

TEST_CASE("trigamma examples and oracle agreement") {
  CHECK(num::trigamma(1.0) == Approx(1.6449340668).epsilon(1e-10));
  CHECK(std::abs(num::trigamma(1.0) - std::numbers::pi * std::numbers::pi / 6) < 1e-12);
  CHECK(num::trigamma(2.0) == Approx(0.6449340668).epsilon(1e-10));
  CHECK(num::trigamma(10.0) == Approx(0.1051663357).epsilon(1e-10));
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const double x = std::exp(rng.uniform(std::log(1e-3), std::log(1e6)));
    REQUIRE_MESSAGE(std::abs(num::trigamma(x) - boost::math::trigamma(x)) <= 1e-8, "x=" << x);
  }
}

TEST_CASE("special functions reject bad arguments") {
  for (double x : {0.0, -1.0, std::numeric_limits<double>::infinity(), std::nan("")}) {
    CHECK_THROWS_AS(num::lgamma(x), std::domain_error);
    CHECK_THROWS_AS(num::digamma(x), std::domain_error);
    CHECK_THROWS_AS(num::trigamma(x), std::domain_error);
  }
}

TEST_CASE("recurrence identities") {
  Rng rng(4);
  for (int i = 0; i < 10000; ++i) {
    const double x = rng.uniform(0.1, 100.0);
    REQUIRE(std::abs(num::digamma(x + 1) - num::digamma(x) - 1.0 / x) <= 1e-10);
    REQUIRE(std::abs(num::lgamma(x + 1) - num::lgamma(x) - std::log(x)) <= 1e-10);
    REQUIRE(std::abs(num::trigamma(x) - num::trigamma(x + 1) - 1.0 / (x * x)) <= 1e-10);
  }
}

TEST_CASE("log_beta examples") {
  CHECK(log_beta(DirichletParams({1, 1})) == Approx(0.0));
  CHECK(log_beta(DirichletParams({1, 1, 1})) == Approx(-0.6931471806).epsilon(1e-10));
  CHECK(log_beta(DirichletParams({2, 1})) == Approx(-0.6931471806).epsilon(1e-10));
}

TEST_CASE("dirichlet entropy examples") {
  CHECK(std::abs(dirichlet_entropy(DirichletParams({1, 1}))) < 1e-14);
  CHECK(dirichlet_entropy(DirichletParams({1, 1, 1})) == Approx(-0.6931471806).epsilon(1e-10));
  CHECK(dirichlet_entropy(DirichletParams({2, 1})) == Approx(-0.1931471806).epsilon(1e-10));
}

TEST_CASE("dirichlet kl examples") {
  CHECK(dirichlet_kl(DirichletParams({3, 2}), DirichletParams({3, 2})) == 0.0);
  CHECK(dirichlet_kl(DirichletParams({2, 1}), DirichletParams({1, 1})) == Approx(0.1931471806).epsilon(1e-10));
  CHECK(std::abs(std::log(2.0) - 0.5 - 0.1931471806) < 1e-10);
  // The reverse direction is 1 − ln 2: E_uniform[−log 2z] = −ln 2 + 1.
  CHECK(dirichlet_kl(DirichletParams({1, 1}), DirichletParams({2, 1})) == Approx(0.3068528194).epsilon(1e-10));
  Rng rng(12);
  auto mc = testing::mc_dirichlet_kl(DirichletParams({1, 1}), DirichletParams({2, 1}), 100000, rng);
  CHECK(std::abs(mc.mean - 0.3068528194) <= 3 * mc.se);
  CHECK_THROWS_AS(dirichlet_kl(DirichletParams({1, 1}), DirichletParams({1, 1, 1})), std::invalid_argument);
}

TEST_CASE("dirichlet expected log, mean, parameter validation") {
  auto e = dirichlet_expected_log(DirichletParams({1, 1}));
  CHECK(e[0] == Approx(-1.0).epsilon(1e-12));
  CHECK(e[1] == Approx(-1.0).epsilon(1e-12));
  e = dirichlet_expected_log(DirichletParams({2, 1}));
  CHECK(e[0] == Approx(-0.5).epsilon(1e-12));
  CHECK(e[1] == Approx(-1.5).epsilon(1e-12));
  e = dirichlet_expected_log(DirichletParams::symmetric(5, 2.7));
  for (double v : e) CHECK(v == e[0]);

  auto m = dirichlet_mean(DirichletParams({2, 1, 1}));
  CHECK(m[0] == 0.5);
  CHECK(m[1] == 0.25);
  CHECK(m[2] == 0.25);

  CHECK_THROWS_AS(DirichletParams({1.0}), std::domain_error);
  CHECK_THROWS_AS(DirichletParams({1.0, 0.0}), std::domain_error);
  CHECK_THROWS_AS(DirichletParams({1.0, std::nan("")}), std::domain_error);
  CHECK_THROWS_AS(Simplex({0.5, 0.4}), std::domain_error);
}

TEST_CASE("dirichlet sampler: law of the mean and determinism") {
  const std::size_t n = 4;
  const int draws = 100000;
  Rng rng(5);
  auto alpha = DirichletParams::symmetric(n, 1.0);
  std::vector<double> sum(n, 0.0), sum2(n, 0.0);
  for (int k = 0; k < draws; ++k) {
    auto z = dirichlet_sample(alpha, rng);
    for (std::size_t i = 0; i < n; ++i) {
      sum[i] += z[i];
      sum2[i] += z[i] * z[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double mean = sum[i] / draws;
    const double se = std::sqrt((sum2[i] / draws - mean * mean) / draws);
    CHECK(std::abs(mean - 1.0 / n) <= 3 * se);
  }
  Rng a(99), b(99);
  CHECK(dirichlet_sample(DirichletParams({0.3, 2.0, 5.0}), a) == dirichlet_sample(DirichletParams({0.3, 2.0, 5.0}), b));
  // tiny concentrations stay finite in log space
  Rng c(3);
  auto lz = dirichlet_sample_log(DirichletParams({1e-4, 1e-4, 1.0}), c);
  for (double v : lz) CHECK(std::isfinite(v));
}

TEST_CASE("dirichlet closed forms agree with Monte Carlo") {
  Rng rng(6);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 2 + rng.index(9);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform(0.2, 20.0);
      b[i] = rng.uniform(0.2, 20.0);
    }
    DirichletParams q(a), p(b);
    auto h = testing::mc_dirichlet_entropy(q, 20000, rng);
    CHECK_MESSAGE(std::abs(h.mean - dirichlet_entropy(q)) <= 3 * h.se, "entropy n=" << n);
    auto kl = testing::mc_dirichlet_kl(q, p, 20000, rng);
    CHECK_MESSAGE(std::abs(kl.mean - dirichlet_kl(q, p)) <= 3 * kl.se, "kl n=" << n);
  }
}

TEST_CASE("dirichlet kl: nonnegative, zero iff equal") {
  Rng rng(8);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + rng.index(9);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform(0.2, 20.0);
      b[i] = rng.uniform(0.2, 20.0);
    }
    CHECK(dirichlet_kl(DirichletParams(a), DirichletParams(b)) > 1e-12);
    CHECK(dirichlet_kl(DirichletParams(a), DirichletParams(a)) <= 1e-12);
    // Jensen: sum_i exp(E[log z_i]) <= 1
    double s = 0.0;
    for (double v : dirichlet_expected_log(DirichletParams(a))) s += std::exp(v);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("gaussian closed forms") {
  GaussianParams unit({0.0}, {0.0});
  CHECK(gaussian_entropy(unit) == Approx(1.4189385332).epsilon(1e-10));
  CHECK(gaussian_kl_std_normal(unit) == 0.0);
  CHECK(gaussian_kl_std_normal(GaussianParams({1.0}, {0.0})) == Approx(0.5).epsilon(1e-14));
  CHECK(gaussian_kl(unit, unit) == 0.0);
  CHECK(gaussian_kl(GaussianParams({1.0}, {0.0}), unit) == Approx(0.5).epsilon(1e-14));
  CHECK_THROWS_AS(GaussianParams({0.0, 1.0}, {0.0}), std::invalid_argument);

  Rng rng(9);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t d = 1 + rng.index(6);
    std::vector<double> m(d), ls(d), m2(d), ls2(d);
    for (std::size_t i = 0; i < d; ++i) {
      m[i] = rng.uniform(-2, 2);
      ls[i] = rng.uniform(-1, 1);
      m2[i] = rng.uniform(-2, 2);
      ls2[i] = rng.uniform(-1, 1);
    }
    GaussianParams g(m, ls), p(m2, ls2);
    auto h = testing::mc_gaussian_entropy(g, 20000, rng);
    CHECK(std::abs(h.mean - gaussian_entropy(g)) <= 3 * h.se);
    auto kl = testing::mc_gaussian_kl(g, GaussianParams(std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)), 20000, rng);
    CHECK(std::abs(kl.mean - gaussian_kl_std_normal(g)) <= 3 * kl.se);
    auto kl2 = testing::mc_gaussian_kl(g, p, 20000, rng);
    CHECK(std::abs(kl2.mean - gaussian_kl(g, p)) <= 3 * kl2.se);
  }
  Rng a(5), b(5);
  GaussianParams g({0.1, -0.2}, {0.3, -0.4});
  CHECK(gaussian_reparam_sample(g, a) == gaussian_reparam_sample(g, b));
}

TEST_CASE("categorical kl conventions") {
  std::vector<double> p{0.5, 0.5}, q{0.75, 0.25};
  CHECK(categorical_kl(p, q) == Approx(0.1438410362).epsilon(1e-10));
  CHECK(categorical_kl(p, p) == 0.0);
  std::vector<double> p0{1.0, 0.0}, q0{0.0, 1.0};
  CHECK(categorical_kl(p0, p) == Approx(std::log(2.0)));
  CHECK(std::isinf(categorical_kl(p, q0)));
}

TEST_CASE("rng: categorical, index bounds, derived seeds") {
  Rng rng(1);
  std::vector<double> w{0.0, 1.0, 0.0};
  for (int i = 0; i < 100; ++i) CHECK(rng.categorical(w) == 1);
  for (int i = 0; i < 1000; ++i) CHECK(rng.index(7) < 7);
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(5, 3) == derive_seed(5, 3));
}
