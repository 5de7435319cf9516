#include "explore/num/special.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace explore::num {
namespace {

void check_domain(double x, const char* fn) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw std::domain_error(std::string(fn) + ": argument must be positive and finite, got " +
                            std::to_string(x));
  }
}

constexpr double kLanczosG = 7.0;
constexpr std::array<double, 9> kLanczos = {
    0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
    771.32342877765313,   -176.61502916214059,   12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};

double lanczos_lgamma(double x) {
  // Γ(x) = Γ(y + 1) with y = x - 1.
  const double y = x - 1.0;
  double series = kLanczos[0];
  for (std::size_t i = 1; i < kLanczos.size(); ++i) series += kLanczos[i] / (y + static_cast<double>(i));
  const double t = y + kLanczosG + 0.5;
  return 0.5 * std::log(2.0 * std::numbers::pi) + (y + 0.5) * std::log(t) - t + std::log(series);
}

constexpr double kAsymptoticFrom = 6.0;

}  // namespace

double lgamma(double x) {
  check_domain(x, "lgamma");
  if (x == 1.0 || x == 2.0) return 0.0;
  if (x < 0.5) return lanczos_lgamma(x + 1.0) - std::log(x);
  return lanczos_lgamma(x);
}

double digamma(double x) {
  check_domain(x, "digamma");
  double acc = 0.0;
  while (x < kAsymptoticFrom) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double r = 1.0 / (x * x);
  // Bernoulli tail: -1/12, 1/120, -1/252, 1/240, -1/132, 691/32760, -1/12
  const double tail =
      r * (-1.0 / 12 +
           r * (1.0 / 120 +
                r * (-1.0 / 252 +
                     r * (1.0 / 240 + r * (-1.0 / 132 + r * (691.0 / 32760 + r * (-1.0 / 12)))))));
  return acc + std::log(x) - 0.5 / x + tail;
}

double trigamma(double x) {
  check_domain(x, "trigamma");
  double acc = 0.0;
  while (x < kAsymptoticFrom) {
    acc += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double r = inv * inv;
  const double tail =
      inv * r *
      (1.0 / 6 +
       r * (-1.0 / 30 + r * (1.0 / 42 + r * (-1.0 / 30 + r * (5.0 / 66 + r * (-691.0 / 2730 + r * (7.0 / 6)))))));
  return acc + inv + 0.5 * r + tail;
}

}  // namespace explore::num
