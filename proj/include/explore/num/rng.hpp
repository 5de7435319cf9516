#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace explore::num {

/// One step of the splitmix64 generator; advances `state`.
std::uint64_t splitmix64(std::uint64_t& state);

/// Derives an independent child seed for stream `stream` of `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded deterministic stream. Every draw is a pure function of the engine
/// state, and all transforms are implemented here (not via <random>
/// distributions) so outputs do not depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1]; safe to take the log of.
  double uniform_pos() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one output per two uniforms).
  double normal();

  /// Unbiased integer in [0, n).
  std::size_t index(std::size_t n);

  /// Draws an index with probability proportional to `weights` (need not be normalized).
  std::size_t categorical(std::span<const double> weights);

  bool operator==(const Rng& o) const { return engine_ == o.engine_; }

 private:
  std::mt19937_64 engine_;
};

/// log of a Gamma(shape, 1) variate (Marsaglia-Tsang; shape < 1 via the
/// U^(1/shape) boost carried out in log space so tiny shapes do not underflow).
double log_gamma_variate(double shape, Rng& rng);

double gamma_variate(double shape, Rng& rng);

}  // namespace explore::num
