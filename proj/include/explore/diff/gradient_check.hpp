#pragma once

#include <cstdint>
#include <functional>

#include "explore/diff/tape.hpp"

namespace explore::diff {

struct GradCheckOptions {
  double h = 1e-4;
  double tol = 1e-4;
  /// Denominator floor: rel = |a − n| / max(|a|, |n|, floor).
  double floor = 1e-3;
  /// Check at most this many coordinates (chosen at random); 0 = all.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_coord = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool pass = false;
};

/// Compares reverse-mode gradients of the scalar built by `fn` against central
/// differences over the coordinates of `params`. `fn` must be deterministic:
/// any randomness inside has to be frozen (common random numbers).
GradCheckReport gradient_check(const std::function<Var(Tape&)>& fn, const ParameterSet& params,
                               const GradCheckOptions& opts = {});

}  // namespace explore::diff
