#pragma once

namespace explore::num {

/// ln Γ(x) for x > 0. Lanczos (g = 7, 9 terms) for x >= 0.5, recurrence below.
/// Throws std::domain_error for non-positive or non-finite x.
double lgamma(double x);

/// ψ(x) = d/dx ln Γ(x): upward recurrence to x >= 6, then the asymptotic series.
double digamma(double x);

/// ψ'(x), same scheme as digamma.
double trigamma(double x);

}  // namespace explore::num
