#pragma once

// Closed-form information calculus for Dirichlet and diagonal Gaussian
// distributions. Everything else in the library computes entropies, KLs and
// expectations through these functions.

#include <span>
#include <vector>

#include "explore/num/rng.hpp"

namespace explore::num {

/// Concentration vector of a Dirichlet; every component > 0 and finite, N >= 2.
class DirichletParams {
 public:
  explicit DirichletParams(std::vector<double> alpha);

  /// Symmetric Dir(c, ..., c).
  static DirichletParams symmetric(std::size_t n, double c);

  std::span<const double> alpha() const { return alpha_; }
  std::size_t size() const { return alpha_.size(); }
  double operator[](std::size_t i) const { return alpha_[i]; }
  double total() const;

  bool operator==(const DirichletParams&) const = default;

 private:
  std::vector<double> alpha_;
};

/// Probability vector; nonnegative, sums to 1 within 1e-9.
class Simplex {
 public:
  explicit Simplex(std::vector<double> probs);

  std::span<const double> probs() const { return probs_; }
  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }

  bool operator==(const Simplex&) const = default;

 private:
  std::vector<double> probs_;
};

/// Diagonal Gaussian N(mean, diag(exp(log_std))^2).
struct GaussianParams {
  std::vector<double> mean;
  std::vector<double> log_std;

  GaussianParams() = default;
  GaussianParams(std::vector<double> m, std::vector<double> ls);

  std::size_t size() const { return mean.size(); }
  /// Throws std::invalid_argument on mismatched dimensions or non-finite entries.
  void validate() const;
};

double log_beta(const DirichletParams& a);
double dirichlet_entropy(const DirichletParams& a);
/// KL(q || p). Throws std::invalid_argument on dimension mismatch.
double dirichlet_kl(const DirichletParams& q, const DirichletParams& p);
/// E[log z_i] = ψ(α_i) − ψ(α₀).
std::vector<double> dirichlet_expected_log(const DirichletParams& a);
Simplex dirichlet_mean(const DirichletParams& a);
/// Normalized independent Gamma(α_i, 1) variates.
Simplex dirichlet_sample(const DirichletParams& a, Rng& rng);
/// log of a Dirichlet sample, computed without underflow for tiny α.
std::vector<double> dirichlet_sample_log(const DirichletParams& a, Rng& rng);
double dirichlet_log_pdf(const DirichletParams& a, std::span<const double> z);

double gaussian_entropy(const GaussianParams& g);
/// KL(g || N(0, I)).
double gaussian_kl_std_normal(const GaussianParams& g);
/// KL(q || p) between diagonal Gaussians of equal dimension.
double gaussian_kl(const GaussianParams& q, const GaussianParams& p);
/// μ + σ ⊙ ε with ε ~ N(0, I) drawn from `rng`.
std::vector<double> gaussian_reparam_sample(const GaussianParams& g, Rng& rng);
double gaussian_log_pdf(const GaussianParams& g, std::span<const double> x);

/// KL(p || q) between categorical distributions with 0·log(0/x) = 0; +inf if
/// q_i = 0 where p_i > 0.
double categorical_kl(std::span<const double> p, std::span<const double> q);

}  // namespace explore::num
