#include "explore/num/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "explore/num/special.hpp"

namespace explore::num {
namespace {

const double kLog2PiE = std::log(2.0 * std::numbers::pi * std::numbers::e);
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

}  // namespace

DirichletParams::DirichletParams(std::vector<double> alpha) : alpha_(std::move(alpha)) {
  if (alpha_.size() < 2) throw std::domain_error("DirichletParams: need at least 2 categories");
  for (double a : alpha_) {
    if (!(a > 0.0) || !std::isfinite(a)) {
      throw std::domain_error("DirichletParams: concentrations must be positive and finite");
    }
  }
}

DirichletParams DirichletParams::symmetric(std::size_t n, double c) {
  return DirichletParams(std::vector<double>(n, c));
}

double DirichletParams::total() const {
  double s = 0.0;
  for (double a : alpha_) s += a;
  return s;
}

Simplex::Simplex(std::vector<double> probs) : probs_(std::move(probs)) {
  double s = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw std::domain_error("Simplex: negative or non-finite entry");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-9) throw std::domain_error("Simplex: entries must sum to 1");
}

GaussianParams::GaussianParams(std::vector<double> m, std::vector<double> ls)
    : mean(std::move(m)), log_std(std::move(ls)) {
  validate();
}

void GaussianParams::validate() const {
  same_dim(mean.size(), log_std.size(), "GaussianParams");
  for (std::size_t i = 0; i < mean.size(); ++i) {
    if (!std::isfinite(mean[i]) || !std::isfinite(log_std[i])) {
      throw std::invalid_argument("GaussianParams: non-finite entry");
    }
  }
}

double log_beta(const DirichletParams& a) {
  double s = 0.0;
  for (double ai : a.alpha()) s += lgamma(ai);
  return s - lgamma(a.total());
}

double dirichlet_entropy(const DirichletParams& a) {
  const double a0 = a.total();
  const double n = static_cast<double>(a.size());
  double s = log_beta(a) + (a0 - n) * digamma(a0);
  for (double ai : a.alpha()) s -= (ai - 1.0) * digamma(ai);
  return s;
}

double dirichlet_kl(const DirichletParams& q, const DirichletParams& p) {
  same_dim(q.size(), p.size(), "dirichlet_kl");
  const double psi_q0 = digamma(q.total());
  double s = log_beta(p) - log_beta(q);
  for (std::size_t i = 0; i < q.size(); ++i) s += (q[i] - p[i]) * (digamma(q[i]) - psi_q0);
  return std::max(s, 0.0);
}

std::vector<double> dirichlet_expected_log(const DirichletParams& a) {
  const double psi0 = digamma(a.total());
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = digamma(a[i]) - psi0;
  return out;
}

Simplex dirichlet_mean(const DirichletParams& a) {
  const double a0 = a.total();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] / a0;
  return Simplex(std::move(out));
}

std::vector<double> dirichlet_sample_log(const DirichletParams& a, Rng& rng) {
  std::vector<double> lg(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) lg[i] = log_gamma_variate(a[i], rng);
  const double mx = *std::max_element(lg.begin(), lg.end());
  double s = 0.0;
  for (double v : lg) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  for (double& v : lg) v -= lse;
  return lg;
}

Simplex dirichlet_sample(const DirichletParams& a, Rng& rng) {
  std::vector<double> lz = dirichlet_sample_log(a, rng);
  double s = 0.0;
  for (double& v : lz) {
    v = std::exp(v);
    s += v;
  }
  for (double& v : lz) v /= s;
  return Simplex(std::move(lz));
}

double dirichlet_log_pdf(const DirichletParams& a, std::span<const double> z) {
  same_dim(a.size(), z.size(), "dirichlet_log_pdf");
  double s = -log_beta(a);
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - 1.0) * std::log(z[i]);
  return s;
}

double gaussian_entropy(const GaussianParams& g) {
  double s = 0.0;
  for (double ls : g.log_std) s += ls;
  return s + 0.5 * static_cast<double>(g.size()) * kLog2PiE;
}

double gaussian_kl_std_normal(const GaussianParams& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double var = std::exp(2.0 * g.log_std[i]);
    s += g.mean[i] * g.mean[i] + var - 1.0 - 2.0 * g.log_std[i];
  }
  return std::max(0.5 * s, 0.0);
}

double gaussian_kl(const GaussianParams& q, const GaussianParams& p) {
  same_dim(q.size(), p.size(), "gaussian_kl");
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double ratio = std::exp(2.0 * (q.log_std[i] - p.log_std[i]));
    const double d = (q.mean[i] - p.mean[i]) * std::exp(-p.log_std[i]);
    s += ratio + d * d - 1.0 - 2.0 * (q.log_std[i] - p.log_std[i]);
  }
  return std::max(0.5 * s, 0.0);
}

std::vector<double> gaussian_reparam_sample(const GaussianParams& g, Rng& rng) {
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g.mean[i] + std::exp(g.log_std[i]) * rng.normal();
  return out;
}

double gaussian_log_pdf(const GaussianParams& g, std::span<const double> x) {
  same_dim(g.size(), x.size(), "gaussian_log_pdf");
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double u = (x[i] - g.mean[i]) * std::exp(-g.log_std[i]);
    s += -0.5 * u * u - g.log_std[i];
  }
  return s - 0.5 * static_cast<double>(g.size()) * kLog2Pi;
}

double categorical_kl(std::span<const double> p, std::span<const double> q) {
  same_dim(p.size(), q.size(), "categorical_kl");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    s += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(s, 0.0);
}

}  // namespace explore::num
