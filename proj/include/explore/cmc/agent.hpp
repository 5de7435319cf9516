#pragma once

// Amortized Dirichlet perception for controllable Markov chains, its ELBO,
// Bayesian action selection and the baseline policies.

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "explore/cmc/env.hpp"
#include "explore/diff/dense_net.hpp"
#include "explore/diff/optimizer.hpp"
#include "explore/num/distributions.hpp"

namespace explore::cmc {

enum class ElboMode { analytic, mc };
enum class Strategy { bas, random, boltzmann };
/// What each environment step trains on: the single (s, a) term just
/// updated, or the ELBO summed over every (s, a) pair.
enum class TrainScope { pair, full };

std::string_view elbo_mode_name(ElboMode m);
ElboMode parse_elbo_mode(std::string_view s);
std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view s);
std::string_view train_scope_name(TrainScope t);
TrainScope parse_train_scope(std::string_view s);

/// Posterior over the transition distribution of one (s, a) pair given its
/// count vector. Implemented by the network and by the exact conjugate model.
class PosteriorModel {
 public:
  virtual ~PosteriorModel() = default;
  virtual std::size_t n_states() const = 0;
  virtual std::size_t n_actions() const = 0;
  virtual num::DirichletParams posterior(std::size_t s, std::size_t a, std::span<const double> h) const = 0;
};

/// Exact posterior Dir(h + prior) under a symmetric Dirichlet prior.
class ConjugatePosterior : public PosteriorModel {
 public:
  ConjugatePosterior(std::size_t n_states, std::size_t n_actions, double prior = 1.0);
  std::size_t n_states() const override { return n_states_; }
  std::size_t n_actions() const override { return n_actions_; }
  num::DirichletParams posterior(std::size_t s, std::size_t a, std::span<const double> h) const override;

 private:
  std::size_t n_states_, n_actions_;
  double prior_;
};

struct PerceptionConfig {
  std::size_t hidden = 16;
  double beta = 1.0;
  ElboMode elbo_mode = ElboMode::analytic;
  diff::OptimizerConfig optimizer{};
  /// Feed h / max(1, Σh) instead of raw counts.
  bool normalize_counts = false;
};

/// Network (one-hot s, one-hot a, h) -> α with two softplus hidden layers.
class CmcPerception : public PosteriorModel {
 public:
  CmcPerception(std::size_t n_states, std::size_t n_actions, const PerceptionConfig& cfg, num::Rng& init_rng);

  std::size_t n_states() const override { return n_states_; }
  std::size_t n_actions() const override { return n_actions_; }
  num::DirichletParams posterior(std::size_t s, std::size_t a, std::span<const double> h) const override;

  diff::Var alpha(diff::Tape& tape, std::size_t s, std::size_t a, std::span<const double> h);

  /// One optimizer step on the negated ELBO of a single (s, a) term. Returns
  /// the loss evaluated before the step. `rng` is only used in mc mode.
  double train_step(std::size_t s, std::size_t a, std::span<const double> h, num::Rng& rng);

  /// One optimizer step on the mean loss over a batch of (s, a, h) items.
  struct Item {
    std::size_t s, a;
    std::vector<double> h;
  };
  double train_batch(std::span<const Item> batch, num::Rng& rng);

  diff::ParameterSet parameters() { return net_.parameters(); }
  diff::DenseNet& net() { return net_; }
  const PerceptionConfig& config() const { return cfg_; }

 private:
  std::vector<double> input(std::size_t s, std::size_t a, std::span<const double> h) const;

  std::size_t n_states_, n_actions_;
  PerceptionConfig cfg_;
  diff::DenseNet net_;
  diff::Optimizer opt_;
};

/// Negated ELBO of one (s, a) term on the tape:
///   analytic: −[Σ h_i (ψ(α_i) − ψ(α₀)) − β KL(Dir(α) ‖ Dir(1))]
///   mc:       −[Σ h_i log z̃_i − β KL(...)], z̃ ~ Dir(α) held constant.
diff::Var cmc_elbo(diff::Tape& tape, diff::Var alpha, std::span<const double> h, double beta, ElboMode mode,
                   num::Rng& rng);
/// Plain-value version of the same loss.
double cmc_elbo(const num::DirichletParams& alpha, std::span<const double> h, double beta, ElboMode mode,
                num::Rng& rng);

struct BasOptions {
  bool efu = true;
  /// Weight successors by one sampled z̃ ~ q instead of the posterior mean.
  bool sampled_weights = false;
};

/// Per-action BAS scores at state s: expected entropy reduction of q(z_{s,a})
/// plus (optionally) the expected current uncertainty of the successor state.
std::vector<double> bas_score(const PosteriorModel& model, std::size_t s, const HistoryTensor& h,
                              const BasOptions& opts, num::Rng* rng = nullptr);

/// Index of the largest score; ties go to the lowest index.
std::size_t argmax_lowest(std::span<const double> scores);

/// π(a) ∝ exp(−Σ_{s'} h(s, a, s') / τ).
std::vector<double> boltzmann_policy(const HistoryTensor& h, std::size_t s, double tau);

/// Linear schedule from `start` at step 0 to `end` at step steps − 1.
double boltzmann_temperature(std::size_t step, std::size_t steps, double start, double end);

/// Per-(s, a) Dirichlet means of the model's posteriors.
TransitionKernel learned_kernel(const PosteriorModel& model, const HistoryTensor& h);

struct CmcRunConfig {
  Strategy strategy = Strategy::bas;
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
  PerceptionConfig perception{};
  BasOptions bas{};
  double tau_start = 1.0;
  double tau_end = 0.1;
  TrainScope train_scope = TrainScope::pair;
  /// Metrics are logged at every step divisible by log_every and at the last step.
  std::size_t log_every = 1;
};

struct CmcLogRow {
  std::size_t step = 0;  // 1-based: the row after `step` environment steps
  double missing_info = 0.0;
  double coverage = 0.0;
  double loss = 0.0;

  bool operator==(const CmcLogRow&) const = default;
};

struct CmcRunLog {
  Strategy strategy = Strategy::bas;
  std::uint64_t seed = 0;
  double initial_missing_info = 0.0;
  std::vector<CmcLogRow> rows;
  /// Visited states including the initial one (steps + 1 entries).
  std::vector<std::size_t> trajectory;
  HistoryTensor history;
  TransitionKernel learned;

  bool operator==(const CmcRunLog&) const = default;
};

/// Seed streams: derive_seed(seed, 1) initializes the network,
/// derive_seed(seed, 2) drives action choice and the initial state,
/// derive_seed(seed, 3) drives environment transitions. The kernel is built
/// by the caller (conventionally from derive_seed(seed, 0)).
CmcRunLog run_episode(const CmcRunConfig& cfg, const TransitionKernel& kernel);

void write_run_csv(const std::filesystem::path& path, const CmcRunLog& log);

}  // namespace explore::cmc
