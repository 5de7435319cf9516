#include "explore/cmc/agent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "explore/io/csv.hpp"
#include "explore/num/special.hpp"

namespace explore::cmc {

using diff::Tape;
using diff::Var;

std::string_view elbo_mode_name(ElboMode m) { return m == ElboMode::analytic ? "analytic" : "mc"; }

ElboMode parse_elbo_mode(std::string_view s) {
  if (s == "analytic") return ElboMode::analytic;
  if (s == "mc") return ElboMode::mc;
  throw std::invalid_argument("unknown elbo mode '" + std::string(s) + "' (expected analytic or mc)");
}

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::bas:
      return "bas";
    case Strategy::random:
      return "random";
    case Strategy::boltzmann:
      return "boltzmann";
  }
  return "?";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "bas") return Strategy::bas;
  if (s == "random") return Strategy::random;
  if (s == "boltzmann") return Strategy::boltzmann;
  throw std::invalid_argument("unknown strategy '" + std::string(s) + "' (expected bas, random or boltzmann)");
}

std::string_view train_scope_name(TrainScope t) { return t == TrainScope::pair ? "pair" : "full"; }

TrainScope parse_train_scope(std::string_view s) {
  if (s == "pair") return TrainScope::pair;
  if (s == "full") return TrainScope::full;
  throw std::invalid_argument("unknown train scope '" + std::string(s) + "' (expected pair or full)");
}

ConjugatePosterior::ConjugatePosterior(std::size_t n_states, std::size_t n_actions, double prior)
    : n_states_(n_states), n_actions_(n_actions), prior_(prior) {
  if (!(prior > 0.0)) throw std::invalid_argument("conjugate posterior: prior must be positive");
}

num::DirichletParams ConjugatePosterior::posterior(std::size_t, std::size_t, std::span<const double> h) const {
  if (h.size() != n_states_) throw std::invalid_argument("conjugate posterior: count vector has wrong size");
  std::vector<double> a(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) a[i] = h[i] + prior_;
  return num::DirichletParams(std::move(a));
}

CmcPerception::CmcPerception(std::size_t n_states, std::size_t n_actions, const PerceptionConfig& cfg,
                             num::Rng& init_rng)
    : n_states_(n_states),
      n_actions_(n_actions),
      cfg_(cfg),
      net_("cmc", {2 * n_states + n_actions, cfg.hidden, cfg.hidden, n_states}, diff::Activation::softplus,
           diff::Activation::softplus_eps),
      opt_(cfg.optimizer) {
  if (n_states < 2 || n_actions < 1) throw std::invalid_argument("perception: need >= 2 states and >= 1 action");
  if (!(cfg.beta >= 0.0)) throw std::invalid_argument("perception: beta must be >= 0");
  net_.init(init_rng);
}

std::vector<double> CmcPerception::input(std::size_t s, std::size_t a, std::span<const double> h) const {
  if (s >= n_states_ || a >= n_actions_) throw std::out_of_range("perception: state or action out of range");
  if (h.size() != n_states_) throw std::invalid_argument("perception: count vector has wrong size");
  std::vector<double> x(2 * n_states_ + n_actions_, 0.0);
  x[s] = 1.0;
  x[n_states_ + a] = 1.0;
  double total = 0.0;
  for (double c : h) {
    if (!(c >= 0.0)) throw std::invalid_argument("perception: counts must be nonnegative");
    total += c;
  }
  const double div = cfg_.normalize_counts ? std::max(1.0, total) : 1.0;
  for (std::size_t i = 0; i < n_states_; ++i) x[n_states_ + n_actions_ + i] = h[i] / div;
  return x;
}

num::DirichletParams CmcPerception::posterior(std::size_t s, std::size_t a, std::span<const double> h) const {
  auto alpha = net_.forward(input(s, a, h));
  for (double v : alpha) {
    if (!std::isfinite(v)) throw std::runtime_error("perception: non-finite concentration output");
  }
  return num::DirichletParams(std::move(alpha));
}

Var CmcPerception::alpha(Tape& tape, std::size_t s, std::size_t a, std::span<const double> h) {
  return net_.forward(tape, tape.constant(input(s, a, h)));
}

double CmcPerception::train_step(std::size_t s, std::size_t a, std::span<const double> h, num::Rng& rng) {
  Item item{s, a, std::vector<double>(h.begin(), h.end())};
  return train_batch(std::span<const Item>(&item, 1), rng);
}

double CmcPerception::train_batch(std::span<const Item> batch, num::Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("perception: empty batch");
  auto params = net_.parameters();
  params.zero_grad();
  const double w = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& item : batch) {
    Tape tape;
    Var loss = cmc_elbo(tape, alpha(tape, item.s, item.a, item.h), item.h, cfg_.beta, cfg_.elbo_mode, rng);
    const double value = loss.scalar();
    if (!std::isfinite(value)) throw std::runtime_error("perception: non-finite ELBO loss");
    total += value;
    tape.backward(tape.scale(loss, w));
  }
  opt_.step(params);
  return total * w;
}

Var cmc_elbo(Tape& tape, Var alpha, std::span<const double> h, double beta, ElboMode mode, num::Rng& rng) {
  const std::size_t n = alpha.size();
  if (h.size() != n) throw std::invalid_argument("cmc_elbo: count vector and alpha differ in size");
  for (double c : h) {
    if (!(c >= 0.0)) throw std::invalid_argument("cmc_elbo: counts must be nonnegative");
  }
  Var a0 = tape.sum(alpha);
  Var e_log = tape.digamma(alpha) - tape.broadcast(tape.digamma(a0), n);
  Var kl = tape.lgamma(a0) - tape.sum(tape.lgamma(alpha)) + tape.dot(alpha + (-1.0), e_log);
  kl = kl + (-num::lgamma(static_cast<double>(n)));
  Var likelihood;
  if (mode == ElboMode::analytic) {
    likelihood = tape.dot(e_log, tape.constant(h));
  } else {
    num::DirichletParams q(std::vector<double>(alpha.value().begin(), alpha.value().end()));
    auto log_z = num::dirichlet_sample_log(q, rng);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += h[i] == 0.0 ? 0.0 : h[i] * log_z[i];
    likelihood = tape.scalar(s);
  }
  return tape.scale(likelihood, -1.0) + tape.scale(kl, beta);
}

double cmc_elbo(const num::DirichletParams& alpha, std::span<const double> h, double beta, ElboMode mode,
                num::Rng& rng) {
  if (h.size() != alpha.size()) throw std::invalid_argument("cmc_elbo: count vector and alpha differ in size");
  for (double c : h) {
    if (!(c >= 0.0)) throw std::invalid_argument("cmc_elbo: counts must be nonnegative");
  }
  std::vector<double> log_z;
  if (mode == ElboMode::analytic) {
    log_z = num::dirichlet_expected_log(alpha);
  } else {
    log_z = num::dirichlet_sample_log(alpha, rng);
  }
  double likelihood = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) likelihood += h[i] == 0.0 ? 0.0 : h[i] * log_z[i];
  const double kl = num::dirichlet_kl(alpha, num::DirichletParams::symmetric(alpha.size(), 1.0));
  return -(likelihood - beta * kl);
}

std::vector<double> bas_score(const PosteriorModel& model, std::size_t s, const HistoryTensor& h,
                              const BasOptions& opts, num::Rng* rng) {
  const std::size_t ns = model.n_states(), na = model.n_actions();
  if (h.n_states() != ns || h.n_actions() != na) throw std::invalid_argument("bas_score: history dimensions differ");
  if (s >= ns) throw std::out_of_range("bas_score: state out of range");
  if (opts.sampled_weights && rng == nullptr) throw std::invalid_argument("bas_score: sampled weights need an rng");

  // Current uncertainty of every successor, computed once per call.
  std::vector<double> successor_uncertainty;
  if (opts.efu) {
    successor_uncertainty.assign(ns, 0.0);
    for (std::size_t j = 0; j < ns; ++j) {
      for (std::size_t a = 0; a < na; ++a) {
        successor_uncertainty[j] += num::dirichlet_entropy(model.posterior(j, a, h.row(j, a)));
      }
    }
  }

  std::vector<double> scores(na, 0.0);
  for (std::size_t a = 0; a < na; ++a) {
    std::vector<double> counts = h.row(s, a);
    const auto q = model.posterior(s, a, counts);
    std::vector<double> w;
    if (opts.sampled_weights) {
      auto z = num::dirichlet_sample(q, *rng);
      w.assign(z.probs().begin(), z.probs().end());
    } else {
      auto m = num::dirichlet_mean(q);
      w.assign(m.probs().begin(), m.probs().end());
    }
    double expected_after = 0.0;
    for (std::size_t j = 0; j < ns; ++j) {
      counts[j] += 1.0;
      expected_after += w[j] * num::dirichlet_entropy(model.posterior(s, a, counts));
      counts[j] -= 1.0;
    }
    double score = num::dirichlet_entropy(q) - expected_after;
    if (opts.efu) {
      for (std::size_t j = 0; j < ns; ++j) score += w[j] * successor_uncertainty[j];
    }
    scores[a] = score;
  }
  return scores;
}

std::size_t argmax_lowest(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("argmax of an empty score vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

std::vector<double> boltzmann_policy(const HistoryTensor& h, std::size_t s, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("boltzmann: temperature must be positive");
  const std::size_t na = h.n_actions();
  std::vector<double> logits(na);
  for (std::size_t a = 0; a < na; ++a) logits[a] = -static_cast<double>(h.pair_total(s, a)) / tau;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    z += l;
  }
  for (double& l : logits) l /= z;
  return logits;
}

double boltzmann_temperature(std::size_t step, std::size_t steps, double start, double end) {
  if (steps <= 1) return start;
  const double f = static_cast<double>(std::min(step, steps - 1)) / static_cast<double>(steps - 1);
  return start + (end - start) * f;
}

TransitionKernel learned_kernel(const PosteriorModel& model, const HistoryTensor& h) {
  const std::size_t ns = model.n_states(), na = model.n_actions();
  std::vector<double> probs;
  probs.reserve(ns * na * ns);
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t a = 0; a < na; ++a) {
      auto m = num::dirichlet_mean(model.posterior(s, a, h.row(s, a)));
      probs.insert(probs.end(), m.probs().begin(), m.probs().end());
    }
  }
  return TransitionKernel(ns, na, std::move(probs));
}

CmcRunLog run_episode(const CmcRunConfig& cfg, const TransitionKernel& kernel) {
  if (cfg.steps < 1) throw std::invalid_argument("run: steps must be >= 1");
  if (cfg.log_every < 1) throw std::invalid_argument("run: log_every must be >= 1");
  if (!(cfg.tau_start > 0.0) || !(cfg.tau_end > 0.0)) throw std::invalid_argument("run: temperatures must be > 0");
  const std::size_t ns = kernel.n_states(), na = kernel.n_actions();

  num::Rng init_rng(num::derive_seed(cfg.seed, 1));
  num::Rng act_rng(num::derive_seed(cfg.seed, 2));
  num::Rng env_rng(num::derive_seed(cfg.seed, 3));
  num::Rng train_rng(num::derive_seed(cfg.seed, 4));

  CmcPerception perception(ns, na, cfg.perception, init_rng);
  CmcRunLog log;
  log.strategy = cfg.strategy;
  log.seed = cfg.seed;
  log.history = HistoryTensor(ns, na);
  log.initial_missing_info = missing_information(kernel, learned_kernel(perception, log.history));

  std::size_t s = act_rng.index(ns);
  log.trajectory.reserve(cfg.steps + 1);
  log.trajectory.push_back(s);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    std::size_t a = 0;
    switch (cfg.strategy) {
      case Strategy::bas:
        a = argmax_lowest(bas_score(perception, s, log.history, cfg.bas, &act_rng));
        break;
      case Strategy::random:
        a = act_rng.index(na);
        break;
      case Strategy::boltzmann: {
        const double tau = boltzmann_temperature(t, cfg.steps, cfg.tau_start, cfg.tau_end);
        a = act_rng.categorical(boltzmann_policy(log.history, s, tau));
        break;
      }
    }
    const std::size_t next = step(kernel, s, a, env_rng);
    log.history.record(s, a, next);
    double loss = 0.0;
    if (cfg.train_scope == TrainScope::pair) {
      loss = perception.train_step(s, a, log.history.row(s, a), train_rng);
    } else {
      std::vector<CmcPerception::Item> all;
      all.reserve(ns * na);
      for (std::size_t i = 0; i < ns; ++i) {
        for (std::size_t j = 0; j < na; ++j) all.push_back({i, j, log.history.row(i, j)});
      }
      loss = perception.train_batch(all, train_rng);
    }
    s = next;
    log.trajectory.push_back(s);

    const std::size_t done = t + 1;
    if (done % cfg.log_every == 0 || done == cfg.steps) {
      const double im = missing_information(kernel, learned_kernel(perception, log.history));
      log.rows.push_back({done, im, coverage(log.history), loss});
    }
  }
  log.learned = learned_kernel(perception, log.history);
  return log;
}

void write_run_csv(const std::filesystem::path& path, const CmcRunLog& log) {
  io::CsvWriter w(path, {"step", "strategy", "seed", "missing_info", "coverage", "loss"});
  const std::string strat(strategy_name(log.strategy));
  const std::string seed = std::to_string(log.seed);
  // step 0: the untrained model before any transition; no loss yet
  w.row({"0", strat, seed, io::format_double(log.initial_missing_info), io::format_double(0.0), ""});
  for (const auto& r : log.rows) {
    w.row({std::to_string(r.step), strat, seed, io::format_double(r.missing_info), io::format_double(r.coverage),
           io::format_double(r.loss)});
  }
}

}  // namespace explore::cmc
