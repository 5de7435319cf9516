#pragma once

// Active-vision agent: a two-level Gaussian VAE over glimpses, the
// information-gain value Ṽ with its action network, patch stitching, and the
// separately trained decision network.
//
// Glimpse x_t is observed at location l_t (t = 0..T-1). The lower level
// encodes (x_t, l_t) into z_t, the higher level encodes h = Σ_t z_t into s,
// and the higher decoder predicts z_t from (s, l_t).

#include <filesystem>
#include <string>
#include <vector>

#include "explore/av/env.hpp"
#include "explore/diff/dense_net.hpp"
#include "explore/diff/optimizer.hpp"
#include "explore/num/distributions.hpp"

namespace explore::av {

struct VaeConfig {
  std::size_t glimpse_size = 64;
  std::size_t dz = 32;
  std::size_t ds = 64;
  std::size_t hidden = 256;
  diff::Activation activation = diff::Activation::relu;
};

/// Mean and log-std nodes of a diagonal Gaussian on a tape.
struct GaussVar {
  diff::Var mean, log_std;
};

class HierarchicalVae {
 public:
  HierarchicalVae(const VaeConfig& cfg, num::Rng& init_rng);

  const VaeConfig& config() const { return cfg_; }

  num::GaussianParams encode_low(std::span<const double> x, Location l) const;
  std::vector<double> decode_low(std::span<const double> z) const;
  num::GaussianParams encode_high(std::span<const double> h) const;
  num::GaussianParams decode_high(std::span<const double> s, Location l) const;

  GaussVar encode_low(diff::Tape& t, diff::Var x, diff::Var l);
  diff::Var decode_low(diff::Tape& t, diff::Var z);
  GaussVar encode_high(diff::Tape& t, diff::Var h);
  GaussVar decode_high(diff::Tape& t, diff::Var s, diff::Var l);

  diff::DenseNet& low_enc() { return low_enc_; }
  diff::DenseNet& low_dec() { return low_dec_; }
  diff::DenseNet& high_enc() { return high_enc_; }
  diff::DenseNet& high_dec() { return high_dec_; }
  diff::ParameterSet parameters();

 private:
  VaeConfig cfg_;
  diff::DenseNet low_enc_, low_dec_, high_enc_, high_dec_;
};

/// Splits a network output of size 2D into (mean, ½ · raw log-variance head).
num::GaussianParams split_gaussian(std::span<const double> out);
/// On a tape, `out` may hold `rows` such outputs row-major.
GaussVar split_gaussian(diff::Tape& t, diff::Var out, std::size_t rows = 1);

/// Tape versions of the closed forms in num::.
diff::Var gaussian_entropy(diff::Tape& t, const GaussVar& g);
diff::Var gaussian_kl(diff::Tape& t, const GaussVar& q, const GaussVar& p);
diff::Var gaussian_kl_std_normal(diff::Tape& t, const GaussVar& q);

struct EncodeStep {
  num::GaussianParams q1;
  std::vector<double> eps;  // standard-normal draw behind z
  std::vector<double> z;
  std::vector<double> h;    // h + z
};

/// q1 = f1_enc(x, l); z = μ + σ ε with ε ~ N(0, I) from rng; h' = h + z.
EncodeStep encode_step(const HierarchicalVae& vae, std::span<const double> x, Location l,
                       std::span<const double> h, num::Rng& rng);

struct TrialRecord {
  std::vector<std::vector<double>> glimpses;
  std::vector<Location> locations;
  std::vector<std::vector<double>> eps_z;  // per-step reparameterization noise
  std::vector<std::vector<double>> z;      // sampled z_t (μ_t + σ_t ε_t)
  std::vector<double> h;                   // Σ z_t
  std::vector<double> eps_s;               // noise for s in the ELBO
  num::GaussianParams q2;                  // q2(s | h)
  int label = -1;

  std::size_t size() const { return glimpses.size(); }
};

struct ElboTerms {
  double loss = 0.0;       // negated ELBO
  double recon = 0.0;      // Σ_t log p(x_t | z_t)
  double kl_z = 0.0;       // Σ_t KL(q1 ‖ p(z_t | s, l_t))
  double kl_s = 0.0;       // KL(q2 ‖ N(0, I)), before β
  double sq_error = 0.0;   // Σ_t ‖x_t − x̂_t‖²
};

/// −[Σ_t log N(x_t; x̂_t, I) − Σ_t KL(q1_t ‖ p(z_t | s, l_t)) − β KL(q2 ‖ N(0, I))],
/// with z_t and s reparameterized through the trial's stored noise, so the
/// value is a deterministic function of the parameters.
diff::Var av_elbo(diff::Tape& t, HierarchicalVae& vae, const TrialRecord& trial, double beta,
                  ElboTerms* terms = nullptr);
/// Sum of the per-trial losses of equal-length trials, evaluated as one
/// row-batched graph; `terms` are summed the same way.
diff::Var av_elbo(diff::Tape& t, HierarchicalVae& vae, std::span<const TrialRecord> trials, double beta,
                  ElboTerms* terms = nullptr);
ElboTerms av_elbo(HierarchicalVae& vae, const TrialRecord& trial, double beta);

/// Frozen noise for one Ṽ sample: s̃ = μ_s + σ_s ε_s, z' = μ_p + σ_p ε_z.
struct ValueNoise {
  std::vector<double> eps_s, eps_z;
};
std::vector<ValueNoise> draw_value_noise(const VaeConfig& cfg, std::size_t k, num::Rng& rng);

/// Ṽ(l) = H(q2(s | h)) − (1/K) Σ_k H(q2(s | h + μ1(x^(k), l))), where
/// x^(k) = f1_dec(z'), z' ~ f2_dec(s̃, l), s̃ ~ q2(s | h). Perception
/// parameters are frozen on the tape; gradients flow to `l` only.
diff::Var approx_value(diff::Tape& t, HierarchicalVae& vae, std::span<const double> h, diff::Var l,
                       std::span<const ValueNoise> noise);
double approx_value(HierarchicalVae& vae, std::span<const double> h, Location l, std::size_t k, num::Rng& rng);

struct ActionConfig {
  std::size_t hidden1 = 64, hidden2 = 32;
  double sigma = 0.15;
  std::size_t k = 5;
  /// Plain ascent ψ + μ∇Ṽ by default, as the selection algorithm writes it.
  diff::OptimizerConfig optimizer{diff::OptimizerKind::sgd};
};

/// E[q2(s)] -> mean fixation in (−1, 1)² (tanh output).
class ActionNet {
 public:
  ActionNet(std::size_t ds, const ActionConfig& cfg, num::Rng& init_rng);

  Location mean(std::span<const double> s_mean) const;
  diff::Var mean(diff::Tape& t, std::span<const double> s_mean);

  diff::DenseNet& net() { return net_; }
  diff::ParameterSet parameters() { return net_.parameters(); }
  const ActionConfig& config() const { return cfg_; }
  diff::Optimizer& optimizer() { return opt_; }

 private:
  ActionConfig cfg_;
  diff::DenseNet net_;
  diff::Optimizer opt_;
};

struct BasChoice {
  Location l{};
  bool clamped = false;
  double value = 0.0;  // Ṽ at l before the update
};

/// Samples l ~ N(action(μ_s), σ² I), clamps to [−1, 1]², and (if `update`)
/// takes one ascent step on Ṽ(l) for the action network with common random
/// numbers. Clamped coordinates carry no gradient.
BasChoice bas_select(HierarchicalVae& vae, ActionNet& action, std::span<const double> h, num::Rng& rng,
                     bool update = true);

/// Uniform on [−1, 1]².
Location random_location(num::Rng& rng);

enum class FixationStrategy { bas, random };
std::string_view fixation_strategy_name(FixationStrategy s);
FixationStrategy parse_fixation_strategy(std::string_view s);

struct TrialOptions {
  std::size_t fixations = 3;
  FoveationSpec fov{};
  FixationStrategy strategy = FixationStrategy::random;
  /// Sample z (training) or use posterior means (evaluation).
  bool sample = true;
  /// Let BAS update the action network during the trial.
  bool update_action = true;
};

/// One fixation sequence on `image`: first fixation uniform, the rest by the
/// strategy. `action` may be null for the random strategy.
TrialRecord run_trial(HierarchicalVae& vae, ActionNet* action, std::span<const double> image, std::size_t height,
                      std::size_t width, int label, const TrialOptions& opts, num::Rng& rng);

/// Input of the decision network: mean of q2 given h = Σ_t μ1(x_t, l_t).
std::vector<double> state_features(const HierarchicalVae& vae, const TrialRecord& trial);

/// Generative composite: for each location, z' ~ f2_dec(s, l), patch = the
/// first d × d block of f1_dec(z'), placed at the location's pixel centre.
/// Overlaps are averaged; uncovered pixels are 0.
std::vector<double> generate_stitched(const HierarchicalVae& vae, std::span<const double> s,
                                      std::span<const Location> grid, std::size_t height, std::size_t width,
                                      std::size_t d, num::Rng& rng);
/// n × n locations whose d × d patches tile the central region of the image.
std::vector<Location> stitch_grid(std::size_t height, std::size_t width, std::size_t d, std::size_t n = 3);

class DecisionNet {
 public:
  DecisionNet(std::size_t ds, std::size_t n_classes, std::size_t hidden, const diff::OptimizerConfig& opt,
              num::Rng& init_rng);

  std::vector<double> logits(std::span<const double> s_mean) const;
  int predict(std::span<const double> s_mean) const;
  /// Softmax cross-entropy on the tape.
  diff::Var loss(diff::Tape& t, std::span<const double> s_mean, int label);

  diff::DenseNet& net() { return net_; }
  diff::ParameterSet parameters() { return net_.parameters(); }
  std::size_t n_classes() const { return net_.output_size(); }

 private:
  diff::DenseNet net_;
  diff::Optimizer opt_;
  friend double train_classifier(DecisionNet&, std::span<const std::vector<double>>, std::span<const int>,
                                 const diff::ParameterSet&);
};

/// One optimizer step on the mean cross-entropy of a batch. Throws
/// std::logic_error if any parameter in `guarded` changed (they must not be
/// touched by classification) and std::out_of_range on a bad label. Returns
/// the batch loss before the step.
double train_classifier(DecisionNet& net, std::span<const std::vector<double>> features, std::span<const int> labels,
                        const diff::ParameterSet& guarded);

struct AvRunConfig {
  std::string preset = "centered";
  FixationStrategy strategy = FixationStrategy::bas;
  std::uint64_t seed = 0;
  std::size_t fixations = 3;
  FoveationSpec fov{};
  VaeConfig vae{};
  ActionConfig action{};
  double beta = 0.1;
  std::size_t batch = 64;
  diff::OptimizerConfig perception_opt{};
  diff::OptimizerConfig decision_opt{};
  std::size_t decision_hidden = 256;
  std::size_t pretrain_epochs = 0;  // random fixations before the strategy takes over
  std::size_t epochs = 10;
  /// Test trials scored per epoch for accuracy (0 = whole test corpus).
  std::size_t eval_trials = 0;

  /// The "centered" or "translated" defaults; throws on other names.
  static AvRunConfig preset_config(std::string_view name);
  void validate() const;
};

struct AvEpochRow {
  std::size_t epoch = 0;  // 0 = before training
  double elbo = 0.0;      // mean per-trial ELBO over the epoch
  double recon_mse = 0.0; // mean squared reconstruction error per pixel
  double accuracy = 0.0;  // decision-network test accuracy

  bool operator==(const AvEpochRow&) const = default;
};

struct AvRunLog {
  FixationStrategy strategy = FixationStrategy::bas;
  std::uint64_t seed = 0;
  std::vector<AvEpochRow> rows;
};

struct AvRunResult {
  HierarchicalVae vae;
  ActionNet action;
  DecisionNet decision;
  AvRunLog log;
};

/// Seed streams: derive_seed(seed, 1) network init, 2 trial randomness,
/// 3 corpus shuffling, 4 evaluation trials.
AvRunResult run_av_training(const AvRunConfig& cfg, const ImageCorpus& train, const ImageCorpus& test);

/// Scores the decision network on `count` test trials (0 = all) with the
/// given strategy; action networks are not updated.
struct EvalResult {
  double accuracy = 0.0;
  double recon_mse = 0.0;
  std::vector<TrialRecord> trials;
};
EvalResult evaluate(HierarchicalVae& vae, ActionNet& action, const DecisionNet& decision, const ImageCorpus& test,
                    const AvRunConfig& cfg, FixationStrategy strategy, std::size_t count, num::Rng& rng);

void write_av_csv(const std::filesystem::path& path, const AvRunLog& log);

}  // namespace explore::av
