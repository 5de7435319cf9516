#include "explore/av/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "explore/io/csv.hpp"

namespace explore::av {

using diff::Tape;
using diff::Var;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

std::vector<double> join(std::span<const double> a, Location l) {
  std::vector<double> v(a.begin(), a.end());
  v.push_back(l[0]);
  v.push_back(l[1]);
  return v;
}

std::vector<double> normals(std::size_t n, num::Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

std::vector<double> reparam(const num::GaussianParams& g, std::span<const double> eps) {
  std::vector<double> z(g.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = g.mean[i] + std::exp(g.log_std[i]) * eps[i];
  return z;
}

Var reparam(Tape& t, const GaussVar& g, std::span<const double> eps) {
  return g.mean + t.exp(g.log_std) * t.constant(eps);
}

}  // namespace

// ---- networks --------------------------------------------------------------

HierarchicalVae::HierarchicalVae(const VaeConfig& cfg, num::Rng& init_rng)
    : cfg_(cfg),
      low_enc_("low_enc", {cfg.glimpse_size + 2, cfg.hidden, cfg.hidden, 2 * cfg.dz}, cfg.activation,
               diff::Activation::identity),
      low_dec_("low_dec", {cfg.dz, cfg.hidden, cfg.hidden, cfg.glimpse_size}, cfg.activation,
               diff::Activation::identity),
      high_enc_("high_enc", {cfg.dz, cfg.hidden, cfg.hidden, 2 * cfg.ds}, cfg.activation,
                diff::Activation::identity),
      high_dec_("high_dec", {cfg.ds + 2, cfg.hidden, cfg.hidden, 2 * cfg.dz}, cfg.activation,
                diff::Activation::identity) {
  if (cfg.glimpse_size == 0 || cfg.dz == 0 || cfg.ds == 0 || cfg.hidden == 0) {
    throw std::invalid_argument("vae: all dimensions must be positive");
  }
  low_enc_.init(init_rng, diff::Init::fan_in_uniform);
  low_dec_.init(init_rng, diff::Init::fan_in_uniform);
  high_enc_.init(init_rng, diff::Init::fan_in_uniform);
  high_dec_.init(init_rng, diff::Init::fan_in_uniform);
}

diff::ParameterSet HierarchicalVae::parameters() {
  diff::ParameterSet set = low_enc_.parameters();
  set.append(low_dec_.parameters());
  set.append(high_enc_.parameters());
  set.append(high_dec_.parameters());
  return set;
}

num::GaussianParams split_gaussian(std::span<const double> out) {
  const std::size_t d = out.size() / 2;
  std::vector<double> m(out.begin(), out.begin() + static_cast<long>(d));
  std::vector<double> ls(d);
  for (std::size_t i = 0; i < d; ++i) ls[i] = 0.5 * out[d + i];
  num::GaussianParams g(std::move(m), std::move(ls));
  g.validate();
  return g;
}

GaussVar split_gaussian(Tape& t, Var out, std::size_t rows) {
  if (rows == 1) {
    const std::size_t d = out.size() / 2;
    return {t.slice(out, 0, d), t.scale(t.slice(out, d, d), 0.5)};
  }
  const std::size_t d = out.size() / rows / 2;
  return {t.slice_cols(out, rows, 0, d), t.scale(t.slice_cols(out, rows, d, d), 0.5)};
}

num::GaussianParams HierarchicalVae::encode_low(std::span<const double> x, Location l) const {
  if (x.size() != cfg_.glimpse_size) throw std::invalid_argument("encode_low: glimpse length mismatch");
  return split_gaussian(low_enc_.forward(join(x, l)));
}

std::vector<double> HierarchicalVae::decode_low(std::span<const double> z) const { return low_dec_.forward(z); }

num::GaussianParams HierarchicalVae::encode_high(std::span<const double> h) const {
  return split_gaussian(high_enc_.forward(h));
}

num::GaussianParams HierarchicalVae::decode_high(std::span<const double> s, Location l) const {
  return split_gaussian(high_dec_.forward(join(s, l)));
}

GaussVar HierarchicalVae::encode_low(Tape& t, Var x, Var l) {
  return split_gaussian(t, low_enc_.forward(t, t.concat(x, l)));
}

Var HierarchicalVae::decode_low(Tape& t, Var z) { return low_dec_.forward(t, z); }

GaussVar HierarchicalVae::encode_high(Tape& t, Var h) { return split_gaussian(t, high_enc_.forward(t, h)); }

GaussVar HierarchicalVae::decode_high(Tape& t, Var s, Var l) {
  return split_gaussian(t, high_dec_.forward(t, t.concat(s, l)));
}

// ---- Gaussian calculus on the tape ----------------------------------------

Var gaussian_entropy(Tape& t, const GaussVar& g) {
  const double d = static_cast<double>(g.log_std.size());
  return t.add_scalar(t.sum(g.log_std), 0.5 * d * (1.0 + kLog2Pi));
}

Var gaussian_kl(Tape& t, const GaussVar& q, const GaussVar& p) {
  const double d = static_cast<double>(q.mean.size());
  Var dls = p.log_std - q.log_std;
  Var ratio = t.exp(t.scale(dls, -2.0));
  Var maha = t.square(q.mean - p.mean) * t.exp(t.scale(p.log_std, -2.0));
  return t.add_scalar(t.sum(dls + t.scale(ratio + maha, 0.5)), -0.5 * d);
}

Var gaussian_kl_std_normal(Tape& t, const GaussVar& q) {
  const double d = static_cast<double>(q.mean.size());
  Var v = t.exp(t.scale(q.log_std, 2.0)) + t.square(q.mean);
  return t.add_scalar(t.sum(t.scale(v, 0.5) - q.log_std), -0.5 * d);
}

// ---- perception ------------------------------------------------------------

EncodeStep encode_step(const HierarchicalVae& vae, std::span<const double> x, Location l,
                       std::span<const double> h, num::Rng& rng) {
  if (h.size() != vae.config().dz) throw std::invalid_argument("encode_step: h has wrong size");
  EncodeStep r;
  r.q1 = vae.encode_low(x, l);
  r.eps = normals(vae.config().dz, rng);
  r.z = reparam(r.q1, r.eps);
  r.h.assign(h.begin(), h.end());
  for (std::size_t i = 0; i < r.h.size(); ++i) {
    r.h[i] += r.z[i];
    if (!std::isfinite(r.h[i])) throw std::runtime_error("encode_step: non-finite representation");
  }
  return r;
}

Var av_elbo(Tape& t, HierarchicalVae& vae, std::span<const TrialRecord> trials, double beta, ElboTerms* terms) {
  const auto& cfg = vae.config();
  if (trials.empty()) throw std::invalid_argument("av_elbo: empty batch");
  const std::size_t B = trials.size(), T = trials[0].size(), N = B * T;
  if (T == 0) throw std::invalid_argument("av_elbo: empty trial");
  std::vector<double> xs, ls, ez, es;
  xs.reserve(N * cfg.glimpse_size);
  ls.reserve(N * 2);
  ez.reserve(N * cfg.dz);
  es.reserve(B * cfg.ds);
  for (const auto& trial : trials) {
    if (trial.size() != T) throw std::invalid_argument("av_elbo: trials in a batch must have equal length");
    if (trial.locations.size() != T || trial.eps_z.size() != T || trial.eps_s.size() != cfg.ds) {
      throw std::invalid_argument("av_elbo: inconsistent trial record");
    }
    for (std::size_t i = 0; i < T; ++i) {
      if (trial.glimpses[i].size() != cfg.glimpse_size || trial.eps_z[i].size() != cfg.dz) {
        throw std::invalid_argument("av_elbo: dimension mismatch in step " + std::to_string(i));
      }
      xs.insert(xs.end(), trial.glimpses[i].begin(), trial.glimpses[i].end());
      ls.push_back(trial.locations[i][0]);
      ls.push_back(trial.locations[i][1]);
      ez.insert(ez.end(), trial.eps_z[i].begin(), trial.eps_z[i].end());
    }
    es.insert(es.end(), trial.eps_s.begin(), trial.eps_s.end());
  }
  // One row per fixation (trial-major), one row per trial at the top level.
  Var x = t.constant(std::move(xs));
  Var l = t.constant(std::move(ls));
  GaussVar q1 = split_gaussian(t, vae.low_enc().forward(t, t.concat_cols(x, l, N)), N);
  Var z = reparam(t, q1, ez);
  Var sq = t.sum(t.square(x - vae.decode_low(t, z)));
  Var recon = t.add_scalar(t.scale(sq, -0.5), -0.5 * static_cast<double>(N * cfg.glimpse_size) * kLog2Pi);
  Var h = t.sum_row_groups(z, cfg.dz, T);
  GaussVar q2 = split_gaussian(t, vae.high_enc().forward(t, h), B);
  Var s = t.repeat_rows(reparam(t, q2, es), cfg.ds, T);
  GaussVar prior = split_gaussian(t, vae.high_dec().forward(t, t.concat_cols(s, l, N)), N);
  Var kl_z = gaussian_kl(t, q1, prior);
  Var kl_s = gaussian_kl_std_normal(t, q2);
  Var loss = kl_z + t.scale(kl_s, beta) - recon;
  if (terms) {
    terms->loss = loss.scalar();
    terms->recon = recon.scalar();
    terms->kl_z = kl_z.scalar();
    terms->kl_s = kl_s.scalar();
    terms->sq_error = sq.scalar();
  }
  return loss;
}

Var av_elbo(Tape& t, HierarchicalVae& vae, const TrialRecord& trial, double beta, ElboTerms* terms) {
  return av_elbo(t, vae, std::span<const TrialRecord>(&trial, 1), beta, terms);
}

ElboTerms av_elbo(HierarchicalVae& vae, const TrialRecord& trial, double beta) {
  Tape t;
  ElboTerms terms;
  av_elbo(t, vae, trial, beta, &terms);
  return terms;
}

// ---- value and action --------------------------------------------------------

std::vector<ValueNoise> draw_value_noise(const VaeConfig& cfg, std::size_t k, num::Rng& rng) {
  if (k == 0) throw std::invalid_argument("value: K must be >= 1");
  std::vector<ValueNoise> out(k);
  for (auto& n : out) {
    n.eps_s = normals(cfg.ds, rng);
    n.eps_z = normals(cfg.dz, rng);
  }
  return out;
}

Var approx_value(Tape& t, HierarchicalVae& vae, std::span<const double> h, Var l, std::span<const ValueNoise> noise) {
  const auto& cfg = vae.config();
  if (noise.empty()) throw std::invalid_argument("value: K must be >= 1");
  if (l.size() != 2) throw std::invalid_argument("value: location must have 2 entries");
  t.freeze(vae.parameters());
  const std::size_t K = noise.size();
  const num::GaussianParams q2 = vae.encode_high(h);
  const double h0 = num::gaussian_entropy(q2);
  // The K imagined observations run as K rows.
  std::vector<double> s, ez, hs;
  for (const auto& n : noise) {
    if (n.eps_s.size() != cfg.ds || n.eps_z.size() != cfg.dz) throw std::invalid_argument("value: noise size mismatch");
    auto sk = reparam(q2, n.eps_s);
    s.insert(s.end(), sk.begin(), sk.end());
    ez.insert(ez.end(), n.eps_z.begin(), n.eps_z.end());
    hs.insert(hs.end(), h.begin(), h.end());
  }
  Var lk = t.repeat_rows(l, 2, K);
  GaussVar p = split_gaussian(t, vae.high_dec().forward(t, t.concat_cols(t.constant(std::move(s)), lk, K)), K);
  Var x = vae.decode_low(t, reparam(t, p, ez));
  GaussVar q1 = split_gaussian(t, vae.low_enc().forward(t, t.concat_cols(x, lk, K)), K);
  GaussVar q2k = split_gaussian(t, vae.high_enc().forward(t, t.constant(std::move(hs)) + q1.mean), K);
  return t.add_scalar(t.scale(gaussian_entropy(t, q2k), -1.0 / static_cast<double>(K)), h0);
}

double approx_value(HierarchicalVae& vae, std::span<const double> h, Location l, std::size_t k, num::Rng& rng) {
  auto noise = draw_value_noise(vae.config(), k, rng);
  Tape t;
  return approx_value(t, vae, h, t.constant(std::vector<double>{l[0], l[1]}), noise).scalar();
}

ActionNet::ActionNet(std::size_t ds, const ActionConfig& cfg, num::Rng& init_rng)
    : cfg_(cfg),
      net_("action", {ds, cfg.hidden1, cfg.hidden2, 2}, diff::Activation::relu, diff::Activation::tanh),
      opt_(cfg.optimizer) {
  if (!(cfg.sigma > 0.0)) throw std::invalid_argument("action: sigma must be > 0");
  if (cfg.k == 0) throw std::invalid_argument("action: K must be >= 1");
  net_.init(init_rng, diff::Init::fan_in_uniform);
}

Location ActionNet::mean(std::span<const double> s_mean) const {
  auto m = net_.forward(s_mean);
  return {m[0], m[1]};
}

Var ActionNet::mean(Tape& t, std::span<const double> s_mean) { return net_.forward(t, t.constant(s_mean)); }

BasChoice bas_select(HierarchicalVae& vae, ActionNet& action, std::span<const double> h, num::Rng& rng, bool update) {
  const auto s_mean = vae.encode_high(h).mean;
  const Location m = action.mean(s_mean);
  const double sigma = action.config().sigma;
  const double e0 = rng.normal(), e1 = rng.normal();
  const Location raw{m[0] + sigma * e0, m[1] + sigma * e1};
  BasChoice c;
  for (int i = 0; i < 2; ++i) {
    c.l[i] = std::clamp(raw[i], -1.0, 1.0);
    c.clamped = c.clamped || c.l[i] != raw[i];
  }
  if (!update) return c;

  auto noise = draw_value_noise(vae.config(), action.config().k, rng);
  Tape t;
  Var mv = action.mean(t, s_mean);
  const double eps[2] = {e0, e1};
  Var coord[2];
  for (std::size_t i = 0; i < 2; ++i) {
    coord[i] = c.l[i] == raw[i] ? t.add_scalar(t.slice(mv, i, 1), sigma * eps[i]) : t.scalar(c.l[i]);
  }
  Var v = approx_value(t, vae, h, t.concat(coord[0], coord[1]), noise);
  c.value = v.scalar();
  auto params = action.parameters();
  params.zero_grad();
  t.backward(t.neg(v));
  action.optimizer().step(params);
  return c;
}

Location random_location(num::Rng& rng) { return {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)}; }

std::string_view fixation_strategy_name(FixationStrategy s) {
  return s == FixationStrategy::bas ? "bas" : "random";
}

FixationStrategy parse_fixation_strategy(std::string_view s) {
  if (s == "bas") return FixationStrategy::bas;
  if (s == "random") return FixationStrategy::random;
  throw std::invalid_argument("unknown fixation strategy '" + std::string(s) + "' (expected bas or random)");
}

// ---- trials ----------------------------------------------------------------

TrialRecord run_trial(HierarchicalVae& vae, ActionNet* action, std::span<const double> image, std::size_t height,
                      std::size_t width, int label, const TrialOptions& opts, num::Rng& rng) {
  if (opts.fixations == 0) throw std::invalid_argument("trial: need at least one fixation");
  if (opts.strategy == FixationStrategy::bas && action == nullptr) {
    throw std::invalid_argument("trial: BAS needs an action network");
  }
  const auto& cfg = vae.config();
  TrialRecord r;
  r.label = label;
  r.h.assign(cfg.dz, 0.0);
  for (std::size_t t = 0; t < opts.fixations; ++t) {
    Location l = t == 0 || opts.strategy == FixationStrategy::random
                     ? random_location(rng)
                     : bas_select(vae, *action, r.h, rng, opts.update_action).l;
    Glimpse g = foveate(image, height, width, l, opts.fov);
    auto q1 = vae.encode_low(g.x, g.l);
    auto eps = opts.sample ? normals(cfg.dz, rng) : std::vector<double>(cfg.dz, 0.0);
    auto z = reparam(q1, eps);
    for (std::size_t i = 0; i < cfg.dz; ++i) r.h[i] += z[i];
    r.glimpses.push_back(std::move(g.x));
    r.locations.push_back(g.l);
    r.eps_z.push_back(std::move(eps));
    r.z.push_back(std::move(z));
  }
  r.q2 = vae.encode_high(r.h);
  r.eps_s = opts.sample ? normals(cfg.ds, rng) : std::vector<double>(cfg.ds, 0.0);
  return r;
}

std::vector<double> state_features(const HierarchicalVae& vae, const TrialRecord& trial) {
  std::vector<double> h(vae.config().dz, 0.0);
  for (std::size_t t = 0; t < trial.size(); ++t) {
    auto q1 = vae.encode_low(trial.glimpses[t], trial.locations[t]);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += q1.mean[i];
  }
  return vae.encode_high(h).mean;
}

// ---- generation ------------------------------------------------------------

std::vector<double> generate_stitched(const HierarchicalVae& vae, std::span<const double> s,
                                      std::span<const Location> grid, std::size_t height, std::size_t width,
                                      std::size_t d, num::Rng& rng) {
  if (s.size() != vae.config().ds) throw std::invalid_argument("stitch: s has wrong size");
  if (d * d > vae.config().glimpse_size) throw std::invalid_argument("stitch: patch larger than the glimpse");
  std::vector<double> sum(height * width, 0.0), count(height * width, 0.0);
  for (const Location& l : grid) {
    auto p = vae.decode_high(s, l);
    auto z = num::gaussian_reparam_sample(p, rng);
    auto x = vae.decode_low(z);
    const long top = static_cast<long>(location_to_pixel(l[1], height)) - static_cast<long>(d / 2);
    const long left = static_cast<long>(location_to_pixel(l[0], width)) - static_cast<long>(d / 2);
    for (std::size_t r = 0; r < d; ++r) {
      const long y = top + static_cast<long>(r);
      if (y < 0 || y >= static_cast<long>(height)) continue;
      for (std::size_t c = 0; c < d; ++c) {
        const long xx = left + static_cast<long>(c);
        if (xx < 0 || xx >= static_cast<long>(width)) continue;
        const std::size_t idx = static_cast<std::size_t>(y) * width + static_cast<std::size_t>(xx);
        sum[idx] += x[r * d + c];
        count[idx] += 1.0;
      }
    }
  }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = count[i] > 0 ? sum[i] / count[i] : 0.0;
  return sum;
}

std::vector<Location> stitch_grid(std::size_t height, std::size_t width, std::size_t d, std::size_t n) {
  if (n * d > std::min(height, width)) throw std::invalid_argument("stitch_grid: grid larger than the image");
  std::vector<Location> out;
  const std::size_t top = (height - n * d) / 2, left = (width - n * d) / 2;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out.push_back({pixel_to_location(left + d / 2 + j * d, width), pixel_to_location(top + d / 2 + i * d, height)});
    }
  }
  return out;
}

// ---- decision --------------------------------------------------------------

DecisionNet::DecisionNet(std::size_t ds, std::size_t n_classes, std::size_t hidden, const diff::OptimizerConfig& opt,
                         num::Rng& init_rng)
    : net_("decision", {ds, hidden, hidden, n_classes}, diff::Activation::relu, diff::Activation::identity),
      opt_(opt) {
  net_.init(init_rng, diff::Init::fan_in_uniform);
}

std::vector<double> DecisionNet::logits(std::span<const double> s_mean) const { return net_.forward(s_mean); }

int DecisionNet::predict(std::span<const double> s_mean) const {
  auto z = logits(s_mean);
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

Var DecisionNet::loss(Tape& t, std::span<const double> s_mean, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= n_classes()) {
    throw std::out_of_range("decision: label " + std::to_string(label) + " out of range");
  }
  Var z = net_.forward(t, t.constant(s_mean));
  const auto zv = z.value();
  const double m = *std::max_element(zv.begin(), zv.end());
  Var lse = t.add_scalar(t.log(t.sum(t.exp(t.add_scalar(z, -m)))), m);
  return lse - t.slice(z, static_cast<std::size_t>(label), 1);
}

double train_classifier(DecisionNet& net, std::span<const std::vector<double>> features, std::span<const int> labels,
                        const diff::ParameterSet& guarded) {
  if (features.size() != labels.size() || features.empty()) {
    throw std::invalid_argument("train_classifier: need matching, nonempty features and labels");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= net.n_classes()) {
      throw std::out_of_range("train_classifier: label " + std::to_string(y) + " out of range");
    }
  }
  const std::uint64_t before = guarded.checksum();
  auto params = net.parameters();
  params.zero_grad();
  double total = 0.0;
  const double w = 1.0 / static_cast<double>(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    Tape t;
    Var l = net.loss(t, features[i], labels[i]);
    total += l.scalar();
    t.backward(t.scale(l, w));
  }
  net.opt_.step(params);
  if (guarded.checksum() != before) throw std::logic_error("train_classifier: guarded parameters changed");
  return total * w;
}

// ---- training ----------------------------------------------------------------

AvRunConfig AvRunConfig::preset_config(std::string_view name) {
  AvRunConfig c;
  c.preset = std::string(name);
  if (name == "centered") {
    c.fixations = 3;
    c.fov = {8, 1, 2};
    c.vae.dz = 32;
    c.vae.ds = 64;
    c.pretrain_epochs = 0;
  } else if (name == "translated") {
    c.fixations = 4;
    c.fov = {12, 3, 2};
    c.vae.dz = 64;
    c.vae.ds = 128;
    c.pretrain_epochs = 10;
  } else {
    throw std::invalid_argument("unknown preset '" + std::string(name) + "' (expected centered or translated)");
  }
  c.vae.glimpse_size = c.fov.glimpse_size();
  return c;
}

void AvRunConfig::validate() const {
  fov.validate();
  if (vae.glimpse_size != fov.glimpse_size()) throw std::invalid_argument("av config: vae glimpse size != n_fov * d^2");
  if (fixations == 0) throw std::invalid_argument("av config: fixations must be >= 1");
  if (batch == 0) throw std::invalid_argument("av config: batch must be >= 1");
  if (!(beta >= 0.0)) throw std::invalid_argument("av config: beta must be >= 0");
  if (!(action.sigma > 0.0)) throw std::invalid_argument("av config: sigma_action must be > 0");
  if (action.k == 0) throw std::invalid_argument("av config: K must be >= 1");
  if (!(perception_opt.lr > 0.0) || !(decision_opt.lr > 0.0) || !(action.optimizer.lr > 0.0)) {
    throw std::invalid_argument("av config: learning rates must be > 0");
  }
}

EvalResult evaluate(HierarchicalVae& vae, ActionNet& action, const DecisionNet& decision, const ImageCorpus& test,
                    const AvRunConfig& cfg, FixationStrategy strategy, std::size_t count, num::Rng& rng) {
  count = count == 0 ? test.size() : std::min(count, test.size());
  if (count == 0) throw std::invalid_argument("evaluate: empty test corpus");
  TrialOptions opts{cfg.fixations, cfg.fov, strategy, false, false};
  EvalResult r;
  double correct = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    auto trial = run_trial(vae, &action, test.images[i], test.height, test.width, test.labels[i], opts, rng);
    sq += av_elbo(vae, trial, cfg.beta).sq_error;
    if (decision.predict(state_features(vae, trial)) == trial.label) correct += 1.0;
    r.trials.push_back(std::move(trial));
  }
  r.accuracy = correct / static_cast<double>(count);
  r.recon_mse = sq / static_cast<double>(count * cfg.fixations * vae.config().glimpse_size);
  return r;
}

namespace {

AvEpochRow eval_row(std::size_t epoch, HierarchicalVae& vae, ActionNet& action, const DecisionNet& decision,
                    const ImageCorpus& test, const AvRunConfig& cfg, FixationStrategy strategy) {
  num::Rng rng(num::derive_seed(cfg.seed, 4));
  auto e = evaluate(vae, action, decision, test, cfg, strategy, cfg.eval_trials, rng);
  double elbo = 0.0;
  for (const auto& t : e.trials) elbo -= av_elbo(vae, t, cfg.beta).loss;
  return {epoch, elbo / static_cast<double>(e.trials.size()), e.recon_mse, e.accuracy};
}

}  // namespace

AvRunResult run_av_training(const AvRunConfig& cfg, const ImageCorpus& train, const ImageCorpus& test) {
  cfg.validate();
  train.validate();
  test.validate();
  if (train.size() == 0) throw std::invalid_argument("av training: empty training corpus");
  num::Rng init(num::derive_seed(cfg.seed, 1));
  HierarchicalVae vae(cfg.vae, init);
  ActionNet action(cfg.vae.ds, cfg.action, init);
  DecisionNet decision(cfg.vae.ds, train.n_classes, cfg.decision_hidden, cfg.decision_opt, init);
  num::Rng trial_rng(num::derive_seed(cfg.seed, 2)), shuffle_rng(num::derive_seed(cfg.seed, 3));
  diff::Optimizer perception_opt(cfg.perception_opt);

  AvRunLog log{cfg.strategy, cfg.seed, {}};
  log.rows.push_back(eval_row(0, vae, action, decision, test, cfg, cfg.strategy));

  auto perception = vae.parameters();
  diff::ParameterSet guarded = vae.parameters();
  guarded.append(action.parameters());

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t total = cfg.pretrain_epochs + cfg.epochs;
  for (std::size_t epoch = 1; epoch <= total; ++epoch) {
    const FixationStrategy strategy = epoch <= cfg.pretrain_epochs ? FixationStrategy::random : cfg.strategy;
    TrialOptions opts{cfg.fixations, cfg.fov, strategy, true, true};
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.index(i)]);
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch);
      const double w = 1.0 / static_cast<double>(b1 - b0);
      std::vector<TrialRecord> trials;
      for (std::size_t j = b0; j < b1; ++j) {
        const std::size_t idx = order[j];
        trials.push_back(
            run_trial(vae, &action, train.images[idx], train.height, train.width, train.labels[idx], opts, trial_rng));
      }
      std::vector<std::vector<double>> features;
      std::vector<int> labels;
      perception.zero_grad();
      {
        Tape t;
        t.backward(t.scale(av_elbo(t, vae, trials, cfg.beta), w));
      }
      for (const auto& trial : trials) {
        features.push_back(state_features(vae, trial));
        labels.push_back(trial.label);
      }
      perception_opt.step(perception);
      train_classifier(decision, features, labels, guarded);
    }
    log.rows.push_back(eval_row(epoch, vae, action, decision, test, cfg, cfg.strategy));
  }
  return {std::move(vae), std::move(action), std::move(decision), std::move(log)};
}

void write_av_csv(const std::filesystem::path& path, const AvRunLog& log) {
  io::CsvWriter w(path, {"epoch", "elbo", "recon_mse", "accuracy", "strategy", "seed"});
  for (const auto& r : log.rows) {
    w.row({std::to_string(r.epoch), io::format_double(r.elbo), io::format_double(r.recon_mse),
           io::format_double(r.accuracy), std::string(fixation_strategy_name(log.strategy)), std::to_string(log.seed)});
  }
}

}  // namespace explore::av
