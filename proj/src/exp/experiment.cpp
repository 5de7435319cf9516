#include "explore/exp/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "explore/diff/checkpoint.hpp"
#include "explore/io/csv.hpp"
#include "explore/io/pgm.hpp"

namespace explore::exp {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::string_view task_name(Task t) {
  switch (t) {
    case Task::dense_world: return "dense-world";
    case Task::maze: return "maze";
    case Task::active_vision: return "active-vision";
  }
  return "?";
}

Task parse_task(std::string_view s) {
  for (Task t : {Task::dense_world, Task::maze, Task::active_vision}) {
    if (task_name(t) == s) return t;
  }
  throw std::invalid_argument("unknown task '" + std::string(s) + "' (expected dense-world, maze or active-vision)");
}

// ---- validation ------------------------------------------------------------

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("config: " + what);
}

bool is_cmc(Task t) { return t != Task::active_vision; }

}  // namespace

void ExperimentConfig::validate() const {
  require(!strategies.empty(), "strategies must not be empty");
  require(!seeds.empty(), "seeds must not be empty");
  require(std::set<std::string>(strategies.begin(), strategies.end()).size() == strategies.size(),
          "strategies must be distinct");
  require(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == seeds.size(), "seeds must be distinct");
  require(log_every >= 1, "log_every must be >= 1");
  for (const auto& s : strategies) {
    try {
      if (is_cmc(task)) {
        cmc::parse_strategy(s);
      } else {
        av::parse_fixation_strategy(s);
      }
    } catch (const std::exception&) {
      throw std::invalid_argument("config: unknown strategy '" + s + "' for task " + std::string(task_name(task)));
    }
  }
  if (is_cmc(task)) {
    const auto& c = cmc;
    require(c.steps >= 1, "cmc.steps must be >= 1");
    if (task == Task::dense_world) {
      require(c.size >= 2, "cmc.size (states) must be >= 2");
      require(c.actions >= 1, "cmc.actions must be >= 1");
    } else {
      require(c.size >= 2, "cmc.size (maze side) must be >= 2");
      require(c.actions == 4, "cmc.actions must be 4 for a maze");
      require(c.maze_extra_fraction >= 0.0 && c.maze_extra_fraction <= 1.0, "cmc.maze_extra_fraction must be in [0, 1]");
    }
    const auto& p = c.run.perception;
    require(p.hidden >= 1, "cmc.hidden must be >= 1");
    require(p.beta >= 0.0 && std::isfinite(p.beta), "cmc.beta must be a finite value >= 0");
    require(p.optimizer.lr > 0.0 && std::isfinite(p.optimizer.lr), "cmc.lr must be > 0");
    require(c.run.tau_start > 0.0 && c.run.tau_end > 0.0, "cmc.tau_start and cmc.tau_end must be > 0");
  } else {
    try {
      av.run.validate();
    } catch (const std::exception& e) {
      throw std::invalid_argument(std::string("config: ") + e.what());
    }
    const auto& k = av.corpus;
    require(k.source == "glyph" || k.source == "idx", "av.corpus.source must be glyph or idx");
    if (k.source == "glyph") {
      require(k.train_per_class >= 1 && k.test_per_class >= 1, "av.corpus per-class counts must be >= 1");
      require(k.image_size >= 28, "av.corpus.image_size must be >= 28");
      require(k.noise >= 0.0 && std::isfinite(k.noise), "av.corpus.noise must be >= 0");
    } else {
      require(!k.train_images.empty() && !k.train_labels.empty() && !k.test_images.empty() && !k.test_labels.empty(),
              "av.corpus idx source needs train_images, train_labels, test_images and test_labels");
    }
  }
}

ExperimentConfig default_config(Task task) {
  ExperimentConfig c;
  c.task = task;
  if (task == Task::dense_world) {
    c.strategies = {"bas", "random", "boltzmann"};
    c.cmc.size = 10;
    c.cmc.actions = 4;
    c.cmc.steps = 2000;
  } else if (task == Task::maze) {
    c.strategies = {"bas", "random", "boltzmann"};
    c.cmc.size = 6;
    c.cmc.actions = 4;
    c.cmc.steps = 3000;
  } else {
    c.strategies = {"bas", "random"};
  }
  c.seeds = {0, 1, 2, 3, 4};
  return c;
}

// ---- JSON ------------------------------------------------------------------

namespace {

// Reads keys off one JSON object and rejects whatever is left unread.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw std::invalid_argument("config: " + path_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw std::invalid_argument("expected a boolean");
        out = it->template get<bool>();
      } else if constexpr (std::is_same_v<T, std::string> || std::is_same_v<T, std::optional<std::string>>) {
        if (!it->is_string()) throw std::invalid_argument("expected a string");
        out = it->template get<std::string>();
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw std::invalid_argument("expected a number");
        out = it->template get<T>();
      } else {
        if (!it->is_number_unsigned()) throw std::invalid_argument("expected a non-negative integer");
        out = it->template get<T>();
      }
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config: " + field(key) + ": " + e.what());
    }
  }

  void get_seeds(const char* key, std::vector<std::uint64_t>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_array()) throw std::invalid_argument("config: " + field(key) + ": expected an array");
    out.clear();
    for (const auto& v : *it) {
      if (!v.is_number_unsigned()) throw std::invalid_argument("config: " + field(key) + ": expected non-negative integers");
      out.push_back(v.get<std::uint64_t>());
    }
  }

  void get_strings(const char* key, std::vector<std::string>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_array()) throw std::invalid_argument("config: " + field(key) + ": expected an array");
    out.clear();
    for (const auto& v : *it) {
      if (!v.is_string()) throw std::invalid_argument("config: " + field(key) + ": expected strings");
      out.push_back(v.get<std::string>());
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw std::invalid_argument("config: unknown key '" + field(it.key().c_str()) + "'");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class E, class Parse>
void get_enum(ObjectReader& r, const char* key, E& out, Parse parse) {
  std::optional<std::string> s;
  r.get(key, s);
  if (!s) return;
  try {
    out = parse(*s);
  } catch (const std::exception& e) {
    throw std::invalid_argument("config: " + r.field(key) + ": " + e.what());
  }
}

void read_cmc(const Json& j, CmcTaskConfig& c) {
  ObjectReader r(j, "cmc");
  auto& p = c.run.perception;
  r.get("size", c.size);
  r.get("actions", c.actions);
  r.get("steps", c.steps);
  r.get("maze_extra_fraction", c.maze_extra_fraction);
  r.get("beta", p.beta);
  r.get("hidden", p.hidden);
  r.get("lr", p.optimizer.lr);
  get_enum(r, "optimizer", p.optimizer.kind, diff::parse_optimizer);
  get_enum(r, "elbo_mode", p.elbo_mode, cmc::parse_elbo_mode);
  r.get("normalize_counts", p.normalize_counts);
  r.get("efu", c.run.bas.efu);
  r.get("sampled_weights", c.run.bas.sampled_weights);
  r.get("tau_start", c.run.tau_start);
  r.get("tau_end", c.run.tau_end);
  get_enum(r, "train_scope", c.run.train_scope, cmc::parse_train_scope);
  r.finish();
}

void read_corpus(const Json& j, CorpusConfig& k) {
  ObjectReader r(j, "av.corpus");
  r.get("source", k.source);
  r.get("train_per_class", k.train_per_class);
  r.get("test_per_class", k.test_per_class);
  r.get("image_size", k.image_size);
  r.get("translated", k.translated);
  r.get("noise", k.noise);
  r.get("seed", k.seed);
  r.get("train_images", k.train_images);
  r.get("train_labels", k.train_labels);
  r.get("test_images", k.test_images);
  r.get("test_labels", k.test_labels);
  r.finish();
}

void read_av(const Json& j, AvTaskConfig& a) {
  ObjectReader r(j, "av");
  // The preset is applied first so explicit keys override its table values.
  std::string preset = a.run.preset;
  r.get("preset", preset);
  try {
    a.run = av::AvRunConfig::preset_config(preset);
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("config: av.preset: ") + e.what());
  }
  auto& c = a.run;
  r.get("fixations", c.fixations);
  r.get("patch", c.fov.d);
  r.get("n_fov", c.fov.n_fov);
  r.get("fov_scale", c.fov.scale);
  r.get("dz", c.vae.dz);
  r.get("ds", c.vae.ds);
  r.get("hidden", c.vae.hidden);
  r.get("beta", c.beta);
  r.get("batch", c.batch);
  r.get("perception_lr", c.perception_opt.lr);
  r.get("action_lr", c.action.optimizer.lr);
  get_enum(r, "action_optimizer", c.action.optimizer.kind, diff::parse_optimizer);
  r.get("decision_lr", c.decision_opt.lr);
  r.get("decision_hidden", c.decision_hidden);
  r.get("sigma_action", c.action.sigma);
  r.get("value_samples", c.action.k);
  r.get("pretrain_epochs", c.pretrain_epochs);
  r.get("epochs", c.epochs);
  r.get("eval_trials", c.eval_trials);
  r.get("stitch_examples", a.stitch_examples);
  r.get("save_models", a.save_models);
  if (const Json* corpus = r.child("corpus")) read_corpus(*corpus, a.corpus);
  r.finish();
  c.vae.glimpse_size = c.fov.glimpse_size();
}

}  // namespace

ExperimentConfig parse_config(std::string_view json_text) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
  }
  ObjectReader r(j, "");
  std::string task;
  r.get("task", task);
  if (task.empty()) throw std::invalid_argument("config: missing key 'task'");
  ExperimentConfig c;
  try {
    c = default_config(parse_task(task));
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("config: task: ") + e.what());
  }
  r.get_strings("strategies", c.strategies);
  r.get_seeds("seeds", c.seeds);
  r.get("log_every", c.log_every);
  const Json* cmc_j = r.child("cmc");
  const Json* av_j = r.child("av");
  r.finish();
  if (is_cmc(c.task)) {
    if (av_j) throw std::invalid_argument("config: 'av' section given for a CMC task");
    if (cmc_j) read_cmc(*cmc_j, c.cmc);
  } else {
    if (cmc_j) throw std::invalid_argument("config: 'cmc' section given for the active-vision task");
    if (av_j) read_av(*av_j, c.av);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  Json j;
  j["task"] = task_name(c.task);
  j["strategies"] = c.strategies;
  j["seeds"] = c.seeds;
  j["log_every"] = c.log_every;
  if (is_cmc(c.task)) {
    const auto& p = c.cmc.run.perception;
    Json m;
    m["size"] = c.cmc.size;
    m["actions"] = c.cmc.actions;
    m["steps"] = c.cmc.steps;
    m["maze_extra_fraction"] = c.cmc.maze_extra_fraction;
    m["beta"] = p.beta;
    m["hidden"] = p.hidden;
    m["lr"] = p.optimizer.lr;
    m["optimizer"] = diff::optimizer_name(p.optimizer.kind);
    m["elbo_mode"] = cmc::elbo_mode_name(p.elbo_mode);
    m["normalize_counts"] = p.normalize_counts;
    m["efu"] = c.cmc.run.bas.efu;
    m["sampled_weights"] = c.cmc.run.bas.sampled_weights;
    m["tau_start"] = c.cmc.run.tau_start;
    m["tau_end"] = c.cmc.run.tau_end;
    m["train_scope"] = cmc::train_scope_name(c.cmc.run.train_scope);
    j["cmc"] = m;
  } else {
    const auto& r = c.av.run;
    const auto& k = c.av.corpus;
    Json a;
    a["preset"] = r.preset;
    a["fixations"] = r.fixations;
    a["patch"] = r.fov.d;
    a["n_fov"] = r.fov.n_fov;
    a["fov_scale"] = r.fov.scale;
    a["dz"] = r.vae.dz;
    a["ds"] = r.vae.ds;
    a["hidden"] = r.vae.hidden;
    a["beta"] = r.beta;
    a["batch"] = r.batch;
    a["perception_lr"] = r.perception_opt.lr;
    a["action_lr"] = r.action.optimizer.lr;
    a["action_optimizer"] = diff::optimizer_name(r.action.optimizer.kind);
    a["decision_lr"] = r.decision_opt.lr;
    a["decision_hidden"] = r.decision_hidden;
    a["sigma_action"] = r.action.sigma;
    a["value_samples"] = r.action.k;
    a["pretrain_epochs"] = r.pretrain_epochs;
    a["epochs"] = r.epochs;
    a["eval_trials"] = r.eval_trials;
    a["stitch_examples"] = c.av.stitch_examples;
    a["save_models"] = c.av.save_models;
    Json corpus;
    corpus["source"] = k.source;
    corpus["train_per_class"] = k.train_per_class;
    corpus["test_per_class"] = k.test_per_class;
    corpus["image_size"] = k.image_size;
    corpus["translated"] = k.translated;
    corpus["noise"] = k.noise;
    corpus["seed"] = k.seed;
    corpus["train_images"] = k.train_images;
    corpus["train_labels"] = k.train_labels;
    corpus["test_images"] = k.test_images;
    corpus["test_labels"] = k.test_labels;
    a["corpus"] = corpus;
    j["av"] = a;
  }
  return j.dump(2) + "\n";
}

// ---- running ---------------------------------------------------------------

bool RunSummary::all_ok() const {
  return std::all_of(cells.begin(), cells.end(), [](const CellStatus& c) { return c.ok; });
}

std::string cell_name(std::string_view strategy, std::uint64_t seed) {
  return std::string(strategy) + "_seed" + std::to_string(seed);
}

namespace {

// Nearest-neighbour upscale so small heatmaps stay visible.
io::GrayImage upscale(const io::GrayImage& img, std::size_t f) {
  io::GrayImage out{img.width * f, img.height * f, {}};
  out.pixels.resize(out.width * out.height);
  for (std::size_t r = 0; r < out.height; ++r) {
    for (std::size_t c = 0; c < out.width; ++c) out.pixels[r * out.width + c] = img.pixels[(r / f) * img.width + c / f];
  }
  return out;
}

void run_cmc_cell(const ExperimentConfig& cfg, const std::string& strategy, std::uint64_t seed, const fs::path& out) {
  num::Rng krng(num::derive_seed(seed, 0));
  cmc::TransitionKernel kernel;
  std::size_t side = 0;
  if (cfg.task == Task::dense_world) {
    kernel = cmc::make_dense_world(cfg.cmc.size, cfg.cmc.actions, krng);
  } else {
    side = cfg.cmc.size;
    auto spec = cmc::generate_maze_layout(side, krng, cfg.cmc.maze_extra_fraction);
    kernel = cmc::make_maze(spec, krng);
  }
  cmc::CmcRunConfig run = cfg.cmc.run;
  run.strategy = cmc::parse_strategy(strategy);
  run.seed = seed;
  run.steps = cfg.cmc.steps;
  run.log_every = cfg.log_every;
  const auto log = cmc::run_episode(run, kernel);
  const std::string name = cell_name(strategy, seed);
  cmc::write_run_csv(out / "runs" / (name + ".csv"), log);

  io::GrayImage img;
  if (side > 0) {
    auto visits = cmc::visitation_map(log.trajectory, side);
    img = upscale(io::to_gray_max_normalized(visits, side, side), 16);
  } else {
    // states down, actions across: Σ_{s'} h(s, a, s')
    const std::size_t n = kernel.n_states(), a = kernel.n_actions();
    std::vector<double> counts(n * a);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t k = 0; k < a; ++k) counts[s * a + k] = static_cast<double>(log.history.pair_total(s, k));
    }
    img = upscale(io::to_gray_max_normalized(counts, a, n), 16);
  }
  io::write_pgm(out / "images" / (name + "_visits.pgm"), img);
}

struct AvCorpora {
  av::ImageCorpus train, test;
};

AvCorpora load_corpora(const CorpusConfig& k) {
  if (k.source == "idx") {
    auto train = av::load_idx(k.train_images, k.train_labels);
    auto test = av::load_idx(k.test_images, k.test_labels);
    test.split = "test";
    return {std::move(train), std::move(test)};
  }
  num::Rng r_train(num::derive_seed(k.seed, 0)), r_test(num::derive_seed(k.seed, 1));
  auto train = av::make_glyph_corpus({k.train_per_class, k.image_size, k.translated, k.noise}, r_train);
  auto test = av::make_glyph_corpus({k.test_per_class, k.image_size, k.translated, k.noise}, r_test);
  test.split = "test";
  return {std::move(train), std::move(test)};
}

// Row per example: original image | stitched composite from E[q2(s)].
void write_stitched(const fs::path& path, av::AvRunResult& res, const av::ImageCorpus& test, const av::AvRunConfig& run,
                    std::size_t count, std::uint64_t seed) {
  count = std::min(count, test.size());
  if (count == 0) return;
  const std::size_t h = test.height, w = test.width;
  const auto grid = av::stitch_grid(h, w, run.fov.d);
  std::vector<double> canvas(count * h * 2 * w, 0.0);
  num::Rng trial_rng(num::derive_seed(seed, 5)), gen_rng(num::derive_seed(seed, 6));
  const av::TrialOptions opts{run.fixations, run.fov, run.strategy, false, false};
  for (std::size_t i = 0; i < count; ++i) {
    auto trial = av::run_trial(res.vae, &res.action, test.images[i], h, w, test.labels[i], opts, trial_rng);
    auto s = av::state_features(res.vae, trial);
    auto comp = av::generate_stitched(res.vae, s, grid, h, w, run.fov.d, gen_rng);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        canvas[(i * h + r) * 2 * w + c] = test.images[i][r * w + c];
        canvas[(i * h + r) * 2 * w + w + c] = comp[r * w + c];
      }
    }
  }
  io::write_pgm(path, io::to_gray_unit(canvas, 2 * w, count * h));
}

void run_av_cell(const ExperimentConfig& cfg, const AvCorpora& data, const std::string& strategy, std::uint64_t seed,
                 const fs::path& out) {
  av::AvRunConfig run = cfg.av.run;
  run.strategy = av::parse_fixation_strategy(strategy);
  run.seed = seed;
  auto res = av::run_av_training(run, data.train, data.test);
  const std::string name = cell_name(strategy, seed);
  av::write_av_csv(out / "runs" / (name + ".csv"), res.log);
  write_stitched(out / "images" / (name + "_stitched.pgm"), res, data.test, run, cfg.av.stitch_examples, seed);
  if (cfg.av.save_models) {
    const auto dir = out / "models";
    diff::save_checkpoint(dir / (name + "_vae.bin"), res.vae.parameters());
    diff::save_checkpoint(dir / (name + "_action.bin"), res.action.parameters());
    diff::save_checkpoint(dir / (name + "_decision.bin"), res.decision.parameters());
  }
}

void write_manifest(const fs::path& path, const ExperimentConfig& cfg, const RunSummary& summary) {
  Json j;
  j["task"] = task_name(cfg.task);
  Json cells = Json::array();
  for (const auto& c : summary.cells) {
    Json e;
    e["strategy"] = c.strategy;
    e["seed"] = c.seed;
    e["status"] = c.ok ? "ok" : "failed";
    e["file"] = "runs/" + cell_name(c.strategy, c.seed) + ".csv";
    if (!c.ok) e["error"] = c.error;
    cells.push_back(e);
  }
  j["cells"] = cells;
  j["complete"] = summary.all_ok();
  std::ofstream f(path);
  f << j.dump(2) << "\n";
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg, const fs::path& out, std::size_t jobs) {
  cfg.validate();
  fs::create_directories(out / "runs");
  fs::create_directories(out / "images");
  if (cfg.task == Task::active_vision && cfg.av.save_models) fs::create_directories(out / "models");
  {
    std::ofstream f(out / "config.json");
    f << config_to_json(cfg);
  }

  RunSummary summary;
  for (const auto& s : cfg.strategies) {
    for (auto seed : cfg.seeds) summary.cells.push_back({s, seed, false, ""});
  }

  std::optional<AvCorpora> data;
  if (cfg.task == Task::active_vision) {
    data = load_corpora(cfg.av.corpus);
    av::export_corpus_pgm(out / "images" / "corpus.pgm", data->test, std::min<std::size_t>(20, data->test.size()), 10);
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < summary.cells.size(); i = next++) {
      auto& cell = summary.cells[i];
      try {
        if (cfg.task == Task::active_vision) {
          run_av_cell(cfg, *data, cell.strategy, cell.seed, out);
        } else {
          run_cmc_cell(cfg, cell.strategy, cell.seed, out);
        }
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, summary.cells.size());
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < jobs; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  write_manifest(out / "manifest.json", cfg, summary);
  if (std::any_of(summary.cells.begin(), summary.cells.end(), [](const CellStatus& c) { return c.ok; })) {
    write_aggregate_csv(out / "aggregate.csv", aggregate(out));
  }
  return summary;
}

// ---- aggregation -----------------------------------------------------------

StepStat mean_sem(std::span<const double> xs) {
  StepStat st;
  st.n = xs.size();
  if (xs.empty()) return st;
  // shifted by the first value so identical runs give SEM exactly 0
  double shifted = 0.0;
  for (double x : xs) shifted += x - xs[0];
  st.mean = xs[0] + shifted / static_cast<double>(xs.size());
  if (xs.size() >= 2) {
    double ss = 0.0;
    for (double x : xs) ss += (x - st.mean) * (x - st.mean);
    st.sem = std::sqrt(ss / static_cast<double>(xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
  }
  return st;
}

const MetricSeries& AggregateReport::find(std::string_view strategy, std::string_view metric) const {
  for (const auto& s : series) {
    if (s.strategy == strategy && s.metric == metric) return s;
  }
  throw std::invalid_argument("report: no series for strategy '" + std::string(strategy) + "' metric '" +
                              std::string(metric) + "'");
}

AggregateReport aggregate(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw std::runtime_error("report: no manifest.json in " + dir.string());
  Json manifest = Json::parse(mf);

  AggregateReport report;
  std::vector<std::string> strategies;
  // strategy -> metric -> step -> values
  std::map<std::string, std::map<std::string, std::map<std::size_t, std::vector<double>>>> acc;
  for (const auto& cell : manifest.at("cells")) {
    if (cell.at("status") != "ok") continue;
    const std::string strategy = cell.at("strategy");
    if (std::find(strategies.begin(), strategies.end(), strategy) == strategies.end()) strategies.push_back(strategy);
    auto table = io::read_csv(dir / cell.at("file").get<std::string>());
    if (table.header.empty()) throw std::runtime_error("report: empty run file for " + strategy);
    if (report.step_column.empty()) {
      report.step_column = table.header[0];
      for (std::size_t c = 1; c < table.header.size(); ++c) {
        if (table.header[c] != "strategy" && table.header[c] != "seed") report.metrics.push_back(table.header[c]);
      }
    } else if (table.header[0] != report.step_column) {
      throw std::runtime_error("report: run files disagree on the step column");
    }
    for (const auto& row : table.rows) {
      const std::size_t step = std::stoull(row[0]);
      for (const auto& m : report.metrics) {
        const std::string& v = row[table.column(m)];
        if (!v.empty()) acc[strategy][m][step].push_back(std::stod(v));
      }
    }
  }
  for (const auto& s : strategies) {
    for (const auto& m : report.metrics) {
      MetricSeries series{s, m, {}};
      for (const auto& [step, xs] : acc[s][m]) {
        StepStat st = mean_sem(xs);
        st.step = step;
        series.points.push_back(st);
      }
      report.series.push_back(std::move(series));
    }
  }
  return report;
}

void write_aggregate_csv(const fs::path& path, const AggregateReport& report) {
  io::CsvWriter w(path, {"strategy", "metric", report.step_column, "mean", "sem", "n"});
  for (const auto& s : report.series) {
    for (const auto& p : s.points) {
      w.row({s.strategy, s.metric, std::to_string(p.step), io::format_double(p.mean),
             p.sem ? io::format_double(*p.sem) : "", std::to_string(p.n)});
    }
  }
}

Comparison compare(const AggregateReport& report, std::string_view metric, std::optional<std::size_t> step,
                   bool descending) {
  if (std::find(report.metrics.begin(), report.metrics.end(), metric) == report.metrics.end()) {
    throw std::invalid_argument("report: unknown metric '" + std::string(metric) + "'");
  }
  std::vector<const MetricSeries*> rows;
  for (const auto& s : report.series) {
    if (s.metric == metric) rows.push_back(&s);
  }
  if (!step) {
    // last step every strategy logged
    std::optional<std::size_t> common;
    for (const auto* s : rows) {
      if (s->points.empty()) continue;
      const std::size_t last = s->points.back().step;
      common = common ? std::min(*common, last) : last;
    }
    if (!common) throw std::out_of_range("report: no data for metric '" + std::string(metric) + "'");
    step = common;
  }
  Comparison out{std::string(metric), *step, {}};
  for (const auto* s : rows) {
    auto it = std::find_if(s->points.begin(), s->points.end(), [&](const StepStat& p) { return p.step == *step; });
    if (it == s->points.end()) continue;
    out.rows.push_back({s->strategy, it->mean, it->sem, it->n});
  }
  if (out.rows.empty()) {
    throw std::out_of_range("report: step " + std::to_string(*step) + " not logged for metric '" + std::string(metric) + "'");
  }
  std::stable_sort(out.rows.begin(), out.rows.end(), [&](const Ranked& a, const Ranked& b) {
    return descending ? a.mean > b.mean : a.mean < b.mean;
  });
  return out;
}

void write_compare_csv(std::ostream& out, const Comparison& cmp) {
  out << "rank,strategy,metric,step,mean,sem,n\n";
  for (std::size_t i = 0; i < cmp.rows.size(); ++i) {
    const auto& r = cmp.rows[i];
    out << i + 1 << ',' << io::csv_escape(r.strategy) << ',' << io::csv_escape(cmp.metric) << ',' << cmp.step << ','
        << io::format_double(r.mean) << ',' << (r.sem ? io::format_double(*r.sem) : "") << ',' << r.n << '\n';
  }
}

}  // namespace explore::exp
