// explore: run seeded experiments and rank strategies from their outputs.
//
//   explore cmc --env maze --size 6 --steps 3000 --strategy bas,random --seeds 0,1,2 --out runs/maze
//   explore av --config av.json --out runs/av
//   explore run --config cfg.json --out DIR     (any task)
//   explore report --in runs/maze --metric missing_info [--step 3000] [--descending]
//
// Exit codes: 0 success, 1 some cell failed, 2 bad arguments or config.

#include <CLI11.hpp>

#include <iostream>

#include "explore/exp/experiment.hpp"

namespace ex = explore::exp;

namespace {

int run_and_report(const ex::ExperimentConfig& cfg, const std::string& out, std::size_t jobs) {
  const auto summary = ex::run_experiment(cfg, out, jobs);
  std::size_t ok = 0;
  for (const auto& c : summary.cells) {
    if (c.ok) {
      ++ok;
    } else {
      std::cerr << "failed: " << ex::cell_name(c.strategy, c.seed) << ": " << c.error << "\n";
    }
  }
  std::cerr << ok << "/" << summary.cells.size() << " runs completed in " << out << "\n";
  return summary.all_ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perception-action exploration experiments"};
  app.require_subcommand(1);

  // cmc
  auto* cmc = app.add_subcommand("cmc", "controllable Markov chain experiment from flags");
  std::string env = "dense";
  std::size_t size = 0, steps = 0, actions = 0, hidden = 0;
  std::vector<std::string> strategies;
  std::vector<std::uint64_t> seeds;
  double beta = -1.0;
  std::size_t log_every = 10, jobs = 1;
  std::string out;
  cmc->add_option("--env", env, "dense or maze")->check(CLI::IsMember({"dense", "maze"}));
  cmc->add_option("--size", size, "states (dense) or side length (maze)");
  cmc->add_option("--steps", steps, "environment steps per run");
  cmc->add_option("--actions", actions, "actions per state (dense only)");
  cmc->add_option("--hidden", hidden, "perception hidden width");
  cmc->add_option("--strategy", strategies, "bas, random, boltzmann (comma list)")->delimiter(',');
  cmc->add_option("--seeds", seeds, "seed list, e.g. 0,1,2")->delimiter(',');
  cmc->add_option("--beta", beta, "KL weight of the perception ELBO");
  cmc->add_option("--log-every", log_every, "metric logging interval in steps");
  cmc->add_option("--jobs", jobs, "runs executed concurrently");
  cmc->add_option("--out", out, "output directory")->required();

  // av / run
  std::string config_path;
  auto* av = app.add_subcommand("av", "active-vision experiment from a JSON config");
  av->add_option("--config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
  av->add_option("--out", out, "output directory")->required();
  av->add_option("--jobs", jobs, "runs executed concurrently");
  auto* run = app.add_subcommand("run", "any experiment from a JSON config");
  run->add_option("--config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "output directory")->required();
  run->add_option("--jobs", jobs, "runs executed concurrently");

  // report
  auto* report = app.add_subcommand("report", "rank strategies by a metric at one step");
  std::string in, metric;
  std::optional<std::size_t> step;
  report->add_option("--in", in, "experiment output directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("--metric", metric, "metric column, e.g. missing_info or accuracy")->required();
  report->add_option("--step", step, "step (or epoch) to compare; default the last common one");
  bool descending = false;
  report->add_flag("--descending", descending, "rank the largest mean first (e.g. accuracy)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmc->parsed()) {
      auto cfg = ex::default_config(env == "maze" ? ex::Task::maze : ex::Task::dense_world);
      if (size) cfg.cmc.size = size;
      if (steps) cfg.cmc.steps = steps;
      if (actions) cfg.cmc.actions = actions;
      if (hidden) cfg.cmc.run.perception.hidden = hidden;
      if (!strategies.empty()) cfg.strategies = strategies;
      if (!seeds.empty()) cfg.seeds = seeds;
      if (beta >= 0.0) cfg.cmc.run.perception.beta = beta;
      cfg.log_every = log_every;
      cfg.validate();
      return run_and_report(cfg, out, jobs);
    }
    if (av->parsed() || run->parsed()) {
      const auto cfg = ex::load_config(config_path);
      if (av->parsed() && cfg.task != ex::Task::active_vision) {
        throw std::invalid_argument("config: 'explore av' needs task active-vision; use 'explore run'");
      }
      return run_and_report(cfg, out, jobs);
    }
    const auto cmp = ex::compare(ex::aggregate(in), metric, step, descending);
    ex::write_compare_csv(std::cout, cmp);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "explore: " << e.what() << "\n";
    return 2;
  }
}
