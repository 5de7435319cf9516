#pragma once

// Seeded multi-run experiments for both settings.
//
// An experiment is a list of strategies crossed with a list of seeds; each
// (strategy, seed) cell is an isolated run writing its own files. The output
// directory holds:
//   config.json                     resolved configuration (re-runnable)
//   runs/<strategy>_seed<k>.csv     per-run metric rows
//   images/<strategy>_seed<k>_*.pgm heatmaps (CMC) or stitched composites (AV)
//   models/<strategy>_seed<k>_*.bin trained parameters (AV, when requested)
//   aggregate.csv                   per-strategy mean and SEM by step
//   manifest.json                   cells in config order with their status
// Nothing written depends on wall-clock time or on the order in which
// concurrent cells finish.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "explore/av/agent.hpp"
#include "explore/cmc/agent.hpp"

namespace explore::exp {

enum class Task { dense_world, maze, active_vision };
std::string_view task_name(Task t);
Task parse_task(std::string_view s);

struct CmcTaskConfig {
  std::size_t size = 10;  // dense: states; maze: side length
  std::size_t actions = 4;
  std::size_t steps = 2000;
  double maze_extra_fraction = 0.1;
  /// Strategy and seed are set per cell; log_every comes from the experiment.
  cmc::CmcRunConfig run{};
};

struct CorpusConfig {
  std::string source = "glyph";  // glyph | idx
  // glyph
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 50;
  std::size_t image_size = 28;
  bool translated = false;
  double noise = 0.1;
  std::uint64_t seed = 100;
  // idx
  std::string train_images, train_labels, test_images, test_labels;
};

struct AvTaskConfig {
  av::AvRunConfig run = av::AvRunConfig::preset_config("centered");
  CorpusConfig corpus{};
  /// Test images rendered as stitched composites per run.
  std::size_t stitch_examples = 10;
  /// Also write models/<strategy>_seed<k>_{vae,action,decision}.bin.
  bool save_models = false;
};

struct ExperimentConfig {
  Task task = Task::dense_world;
  std::vector<std::string> strategies;
  std::vector<std::uint64_t> seeds;
  std::size_t log_every = 10;
  CmcTaskConfig cmc{};
  AvTaskConfig av{};

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};
/// Defaults for a task: dense-world (10 states,
/// 4 actions, 2000 steps) and maze (6 x 6, 3000 steps); the centered preset
/// for active-vision.
ExperimentConfig default_config(Task task);

/// Strict JSON reader: unknown keys, wrong types and out-of-range values are
/// errors. Keys that are absent take the value from default_config(task).
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Every field written out; config_to_json(parse_config(config_to_json(c)))
/// reproduces the same text.
std::string config_to_json(const ExperimentConfig& cfg);

struct CellStatus {
  std::string strategy;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
};

struct RunSummary {
  std::vector<CellStatus> cells;  // config order
  bool all_ok() const;
};

std::string cell_name(std::string_view strategy, std::uint64_t seed);

/// Runs every cell (up to `jobs` at a time), then writes manifest.json and
/// aggregate.csv. A failing cell is recorded in the manifest and the others
/// still run.
RunSummary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out, std::size_t jobs = 1);

struct StepStat {
  std::size_t step = 0;
  double mean = 0.0;
  std::optional<double> sem;  // absent with fewer than two runs
  std::size_t n = 0;
};

struct MetricSeries {
  std::string strategy;
  std::string metric;
  std::vector<StepStat> points;
};

struct AggregateReport {
  std::string step_column;           // "step" (CMC) or "epoch" (AV)
  std::vector<std::string> metrics;  // numeric columns in file order
  std::vector<MetricSeries> series;  // strategy-major, metric-minor

  const MetricSeries& find(std::string_view strategy, std::string_view metric) const;
};

/// Aggregates the run CSVs of completed cells listed in `dir`/manifest.json.
/// Rows are matched by step; a step missing from some run averages the
/// runs that have it.
AggregateReport aggregate(const std::filesystem::path& dir);
void write_aggregate_csv(const std::filesystem::path& path, const AggregateReport& report);

struct Ranked {
  std::string strategy;
  double mean = 0.0;
  std::optional<double> sem;
  std::size_t n = 0;
};

struct Comparison {
  std::string metric;
  std::size_t step = 0;      // resolved step
  std::vector<Ranked> rows;
};

/// Strategies sorted by mean of `metric` at `step` (the last step every
/// strategy logged when absent), ascending unless `descending`. Throws std::out_of_range for a step no
/// strategy logged and std::invalid_argument for an unknown metric.
Comparison compare(const AggregateReport& report, std::string_view metric,
                   std::optional<std::size_t> step = std::nullopt, bool descending = false);
void write_compare_csv(std::ostream& out, const Comparison& cmp);

/// Mean and standard error of the mean (sample sd / sqrt(n)); SEM is absent
/// for n < 2.
StepStat mean_sem(std::span<const double> xs);

}  // namespace explore::exp
