#pragma once

// Controllable Markov chains: ground-truth transition kernels, the agent's
// visit-count history, and the evaluation metrics.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "explore/num/rng.hpp"

namespace explore::cmc {

/// |S| x |A| rows, each a probability vector over next states.
class TransitionKernel {
 public:
  TransitionKernel() = default;
  /// `probs` is row-major over (s, a, s'); every row is validated.
  TransitionKernel(std::size_t n_states, std::size_t n_actions, std::vector<double> probs);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  std::span<const double> row(std::size_t s, std::size_t a) const;
  const std::vector<double>& probs() const { return probs_; }

  bool operator==(const TransitionKernel&) const = default;

 private:
  std::size_t n_states_ = 0, n_actions_ = 0;
  std::vector<double> probs_;
};

/// counts(s, a, s') of observed transitions.
class HistoryTensor {
 public:
  HistoryTensor() = default;
  HistoryTensor(std::size_t n_states, std::size_t n_actions);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }

  void record(std::size_t s, std::size_t a, std::size_t next);
  std::span<const std::uint32_t> counts(std::size_t s, std::size_t a) const;
  /// counts(s, a, ·) as doubles, the form fed to the perception network.
  std::vector<double> row(std::size_t s, std::size_t a) const;
  std::uint64_t pair_total(std::size_t s, std::size_t a) const;
  std::uint64_t total() const { return total_; }

  bool operator==(const HistoryTensor&) const = default;

 private:
  std::size_t n_states_ = 0, n_actions_ = 0;
  std::vector<std::uint32_t> counts_;
  std::uint64_t total_ = 0;
};

enum Direction : std::size_t { up = 0, down = 1, right = 2, left = 3 };

/// Square grid maze. States are cells indexed row * side + col; the four
/// actions are the Direction values.
struct MazeSpec {
  std::size_t side = 6;
  /// wall_right[r * side + c]: wall between (r, c) and (r, c + 1).
  std::vector<bool> wall_right;
  /// wall_down[r * side + c]: wall between (r, c) and (r + 1, c).
  std::vector<bool> wall_down;
  double bias_concentration = 1.0;
  double base_concentration = 0.25;

  /// Grid with every wall present.
  static MazeSpec closed(std::size_t side);
  /// Grid with no interior walls.
  static MazeSpec open(std::size_t side);

  void validate() const;
  /// Neighbor reached by moving in `dir`, or `s` itself if blocked or off-grid.
  std::size_t neighbor(std::size_t s, Direction dir) const;
  bool accessible(std::size_t s, Direction dir) const { return neighbor(s, dir) != s; }
  bool connected() const;
};

/// Recursive-backtracker spanning tree, then removal of `extra_fraction` of
/// the remaining interior walls.
MazeSpec generate_maze_layout(std::size_t side, num::Rng& rng, double extra_fraction = 0.1);

/// Every row drawn i.i.d. from Dir(1, ..., 1).
TransitionKernel make_dense_world(std::size_t n_states, std::size_t n_actions, num::Rng& rng);

/// Rows supported on the accessible neighbors of s plus s itself; the
/// intended neighbor (if accessible) gets the bias concentration.
TransitionKernel make_maze(const MazeSpec& spec, num::Rng& rng);

std::size_t step(const TransitionKernel& k, std::size_t s, std::size_t a, num::Rng& rng);

/// Σ_{s,a} KL(true(s,a) ‖ learned(s,a)); +inf when learned has a zero where
/// true does not.
double missing_information(const TransitionKernel& truth, const TransitionKernel& learned);

/// Fraction of (s, a) pairs tried at least once.
double coverage(const HistoryTensor& h);

/// Visit counts of each state of a side x side grid, row-major.
std::vector<double> visitation_map(std::span<const std::size_t> trajectory, std::size_t side);

std::string kernel_to_json(const TransitionKernel& k);
TransitionKernel kernel_from_json(const std::string& text);
void save_kernel(const std::filesystem::path& path, const TransitionKernel& k);
TransitionKernel load_kernel(const std::filesystem::path& path);

}  // namespace explore::cmc
