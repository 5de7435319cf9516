#include "explore/cmc/env.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <json.hpp>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "explore/num/distributions.hpp"

namespace explore::cmc {

TransitionKernel::TransitionKernel(std::size_t n_states, std::size_t n_actions, std::vector<double> probs)
    : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)) {
  if (n_states < 2 || n_actions < 1) throw std::invalid_argument("kernel: need >= 2 states and >= 1 action");
  if (probs_.size() != n_states * n_actions * n_states) {
    throw std::invalid_argument("kernel: probability array has wrong size");
  }
  for (std::size_t s = 0; s < n_states; ++s) {
    for (std::size_t a = 0; a < n_actions; ++a) {
      num::Simplex check(std::vector<double>(row(s, a).begin(), row(s, a).end()));
    }
  }
}

std::span<const double> TransitionKernel::row(std::size_t s, std::size_t a) const {
  if (s >= n_states_ || a >= n_actions_) throw std::out_of_range("kernel: state or action out of range");
  return std::span<const double>(probs_).subspan((s * n_actions_ + a) * n_states_, n_states_);
}

HistoryTensor::HistoryTensor(std::size_t n_states, std::size_t n_actions)
    : n_states_(n_states), n_actions_(n_actions), counts_(n_states * n_actions * n_states, 0) {}

void HistoryTensor::record(std::size_t s, std::size_t a, std::size_t next) {
  if (s >= n_states_ || a >= n_actions_ || next >= n_states_) {
    throw std::out_of_range("history: index out of range");
  }
  ++counts_[(s * n_actions_ + a) * n_states_ + next];
  ++total_;
}

std::span<const std::uint32_t> HistoryTensor::counts(std::size_t s, std::size_t a) const {
  if (s >= n_states_ || a >= n_actions_) throw std::out_of_range("history: index out of range");
  return std::span<const std::uint32_t>(counts_).subspan((s * n_actions_ + a) * n_states_, n_states_);
}

std::vector<double> HistoryTensor::row(std::size_t s, std::size_t a) const {
  auto c = counts(s, a);
  return std::vector<double>(c.begin(), c.end());
}

std::uint64_t HistoryTensor::pair_total(std::size_t s, std::size_t a) const {
  auto c = counts(s, a);
  return std::accumulate(c.begin(), c.end(), std::uint64_t{0});
}

MazeSpec MazeSpec::closed(std::size_t side) {
  MazeSpec m;
  m.side = side;
  m.wall_right.assign(side * side, true);
  m.wall_down.assign(side * side, true);
  return m;
}

MazeSpec MazeSpec::open(std::size_t side) {
  MazeSpec m;
  m.side = side;
  m.wall_right.assign(side * side, false);
  m.wall_down.assign(side * side, false);
  return m;
}

void MazeSpec::validate() const {
  if (side < 2) throw std::invalid_argument("maze: side must be >= 2");
  if (wall_right.size() != side * side || wall_down.size() != side * side) {
    throw std::invalid_argument("maze: wall arrays must have side*side entries");
  }
  if (!(bias_concentration > 0.0) || !(base_concentration > 0.0)) {
    throw std::invalid_argument("maze: concentrations must be positive");
  }
  if (!connected()) throw std::invalid_argument("maze: wall layout disconnects the grid");
}

std::size_t MazeSpec::neighbor(std::size_t s, Direction dir) const {
  const std::size_t r = s / side, c = s % side;
  switch (dir) {
    case up:
      return (r > 0 && !wall_down[s - side]) ? s - side : s;
    case down:
      return (r + 1 < side && !wall_down[s]) ? s + side : s;
    case right:
      return (c + 1 < side && !wall_right[s]) ? s + 1 : s;
    case left:
      return (c > 0 && !wall_right[s - 1]) ? s - 1 : s;
  }
  return s;
}

bool MazeSpec::connected() const {
  const std::size_t n = side * side;
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const std::size_t s = stack.back();
    stack.pop_back();
    for (Direction d : {up, down, right, left}) {
      const std::size_t t = neighbor(s, d);
      if (!seen[t]) {
        seen[t] = true;
        ++reached;
        stack.push_back(t);
      }
    }
  }
  return reached == n;
}

MazeSpec generate_maze_layout(std::size_t side, num::Rng& rng, double extra_fraction) {
  if (side < 2) throw std::invalid_argument("maze: side must be >= 2");
  if (!(extra_fraction >= 0.0 && extra_fraction <= 1.0)) {
    throw std::invalid_argument("maze: extra_fraction must be in [0, 1]");
  }
  MazeSpec m = MazeSpec::closed(side);
  const std::size_t n = side * side;
  std::vector<bool> visited(n, false);
  std::vector<std::size_t> stack{rng.index(n)};
  visited[stack.back()] = true;
  while (!stack.empty()) {
    const std::size_t s = stack.back();
    const std::size_t r = s / side, c = s % side;
    std::vector<Direction> options;
    if (r > 0 && !visited[s - side]) options.push_back(up);
    if (r + 1 < side && !visited[s + side]) options.push_back(down);
    if (c + 1 < side && !visited[s + 1]) options.push_back(right);
    if (c > 0 && !visited[s - 1]) options.push_back(left);
    if (options.empty()) {
      stack.pop_back();
      continue;
    }
    const Direction d = options[rng.index(options.size())];
    std::size_t t = s;
    switch (d) {
      case up:
        t = s - side;
        m.wall_down[t] = false;
        break;
      case down:
        t = s + side;
        m.wall_down[s] = false;
        break;
      case right:
        t = s + 1;
        m.wall_right[s] = false;
        break;
      case left:
        t = s - 1;
        m.wall_right[t] = false;
        break;
    }
    visited[t] = true;
    stack.push_back(t);
  }

  // Interior walls still standing, in a fixed order, then a random subset removed.
  std::vector<std::pair<bool, std::size_t>> walls;  // (is_right, cell)
  for (std::size_t s = 0; s < n; ++s) {
    if (s % side + 1 < side && m.wall_right[s]) walls.emplace_back(true, s);
    if (s / side + 1 < side && m.wall_down[s]) walls.emplace_back(false, s);
  }
  const auto remove = static_cast<std::size_t>(std::llround(extra_fraction * static_cast<double>(walls.size())));
  for (std::size_t i = 0; i < remove; ++i) {
    std::swap(walls[i], walls[i + rng.index(walls.size() - i)]);
    auto [is_right, cell] = walls[i];
    (is_right ? m.wall_right : m.wall_down)[cell] = false;
  }
  return m;
}

TransitionKernel make_dense_world(std::size_t n_states, std::size_t n_actions, num::Rng& rng) {
  if (n_states < 2 || n_actions < 1) throw std::invalid_argument("dense world: need >= 2 states and >= 1 action");
  const auto prior = num::DirichletParams::symmetric(n_states, 1.0);
  std::vector<double> probs;
  probs.reserve(n_states * n_actions * n_states);
  for (std::size_t r = 0; r < n_states * n_actions; ++r) {
    auto z = num::dirichlet_sample(prior, rng);
    probs.insert(probs.end(), z.probs().begin(), z.probs().end());
  }
  return TransitionKernel(n_states, n_actions, std::move(probs));
}

TransitionKernel make_maze(const MazeSpec& spec, num::Rng& rng) {
  spec.validate();
  const std::size_t n = spec.side * spec.side;
  std::vector<double> probs(n * 4 * n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (Direction a : {up, down, right, left}) {
      // support: self first, then accessible neighbors in direction order
      std::vector<std::size_t> support{s};
      std::vector<double> conc{spec.base_concentration};
      for (Direction d : {up, down, right, left}) {
        const std::size_t t = spec.neighbor(s, d);
        if (t == s) continue;
        support.push_back(t);
        conc.push_back(d == a ? spec.bias_concentration : spec.base_concentration);
      }
      double* row = &probs[(s * 4 + a) * n];
      if (support.size() == 1) {
        row[s] = 1.0;
        continue;
      }
      auto z = num::dirichlet_sample(num::DirichletParams(conc), rng);
      for (std::size_t i = 0; i < support.size(); ++i) row[support[i]] = z[i];
    }
  }
  return TransitionKernel(n, 4, std::move(probs));
}

std::size_t step(const TransitionKernel& k, std::size_t s, std::size_t a, num::Rng& rng) {
  return rng.categorical(k.row(s, a));
}

double missing_information(const TransitionKernel& truth, const TransitionKernel& learned) {
  if (truth.n_states() != learned.n_states() || truth.n_actions() != learned.n_actions()) {
    throw std::invalid_argument("missing_information: kernel dimensions differ");
  }
  double total = 0.0;
  for (std::size_t s = 0; s < truth.n_states(); ++s) {
    for (std::size_t a = 0; a < truth.n_actions(); ++a) {
      total += num::categorical_kl(truth.row(s, a), learned.row(s, a));
    }
  }
  return total;
}

double coverage(const HistoryTensor& h) {
  std::size_t tried = 0;
  for (std::size_t s = 0; s < h.n_states(); ++s) {
    for (std::size_t a = 0; a < h.n_actions(); ++a) tried += h.pair_total(s, a) > 0 ? 1 : 0;
  }
  return static_cast<double>(tried) / static_cast<double>(h.n_states() * h.n_actions());
}

std::vector<double> visitation_map(std::span<const std::size_t> trajectory, std::size_t side) {
  std::vector<double> map(side * side, 0.0);
  for (std::size_t s : trajectory) {
    if (s >= map.size()) throw std::out_of_range("visitation_map: state outside grid");
    map[s] += 1.0;
  }
  return map;
}

std::string kernel_to_json(const TransitionKernel& k) {
  nlohmann::json j;
  j["n_states"] = k.n_states();
  j["n_actions"] = k.n_actions();
  j["probs"] = k.probs();
  return j.dump();
}

TransitionKernel kernel_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    return TransitionKernel(j.at("n_states").get<std::size_t>(), j.at("n_actions").get<std::size_t>(),
                            j.at("probs").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("kernel json: ") + e.what());
  }
}

void save_kernel(const std::filesystem::path& path, const TransitionKernel& k) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kernel_to_json(k) << '\n';
}

TransitionKernel load_kernel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return kernel_from_json(ss.str());
}

}  // namespace explore::cmc
