#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "explore/diff/tape.hpp"

namespace explore::diff {

enum class OptimizerKind { sgd, adam };

std::string_view optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Descent on the gradients currently stored in each Parameter::grad.
/// Ascent objectives are handled by negating the loss before backward().
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {});

  /// Applies one update. Moment buffers are sized on the first call; a later
  /// call with differently shaped parameters throws std::invalid_argument.
  void step(const ParameterSet& params);

  std::uint64_t steps() const { return t_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace explore::diff
