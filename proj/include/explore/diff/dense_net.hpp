#pragma once

#include <span>
#include <string>
#include <vector>

#include "explore/diff/tape.hpp"
#include "explore/num/rng.hpp"

namespace explore::diff {

enum class Activation { identity, relu, softplus, tanh, softplus_eps };

/// glorot: weights U(±sqrt(6/(fan_in+fan_out))), zero biases.
/// fan_in_uniform: weights and biases U(±1/sqrt(fan_in)).
enum class Init { glorot, fan_in_uniform };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view s);

/// Fully connected feedforward network. Layer i maps sizes[i] -> sizes[i+1];
/// hidden layers use `hidden`, the last layer uses `output`. softplus_eps adds
/// kOutputFloor after the softplus so outputs are strictly positive.
class DenseNet {
 public:
  static constexpr double kOutputFloor = 1e-4;

  DenseNet() = default;
  DenseNet(std::string name, std::vector<std::size_t> sizes, Activation hidden, Activation output);

  void init(num::Rng& rng, Init scheme = Init::glorot);

  std::vector<double> forward(std::span<const double> x) const;
  /// On a tape, x may hold several input rows (size a multiple of input_size()).
  Var forward(Tape& tape, Var x);

  ParameterSet parameters();
  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  std::size_t layer_count() const { return sizes_.size() - 1; }
  const std::string& name() const { return name_; }
  Activation hidden_activation() const { return hidden_; }
  Activation output_activation() const { return output_; }

  Parameter& weight(std::size_t layer) { return params_[2 * layer]; }
  Parameter& bias(std::size_t layer) { return params_[2 * layer + 1]; }

 private:
  std::string name_;
  std::vector<std::size_t> sizes_;
  Activation hidden_ = Activation::relu;
  Activation output_ = Activation::identity;
  std::vector<Parameter> params_;  // W0, b0, W1, b1, ...
};

}  // namespace explore::diff
