#include "explore/diff/dense_net.hpp"

#include <cmath>
#include <stdexcept>

#include "explore/diff/activations.hpp"
#include "explore/simd/kernels.hpp"

namespace explore::diff {
namespace {

void apply(Activation a, std::vector<double>& v) {
  switch (a) {
    case Activation::identity:
      return;
    case Activation::relu:
      for (double& x : v) x = act::relu(x);
      return;
    case Activation::softplus:
      for (double& x : v) x = act::softplus(x);
      return;
    case Activation::tanh:
      for (double& x : v) x = std::tanh(x);
      return;
    case Activation::softplus_eps:
      for (double& x : v) x = act::softplus(x) + DenseNet::kOutputFloor;
      return;
  }
}

Var apply(Activation a, Tape& tape, Var v) {
  switch (a) {
    case Activation::identity:
      return v;
    case Activation::relu:
      return tape.relu(v);
    case Activation::softplus:
      return tape.softplus(v);
    case Activation::tanh:
      return tape.tanh(v);
    case Activation::softplus_eps:
      return tape.add_scalar(tape.softplus(v), DenseNet::kOutputFloor);
  }
  return v;
}

}  // namespace

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::softplus: return "softplus";
    case Activation::tanh: return "tanh";
    case Activation::softplus_eps: return "softplus_eps";
  }
  return "?";
}

Activation parse_activation(std::string_view s) {
  for (Activation a : {Activation::identity, Activation::relu, Activation::softplus, Activation::tanh,
                       Activation::softplus_eps}) {
    if (activation_name(a) == s) return a;
  }
  throw std::invalid_argument("unknown activation: " + std::string(s));
}

DenseNet::DenseNet(std::string name, std::vector<std::size_t> sizes, Activation hidden, Activation output)
    : name_(std::move(name)), sizes_(std::move(sizes)), hidden_(hidden), output_(output) {
  if (sizes_.size() < 2) throw std::invalid_argument("DenseNet: need at least input and output sizes");
  for (std::size_t s : sizes_) {
    if (s == 0) throw std::invalid_argument("DenseNet: layer sizes must be positive");
  }
  params_.reserve(2 * layer_count());
  for (std::size_t l = 0; l < layer_count(); ++l) {
    params_.emplace_back(name_ + ".W" + std::to_string(l), sizes_[l + 1], sizes_[l]);
    params_.emplace_back(name_ + ".b" + std::to_string(l), sizes_[l + 1], 1);
  }
}

void DenseNet::init(num::Rng& rng, Init scheme) {
  for (std::size_t l = 0; l < layer_count(); ++l) {
    if (scheme == Init::fan_in_uniform) {
      const double limit = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
      for (double& w : weight(l).value) w = rng.uniform(-limit, limit);
      for (double& b : bias(l).value) b = rng.uniform(-limit, limit);
      continue;
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(sizes_[l] + sizes_[l + 1]));
    for (double& w : weight(l).value) w = rng.uniform(-limit, limit);
    std::fill(bias(l).value.begin(), bias(l).value.end(), 0.0);
  }
}

std::vector<double> DenseNet::forward(std::span<const double> x) const {
  if (x.size() != input_size()) throw std::invalid_argument(name_ + ": input size mismatch");
  std::vector<double> cur(x.begin(), x.end());
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const Parameter& w = params_[2 * l];
    const Parameter& b = params_[2 * l + 1];
    std::vector<double> next(w.rows());
    simd::gemv(w.value, w.rows(), w.cols(), cur, b.value, next);
    apply(l + 1 == layer_count() ? output_ : hidden_, next);
    cur = std::move(next);
  }
  return cur;
}

Var DenseNet::forward(Tape& tape, Var x) {
  if (x.size() == 0 || x.size() % input_size() != 0) throw std::invalid_argument(name_ + ": input size mismatch");
  Var cur = x;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    cur = tape.affine(weight(l), bias(l), cur);
    cur = apply(l + 1 == layer_count() ? output_ : hidden_, tape, cur);
  }
  return cur;
}

ParameterSet DenseNet::parameters() {
  ParameterSet set;
  for (auto& p : params_) set.add(p);
  return set;
}

}  // namespace explore::diff
