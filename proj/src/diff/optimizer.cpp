#include "explore/diff/optimizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace explore::diff {

std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw std::invalid_argument("unknown optimizer: " + std::string(s));
}

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(cfg) {
  if (!(cfg_.lr > 0.0)) throw std::invalid_argument("optimizer: learning rate must be > 0");
}

void Optimizer::step(const ParameterSet& params) {
  if (m_.empty()) {
    for (auto* p : params.items()) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("optimizer: parameter count changed");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (m_[k].size() != params[k].size() || params[k].grad.size() != params[k].size()) {
      throw std::invalid_argument("optimizer: shape mismatch for " + params[k].name());
    }
  }
  ++t_;
  if (cfg_.kind == OptimizerKind::sgd) {
    for (auto* p : params.items()) {
      for (std::size_t i = 0; i < p->size(); ++i) p->value[i] -= cfg_.lr * p->grad[i];
    }
    return;
  }
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = params[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      p.value[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
    }
  }
}

}  // namespace explore::diff
