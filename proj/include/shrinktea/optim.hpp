#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "shrinktea/nets.hpp"

namespace shrinktea {

// SGD with heavy-ball momentum and a piecewise-constant learning-rate schedule.
struct OptimizerState {
  double base_lr = 0.1;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;  // coupled L2: g + wd*p enters the momentum buffer
  std::uint64_t step = 0;
  std::vector<std::uint64_t> decay_steps;  // lr is multiplied by decay_factor once each is reached
  double decay_factor = 0.1;
  std::vector<NamedTensor> velocity;

  double lr_at(std::uint64_t step_count) const {
    double rate = base_lr;
    for (auto s : decay_steps) {
      if (step_count >= s) rate *= decay_factor;
    }
    return rate;
  }
};

// Fractions of the total step budget become absolute decay milestones.
inline std::vector<std::uint64_t> decay_milestones(std::uint64_t total_steps, const std::vector<double>& fractions) {
  std::vector<std::uint64_t> steps;
  for (double f : fractions) steps.push_back(static_cast<std::uint64_t>(std::floor(f * static_cast<double>(total_steps))));
  return steps;
}

// v <- mu*v + (g + wd*p); p <- p - lr*v. Every parameter must have been reached by backward().
inline void sgd_step(std::vector<NamedTensor>& params, OptimizerState& state) {
  if (!(state.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (state.velocity.empty()) {
    for (auto& p : params) state.velocity.push_back({p.name, Tensor::zeros(p.tensor.shape())});
  }
  if (state.velocity.size() != params.size()) throw ContractError("optimizer state does not match parameter list");
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto& v = state.velocity[k];
    if (v.name != p.name || v.tensor.shape() != p.tensor.shape()) {
      throw ContractError("velocity buffer '" + v.name + "' does not match parameter '" + p.name + "'");
    }
    if (!p.tensor.requires_grad() || !p.tensor.grad_populated()) {
      throw ContractError("missing gradient for trainable parameter '" + p.name + "'");
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].tensor.mutable_data();
    auto grads = params[k].tensor.grad();
    auto vel = state.velocity[k].tensor.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      vel[i] = state.momentum * vel[i] + grads[i] + state.weight_decay * values[i];
      values[i] -= state.lr * vel[i];
    }
  }
  ++state.step;
  state.lr = state.lr_at(state.step);
}

inline void zero_grads(std::vector<NamedTensor>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace shrinktea
