#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "shrinktea/tensor.hpp"

namespace shrinktea {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t elements = 0;
  bool passed = true;
  // A failing element whose one-sided differences disagree: the step straddles a kink
  // (ReLU/PReLU at zero), so the central difference is not a valid oracle there.
  bool kink_suspected = false;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Below this magnitude errors are effectively absolute; central-difference rounding noise is ~1e-10.
  double denominator_floor = 1e-6;
  double kink_ratio = 1e-3;
};

// Compares reverse-mode gradients of a scalar loss against central differences,
// element by element, for every listed leaf. loss_fn must rebuild the graph from the
// current leaf values on every call.
inline GradCheckResult check_gradients(std::string name, std::vector<Tensor> leaves,
                                       const std::function<Tensor()>& loss_fn, GradCheckOptions opts = {}) {
  GradCheckResult result{std::move(name)};
  for (auto& leaf : leaves) {
    if (!leaf.is_leaf() || !leaf.requires_grad()) throw ContractError("gradient check needs trainable leaves");
    leaf.zero_grad();
  }
  Tensor loss = loss_fn();
  const double base = loss.item();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves) analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());

  for (std::size_t k = 0; k < leaves.size(); ++k) {
    auto values = leaves[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + opts.step;
      const double plus = loss_fn().item();
      values[i] = saved - opts.step;
      const double minus = loss_fn().item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * opts.step);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), opts.denominator_floor});
      double rel = std::abs(a - numeric) / denom;
      if (std::isnan(rel)) rel = INFINITY;
      if (rel >= opts.tolerance) {
        const double forward = (plus - base) / opts.step;
        const double backward_diff = (base - minus) / opts.step;
        const double spread = std::max({std::abs(forward), std::abs(backward_diff), opts.denominator_floor});
        if (std::abs(forward - backward_diff) > opts.kink_ratio * spread) result.kink_suspected = true;
      }
      result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.elements;
    }
  }
  for (auto& leaf : leaves) leaf.zero_grad();
  result.passed = result.max_rel_error < opts.tolerance;
  return result;
}

}  // namespace shrinktea
