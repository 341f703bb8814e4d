#pragma once

#include <functional>
#include <string>
#include <vector>

#include "shrinktea/gradcheck.hpp"
#include "shrinktea/losses.hpp"
#include "shrinktea/nets.hpp"
#include "shrinktea/ops.hpp"
#include "shrinktea/rng.hpp"

namespace shrinktea {

// One row of the finite-difference table: the worst case over all accepted random instances.
struct GradSuiteEntry {
  std::string module;
  GradCheckResult result;
  std::size_t instances = 0;
  std::size_t redrawn = 0;  // instances discarded because the step straddled a kink
};

namespace detail {

inline Tensor suite_tensor(Shape shape, Engine& rng, bool grad = true) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = standard_normal(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

// Contracts an arbitrary output with fixed random weights so every element matters.
inline Tensor project(const Tensor& out, const Tensor& weights) { return ops::sum(ops::mul(out, weights)); }

using InstanceFn = std::function<GradCheckResult(Engine&)>;

inline GradSuiteEntry run_case(const std::string& module, const std::string& name, std::uint64_t seed,
                               std::size_t instances, const InstanceFn& fn) {
  GradSuiteEntry entry{module, {name}, 0};
  Engine rng = substream(seed, "gradcheck." + module + "." + name);
  const std::size_t max_draws = 4 * instances;
  for (std::size_t draw = 0; entry.instances < instances && draw < max_draws; ++draw) {
    GradCheckResult r = fn(rng);
    if (!r.passed && r.kink_suspected && draw + 1 < max_draws) {
      ++entry.redrawn;
      continue;
    }
    ++entry.instances;
    entry.result.max_rel_error = std::max(entry.result.max_rel_error, r.max_rel_error);
    entry.result.elements += r.elements;
    entry.result.passed = entry.result.passed && r.passed;
  }
  return entry;
}

// Unary/binary op on random inputs, projected to a scalar.
inline InstanceFn op_case(std::vector<Shape> shapes, std::function<Tensor(const std::vector<Tensor>&)> op) {
  return [shapes = std::move(shapes), op = std::move(op)](Engine& rng) {
    std::vector<Tensor> in;
    for (const auto& s : shapes) in.push_back(suite_tensor(s, rng));
    Tensor w = suite_tensor(op(in).shape(), rng, false);
    return check_gradients("", in, [&] { return project(op(in), w); });
  };
}

inline std::vector<GradSuiteEntry> tensor_suite(std::uint64_t seed, std::size_t n) {
  using V = const std::vector<Tensor>&;
  std::vector<GradSuiteEntry> out;
  auto add = [&](const std::string& name, InstanceFn fn) { out.push_back(run_case("tensor", name, seed, n, fn)); };
  add("add", op_case({{3, 4}, {3, 4}}, [](V t) { return ops::add(t[0], t[1]); }));
  add("sub", op_case({{3, 4}, {3, 4}}, [](V t) { return ops::sub(t[0], t[1]); }));
  add("mul", op_case({{3, 4}, {3, 4}}, [](V t) { return ops::mul(t[0], t[1]); }));
  add("scale", op_case({{5}}, [](V t) { return ops::scale(t[0], -1.7); }));
  add("add_scalar", op_case({{5}}, [](V t) { return ops::add_scalar(t[0], 0.3); }));
  add("square", op_case({{2, 3}}, [](V t) { return ops::square(t[0]); }));
  add("relu", op_case({{4, 3}}, [](V t) { return ops::relu(t[0]); }));
  add("prelu", op_case({{4, 3}, {3}}, [](V t) { return ops::prelu(t[0], t[1]); }));
  add("sum", op_case({{2, 3}}, [](V t) { return ops::scale(ops::sum(t[0]), 1.0); }));
  add("mean", op_case({{2, 3}}, [](V t) { return ops::mean(t[0]); }));
  add("row_sum", op_case({{3, 4}}, [](V t) { return ops::row_sum(t[0]); }));
  add("dot", op_case({{6}, {6}}, [](V t) { return ops::dot(t[0], t[1]); }));
  add("reshape", op_case({{2, 6}}, [](V t) { return ops::reshape(t[0], {3, 4}); }));
  add("transpose", op_case({{2, 5}}, [](V t) { return ops::transpose(t[0]); }));
  add("matmul", op_case({{3, 4}, {4, 2}}, [](V t) { return ops::matmul(t[0], t[1]); }));
  add("conv2d_1x1", op_case({{2, 3, 3, 3}, {3, 4}, {4}}, [](V t) { return ops::conv2d_1x1(t[0], t[1], t[2]); }));
  add("conv2d_3x3_stride1", op_case({{2, 4, 4, 2}, {3, 3, 2, 3}}, [](V t) { return ops::conv2d_3x3(t[0], t[1], 1); }));
  add("conv2d_3x3_stride2", op_case({{2, 5, 5, 2}, {3, 3, 2, 3}}, [](V t) { return ops::conv2d_3x3(t[0], t[1], 2); }));
  add("l2_normalize", op_case({{3, 5}}, [](V t) { return ops::l2_normalize(t[0]); }));
  add("cosine", op_case({{3, 5}, {3, 5}}, [](V t) { return ops::cosine(t[0], t[1]); }));
  add("batch_norm_train", op_case({{4, 2, 2, 3}, {3}, {3}}, [](V t) {
        return ops::square(ops::batch_norm_train(t[0], t[1], t[2], 1e-5));
      }));
  add("batch_norm_eval", op_case({{4, 3}, {3}, {3}}, [](V t) {
        const std::vector<double> mean{0.2, -0.1, 0.4}, var{0.5, 1.5, 2.0};
        return ops::batch_norm_eval(t[0], t[1], t[2], mean, var, 1e-5);
      }));
  add("softmax_cross_entropy", [](Engine& rng) {
    Tensor logits = suite_tensor({3, 7}, rng);
    std::vector<int> labels{0, 3, 6};
    return check_gradients("", {logits}, [&] { return ops::softmax_cross_entropy(logits, labels); });
  });
  return out;
}

inline ArchConfig suite_arch() {
  ArchConfig arch;
  arch.input_size = 8;
  arch.stages = 3;
  arch.embedding_dim = 4;
  arch.teacher_widths = {3, 4, 5};
  arch.student_widths = {2, 2, 3};
  return arch;
}

inline std::vector<GradSuiteEntry> nets_suite(std::uint64_t seed, std::size_t n) {
  std::vector<GradSuiteEntry> out;
  auto add = [&](const std::string& name, InstanceFn fn) { out.push_back(run_case("nets", name, seed, n, fn)); };
  add("batch_norm_layer", [](Engine& rng) {
    BatchNorm bn(3);
    Tensor x = suite_tensor({4, 2, 3}, rng);
    Tensor w = suite_tensor({4, 2, 3}, rng, false);
    return check_gradients("", {x, bn.gamma, bn.beta}, [&] { return project(bn.forward(x, Mode::train), w); });
  });
  add("staged_network", [](Engine& rng) {
    StagedNetwork net({8, 8, 1}, {2, 3}, 1, 4, rng);
    Tensor x = suite_tensor({2, 8, 8, 1}, rng);
    Tensor w = suite_tensor({2, 4}, rng, false);
    std::vector<Tensor> leaves{x};
    for (auto& p : net.parameters()) leaves.push_back(p.tensor);
    return check_gradients("", leaves, [&] { return project(net.forward(x), w); });
  });
  add("teacher_tail", [](Engine& rng) {
    StagedNetwork net({8, 8, 1}, {2, 3, 4}, 1, 4, rng);
    net.freeze();
    Tensor f = suite_tensor({2, 4, 4, 2}, rng);
    Tensor w = suite_tensor({2, 4}, rng, false);
    return check_gradients("", {f}, [&] { return project(apply_teacher_tail(net, 1, f), w); });
  });
  add("student_transform", [](Engine& rng) {
    StudentTransform t(1, 2, 3, rng);
    Tensor f = suite_tensor({3, 2, 2, 2}, rng);
    Tensor w = suite_tensor({3, 2, 2, 3}, rng, false);
    return check_gradients("", {f, t.projection, t.bn.gamma, t.bn.beta},
                           [&] { return project(t.forward(f, Mode::train), w); });
  });
  for (auto mode : {ClassifierMode::plain, ClassifierMode::normalized}) {
    add(mode == ClassifierMode::plain ? "classifier_plain" : "classifier_normalized", [mode](Engine& rng) {
      ClassifierHead head(5, 4, mode, ClassifierHead::kDefaultScale, rng);
      Tensor f = suite_tensor({3, 4}, rng);
      std::vector<int> labels{4, 0, 2};
      return check_gradients("", {f, head.weight},
                             [&] { return ops::softmax_cross_entropy(head.classify(f), labels); });
    });
  }
  return out;
}

inline std::vector<GradSuiteEntry> losses_suite(std::uint64_t seed, std::size_t n) {
  std::vector<GradSuiteEntry> out;
  auto add = [&](const std::string& name, InstanceFn fn) { out.push_back(run_case("losses", name, seed, n, fn)); };
  add("angular_distill_loss", [](Engine& rng) {
    Tensor t = suite_tensor({4, 5}, rng, false);
    Tensor s = suite_tensor({4, 5}, rng);
    return check_gradients("", {s}, [&] { return angular_distill_loss(t, s); });
  });
  add("l2_distill_loss", [](Engine& rng) {
    Tensor t = suite_tensor({3, 2, 2, 3}, rng, false);
    Tensor s = suite_tensor({3, 2, 2, 3}, rng);
    return check_gradients("", {s}, [&] { return l2_distill_loss(t, s); });
  });
  add("intermediate_angular_loss", [](Engine& rng) {
    StagedNetwork teacher({8, 8, 1}, {3, 4, 5}, 1, 4, rng);
    teacher.freeze();
    StudentTransform t(1, 2, 3, rng);
    Tensor ft = teacher.run_stages(suite_tensor({3, 8, 8, 1}, rng, false), 0, 1);
    Tensor fs = suite_tensor({3, 4, 4, 2}, rng);
    return check_gradients("", {fs, t.projection, t.bn.gamma, t.bn.beta},
                           [&] { return intermediate_angular_loss(teacher, 1, ft, fs, t); });
  });
  for (auto kind : {DistillLossKind::none, DistillLossKind::l2, DistillLossKind::angular}) {
    add("composite_loss_" + to_string(kind), [kind](Engine& rng) {
      const ArchConfig arch = suite_arch();
      const std::uint64_t s = rng();
      ReferencePair pair = build_reference_pair(arch, s);
      pair.teacher.freeze();
      ClassifierHead head(3, arch.embedding_dim, ClassifierMode::normalized, ClassifierHead::kDefaultScale, rng);
      Tensor batch = suite_tensor({3, 8, 8, 1}, rng, false);
      std::vector<int> labels{2, 0, 1};
      DistillSetup setup{kind, build_lambda_schedule(kind == DistillLossKind::l2 ? 0.001 : 1.0, arch.stages)};
      std::vector<Tensor> leaves;
      for (auto& p : pair.student.parameters()) leaves.push_back(p.tensor);
      for (std::size_t i = 0; i + 1 < pair.transforms.size(); ++i) {
        for (auto& p : pair.transforms[i].parameters()) leaves.push_back(p.tensor);
      }
      leaves.push_back(head.weight);
      return check_gradients("", leaves, [&] {
        return composite_loss(batch, labels, pair.teacher, pair.student, pair.transforms, head, setup).total;
      });
    });
  }
  return out;
}

}  // namespace detail

inline const std::vector<std::string>& grad_suite_modules() {
  static const std::vector<std::string> modules{"tensor", "nets", "losses"};
  return modules;
}

// Finite-difference checks for module "tensor", "nets", "losses" or "all".
inline std::vector<GradSuiteEntry> run_grad_suite(const std::string& module, std::uint64_t seed = 1,
                                                  std::size_t instances = 5) {
  if (instances == 0) throw ConfigError("grad-check needs at least one instance per operation");
  std::vector<GradSuiteEntry> out;
  auto append = [&](std::vector<GradSuiteEntry> part) { out.insert(out.end(), part.begin(), part.end()); };
  const bool all = module == "all";
  if (!all && module != "tensor" && module != "nets" && module != "losses") {
    throw ConfigError("unknown grad-check module '" + module + "' (expected all|tensor|nets|losses)");
  }
  if (all || module == "tensor") append(detail::tensor_suite(seed, instances));
  if (all || module == "nets") append(detail::nets_suite(seed, instances));
  if (all || module == "losses") append(detail::losses_suite(seed, instances));
  return out;
}

}  // namespace shrinktea
