#pragma once

#include <span>
#include <string>
#include <vector>

#include "shrinktea/nets.hpp"
#include "shrinktea/ops.hpp"

namespace shrinktea {

enum class DistillLossKind { none, l2, angular };

inline std::string to_string(DistillLossKind kind) {
  switch (kind) {
    case DistillLossKind::none: return "none";
    case DistillLossKind::l2: return "l2";
    case DistillLossKind::angular: return "angular";
  }
  return "?";
}

inline DistillLossKind parse_loss_kind(const std::string& text) {
  if (text == "none") return DistillLossKind::none;
  if (text == "l2") return DistillLossKind::l2;
  if (text == "angular") return DistillLossKind::angular;
  throw ConfigError("unknown distillation kind '" + text + "' (expected none|l2|angular)");
}

// Per-stage distillation weights lambda_1..lambda_n.
struct LambdaSchedule {
  std::vector<double> weights;

  std::size_t stages() const { return weights.size(); }
  double final_weight() const { return weights.back(); }
};

// Halves the weight for every step back from the final stage.
inline LambdaSchedule build_lambda_schedule(double lambda_n, std::size_t n) {
  if (lambda_n < 0.0) throw ConfigError("lambda_n must be non-negative");
  if (n == 0) throw ConfigError("a lambda schedule needs at least one stage");
  LambdaSchedule schedule{std::vector<double>(n)};
  schedule.weights[n - 1] = lambda_n;
  for (std::size_t i = n - 1; i-- > 0;) schedule.weights[i] = schedule.weights[i + 1] / 2.0;
  return schedule;
}

// Mean over rows of (1 - cos(teacher, student))^2. The teacher side is a constant.
inline Tensor angular_distill_loss(const Tensor& teacher_emb, const Tensor& student_emb) {
  if (teacher_emb.shape() != student_emb.shape()) {
    throw DimensionError("angular loss: teacher " + shape_str(teacher_emb.shape()) + " vs student " +
                         shape_str(student_emb.shape()));
  }
  Tensor cos = ops::cosine(teacher_emb.detach(), student_emb);
  return ops::mean(ops::square(ops::add_scalar(ops::scale(cos, -1.0), 1.0)));
}

// Mean over the batch (leading axis) of the squared Euclidean distance. Teacher side constant.
inline Tensor l2_distill_loss(const Tensor& teacher_feat, const Tensor& student_feat) {
  if (teacher_feat.shape() != student_feat.shape()) {
    throw DimensionError("l2 loss: teacher " + shape_str(teacher_feat.shape()) + " vs student " +
                         shape_str(student_feat.shape()));
  }
  const double batch = teacher_feat.rank() > 1 ? static_cast<double>(teacher_feat.dim(0)) : 1.0;
  return ops::scale(ops::sum(ops::square(ops::sub(student_feat, teacher_feat.detach()))), 1.0 / batch);
}

namespace detail {

inline Tensor angular_through_tail(StagedNetwork& teacher, std::size_t stage, const Tensor& teacher_embedding,
                                   const Tensor& student_feature, StudentTransform& transform, Mode transform_mode) {
  if (transform.stage() != stage) {
    throw ConfigError("transform for stage " + std::to_string(transform.stage()) + " used at stage " +
                      std::to_string(stage));
  }
  Tensor projected = transform.forward(student_feature, transform_mode);
  Tensor student_embedding = apply_teacher_tail(teacher, stage, projected);
  return angular_distill_loss(teacher_embedding, student_embedding);
}

}  // namespace detail

// Both stage features are pushed through the teacher's remaining blocks and head; the
// student's after the channel-matching transform. Gradients reach the student feature and
// the transform only.
inline Tensor intermediate_angular_loss(StagedNetwork& teacher, std::size_t stage, const Tensor& teacher_feature,
                                        const Tensor& student_feature, StudentTransform& transform,
                                        Mode transform_mode = Mode::train) {
  Tensor teacher_embedding = apply_teacher_tail(teacher, stage, teacher_feature.detach()).detach();
  return detail::angular_through_tail(teacher, stage, teacher_embedding, student_feature, transform, transform_mode);
}

struct DistillSetup {
  DistillLossKind kind = DistillLossKind::angular;
  LambdaSchedule schedule;
  bool final_stage_only = false;  // drop intermediate terms (l2 baseline variant)
};

struct LossParts {
  Tensor total;
  Tensor classification;
  Tensor logits;  // student class scores
  // Unweighted per-stage distillation terms; undefined where not computed.
  std::vector<Tensor> distill;
  std::vector<double> lambdas;

  double weighted(std::size_t i) const { return distill[i].defined() ? lambdas[i] * distill[i].item() : 0.0; }
};

// Classification loss on the student embedding plus the lambda-weighted distillation terms.
inline LossParts composite_loss(const Tensor& batch, std::span<const int> labels, StagedNetwork& teacher,
                                StagedNetwork& student, std::vector<StudentTransform>& transforms,
                                const ClassifierHead& classifier, const DistillSetup& setup,
                                Mode transform_mode = Mode::train) {
  const std::size_t n = student.num_stages();
  LossParts parts;
  parts.distill.resize(n);

  if (setup.kind == DistillLossKind::none) {
    parts.logits = classifier.classify(student.forward(batch));
    parts.classification = ops::softmax_cross_entropy(parts.logits, labels);
    parts.total = parts.classification;
    parts.lambdas.assign(n, 0.0);
    return parts;
  }

  if (setup.schedule.stages() != n) {
    throw ConfigError("lambda schedule has " + std::to_string(setup.schedule.stages()) + " entries for " +
                      std::to_string(n) + " stages");
  }
  if (!teacher.frozen()) throw ContractError("distillation requires a frozen teacher");
  if (teacher.num_stages() != n) throw ConfigError("teacher and student stage counts differ");
  if (transforms.size() < n - 1) throw ConfigError("missing student transforms");
  parts.lambdas = setup.schedule.weights;

  StageOutputs t = teacher.forward_all_stages(batch);
  const Tensor teacher_embedding = t.embedding.detach();
  StageOutputs s = student.forward_all_stages(batch);
  parts.logits = classifier.classify(s.embedding);
  parts.classification = ops::softmax_cross_entropy(parts.logits, labels);

  Tensor total = parts.classification;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t stage = i + 1;
    const bool final_stage = stage == n;
    if (!final_stage && setup.final_stage_only) continue;
    Tensor term;
    if (setup.kind == DistillLossKind::angular) {
      term = final_stage ? angular_distill_loss(teacher_embedding, s.embedding)
                         : detail::angular_through_tail(teacher, stage, teacher_embedding, s.features[i],
                                                        transforms[i], transform_mode);
    } else {
      term = final_stage ? l2_distill_loss(teacher_embedding, s.embedding)
                         : l2_distill_loss(t.features[i], transforms[i].forward(s.features[i], transform_mode));
    }
    parts.distill[i] = term;
    total = ops::add(total, ops::scale(term, parts.lambdas[i]));
  }
  parts.total = total;
  return parts;
}

}  // namespace shrinktea
