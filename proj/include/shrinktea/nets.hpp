#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "shrinktea/ops.hpp"
#include "shrinktea/rng.hpp"
#include "shrinktea/tensor.hpp"

namespace shrinktea {

enum class Mode { train, eval };

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

namespace detail {

inline Tensor gaussian_tensor(Shape shape, double stddev, Engine& rng) {
  std::vector<double> values(shape_size(shape));
  for (auto& v : values) v = stddev * standard_normal(rng);
  return Tensor(std::move(shape), std::move(values), true);
}

}  // namespace detail

// Per-channel batch normalization over the last axis.
class BatchNorm {
 public:
  static constexpr double kDefaultMomentum = 0.9;
  static constexpr double kDefaultEps = 1e-5;

  explicit BatchNorm(std::size_t channels, double momentum = kDefaultMomentum, double eps = kDefaultEps)
      : gamma(Tensor::filled({channels}, 1.0, true)),
        beta(Tensor::zeros({channels}, true)),
        running_mean(Tensor::zeros({channels})),
        running_var(Tensor::filled({channels}, 1.0)),
        momentum(momentum),
        eps(eps) {}

  Tensor forward(const Tensor& x, Mode mode) {
    if (mode == Mode::eval) {
      return ops::batch_norm_eval(x, gamma, beta, running_mean.data(), running_var.data(), eps);
    }
    std::vector<double> mu, var;
    Tensor y = ops::batch_norm_train(x, gamma, beta, eps, &mu, &var);
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (std::size_t c = 0; c < mu.size(); ++c) {
      rm[c] = momentum * rm[c] + (1.0 - momentum) * mu[c];
      rv[c] = momentum * rv[c] + (1.0 - momentum) * var[c];
    }
    return y;
  }

  std::size_t channels() const { return gamma.size(); }

  void collect(const std::string& prefix, std::vector<NamedTensor>& params, std::vector<NamedTensor>* buffers) {
    params.push_back({prefix + ".gamma", gamma});
    params.push_back({prefix + ".beta", beta});
    if (buffers) {
      buffers->push_back({prefix + ".running_mean", running_mean});
      buffers->push_back({prefix + ".running_var", running_var});
    }
  }

  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double momentum;
  double eps;
};

// 3x3 conv -> batch norm -> PReLU.
struct ConvUnit {
  ConvUnit(std::size_t c_in, std::size_t c_out, int stride, Engine& rng)
      : weight(detail::gaussian_tensor({3, 3, c_in, c_out}, std::sqrt(2.0 / (9.0 * static_cast<double>(c_in))), rng)),
        bn(c_out),
        slope(Tensor::filled({c_out}, 0.25, true)),
        stride(stride) {}

  Tensor forward(const Tensor& x, Mode mode) {
    return ops::prelu(bn.forward(ops::conv2d_3x3(x, weight, stride), mode), slope);
  }

  Tensor weight;
  BatchNorm bn;
  Tensor slope;
  int stride;
};

// One stage of a staged network: the first unit halves the spatial dims, the remaining
// depth-1 units keep them.
struct Block {
  Block(std::size_t c_in, std::size_t channels_out, std::size_t depth, Engine& rng) : channels_out(channels_out) {
    if (depth == 0 || channels_out == 0) throw ConfigError("block depth and channel count must be positive");
    units.emplace_back(c_in, channels_out, 2, rng);
    for (std::size_t d = 1; d < depth; ++d) units.emplace_back(channels_out, channels_out, 1, rng);
  }

  Tensor forward(const Tensor& x, Mode mode) {
    Tensor h = x;
    for (auto& unit : units) h = unit.forward(h, mode);
    return h;
  }

  std::size_t depth() const { return units.size(); }

  std::vector<ConvUnit> units;
  std::size_t channels_out;
};

struct FeatureShape {
  std::size_t height;
  std::size_t width;
  std::size_t channels;

  std::size_t size() const { return height * width * channels; }
  bool operator==(const FeatureShape&) const = default;
};

struct StageOutputs {
  std::vector<Tensor> features;  // F_1..F_n
  Tensor embedding;              // [B, d]
};

// Composition of n blocks followed by an embedding head (flatten + linear, no bias).
class StagedNetwork {
 public:
  StagedNetwork(FeatureShape input, const std::vector<std::size_t>& widths, std::size_t depth,
                std::size_t embedding_dim, Engine& rng)
      : input_(input), embedding_dim_(embedding_dim) {
    if (widths.empty()) throw ConfigError("a staged network needs at least one stage");
    if (embedding_dim == 0) throw ConfigError("embedding dimension must be positive");
    if (input.height == 0 || input.width == 0 || input.channels == 0) throw ConfigError("input shape must be positive");
    FeatureShape shape = input;
    for (std::size_t w : widths) {
      blocks_.emplace_back(shape.channels, w, depth, rng);
      shape = {(shape.height + 1) / 2, (shape.width + 1) / 2, w};
      stage_shapes_.push_back(shape);
    }
    const std::size_t flat = shape.size();
    head_ = detail::gaussian_tensor({flat, embedding_dim}, std::sqrt(1.0 / static_cast<double>(flat)), rng);
  }

  std::size_t num_stages() const { return blocks_.size(); }
  std::size_t embedding_dim() const { return embedding_dim_; }
  const FeatureShape& input_shape() const { return input_; }
  // 1-based stage index, matching F_i.
  const FeatureShape& stage_shape(std::size_t stage) const { return stage_shapes_.at(stage - 1); }
  const std::vector<Block>& blocks() const { return blocks_; }

  Mode mode() const { return mode_; }
  void set_mode(Mode mode) {
    if (frozen_ && mode == Mode::train) throw ContractError("a frozen network only runs in eval mode");
    mode_ = mode;
  }

  bool frozen() const { return frozen_; }
  void freeze() {
    for (auto& p : parameters()) p.tensor.set_requires_grad(false);
    mode_ = Mode::eval;
    frozen_ = true;
  }

  // Runs blocks first+1..last (1-based stages) on a feature of stage `first` (0 = input).
  Tensor run_stages(const Tensor& x, std::size_t first, std::size_t last) {
    if (first > last || last > num_stages()) throw ContractError("invalid stage range");
    check_feature(x, first);
    Tensor h = x;
    for (std::size_t i = first; i < last; ++i) h = blocks_[i].forward(h, mode_);
    return h;
  }

  Tensor embed(const Tensor& final_feature) {
    check_feature(final_feature, num_stages());
    const std::size_t batch = final_feature.dim(0);
    return ops::matmul(ops::reshape(final_feature, {batch, head_.dim(0)}), head_);
  }

  StageOutputs forward_all_stages(const Tensor& batch) {
    check_feature(batch, 0);
    StageOutputs out;
    Tensor h = batch;
    for (auto& block : blocks_) {
      h = block.forward(h, mode_);
      out.features.push_back(h);
    }
    out.embedding = embed(h);
    return out;
  }

  Tensor forward(const Tensor& batch) { return embed(run_stages(batch, 0, num_stages())); }

  std::vector<NamedTensor> parameters() { return collect(false); }
  // Parameters plus batch-norm running statistics.
  std::vector<NamedTensor> state() { return collect(true); }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto& p : parameters()) n += p.tensor.size();
    return n;
  }

  Tensor& head_weight() { return head_; }
  Block& block(std::size_t stage) { return blocks_.at(stage - 1); }

 private:
  void check_feature(const Tensor& x, std::size_t stage) const {
    const FeatureShape& want = stage == 0 ? input_ : stage_shapes_.at(stage - 1);
    const bool ok = x.rank() == 4 && x.dim(1) == want.height && x.dim(2) == want.width && x.dim(3) == want.channels;
    if (!ok) {
      std::ostringstream oss;
      oss << (stage == 0 ? std::string("input") : "stage " + std::to_string(stage)) << ": expected [B x "
          << want.height << "x" << want.width << "x" << want.channels << "], got " << shape_str(x.shape());
      throw DimensionError(oss.str());
    }
  }

  std::vector<NamedTensor> collect(bool with_buffers) {
    std::vector<NamedTensor> params, buffers;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      for (std::size_t u = 0; u < blocks_[b].units.size(); ++u) {
        auto& unit = blocks_[b].units[u];
        const std::string prefix = "block" + std::to_string(b + 1) + ".unit" + std::to_string(u + 1);
        params.push_back({prefix + ".conv.weight", unit.weight});
        unit.bn.collect(prefix + ".bn", params, &buffers);
        params.push_back({prefix + ".prelu.slope", unit.slope});
      }
    }
    params.push_back({"head.weight", head_});
    if (with_buffers) params.insert(params.end(), buffers.begin(), buffers.end());
    return params;
  }

  FeatureShape input_;
  std::size_t embedding_dim_;
  std::vector<Block> blocks_;
  std::vector<FeatureShape> stage_shapes_;
  Tensor head_;
  Mode mode_ = Mode::train;
  bool frozen_ = false;
};

// Teacher blocks stage+1..n and the teacher head applied to a teacher-shaped stage feature.
// Gradients reach `feature` but never the (frozen) teacher parameters.
inline Tensor apply_teacher_tail(StagedNetwork& teacher, std::size_t stage, const Tensor& feature) {
  if (stage < 1 || stage > teacher.num_stages()) {
    throw IndexError("teacher tail stage " + std::to_string(stage) + " outside [1, " +
                     std::to_string(teacher.num_stages()) + "]");
  }
  return teacher.embed(teacher.run_stages(feature, stage, teacher.num_stages()));
}

// Maps student stage features to teacher channel width: 1x1 conv then batch norm.
class StudentTransform {
 public:
  StudentTransform(std::size_t stage, std::size_t student_channels, std::size_t teacher_channels, Engine& rng)
      : stage_(stage),
        projection(detail::gaussian_tensor({student_channels, teacher_channels},
                                           std::sqrt(1.0 / static_cast<double>(student_channels)), rng)),
        bn(teacher_channels) {}

  std::size_t stage() const { return stage_; }
  std::size_t in_channels() const { return projection.dim(0); }
  std::size_t out_channels() const { return projection.dim(1); }

  Tensor forward(const Tensor& student_feature, Mode mode) {
    if (student_feature.shape().back() != in_channels()) {
      throw DimensionError("transform for stage " + std::to_string(stage_) + ": expected " +
                           std::to_string(in_channels()) + " channels, got " + shape_str(student_feature.shape()));
    }
    return bn.forward(ops::conv2d_1x1(student_feature, projection), mode);
  }

  std::vector<NamedTensor> parameters() { return collect(false); }
  std::vector<NamedTensor> state() { return collect(true); }

  Tensor projection;
  BatchNorm bn;

 private:
  std::vector<NamedTensor> collect(bool with_buffers) {
    std::vector<NamedTensor> params, buffers;
    const std::string prefix = "transform" + std::to_string(stage_);
    params.push_back({prefix + ".projection", projection});
    bn.collect(prefix + ".bn", params, &buffers);
    if (with_buffers) params.insert(params.end(), buffers.begin(), buffers.end());
    return params;
  }

  std::size_t stage_;
};

inline Tensor transform_student_feature(StudentTransform& transform, const Tensor& student_feature, Mode mode) {
  return transform.forward(student_feature, mode);
}

enum class ClassifierMode { plain, normalized };

// Bias-free linear classifier; one weight row per class.
class ClassifierHead {
 public:
  static constexpr double kDefaultScale = 16.0;

  ClassifierHead(std::size_t classes, std::size_t dim, ClassifierMode mode, double scale, Engine& rng)
      : weight(detail::gaussian_tensor({classes, dim}, 1.0, rng)), mode(mode), scale(scale) {}

  ClassifierHead(Tensor weight, ClassifierMode mode, double scale) : weight(std::move(weight)), mode(mode), scale(scale) {}

  std::size_t classes() const { return weight.dim(0); }
  std::size_t dim() const { return weight.dim(1); }

  Tensor classify(const Tensor& embedding) const {
    if (embedding.rank() != 2 || embedding.dim(1) != dim()) {
      throw DimensionError("classifier expects [B x " + std::to_string(dim()) + "], got " +
                           shape_str(embedding.shape()));
    }
    if (mode == ClassifierMode::plain) return ops::matmul(embedding, ops::transpose(weight));
    return ops::scale(ops::matmul(ops::l2_normalize(embedding), ops::transpose(ops::l2_normalize(weight))), scale);
  }

  std::vector<NamedTensor> parameters() { return {{"classifier.weight", weight}}; }

  Tensor weight;
  ClassifierMode mode;
  double scale;
};

// ---------------------------------------------------------------------------
// Reference architectures

struct ArchConfig {
  std::size_t input_size = 16;
  std::size_t input_channels = 1;
  std::size_t stages = 4;
  std::size_t depth = 1;
  std::size_t embedding_dim = 32;
  std::vector<std::size_t> teacher_widths{32, 64, 128, 256};
  std::vector<std::size_t> student_widths{8, 16, 32, 64};

  void validate() const {
    if (stages == 0) throw ConfigError("arch.stages must be at least 1");
    if (teacher_widths.size() != stages) throw ConfigError("arch.teacher_widths must list one width per stage");
    if (student_widths.size() != stages) throw ConfigError("arch.student_widths must list one width per stage");
    for (auto w : teacher_widths) {
      if (w == 0) throw ConfigError("arch.teacher_widths entries must be positive");
    }
    for (auto w : student_widths) {
      if (w == 0) throw ConfigError("arch.student_widths entries must be positive");
    }
    if (depth == 0) throw ConfigError("arch.depth must be at least 1");
    if (embedding_dim == 0) throw ConfigError("arch.embedding_dim must be positive");
    if (input_size == 0 || input_channels == 0) throw ConfigError("arch.input_size must be positive");
  }

  FeatureShape input_shape() const { return {input_size, input_size, input_channels}; }
};

inline std::string widths_str(const std::vector<std::size_t>& widths) {
  std::string s;
  for (std::size_t i = 0; i < widths.size(); ++i) s += (i ? "," : "") + std::to_string(widths[i]);
  return s;
}

inline StagedNetwork build_teacher(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  Engine rng = substream(seed, "init.teacher");
  return StagedNetwork(arch.input_shape(), arch.teacher_widths, arch.depth, arch.embedding_dim, rng);
}

inline StagedNetwork build_student(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  Engine rng = substream(seed, "init.student");
  return StagedNetwork(arch.input_shape(), arch.student_widths, arch.depth, arch.embedding_dim, rng);
}

inline std::vector<StudentTransform> build_transforms(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  Engine rng = substream(seed, "init.transforms");
  std::vector<StudentTransform> transforms;
  for (std::size_t i = 0; i < arch.stages; ++i) {
    transforms.emplace_back(i + 1, arch.student_widths[i], arch.teacher_widths[i], rng);
  }
  return transforms;
}

struct ReferencePair {
  StagedNetwork teacher;
  StagedNetwork student;
  std::vector<StudentTransform> transforms;
};

inline ReferencePair build_reference_pair(const ArchConfig& arch, std::uint64_t seed) {
  return {build_teacher(arch, seed), build_student(arch, seed), build_transforms(arch, seed)};
}

}  // namespace shrinktea
