#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "shrinktea/data.hpp"
#include "shrinktea/losses.hpp"
#include "shrinktea/nets.hpp"

namespace shrinktea {

using Json = nlohmann::ordered_json;

struct ClassifierConfig {
  ClassifierMode mode = ClassifierMode::normalized;
  double scale = ClassifierHead::kDefaultScale;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t teacher_epochs = 30;
  std::size_t student_epochs = 30;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-3;
  std::vector<double> lr_decay_fractions{0.6, 0.85};
  double lr_decay_factor = 0.1;
  std::size_t eval_batch_size = 64;
};

struct DistillConfig {
  DistillLossKind kind = DistillLossKind::angular;
  double lambda_n_angular = 1.0;
  double lambda_n_l2 = 0.001;
  bool l2_final_stage_only = false;

  double lambda_n() const { return kind == DistillLossKind::l2 ? lambda_n_l2 : lambda_n_angular; }
};

// Everything that determines a run, given the same build.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs";
  DataConfig data;
  ArchConfig arch;
  ClassifierConfig classifier;
  TrainConfig train;
  DistillConfig distill;

  void validate() const {
    data.validate();
    arch.validate();
    if (arch.input_size != data.image_size) throw ConfigError("arch.input_size must equal data.image_size");
    if (arch.input_channels != 1) throw ConfigError("arch.input_channels must be 1 for single-channel images");
    if (!(classifier.scale > 0.0)) throw ConfigError("classifier.scale must be positive");
    if (train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (train.eval_batch_size == 0) throw ConfigError("train.eval_batch_size must be positive");
    if (!(train.lr > 0.0)) throw ConfigError("train.lr must be positive");
    if (train.momentum < 0.0 || train.momentum >= 1.0) throw ConfigError("train.momentum must be in [0, 1)");
    if (train.weight_decay < 0.0) throw ConfigError("train.weight_decay must be non-negative");
    if (!(train.lr_decay_factor > 0.0)) throw ConfigError("train.lr_decay_factor must be positive");
    for (double f : train.lr_decay_fractions) {
      if (f < 0.0 || f > 1.0) throw ConfigError("train.lr_decay_fractions entries must lie in [0, 1]");
    }
    if (distill.lambda_n_angular < 0.0) throw ConfigError("distill.lambda_n_angular must be non-negative");
    if (distill.lambda_n_l2 < 0.0) throw ConfigError("distill.lambda_n_l2 must be non-negative");
  }
};

inline std::string to_string(ClassifierMode mode) { return mode == ClassifierMode::plain ? "plain" : "normalized"; }

inline ClassifierMode parse_classifier_mode(const std::string& text) {
  if (text == "plain") return ClassifierMode::plain;
  if (text == "normalized") return ClassifierMode::normalized;
  throw ConfigError("classifier.mode must be plain|normalized, got '" + text + "'");
}

inline Json to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["data"] = {{"num_train_classes", c.data.num_train_classes},
               {"num_test_classes", c.data.num_test_classes},
               {"num_distractors", c.data.num_distractors},
               {"samples_per_class", c.data.samples_per_class},
               {"latent_dim", c.data.latent_dim},
               {"hidden_dim", c.data.hidden_dim},
               {"noise_sigma", c.data.noise_sigma},
               {"image_size", c.data.image_size},
               {"renderer_smoothing", c.data.renderer_smoothing},
               {"verification_pairs_per_side", c.data.verification_pairs_per_side},
               {"verification_folds", c.data.verification_folds}};
  j["arch"] = {{"input_size", c.arch.input_size},         {"input_channels", c.arch.input_channels},
               {"stages", c.arch.stages},                 {"depth", c.arch.depth},
               {"embedding_dim", c.arch.embedding_dim},   {"teacher_widths", c.arch.teacher_widths},
               {"student_widths", c.arch.student_widths}};
  j["classifier"] = {{"mode", to_string(c.classifier.mode)}, {"scale", c.classifier.scale}};
  j["train"] = {{"batch_size", c.train.batch_size},
                {"teacher_epochs", c.train.teacher_epochs},
                {"student_epochs", c.train.student_epochs},
                {"lr", c.train.lr},
                {"momentum", c.train.momentum},
                {"weight_decay", c.train.weight_decay},
                {"lr_decay_fractions", c.train.lr_decay_fractions},
                {"lr_decay_factor", c.train.lr_decay_factor},
                {"eval_batch_size", c.train.eval_batch_size}};
  j["distill"] = {{"kind", to_string(c.distill.kind)},
                  {"lambda_n_angular", c.distill.lambda_n_angular},
                  {"lambda_n_l2", c.distill.lambda_n_l2},
                  {"l2_final_stage_only", c.distill.l2_final_stage_only}};
  return j;
}

namespace detail {

inline bool compatible(const Json& reference, const Json& value) {
  if (reference.is_number_float()) return value.is_number();
  if (reference.is_number_unsigned() || reference.is_number_integer()) {
    return value.is_number_unsigned() || (value.is_number_integer() && value.get<long long>() >= 0);
  }
  if (reference.is_array()) {
    if (!value.is_array()) return false;
    if (reference.empty()) return true;
    for (const auto& v : value) {
      if (!compatible(reference.front(), v)) return false;
    }
    return true;
  }
  return reference.type() == value.type();
}

// Overlays `user` onto `base`, rejecting keys the schema does not know.
inline void merge_strict(Json& base, const Json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("'" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown key '" + key + "'");
    Json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_strict(slot, it.value(), key);
    } else {
      if (!compatible(slot, it.value())) throw ConfigError("key '" + key + "' has the wrong type");
      slot = it.value();
    }
  }
}

template <typename T>
T get_key(const Json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("key '") + section + "." + key + "' has the wrong type");
  }
}

}  // namespace detail

inline RunConfig from_json(const Json& user) {
  Json merged = to_json(RunConfig{});
  detail::merge_strict(merged, user, "");
  RunConfig c;
  c.seed = merged.at("seed").get<std::uint64_t>();
  c.output_dir = merged.at("output_dir").get<std::string>();
  using detail::get_key;
  c.data.num_train_classes = get_key<std::size_t>(merged, "data", "num_train_classes");
  c.data.num_test_classes = get_key<std::size_t>(merged, "data", "num_test_classes");
  c.data.num_distractors = get_key<std::size_t>(merged, "data", "num_distractors");
  c.data.samples_per_class = get_key<std::size_t>(merged, "data", "samples_per_class");
  c.data.latent_dim = get_key<std::size_t>(merged, "data", "latent_dim");
  c.data.hidden_dim = get_key<std::size_t>(merged, "data", "hidden_dim");
  c.data.noise_sigma = get_key<double>(merged, "data", "noise_sigma");
  c.data.image_size = get_key<std::size_t>(merged, "data", "image_size");
  c.data.renderer_smoothing = get_key<double>(merged, "data", "renderer_smoothing");
  c.data.verification_pairs_per_side = get_key<std::size_t>(merged, "data", "verification_pairs_per_side");
  c.data.verification_folds = get_key<std::size_t>(merged, "data", "verification_folds");
  c.arch.input_size = get_key<std::size_t>(merged, "arch", "input_size");
  c.arch.input_channels = get_key<std::size_t>(merged, "arch", "input_channels");
  c.arch.stages = get_key<std::size_t>(merged, "arch", "stages");
  c.arch.depth = get_key<std::size_t>(merged, "arch", "depth");
  c.arch.embedding_dim = get_key<std::size_t>(merged, "arch", "embedding_dim");
  c.arch.teacher_widths = get_key<std::vector<std::size_t>>(merged, "arch", "teacher_widths");
  c.arch.student_widths = get_key<std::vector<std::size_t>>(merged, "arch", "student_widths");
  c.classifier.mode = parse_classifier_mode(get_key<std::string>(merged, "classifier", "mode"));
  c.classifier.scale = get_key<double>(merged, "classifier", "scale");
  c.train.batch_size = get_key<std::size_t>(merged, "train", "batch_size");
  c.train.teacher_epochs = get_key<std::size_t>(merged, "train", "teacher_epochs");
  c.train.student_epochs = get_key<std::size_t>(merged, "train", "student_epochs");
  c.train.lr = get_key<double>(merged, "train", "lr");
  c.train.momentum = get_key<double>(merged, "train", "momentum");
  c.train.weight_decay = get_key<double>(merged, "train", "weight_decay");
  c.train.lr_decay_fractions = get_key<std::vector<double>>(merged, "train", "lr_decay_fractions");
  c.train.lr_decay_factor = get_key<double>(merged, "train", "lr_decay_factor");
  c.train.eval_batch_size = get_key<std::size_t>(merged, "train", "eval_batch_size");
  c.distill.kind = parse_loss_kind(get_key<std::string>(merged, "distill", "kind"));
  c.distill.lambda_n_angular = get_key<double>(merged, "distill", "lambda_n_angular");
  c.distill.lambda_n_l2 = get_key<double>(merged, "distill", "lambda_n_l2");
  c.distill.l2_final_stage_only = get_key<bool>(merged, "distill", "l2_final_stage_only");
  c.validate();
  return c;
}

// Applies "dotted.key=value"; the value is parsed as JSON when possible, else taken as a string.
inline void apply_override(Json& user, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  Json* node = &user;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("malformed override key '" + key + "'");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    if (!node->contains(part)) (*node)[part] = Json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  return j;
}

inline RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  Json user = path.empty() ? Json::object() : read_json_file(path);
  for (const auto& o : overrides) apply_override(user, o);
  return from_json(user);
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Architecture fingerprints

inline std::string canonical_arch(const RunConfig& c, const std::string& role) {
  const auto& widths = role == "teacher" ? c.arch.teacher_widths : c.arch.student_widths;
  std::ostringstream oss;
  oss << "role=" << role << ";input=" << c.arch.input_size << "x" << c.arch.input_size << "x" << c.arch.input_channels
      << ";widths=" << widths_str(widths) << ";depth=" << c.arch.depth << ";embedding=" << c.arch.embedding_dim
      << ";classes=" << c.data.num_train_classes << ";classifier=" << to_string(c.classifier.mode);
  if (role == "student") oss << ";transforms=" << widths_str(c.arch.teacher_widths);
  return oss.str();
}

inline std::uint64_t arch_fingerprint(const RunConfig& c, const std::string& role) {
  return fnv1a64(canonical_arch(c, role));
}

}  // namespace shrinktea
