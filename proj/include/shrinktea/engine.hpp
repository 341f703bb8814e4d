#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <atomic>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "shrinktea/checkpoint.hpp"
#include "shrinktea/config.hpp"
#include "shrinktea/data.hpp"
#include "shrinktea/losses.hpp"
#include "shrinktea/nets.hpp"
#include "shrinktea/optim.hpp"

namespace shrinktea {

// Append-only JSON-lines sink; a default-constructed log discards records.
class MetricsLog {
 public:
  MetricsLog() = default;
  MetricsLog(const std::filesystem::path& path, bool append) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw IoError("cannot open metrics log " + path.string());
  }

  void write(const Json& record) {
    if (!out_.is_open()) return;
    out_ << record.dump() << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

struct EvalMetrics {
  double verification_accuracy = 0.0;
  double verification_threshold = 0.0;
  double rank1 = 0.0;
  double train_accuracy = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double mean_total = 0.0;
  double mean_classification = 0.0;
  std::vector<std::optional<double>> mean_distill;
  double train_accuracy = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochMetrics> epochs;
  EvalMetrics eval;
};

// Evaluation data shared by every model trained under one seed.
struct Benchmark {
  SyntheticIdentityDataset dataset;
  VerificationProtocol verification;
  IdentificationProtocol identification;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> eval_indices;  // every sample referenced by a protocol

  static Benchmark build(const RunConfig& cfg) {
    Benchmark b;
    b.dataset = generate_dataset(cfg.data, cfg.seed);
    b.verification = build_verification_protocol(b.dataset, cfg.data.verification_pairs_per_side,
                                                  cfg.data.verification_folds, cfg.seed);
    b.identification = build_identification_protocol(b.dataset, cfg.seed);
    b.train_indices = b.dataset.indices_with_role(ClassRole::train);
    for (std::size_t i = 0; i < b.dataset.size(); ++i) {
      if (b.dataset.role_of_class(b.dataset.labels[i]) != ClassRole::train) b.eval_indices.push_back(i);
    }
    return b;
  }
};

inline EvalMetrics evaluate_network(StagedNetwork& net, const Benchmark& bench, std::size_t batch_size) {
  EmbeddingTable table = extract_embeddings(net, bench.dataset, bench.eval_indices, batch_size);
  EvalMetrics m;
  auto v = verification_accuracy(table, bench.verification);
  m.verification_accuracy = v.accuracy;
  m.verification_threshold = v.threshold;
  m.rank1 = rank1_identification(table, bench.identification);
  return m;
}

// Closed-set accuracy of net+classifier on the training identities, eval mode.
inline double closed_set_accuracy(StagedNetwork& net, const ClassifierHead& classifier, const Benchmark& bench,
                                  std::size_t batch_size) {
  const Mode previous = net.mode();
  net.set_mode(Mode::eval);
  std::size_t correct = 0;
  const auto& idx = bench.train_indices;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    std::span<const std::size_t> chunk(idx.data() + start, std::min(batch_size, idx.size() - start));
    Tensor logits = classifier.classify(net.forward(bench.dataset.batch(chunk)));
    const std::size_t classes = logits.dim(1);
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      auto row = logits.data().subspan(r * classes, classes);
      const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      correct += best == bench.dataset.labels[chunk[r]] ? 1 : 0;
    }
  }
  net.set_mode(previous);
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

namespace detail {

inline Json eval_record(const EvalMetrics& m, std::size_t epoch, const std::string& model) {
  return {{"record", "eval"},
          {"model", model},
          {"epoch", epoch},
          {"verification_accuracy", m.verification_accuracy},
          {"verification_threshold", m.verification_threshold},
          {"rank1", m.rank1},
          {"train_accuracy", m.train_accuracy}};
}

inline Json optional_array(const std::vector<std::optional<double>>& values) {
  Json a = Json::array();
  for (const auto& v : values) a.push_back(v ? Json(*v) : Json(nullptr));
  return a;
}

struct LoopSpec {
  std::string model;  // "teacher" or "student_<kind>"
  std::size_t epochs = 0;
  std::uint64_t fingerprint = 0;
  std::string shuffle_stream;
  std::size_t stop_after = 0;  // last epoch to run; 0 runs the full schedule
};

// Shared SGD loop. step_fn computes the loss parts for one batch.
template <typename StepFn>
TrainResult run_loop(const RunConfig& cfg, const Benchmark& bench, const LoopSpec& spec,
                     std::vector<NamedTensor> trainable, const std::vector<NamedTensor>& saved_state,
                     const std::filesystem::path& metrics_path, const Checkpoint* resume, StepFn&& step_fn) {
  const std::size_t n_train = bench.train_indices.size();
  const std::size_t batches_per_epoch = (n_train + cfg.train.batch_size - 1) / cfg.train.batch_size;

  OptimizerState opt;
  opt.base_lr = cfg.train.lr;
  opt.lr = cfg.train.lr;
  opt.momentum = cfg.train.momentum;
  opt.weight_decay = cfg.train.weight_decay;
  opt.decay_factor = cfg.train.lr_decay_factor;
  opt.decay_steps = decay_milestones(spec.epochs * batches_per_epoch, cfg.train.lr_decay_fractions);
  Engine shuffle = substream(cfg.seed, spec.shuffle_stream);
  std::size_t start_epoch = 0;

  if (resume) {
    if (resume->fingerprint != spec.fingerprint) throw ConfigError("resume checkpoint does not match the architecture");
    auto state = saved_state;
    restore(state, *resume);
    opt = resume->optimizer;
    opt.velocity = snapshot(opt.velocity);
    shuffle = engine_from_state(resume->rng_state);
    start_epoch = resume->epoch;
  }

  MetricsLog log = metrics_path.empty() ? MetricsLog() : MetricsLog(metrics_path, resume != nullptr);
  TrainResult result;
  std::vector<std::size_t> order;

  const std::size_t end_epoch = spec.stop_after ? std::min(spec.stop_after, spec.epochs) : spec.epochs;
  for (std::size_t epoch = start_epoch; epoch < end_epoch; ++epoch) {
    // Each epoch permutes the canonical order, so a resumed run sees the same batches.
    order = bench.train_indices;
    std::shuffle(order.begin(), order.end(), shuffle);
    EpochMetrics em;
    em.epoch = epoch + 1;
    std::vector<double> distill_sum;
    std::vector<std::size_t> distill_count;
    std::size_t correct = 0;

    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t start = b * cfg.train.batch_size;
      std::span<const std::size_t> idx(order.data() + start, std::min(cfg.train.batch_size, n_train - start));
      std::vector<int> labels;
      for (auto i : idx) labels.push_back(bench.dataset.labels[i]);
      Tensor batch = bench.dataset.batch(idx);

      zero_grads(trainable);
      auto [parts, logits] = step_fn(batch, std::span<const int>(labels));
      if (!parts.total.all_finite()) {
        throw NumericError("non-finite loss in " + spec.model + " at epoch " + std::to_string(epoch + 1) +
                           ", batch " + std::to_string(b + 1));
      }
      const double lr_used = opt.lr;
      backward(parts.total);
      sgd_step(trainable, opt);

      const std::size_t classes = logits.dim(1);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        auto row = logits.data().subspan(r * classes, classes);
        correct += static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) == labels[r] ? 1 : 0;
      }

      Json distill = Json::array(), weighted = Json::array();
      distill_sum.resize(parts.distill.size(), 0.0);
      distill_count.resize(parts.distill.size(), 0);
      for (std::size_t i = 0; i < parts.distill.size(); ++i) {
        if (parts.distill[i].defined()) {
          const double v = parts.distill[i].item();
          if (!std::isfinite(v)) throw NumericError("non-finite distillation term at stage " + std::to_string(i + 1));
          distill.push_back(v);
          weighted.push_back(parts.weighted(i));
          distill_sum[i] += v;
          ++distill_count[i];
        } else {
          distill.push_back(nullptr);
          weighted.push_back(nullptr);
        }
      }
      em.mean_total += parts.total.item();
      em.mean_classification += parts.classification.item();
      log.write({{"record", "step"},
                 {"model", spec.model},
                 {"epoch", epoch + 1},
                 {"step", opt.step},
                 {"lr", lr_used},
                 {"total", parts.total.item()},
                 {"classification", parts.classification.item()},
                 {"distill", distill},
                 {"weighted", weighted}});
    }
    em.mean_total /= static_cast<double>(batches_per_epoch);
    em.mean_classification /= static_cast<double>(batches_per_epoch);
    for (std::size_t i = 0; i < distill_sum.size(); ++i) {
      em.mean_distill.push_back(distill_count[i] ? std::optional<double>(distill_sum[i] / static_cast<double>(distill_count[i]))
                                                 : std::nullopt);
    }
    em.train_accuracy = static_cast<double>(correct) / static_cast<double>(n_train);
    log.write({{"record", "epoch"},
               {"model", spec.model},
               {"epoch", em.epoch},
               {"mean_total", em.mean_total},
               {"mean_classification", em.mean_classification},
               {"mean_distill", optional_array(em.mean_distill)},
               {"train_accuracy", em.train_accuracy}});
    result.epochs.push_back(std::move(em));
  }

  result.checkpoint.fingerprint = spec.fingerprint;
  result.checkpoint.tensors = snapshot(saved_state);
  result.checkpoint.optimizer = opt;
  result.checkpoint.optimizer.velocity = snapshot(opt.velocity);
  result.checkpoint.rng_state = engine_state(shuffle);
  result.checkpoint.epoch = static_cast<std::uint32_t>(end_epoch);
  return result;
}

inline std::vector<NamedTensor> concat(std::vector<NamedTensor> a, const std::vector<NamedTensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

struct StepOutput {
  LossParts parts;
  Tensor logits;
};

}  // namespace detail

inline ClassifierHead make_classifier(const RunConfig& cfg, const std::string& role) {
  Engine rng = substream(cfg.seed, "init.classifier." + role);
  return ClassifierHead(cfg.data.num_train_classes, cfg.arch.embedding_dim, cfg.classifier.mode, cfg.classifier.scale,
                        rng);
}

// Teacher network and classifier restored from a checkpoint, frozen.
struct LoadedTeacher {
  StagedNetwork net;
  ClassifierHead classifier;
};

inline LoadedTeacher load_teacher(const RunConfig& cfg, const Checkpoint& ckpt) {
  if (ckpt.fingerprint != arch_fingerprint(cfg, "teacher")) {
    throw ConfigError("teacher checkpoint fingerprint does not match the configured teacher architecture");
  }
  LoadedTeacher t{build_teacher(cfg.arch, cfg.seed), make_classifier(cfg, "teacher")};
  auto state = detail::concat(t.net.state(), t.classifier.parameters());
  restore(state, ckpt);
  t.net.freeze();
  t.classifier.weight.set_requires_grad(false);
  return t;
}

inline std::filesystem::path teacher_checkpoint_path(const std::filesystem::path& dir) { return dir / "teacher.ckpt"; }
inline std::filesystem::path student_checkpoint_path(const std::filesystem::path& dir, DistillLossKind kind) {
  return dir / ("student_" + to_string(kind) + ".ckpt");
}

// Trains the teacher with the classification loss only. Writes teacher.ckpt and
// teacher.metrics.jsonl under out_dir unless it is empty. A nonzero stop_after ends the
// run early with a checkpoint that can be resumed.
inline TrainResult train_teacher(const RunConfig& cfg, const std::filesystem::path& out_dir = {},
                                 const Checkpoint* resume = nullptr, std::size_t stop_after = 0) {
  cfg.validate();
  const Benchmark bench = Benchmark::build(cfg);
  StagedNetwork teacher = build_teacher(cfg.arch, cfg.seed);
  ClassifierHead classifier = make_classifier(cfg, "teacher");
  auto trainable = detail::concat(teacher.parameters(), classifier.parameters());
  auto state = detail::concat(teacher.state(), classifier.parameters());
  teacher.set_mode(Mode::train);

  detail::LoopSpec spec{"teacher", cfg.train.teacher_epochs, arch_fingerprint(cfg, "teacher"), "shuffle.teacher",
                        stop_after};
  const auto metrics = out_dir.empty() ? std::filesystem::path{} : out_dir / "teacher.metrics.jsonl";
  TrainResult result = detail::run_loop(
      cfg, bench, spec, trainable, state, metrics, resume, [&](const Tensor& batch, std::span<const int> labels) {
        Tensor logits = classifier.classify(teacher.forward(batch));
        LossParts parts;
        parts.classification = ops::softmax_cross_entropy(logits, labels);
        parts.total = parts.classification;
        return detail::StepOutput{parts, logits};
      });

  result.eval = evaluate_network(teacher, bench, cfg.train.eval_batch_size);
  result.eval.train_accuracy = closed_set_accuracy(teacher, classifier, bench, cfg.train.eval_batch_size);
  if (!out_dir.empty()) {
    MetricsLog(out_dir / "teacher.metrics.jsonl", true).write(detail::eval_record(result.eval, result.checkpoint.epoch, "teacher"));
    save_checkpoint(teacher_checkpoint_path(out_dir), result.checkpoint);
  }
  return result;
}

// Trains a student under the composite objective for cfg.distill.kind. The teacher
// checkpoint is only read; with kind none it may be null.
inline TrainResult train_student(const RunConfig& cfg, const Checkpoint* teacher_ckpt,
                                 const std::filesystem::path& out_dir = {}, const Checkpoint* resume = nullptr,
                                 std::size_t stop_after = 0) {
  cfg.validate();
  const DistillLossKind kind = cfg.distill.kind;
  std::optional<LoadedTeacher> teacher;
  if (kind != DistillLossKind::none) {
    if (!teacher_ckpt) throw ConfigError("distillation kind " + to_string(kind) + " needs a teacher checkpoint");
    teacher.emplace(load_teacher(cfg, *teacher_ckpt));
  }
  const Benchmark bench = Benchmark::build(cfg);
  StagedNetwork student = build_student(cfg.arch, cfg.seed);
  std::vector<StudentTransform> transforms = build_transforms(cfg.arch, cfg.seed);
  ClassifierHead classifier = make_classifier(cfg, "student");
  student.set_mode(Mode::train);

  DistillSetup setup;
  setup.kind = kind;
  setup.schedule = build_lambda_schedule(cfg.distill.lambda_n(), cfg.arch.stages);
  setup.final_stage_only = kind == DistillLossKind::l2 && cfg.distill.l2_final_stage_only;

  auto trainable = detail::concat(student.parameters(), classifier.parameters());
  auto state = detail::concat(student.state(), classifier.parameters());
  for (auto& t : transforms) {
    const bool used = kind != DistillLossKind::none && !setup.final_stage_only && t.stage() < cfg.arch.stages;
    if (used) trainable = detail::concat(trainable, t.parameters());
    state = detail::concat(state, t.state());
  }

  const std::string model = "student_" + to_string(kind);
  detail::LoopSpec spec{model, cfg.train.student_epochs, arch_fingerprint(cfg, "student"), "shuffle.student",
                        stop_after};
  const auto metrics = out_dir.empty() ? std::filesystem::path{} : out_dir / (model + ".metrics.jsonl");
  TrainResult result = detail::run_loop(
      cfg, bench, spec, trainable, state, metrics, resume, [&](const Tensor& batch, std::span<const int> labels) {
        // kind none never reads the teacher argument.
        StagedNetwork& t = teacher ? teacher->net : student;
        LossParts parts = composite_loss(batch, labels, t, student, transforms, classifier, setup, Mode::train);
        Tensor logits = parts.logits;
        return detail::StepOutput{std::move(parts), std::move(logits)};
      });

  result.eval = evaluate_network(student, bench, cfg.train.eval_batch_size);
  result.eval.train_accuracy = closed_set_accuracy(student, classifier, bench, cfg.train.eval_batch_size);
  if (!out_dir.empty()) {
    MetricsLog(out_dir / (model + ".metrics.jsonl"), true).write(detail::eval_record(result.eval, result.checkpoint.epoch, model));
    save_checkpoint(student_checkpoint_path(out_dir, kind), result.checkpoint);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Experiment matrix

struct MatrixCell {
  std::uint64_t seed = 0;
  std::string model;
  std::optional<EvalMetrics> eval;
  std::string error;  // empty when the cell succeeded
};

struct MetricSummary {
  std::optional<double> mean;                  // over successful seeds
  std::vector<std::optional<double>> per_seed;  // aligned with ExperimentReport::seeds
};

struct ReportRow {
  std::string model;
  std::string label;
  MetricSummary verification;
  MetricSummary rank1;
};

struct ExperimentReport {
  std::vector<std::uint64_t> seeds;
  std::vector<MatrixCell> cells;
  std::vector<ReportRow> rows;

  const ReportRow& row(const std::string& model) const {
    for (const auto& r : rows) {
      if (r.model == model) return r;
    }
    throw IndexError("no report row '" + model + "'");
  }
  bool complete() const {
    return std::all_of(cells.begin(), cells.end(), [](const MatrixCell& c) { return c.error.empty(); });
  }
  // Mean verification of angular >= self-studied, and teacher >= every student.
  bool ordering_holds() const {
    auto v = [&](const char* m) { return row(m).verification.mean; };
    const auto t = v("teacher"), none = v("student_none"), l2 = v("student_l2"), ang = v("student_angular");
    if (!t || !none || !l2 || !ang) return false;
    return *ang >= *none && *t >= *none && *t >= *l2 && *t >= *ang;
  }
};

inline const std::vector<std::pair<std::string, std::string>>& matrix_models() {
  static const std::vector<std::pair<std::string, std::string>> models{{"teacher", "Teacher"},
                                                                       {"student_none", "Self-studied"},
                                                                       {"student_l2", "Student (l2 loss)"},
                                                                       {"student_angular", "Student (angular loss)"}};
  return models;
}

namespace detail {

inline std::vector<MatrixCell> run_seed(const RunConfig& base, std::uint64_t seed, const std::filesystem::path& out) {
  RunConfig cfg = base;
  cfg.seed = seed;
  const auto dir = out / ("seed_" + std::to_string(seed));
  std::vector<MatrixCell> cells;
  std::optional<Checkpoint> teacher;
  MatrixCell tc{seed, "teacher", std::nullopt, {}};
  try {
    std::filesystem::create_directories(dir);
    write_json_file(dir / "effective_config.json", to_json(cfg));
    TrainResult r = train_teacher(cfg, dir);
    tc.eval = r.eval;
    teacher = std::move(r.checkpoint);
  } catch (const std::exception& e) {
    tc.error = e.what();
  }
  cells.push_back(std::move(tc));
  for (auto kind : {DistillLossKind::none, DistillLossKind::l2, DistillLossKind::angular}) {
    MatrixCell sc{seed, "student_" + to_string(kind), std::nullopt, {}};
    try {
      if (kind != DistillLossKind::none && !teacher) throw CheckFailure("teacher unavailable for this seed");
      RunConfig scfg = cfg;
      scfg.distill.kind = kind;
      sc.eval = train_student(scfg, teacher ? &*teacher : nullptr, dir).eval;
    } catch (const std::exception& e) {
      sc.error = e.what();
    }
    cells.push_back(std::move(sc));
  }
  return cells;
}

inline MetricSummary summarize(const std::vector<MatrixCell>& cells, const std::vector<std::uint64_t>& seeds,
                               const std::string& model, double EvalMetrics::*field) {
  MetricSummary s;
  double sum = 0.0;
  std::size_t n = 0;
  for (auto seed : seeds) {
    std::optional<double> v;
    for (const auto& c : cells) {
      if (c.seed == seed && c.model == model && c.eval) v = (*c.eval).*field;
    }
    if (v) {
      sum += *v;
      ++n;
    }
    s.per_seed.push_back(v);
  }
  if (n) s.mean = sum / static_cast<double>(n);
  return s;
}

}  // namespace detail

// Teacher plus the three student variants for every seed. Seeds are independent and run on
// up to `jobs` threads; each training run stays single-threaded, so results do not depend
// on `jobs`. A failing cell is recorded and the rest of the matrix continues.
inline ExperimentReport run_experiment_matrix(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                                              const std::filesystem::path& out, std::size_t jobs = 1) {
  if (seeds.empty()) throw ConfigError("the experiment matrix needs at least one seed");
  base.validate();
  std::vector<std::vector<MatrixCell>> per_seed(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) per_seed[i] = detail::run_seed(base, seeds[i], out);
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, seeds.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ExperimentReport report;
  report.seeds = seeds;
  for (auto& cells : per_seed) report.cells.insert(report.cells.end(), cells.begin(), cells.end());
  for (const auto& [model, label] : matrix_models()) {
    report.rows.push_back({model, label,
                           detail::summarize(report.cells, seeds, model, &EvalMetrics::verification_accuracy),
                           detail::summarize(report.cells, seeds, model, &EvalMetrics::rank1)});
  }
  return report;
}

inline Json to_json(const ExperimentReport& report) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  auto metric = [&](const MetricSummary& m) {
    Json per = Json::array();
    for (const auto& v : m.per_seed) per.push_back(opt(v));
    return Json{{"mean", opt(m.mean)}, {"per_seed", per}};
  };
  Json rows = Json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"model", r.model},
                    {"label", r.label},
                    {"verification_accuracy", metric(r.verification)},
                    {"rank1", metric(r.rank1)}});
  }
  Json failures = Json::array();
  for (const auto& c : report.cells) {
    if (!c.error.empty()) failures.push_back({{"seed", c.seed}, {"model", c.model}, {"error", c.error}});
  }
  return {{"seeds", report.seeds},
          {"rows", rows},
          {"failures", failures},
          {"ordering_holds", report.ordering_holds()}};
}

inline std::string format_report(const ExperimentReport& report) {
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("   --  ");
    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(2);
    o.width(7);
    o << 100.0 * *v;
    return o.str();
  };
  std::ostringstream out;
  out << "seeds:";
  for (auto s : report.seeds) out << ' ' << s;
  out << "\n\n";
  out << "model                    verif%   rank1%   | per-seed verif%\n";
  for (const auto& r : report.rows) {
    std::string label = r.label;
    label.resize(24, ' ');
    out << label << ' ' << pct(r.verification.mean) << "  " << pct(r.rank1.mean) << "  |";
    for (const auto& v : r.verification.per_seed) out << ' ' << pct(v);
    out << "\n";
  }
  for (const auto& c : report.cells) {
    if (!c.error.empty()) out << "FAILED seed " << c.seed << ' ' << c.model << ": " << c.error << "\n";
  }
  out << "\nordering (angular >= self-studied, teacher >= students): "
      << (report.ordering_holds() ? "holds" : "does not hold") << "\n";
  return out.str();
}

inline void write_report(const std::filesystem::path& out, const ExperimentReport& report) {
  write_json_file(out / "report.json", to_json(report));
  std::ofstream txt(out / "report.txt", std::ios::trunc);
  if (!txt) throw IoError("cannot write " + (out / "report.txt").string());
  txt << format_report(report);
}

}  // namespace shrinktea
