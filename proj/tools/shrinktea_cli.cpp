// shrinktea: dataset generation, teacher/student training, evaluation and the
// experiment matrix behind one binary. Exit codes: 0 ok, 1 internal, 2 config,
// 3 I/O, 4 numeric, 5 check failure.

#include <CLI11.hpp>

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "shrinktea/engine.hpp"
#include "shrinktea/gradsuite.hpp"

using namespace shrinktea;
namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("-c,--config", opts.config, "JSON config file; missing keys take their defaults");
  cmd->add_option("-s,--set", opts.overrides, "Override one config key, e.g. --set train.lr=0.05")
      ->type_name("KEY=VALUE")
      ->allow_extra_args(false);
  cmd->add_option("-o,--out", opts.out, "Output directory (overrides output_dir)");
}

RunConfig resolve(const CommonOptions& opts) {
  RunConfig cfg = load_config(opts.config, opts.overrides);
  if (!opts.out.empty()) cfg.output_dir = opts.out;
  return cfg;
}

fs::path prepare_out(const RunConfig& cfg) {
  const fs::path out = cfg.output_dir;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw IoError("cannot create output directory " + out.string());
  return out;
}

void echo_config(const fs::path& path, const RunConfig& cfg) { write_json_file(path, to_json(cfg)); }

std::string fixed(double v, int digits = 4) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

void print_eval(const std::string& model, const EvalMetrics& m) {
  std::cout << model << ": verification_accuracy=" << fixed(m.verification_accuracy)
            << " rank1=" << fixed(m.rank1) << " train_accuracy=" << fixed(m.train_accuracy) << "\n";
}

Json eval_json(const EvalMetrics& m) {
  return {{"verification_accuracy", m.verification_accuracy},
          {"verification_threshold", m.verification_threshold},
          {"rank1", m.rank1},
          {"train_accuracy", m.train_accuracy}};
}

std::optional<Checkpoint> load_resume(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_checkpoint(path);
}

int cmd_gen_data(const CommonOptions& opts) {
  const RunConfig cfg = resolve(opts);
  cfg.validate();
  const fs::path out = prepare_out(cfg);
  const Benchmark bench = Benchmark::build(cfg);
  write_file_bytes(out / "dataset.bin", serialize_dataset(bench.dataset));
  write_verification_protocol(out / "verification_pairs.txt", bench.verification);
  write_identification_protocol(out / "identification.txt", bench.identification);
  echo_config(out / "dataset.config.json", cfg);

  const auto& ds = bench.dataset;
  std::size_t positives = 0;
  for (const auto& p : bench.verification.pairs) positives += p.same ? 1 : 0;
  std::cout << "classes: train=" << ds.config.num_train_classes << " test=" << ds.config.num_test_classes
            << " distractor=" << ds.config.num_distractors << "\n"
            << "samples: " << ds.size() << " (" << bench.train_indices.size() << " train)\n"
            << "verification pairs: " << bench.verification.pairs.size() << " (" << positives << " positive, "
            << bench.verification.folds << " folds)\n"
            << "identification: gallery=" << bench.identification.gallery.size()
            << " probes=" << bench.identification.probes.size() << "\n"
            << "wrote " << out.string() << "\n";
  return 0;
}

int cmd_train_teacher(const CommonOptions& opts, const std::string& resume_path, std::size_t stop_after) {
  const RunConfig cfg = resolve(opts);
  cfg.validate();
  const fs::path out = prepare_out(cfg);
  echo_config(out / "teacher.config.json", cfg);
  const auto resume = load_resume(resume_path);
  TrainResult r = train_teacher(cfg, out, resume ? &*resume : nullptr, stop_after);
  print_eval("teacher", r.eval);
  std::cout << "epoch " << r.checkpoint.epoch << "/" << cfg.train.teacher_epochs << ", checkpoint "
            << teacher_checkpoint_path(out).string() << "\n";
  return 0;
}

int cmd_distill(const CommonOptions& opts, const std::string& teacher_path, const std::string& kind,
                const std::string& resume_path, std::size_t stop_after) {
  RunConfig cfg = resolve(opts);
  if (!kind.empty()) cfg.distill.kind = parse_loss_kind(kind);
  cfg.validate();
  const fs::path out = prepare_out(cfg);
  std::optional<Checkpoint> teacher;
  if (cfg.distill.kind != DistillLossKind::none) {
    const fs::path path = teacher_path.empty() ? teacher_checkpoint_path(out) : fs::path(teacher_path);
    teacher = load_checkpoint(path);
  }
  const std::string model = "student_" + to_string(cfg.distill.kind);
  echo_config(out / (model + ".config.json"), cfg);
  const auto resume = load_resume(resume_path);
  TrainResult r = train_student(cfg, teacher ? &*teacher : nullptr, out, resume ? &*resume : nullptr, stop_after);
  print_eval(model, r.eval);
  std::cout << "epoch " << r.checkpoint.epoch << "/" << cfg.train.student_epochs << ", checkpoint "
            << student_checkpoint_path(out, cfg.distill.kind).string() << "\n";
  return 0;
}

int cmd_evaluate(const CommonOptions& opts, const std::string& checkpoint_path) {
  const RunConfig cfg = resolve(opts);
  cfg.validate();
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  std::string role;
  if (ckpt.fingerprint == arch_fingerprint(cfg, "teacher")) {
    role = "teacher";
  } else if (ckpt.fingerprint == arch_fingerprint(cfg, "student")) {
    role = "student";
  } else {
    throw ConfigError("checkpoint " + checkpoint_path + " matches neither the configured teacher nor student");
  }
  StagedNetwork net = role == "teacher" ? build_teacher(cfg.arch, cfg.seed) : build_student(cfg.arch, cfg.seed);
  ClassifierHead classifier = make_classifier(cfg, role);
  auto state = detail::concat(net.state(), classifier.parameters());
  restore(state, ckpt);
  const Benchmark bench = Benchmark::build(cfg);
  EvalMetrics m = evaluate_network(net, bench, cfg.train.eval_batch_size);
  m.train_accuracy = closed_set_accuracy(net, classifier, bench, cfg.train.eval_batch_size);

  const fs::path out = prepare_out(cfg);
  const std::string stem = fs::path(checkpoint_path).stem().string();
  Json record = eval_json(m);
  record["checkpoint"] = checkpoint_path;
  record["role"] = role;
  record["epoch"] = ckpt.epoch;
  write_json_file(out / (stem + ".evaluation.json"), record);
  echo_config(out / (stem + ".evaluation.config.json"), cfg);
  print_eval(role, m);
  return 0;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--seeds expects comma-separated integers, got '" + text + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("--seeds needs at least one seed");
  return seeds;
}

int cmd_compare(const CommonOptions& opts, const std::string& seeds_text, std::size_t jobs) {
  const RunConfig cfg = resolve(opts);
  cfg.validate();
  const auto seeds = parse_seeds(seeds_text);
  const fs::path out = prepare_out(cfg);
  echo_config(out / "report.config.json", cfg);
  const ExperimentReport report = run_experiment_matrix(cfg, seeds, out, jobs);
  write_report(out, report);
  std::cout << format_report(report);
  if (!report.complete()) throw CheckFailure("some matrix cells failed; see report.json");
  return 0;
}

int cmd_grad_check(const std::string& module, std::uint64_t seed, std::size_t instances) {
  const auto entries = run_grad_suite(module, seed, instances);
  std::cout << std::left << std::setw(8) << "module" << std::setw(28) << "operation" << std::right << std::setw(10)
            << "instances" << std::setw(14) << "max rel err" << "  status\n";
  std::size_t failed = 0;
  for (const auto& e : entries) {
    std::ostringstream err;
    err << std::scientific << std::setprecision(2) << e.result.max_rel_error;
    std::cout << std::left << std::setw(8) << e.module << std::setw(28) << e.result.name << std::right
              << std::setw(10) << e.instances << std::setw(14) << err.str() << "  "
              << (e.result.passed ? "pass" : "FAIL");
    if (e.redrawn) std::cout << " (" << e.redrawn << " redrawn at kinks)";
    std::cout << "\n";
    failed += e.result.passed ? 0 : 1;
  }
  std::cout << entries.size() - failed << "/" << entries.size() << " passed\n";
  if (failed) throw CheckFailure(std::to_string(failed) + " gradient check(s) failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Teacher/student distillation toolkit with angular and l2 feature losses"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  CommonOptions common;
  std::string resume, teacher, kind, checkpoint, seeds = "1,2,3", module = "all";
  std::size_t stop_after = 0, jobs = 1, instances = 5;
  std::uint64_t grad_seed = 1;

  auto* gen = app.add_subcommand("gen-data", "Write the dataset cache and both evaluation protocols");
  add_common(gen, common);

  auto* tt = app.add_subcommand("train-teacher", "Train the teacher network");
  add_common(tt, common);
  tt->add_option("--resume", resume, "Continue from a partial teacher checkpoint");
  tt->add_option("--stop-after", stop_after, "Stop after this many epochs (0 runs the full schedule)");

  auto* dist = app.add_subcommand("distill", "Train a student under a distillation loss");
  add_common(dist, common);
  dist->add_option("--teacher", teacher, "Teacher checkpoint (default <out>/teacher.ckpt)");
  dist->add_option("--kind", kind, "Distillation loss")->check(CLI::IsMember({"none", "l2", "angular"}));
  dist->add_option("--resume", resume, "Continue from a partial student checkpoint");
  dist->add_option("--stop-after", stop_after, "Stop after this many epochs (0 runs the full schedule)");

  auto* eval = app.add_subcommand("evaluate", "Verification and rank-1 identification for a checkpoint");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint, "Teacher or student checkpoint")->required();

  auto* cmp = app.add_subcommand("compare", "Teacher and all three student variants over several seeds");
  add_common(cmp, common);
  cmp->add_option("--seeds", seeds, "Comma-separated seeds")->capture_default_str();
  cmp->add_option("-j,--jobs", jobs, "Seeds trained concurrently")->capture_default_str();

  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient checks");
  gc->add_option("--module", module, "Suite to run")
      ->check(CLI::IsMember({"all", "tensor", "nets", "losses"}))
      ->capture_default_str();
  gc->add_option("--seed", grad_seed, "Seed for the random instances")->capture_default_str();
  gc->add_option("--instances", instances, "Random instances per operation")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorCategory::config);
  }

  try {
    if (*gen) return cmd_gen_data(common);
    if (*tt) return cmd_train_teacher(common, resume, stop_after);
    if (*dist) return cmd_distill(common, teacher, kind, resume, stop_after);
    if (*eval) return cmd_evaluate(common, checkpoint);
    if (*cmp) return cmd_compare(common, seeds, jobs);
    if (*gc) return cmd_grad_check(module, grad_seed, instances);
  } catch (const Error& e) {
    std::cerr << "shrinktea: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "shrinktea: internal error: " << e.what() << "\n";
    return static_cast<int>(ErrorCategory::internal);
  }
  return static_cast<int>(ErrorCategory::internal);
}
