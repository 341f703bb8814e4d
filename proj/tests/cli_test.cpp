#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "shrinktea/config.hpp"

using namespace shrinktea;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string output;  // stdout and stderr
};

const fs::path& work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "shrinktea_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Outcome run(const std::string& args) {
  const fs::path log = work_dir() / "last_output.txt";
  const std::string cmd = std::string("\"") + SHRINKTEA_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string file_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Small enough that training runs take well under a second.
const fs::path& toy_config() {
  static const fs::path path = [] {
    Json j = {{"seed", 3},
              {"data",
               {{"num_train_classes", 8},
                {"num_test_classes", 4},
                {"num_distractors", 6},
                {"samples_per_class", 6},
                {"latent_dim", 4},
                {"hidden_dim", 16},
                {"image_size", 8},
                {"verification_pairs_per_side", 20},
                {"verification_folds", 2}}},
              {"arch", {{"input_size", 8}, {"stages", 2}, {"teacher_widths", {8, 16}}, {"student_widths", {4, 8}}, {"embedding_dim", 8}}},
              {"train", {{"batch_size", 16}, {"teacher_epochs", 2}, {"student_epochs", 2}}}};
    const fs::path p = work_dir() / "toy.json";
    write_json_file(p, j);
    return p;
  }();
  return path;
}

std::string toy(const std::string& verb, const fs::path& out) {
  return verb + " --config \"" + toy_config().string() + "\" --out \"" + out.string() + "\"";
}

std::size_t count_records(const fs::path& path, const std::string& kind) {
  std::ifstream in(path);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) n += Json::parse(line)["record"] == kind ? 1 : 0;
  return n;
}

}  // namespace

TEST(CliTest, UsageErrorsExitWithConfigCode) {
  EXPECT_EQ(run("").code, 2);
  Outcome unknown = run("frobnicate");
  EXPECT_EQ(unknown.code, 2);
  EXPECT_EQ(run("gen-data --no-such-flag").code, 2);
  Outcome help = run("--help");
  EXPECT_EQ(help.code, 0);
  for (const char* verb : {"gen-data", "train-teacher", "distill", "evaluate", "compare", "grad-check"}) {
    EXPECT_NE(help.output.find(verb), std::string::npos) << verb;
  }
}

TEST(CliTest, GenDataWritesFilesAndIsIdempotent) {
  const fs::path out = work_dir() / "gen";
  Outcome first = run(toy("gen-data", out));
  ASSERT_EQ(first.code, 0) << first.output;
  EXPECT_NE(first.output.find("train=8 test=4 distractor=6"), std::string::npos) << first.output;
  EXPECT_NE(first.output.find("verification pairs: 40 (20 positive, 2 folds)"), std::string::npos) << first.output;
  EXPECT_NE(first.output.find("gallery=10"), std::string::npos) << first.output;
  std::map<std::string, std::string> before;
  for (const char* f : {"dataset.bin", "verification_pairs.txt", "identification.txt", "dataset.config.json"}) {
    ASSERT_TRUE(fs::exists(out / f)) << f;
    before[f] = file_text(out / f);
  }
  ASSERT_EQ(run(toy("gen-data", out)).code, 0);
  for (const auto& [f, bytes] : before) EXPECT_EQ(file_text(out / f), bytes) << f;
}

TEST(CliTest, ConfigProblemsNameTheKey) {
  const fs::path out = work_dir() / "bad_config";
  Outcome unknown = run(toy("gen-data", out) + " --set train.batchsize=4");
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.output.find("train.batchsize"), std::string::npos) << unknown.output;

  Outcome conflict = run(toy("gen-data", out) + " --set data.verification_pairs_per_side=400");
  EXPECT_EQ(conflict.code, 2);
  EXPECT_NE(conflict.output.find("data.verification_pairs_per_side"), std::string::npos) << conflict.output;

  Outcome classes = run(toy("gen-data", out) + " --set data.num_test_classes=1");
  EXPECT_EQ(classes.code, 2);
  EXPECT_NE(classes.output.find("data.num_test_classes"), std::string::npos) << classes.output;

  std::ofstream(work_dir() / "broken.json") << "{ nope";
  EXPECT_EQ(run("gen-data --config \"" + (work_dir() / "broken.json").string() + "\"").code, 2);
}

TEST(CliTest, IoProblemsExitWithIoCode) {
  std::ofstream(work_dir() / "plain_file") << "x";
  EXPECT_EQ(run(toy("gen-data", work_dir() / "plain_file" / "sub")).code, 3);
  EXPECT_EQ(run("gen-data --config /nonexistent/cfg.json").code, 3);
  EXPECT_EQ(run(toy("distill", work_dir() / "no_teacher") + " --kind angular").code, 3);
}

TEST(CliTest, TrainDistillEvaluatePipeline) {
  const fs::path out = work_dir() / "pipeline";
  Outcome t = run(toy("train-teacher", out));
  ASSERT_EQ(t.code, 0) << t.output;
  EXPECT_NE(t.output.find("verification_accuracy="), std::string::npos);
  ASSERT_TRUE(fs::exists(out / "teacher.ckpt"));
  ASSERT_TRUE(fs::exists(out / "teacher.config.json"));
  const std::string teacher_bytes = file_text(out / "teacher.ckpt");

  for (const char* kind : {"none", "l2", "angular"}) {
    Outcome d = run(toy("distill", out) + " --kind " + kind);
    ASSERT_EQ(d.code, 0) << d.output;
    const std::string model = std::string("student_") + kind;
    EXPECT_TRUE(fs::exists(out / (model + ".ckpt")));
    EXPECT_TRUE(fs::exists(out / (model + ".config.json")));
    EXPECT_EQ(count_records(out / (model + ".metrics.jsonl"), "step"), 2u * 3u);
    const auto pos = d.output.find("verification_accuracy=");
    ASSERT_NE(pos, std::string::npos);
    EXPECT_TRUE(std::isfinite(std::stod(d.output.substr(pos + 22))));
    EXPECT_NE(d.output.find("rank1="), std::string::npos);
  }
  EXPECT_EQ(file_text(out / "teacher.ckpt"), teacher_bytes);

  Outcome e = run(toy("evaluate", out) + " --checkpoint \"" + (out / "student_angular.ckpt").string() + "\"");
  ASSERT_EQ(e.code, 0) << e.output;
  const Json record = read_json_file(out / "student_angular.evaluation.json");
  EXPECT_EQ(record["role"], "student");
  EXPECT_TRUE(record["verification_accuracy"].is_number());
}

TEST(CliTest, DistillRejectsMismatchedTeacher) {
  const fs::path out = work_dir() / "mismatch";
  ASSERT_EQ(run(toy("train-teacher", out)).code, 0);
  Outcome d = run(toy("distill", out) + " --kind angular --set arch.teacher_widths=[8,8]");
  EXPECT_EQ(d.code, 2);
  EXPECT_NE(d.output.find("fingerprint"), std::string::npos) << d.output;
}

TEST(CliTest, RunsAreReproducibleFromTheirConfigEcho) {
  const fs::path a = work_dir() / "repro_a", b = work_dir() / "repro_b";
  ASSERT_EQ(run(toy("train-teacher", a)).code, 0);
  ASSERT_EQ(run("train-teacher --config \"" + (a / "teacher.config.json").string() + "\" --out \"" + b.string() + "\"").code, 0);
  EXPECT_EQ(file_text(a / "teacher.ckpt"), file_text(b / "teacher.ckpt"));
  EXPECT_EQ(file_text(a / "teacher.metrics.jsonl"), file_text(b / "teacher.metrics.jsonl"));
}

TEST(CliTest, StopAndResumeMatchesFullRun) {
  const fs::path full = work_dir() / "full", part = work_dir() / "part";
  ASSERT_EQ(run(toy("train-teacher", full)).code, 0);
  ASSERT_EQ(run(toy("train-teacher", part) + " --stop-after 1").code, 0);
  const fs::path partial = work_dir() / "partial.ckpt";
  fs::copy_file(part / "teacher.ckpt", partial, fs::copy_options::overwrite_existing);
  ASSERT_EQ(run(toy("train-teacher", part) + " --resume \"" + partial.string() + "\"").code, 0);
  EXPECT_EQ(file_text(full / "teacher.ckpt"), file_text(part / "teacher.ckpt"));
}

TEST(CliTest, DivergenceExitsWithNumericCode) {
  Outcome o = run(toy("train-teacher", work_dir() / "diverge") + " --set train.lr=1e300");
  EXPECT_EQ(o.code, 4);
  EXPECT_NE(o.output.find("non-finite"), std::string::npos) << o.output;
}

TEST(CliTest, CompareWritesDeterministicReport) {
  const fs::path a = work_dir() / "cmp_a", b = work_dir() / "cmp_b";
  Outcome first = run(toy("compare", a) + " --seeds 1 --set train.teacher_epochs=1 --set train.student_epochs=1");
  ASSERT_EQ(first.code, 0) << first.output;
  const Json report = read_json_file(a / "report.json");
  ASSERT_EQ(report["rows"].size(), 4u);
  for (const auto& row : report["rows"]) {
    EXPECT_TRUE(row["verification_accuracy"]["mean"].is_number());
    EXPECT_TRUE(row["rank1"]["mean"].is_number());
  }
  EXPECT_TRUE(fs::exists(a / "report.txt"));
  EXPECT_TRUE(fs::exists(a / "report.config.json"));
  ASSERT_EQ(run(toy("compare", b) + " --seeds 1 --set train.teacher_epochs=1 --set train.student_epochs=1").code, 0);
  EXPECT_EQ(file_text(a / "report.json"), file_text(b / "report.json"));
  EXPECT_EQ(file_text(a / "report.txt"), file_text(b / "report.txt"));

  EXPECT_EQ(run(toy("compare", a) + " --seeds 1,x").code, 2);
}

TEST(CliTest, CompareFlagsFailedCells) {
  Outcome o = run(toy("compare", work_dir() / "cmp_fail") + " --seeds 1 --set train.lr=1e300");
  EXPECT_EQ(o.code, 5);
  EXPECT_NE(o.output.find("FAILED seed 1 teacher"), std::string::npos) << o.output;
}

TEST(CliTest, GradCheckListsEveryOperation) {
  Outcome o = run("grad-check --module losses");
  ASSERT_EQ(o.code, 0) << o.output;
  EXPECT_NE(o.output.find("max rel err"), std::string::npos);
  EXPECT_NE(o.output.find("composite_loss_angular"), std::string::npos) << o.output;
  EXPECT_EQ(o.output.find("FAIL"), std::string::npos);
  EXPECT_EQ(run("grad-check --module everything").code, 2);
}
