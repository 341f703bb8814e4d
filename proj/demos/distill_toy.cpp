// Train a small teacher, then a student under each distillation loss, all in memory.
//   distill_toy [config.json]

#include <iomanip>
#include <iostream>

#include "shrinktea/shrinktea.hpp"

int main(int argc, char** argv) {
  using namespace shrinktea;
  try {
    RunConfig cfg = argc > 1 ? load_config(argv[1]) : load_config({}, {"data.num_train_classes=16",
                                                                       "data.num_test_classes=8",
                                                                       "data.num_distractors=40",
                                                                       "data.verification_pairs_per_side=60",
                                                                       "train.teacher_epochs=8",
                                                                       "train.student_epochs=8"});
    TrainResult teacher = train_teacher(cfg);
    std::cout << std::fixed << std::setprecision(3) << "teacher   verification " << teacher.eval.verification_accuracy
              << "  rank-1 " << teacher.eval.rank1 << "\n";
    for (auto kind : {DistillLossKind::none, DistillLossKind::l2, DistillLossKind::angular}) {
      cfg.distill.kind = kind;
      TrainResult student = train_student(cfg, &teacher.checkpoint);
      std::cout << std::left << std::setw(10) << to_string(kind) << "verification " << student.eval.verification_accuracy
                << "  rank-1 " << student.eval.rank1 << "\n";
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return e.exit_code();
  }
  return 0;
}
