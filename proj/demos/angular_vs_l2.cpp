// Angular distillation only constrains direction: scaling the student leaves it at zero,
// while the l2 loss grows with the scale.

#include <iostream>
#include <random>

#include "shrinktea/losses.hpp"

int main() {
  using namespace shrinktea;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> dist;
  std::vector<double> v(4 * 8);
  for (auto& x : v) x = dist(rng);
  const Tensor teacher({4, 8}, v);
  for (double scale : {0.5, 1.0, 2.0, 3.0}) {
    const Tensor student = ops::scale(teacher, scale);
    std::cout << "scale " << scale << ": angular " << angular_distill_loss(teacher, student).item() << ", l2 "
              << l2_distill_loss(teacher, student).item() << "\n";
  }
}
