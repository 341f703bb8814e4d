#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "shrinktea/checkpoint.hpp"
#include "shrinktea/optim.hpp"

using namespace shrinktea;

namespace {

NamedTensor param(double value, double grad) {
  Tensor p({1}, {value}, true);
  backward(ops::sum(ops::scale(p, grad)));  // leaves d/dp = grad
  return {"p", p};
}

OptimizerState plain(double lr, double momentum) {
  OptimizerState s;
  s.base_lr = s.lr = lr;
  s.momentum = momentum;
  return s;
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "shrinktea_optim_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(SgdTest, VanillaStep) {
  std::vector<NamedTensor> params{param(1.0, 1.0)};
  OptimizerState s = plain(0.1, 0.0);
  sgd_step(params, s);
  EXPECT_DOUBLE_EQ(params[0].tensor[0], 0.9);
  EXPECT_EQ(s.step, 1u);
}

TEST(SgdTest, MomentumRecursionByHand) {
  std::vector<NamedTensor> params{param(1.0, 1.0)};
  OptimizerState s = plain(0.1, 0.9);
  sgd_step(params, s);
  EXPECT_DOUBLE_EQ(s.velocity[0].tensor[0], 1.0);
  EXPECT_DOUBLE_EQ(params[0].tensor[0], 0.9);
  sgd_step(params, s);  // gradient buffer still holds 1
  EXPECT_DOUBLE_EQ(s.velocity[0].tensor[0], 1.9);
  EXPECT_NEAR(params[0].tensor[0], 0.71, 1e-15);
}

TEST(SgdTest, ZeroGradientLeavesParametersUnchanged) {
  std::vector<NamedTensor> params{param(0.37, 0.0)};
  OptimizerState s = plain(0.1, 0.9);
  for (int i = 0; i < 3; ++i) sgd_step(params, s);
  EXPECT_EQ(params[0].tensor[0], 0.37);
}

TEST(SgdTest, WeightDecayAddsToGradient) {
  std::vector<NamedTensor> params{param(2.0, 0.0)};
  OptimizerState s = plain(0.1, 0.0);
  s.weight_decay = 0.5;
  sgd_step(params, s);
  EXPECT_DOUBLE_EQ(params[0].tensor[0], 2.0 - 0.1 * 1.0);
}

TEST(SgdTest, MissingGradientIsContractError) {
  std::vector<NamedTensor> params{{"w", Tensor({2}, {1, 2}, true)}};
  OptimizerState s = plain(0.1, 0.9);
  EXPECT_THROW(sgd_step(params, s), ContractError);
}

TEST(SgdTest, LearningRateDecaysAtMilestones) {
  std::vector<NamedTensor> params{param(1.0, 0.0)};
  OptimizerState s = plain(0.1, 0.0);
  s.decay_steps = decay_milestones(20, {0.6, 0.85});
  EXPECT_EQ(s.decay_steps, (std::vector<std::uint64_t>{12, 17}));
  std::vector<double> used;
  for (int i = 0; i < 20; ++i) {
    used.push_back(s.lr);
    sgd_step(params, s);
  }
  EXPECT_DOUBLE_EQ(used[11], 0.1);
  EXPECT_DOUBLE_EQ(used[12], 0.01);
  EXPECT_DOUBLE_EQ(used[16], 0.01);
  EXPECT_DOUBLE_EQ(used[17], 0.001);
}

TEST(CheckpointTest, RoundTripIsBitwise) {
  Checkpoint c;
  c.fingerprint = 0xfeedbeefcafe1234ULL;
  c.tensors.push_back({"a.weight", Tensor({2, 3}, {1.5, -0.0, 3e-300, 7, 8, std::numeric_limits<double>::denorm_min()})});
  c.tensors.push_back({"b", Tensor({1}, {42})});
  c.optimizer = plain(0.1, 0.9);
  c.optimizer.step = 17;
  c.optimizer.weight_decay = 5e-4;
  c.optimizer.decay_steps = {12, 17};
  c.optimizer.velocity.push_back({"a.weight", Tensor::filled({2, 3}, 0.25)});
  Engine rng(99);
  rng.discard(5);
  c.rng_state = engine_state(rng);
  c.epoch = 3;

  const auto bytes = serialize(c);
  ASSERT_GE(bytes.size(), 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "STNT");
  Checkpoint back = deserialize(bytes);
  EXPECT_EQ(serialize(back), bytes);
  EXPECT_EQ(back.fingerprint, c.fingerprint);
  EXPECT_EQ(back.epoch, 3u);
  EXPECT_EQ(back.optimizer.decay_steps, c.optimizer.decay_steps);
  const Tensor& a = back.find("a.weight");
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(std::memcmp(&a.data()[i], &c.tensors[0].tensor.data()[i], sizeof(double)), 0);
  }
  Engine restored = engine_from_state(back.rng_state);
  EXPECT_EQ(restored(), rng());
}

TEST(CheckpointTest, FileRoundTrip) {
  Checkpoint c;
  c.tensors.push_back({"x", Tensor({3}, {1, 2, 3})});
  const auto path = temp_file("roundtrip.ckpt");
  save_checkpoint(path, c);
  EXPECT_EQ(serialize(load_checkpoint(path)), serialize(c));
}

TEST(CheckpointTest, CorruptInputIsIoError) {
  Checkpoint c;
  c.tensors.push_back({"x", Tensor({3}, {1, 2, 3})});
  auto bytes = serialize(c);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize(bad_magic), IoError);
  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  EXPECT_THROW(deserialize(truncated), IoError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(deserialize(trailing), IoError);
  EXPECT_THROW(load_checkpoint(temp_file("does_not_exist.ckpt")), IoError);
}

TEST(CheckpointTest, RestoreChecksNamesAndShapes) {
  Checkpoint c;
  c.tensors.push_back({"w", Tensor({2}, {5, 6})});
  std::vector<NamedTensor> ok{{"w", Tensor::zeros({2})}};
  restore(ok, c);
  EXPECT_EQ(ok[0].tensor[1], 6.0);
  std::vector<NamedTensor> wrong_shape{{"w", Tensor::zeros({3})}};
  EXPECT_THROW(restore(wrong_shape, c), ConfigError);
  std::vector<NamedTensor> missing{{"v", Tensor::zeros({2})}};
  EXPECT_ANY_THROW(restore(missing, c));
}

TEST(CheckpointTest, SnapshotIsIndependentOfLaterUpdates) {
  std::vector<NamedTensor> live{{"w", Tensor({2}, {1, 2})}};
  auto snap = snapshot(live);
  live[0].tensor.mutable_data()[0] = 9;
  EXPECT_EQ(snap[0].tensor[0], 1.0);
}
