#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lano/error.hpp"
#include "lano/masking.hpp"
#include "lano/model.hpp"
#include "lano/ops.hpp"
#include "lano/pdegen.hpp"
#include "lano/rng.hpp"
#include "lano/training.hpp"
#include "lano/verify.hpp"

using namespace lano;
using Td = Tensor<double>;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.layers = 1;
  c.channels = 8;
  c.heads = 2;
  c.latent_tokens = 4;
  c.history = 2;
  c.physical_channels = 2;
  return c;
}

TrainData tiny_data(std::uint64_t seed) {
  TrainData d;
  for (std::size_t i = 0; i < 3; ++i) d.train.push_back(solve_diffusion_reaction(GridGeometry::square(8), seed + i, 5));
  d.val.push_back(solve_diffusion_reaction(GridGeometry::square(8), seed + 10, 5));
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(MaskedLoss, Examples) {
  const Td target({4, 1}, std::vector<double>{1, 2, 3, 4});
  const std::vector<std::uint8_t> m{1, 1, 0, 0};
  EXPECT_EQ(masked_one_step_loss(target, target, m).item(), 0.0);
  const Td off_mask({4, 1}, std::vector<double>{1, 2, 30, -4});
  EXPECT_EQ(masked_one_step_loss(off_mask, target, m).item(), 0.0);
  const Td half({4, 1}, std::vector<double>{2, 2, 3, 4});
  EXPECT_DOUBLE_EQ(masked_one_step_loss(half, target, m).item(), 0.5);
  EXPECT_THROW(masked_one_step_loss(half, target, std::vector<std::uint8_t>(4, 0)), ValueError);
}

TEST(MaskedLoss, NoGradientFromUnobservedTargets) {
  Td pred({3, 2}, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  pred.set_requires_grad(true);
  const Td target({3, 2}, 1.0);
  GradientTape<double> tape;
  {
    TapeScope<double> scope(tape);
    tape.backward(masked_one_step_loss(pred, target, {1, 0, 1}));
  }
  EXPECT_EQ(pred.grad()[2], 0.0);
  EXPECT_EQ(pred.grad()[3], 0.0);
  EXPECT_NE(pred.grad()[0], 0.0);
}

TEST(ConsistencyLoss, Examples) {
  const Td a({3, 1}, std::vector<double>{1, 2, 3});
  EXPECT_EQ(consistency_loss(a, a).item(), 0.0);
  const Td b({3, 1}, std::vector<double>{1.5, 2.5, 3.5});
  const double lambda = 0.1;
  EXPECT_NEAR(lambda * consistency_loss(b, a).item(), lambda * 0.25, 1e-15);
}

TEST(ConsistencyLoss, CleanBranchGetsNoGradient) {
  Td masked({2, 1}, std::vector<double>{1, 2}), clean({2, 1}, std::vector<double>{0, 0});
  masked.set_requires_grad(true);
  clean.set_requires_grad(true);
  GradientTape<double> tape;
  {
    TapeScope<double> scope(tape);
    tape.backward(consistency_loss(masked, clean));
  }
  EXPECT_FALSE(clean.has_grad());
  EXPECT_DOUBLE_EQ(masked.grad()[1], 2.0);
}

TEST(MptLoss, LambdaZeroIsPlainLoss) {
  auto c = tiny_model();
  c.physical_channels = 1;
  const auto p = init_params<double>(c, 2, InitOptions{true});
  Rng rng(3);
  std::vector<double> frames(c.history * 36);
  for (auto& v : frames) v = rng.normal();
  Td target({36, 1});
  for (auto& v : target.values()) v = rng.normal();
  const auto m = gen_pointwise_mask(6, 6, 0.2, 1);
  const auto aug = mpt_augment(m, 0.3, 2);
  const auto a = mpt_loss(p, c, 6, 6, frames, target, m.bits, aug.augmented.bits, 0.0, Td());
  const auto b = masked_one_step_loss(lano_forward(6, 6, frames, aug.augmented.bits, p, c), target, m.bits);
  EXPECT_EQ(a.item(), b.item());
}

TEST(MptLoss, SupervisedSetIndependentOfArtificialMask) {
  // Perturbing the target where M = 0 never changes the loss, whatever H_hat is.
  auto c = tiny_model();
  c.physical_channels = 1;
  const auto p = init_params<double>(c, 2, InitOptions{true});
  std::vector<double> frames(c.history * 36, 0.3);
  const auto m = gen_pointwise_mask(6, 6, 0.3, 4);
  Td t1({36, 1}, 0.5);
  auto t2 = t1.detach();
  for (std::size_t n = 0; n < 36; ++n) {
    if (!m.bits[n]) t2.values()[n] = 100.0;
  }
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto aug = mpt_augment(m, 0.4, s);
    EXPECT_EQ(mpt_loss(p, c, 6, 6, frames, t1, m.bits, aug.augmented.bits, 0.0, Td()).item(),
              mpt_loss(p, c, 6, 6, frames, t2, m.bits, aug.augmented.bits, 0.0, Td()).item());
  }
}

TEST(OneCycle, Endpoints) {
  TrainConfig c;
  const std::size_t total = 101;
  EXPECT_DOUBLE_EQ(one_cycle_lr(0, total, c), 1e-3 / 25.0);
  EXPECT_DOUBLE_EQ(one_cycle_lr(30, total, c), 1e-3);
  EXPECT_DOUBLE_EQ(one_cycle_lr(100, total, c), 1e-3 / 1e4);
  double prev = one_cycle_lr(0, total, c);
  for (std::size_t s = 1; s <= 30; ++s) {
    const double lr = one_cycle_lr(s, total, c);
    EXPECT_GE(lr, prev);
    EXPECT_LT(std::abs(lr - prev), 1e-4);  // continuous
    prev = lr;
  }
  for (std::size_t s = 31; s < total; ++s) {
    const double lr = one_cycle_lr(s, total, c);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}

TEST(AdamW, ZeroGradientZeroDecayIsNoop) {
  auto c = tiny_model();
  auto p = init_params<double>(c, 1);
  const auto before = p.clone();
  p.set_requires_grad(true);
  for (auto& [name, t] : p.named()) {
    t->zero_grad();
    (void)name;
  }
  AdamW opt(0.9, 0.999, 1e-8, 0.0);
  opt.step(p, 1e-2);
  auto a = p.named();
  auto b = const_cast<ModelParams<double>&>(before).named();
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].second->numel(); ++j) EXPECT_EQ((*a[i].second)[j], (*b[i].second)[j]);
  }
}

TEST(AdamW, FirstStepClosedForm) {
  ModelConfig c = tiny_model();
  auto p = init_params<double>(c, 1);
  p.set_requires_grad(true);
  p.zero_grad();
  auto& w = p.out_b;
  const double theta0 = w[0], g = 0.37, lr = 1e-2, eps = 1e-8;
  w.grad()[0] = g;
  AdamW opt(0.9, 0.999, eps, 0.0);
  opt.step(p, lr);
  // m_hat = g, v_hat = g^2 after bias correction.
  EXPECT_NEAR(w[0], theta0 - lr * g / (std::abs(g) + eps), 1e-15);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(AdamW, DecoupledWeightDecay) {
  ModelConfig c = tiny_model();
  auto p = init_params<double>(c, 1);
  p.set_requires_grad(true);
  p.zero_grad();
  const double theta0 = p.embed_w[3], lr = 1e-2, d = 0.5;
  AdamW opt(0.9, 0.999, 1e-8, d);
  opt.step(p, lr);
  EXPECT_NEAR(p.embed_w[3], theta0 * (1.0 - lr * d), 1e-15);
}

TEST(AdamW, NanGradientNamesParameter) {
  ModelConfig c = tiny_model();
  auto p = init_params<double>(c, 1);
  p.set_requires_grad(true);
  p.zero_grad();
  p.layers[0].mlp_b1.grad()[0] = std::nan("");
  AdamW opt(0.9, 0.999, 1e-8, 0.0);
  try {
    opt.step(p, 1e-3);
    FAIL();
  } catch (const TrainingDiverged& e) {
    EXPECT_NE(std::string(e.what()).find("layers.0.mlp_b1"), std::string::npos);
  }
}

TEST(Descent, SmallStepDecreasesFrozenBatchLoss) {
  auto c = tiny_model();
  c.physical_channels = 1;
  auto p = init_params<double>(c, 5, InitOptions{true});
  Rng rng(6);
  std::vector<double> frames(c.history * 36);
  for (auto& v : frames) v = rng.normal();
  Td target({36, 1});
  for (auto& v : target.values()) v = rng.normal();
  const auto m = gen_pointwise_mask(6, 6, 0.2, 1);
  auto loss_at = [&] { return masked_one_step_loss(lano_forward(6, 6, frames, m.bits, p, c), target, m.bits); };
  double before = 0.0;
  p.set_requires_grad(true);
  {
    GradientTape<double> tape;
    TapeScope<double> scope(tape);
    auto l = loss_at();
    before = l.item();
    tape.backward(l);
  }
  // Plain gradient step of size 1e-6 along -g.
  NoGradScope<double> off(nullptr);
  for (auto& [name, t] : p.named()) {
    (void)name;
    if (!t->has_grad()) continue;
    for (std::size_t j = 0; j < t->numel(); ++j) t->values()[j] -= 1e-6 * t->grad()[j];
  }
  EXPECT_LT(loss_at().item(), before);
}

TEST(TrainConfig, ValidationAndRoundTrip) {
  TrainConfig c;
  c.mpt_cross_pattern = true;
  c.mask = MaskSpec{MaskPattern::pointwise, 0.4, 2};
  const auto back = TrainConfig::from_keyvalue(c.to_keyvalue());
  EXPECT_EQ(back.to_keyvalue().to_text(), c.to_keyvalue().to_text());
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ValueError);
  c = TrainConfig{};
  c.consistency_weight = -1.0;
  EXPECT_THROW(c.validate(), ValueError);
}

TEST(TrajectoryMask, FixedPerTrajectoryAndStream) {
  MaskSpec s{MaskPattern::patchwise, 0.5, 4};
  EXPECT_EQ(trajectory_mask(s, 16, 16, 1, 1, 3).bits, trajectory_mask(s, 16, 16, 1, 1, 3).bits);
  EXPECT_NE(trajectory_mask(s, 16, 16, 1, 1, 3).bits, trajectory_mask(s, 16, 16, 1, 1, 4).bits);
  EXPECT_NE(trajectory_mask(s, 16, 16, 1, 1, 3).bits, trajectory_mask(s, 16, 16, 1, 2, 3).bits);
}

TEST(Train, MetricsLogIsReproducible) {
  EXPECT_TRUE(check_training_determinism(VerifyOptions{}).passed);
}

TEST(Train, WritesCsvAndCheckpoint) {
  const auto dir = fs::temp_directory_path() / "lano-unit-train";
  fs::create_directories(dir);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 2;
  tc.record_wall_time = false;
  tc.mask = MaskSpec{MaskPattern::pointwise, 0.25, 1};
  const auto r = train(tiny_data(1), tiny_model(), tc, TrainOutputs{dir / "m.pobw", dir / "m.csv"});
  EXPECT_EQ(r.history.size(), 3u);
  EXPECT_TRUE(fs::exists(dir / "m.pobw"));
  const auto csv = slurp(dir / "m.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsHeader);
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  EXPECT_EQ(lines, 4u);
  EXPECT_GT(r.best_val_rel_l2, 0.0);
  std::size_t prev_step = 0;
  for (const auto& m : r.history) {
    EXPECT_GT(m.step, prev_step);
    prev_step = m.step;
    EXPECT_EQ(m.wall_seconds, 0.0);
  }
  fs::remove_all(dir);
}

TEST(Train, MptOffWithZeroLambdaRuns) {
  TrainConfig tc;
  tc.epochs = 1;
  tc.mpt = false;
  tc.consistency_weight = 0.0;
  tc.record_wall_time = false;
  const auto r = train(tiny_data(2), tiny_model(), tc);
  EXPECT_EQ(r.history.size(), 1u);
}

TEST(Train, InterpFillModeRuns) {
  TrainConfig tc;
  tc.epochs = 1;
  tc.interp_fill = true;
  tc.mask = MaskSpec{MaskPattern::patchwise, 0.25, 2};
  const auto r = train(tiny_data(3), tiny_model(), tc);
  EXPECT_TRUE(std::isfinite(r.best_val_rel_l2));
}

TEST(Train, TooShortTrajectoriesRejected) {
  auto c = tiny_model();
  c.history = 5;  // trajectories have 5 frames, no target left
  EXPECT_THROW(train(tiny_data(4), c, TrainConfig{}), ValueError);
}
