#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "tailforge/curator.hpp"
#include "tailforge/synth.hpp"
#include "tailforge/trainer.hpp"

using namespace tailforge;

namespace {

// 12-class long tail with 4 few-shot classes.
Dataset small_longtail(std::uint64_t seed, double confusability = 0.5) {
  ParetoRecipe r;
  r.num_classes = 12;
  r.alpha = 6.0;
  r.max_count = 200;
  r.min_count = 5;
  SynthOptions o;
  o.val_per_class = 5;
  o.test_per_class = 20;
  return synth_longtail(pareto_profile(r), 16, seed, confusability, o);
}

TrainConfig quick_config(TrainMode mode) {
  TrainConfig c;
  c.mode = mode;
  c.encoder_dims = {32, 16};
  c.batch_size = 32;
  c.stage1_epochs = 3;
  c.stage2_epochs = 3;
  c.evaluate_each_epoch = false;
  return c;
}

double train_accuracy(const Model& m, const Dataset& d) {
  const auto idx = d.indices(Split::train);
  const auto pred = m.predict(gather_rows(d.features, std::span<const std::size_t>(idx)));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == d.label(idx[i]) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

constexpr TrainMode kAllModes[] = {TrainMode::ce, TrainMode::crt, TrainMode::mixup, TrainMode::lmr};

}  // namespace

TEST(Trainer, DegenerateLmrMatchesCrtBitForBit) {
  const auto data = small_longtail(3);
  auto crt = quick_config(TrainMode::crt);
  crt.stage1_epochs = 1;
  crt.stage2_epochs = 10;
  crt.max_steps_per_stage = 20;
  auto lmr = crt;
  lmr.mode = TrainMode::lmr;
  lmr.constant_contribution = 0.0;
  lmr.lmr.identity_probability = 1.0;

  const auto a = train(crt, data);
  const auto b = train(lmr, data);
  const auto stage1_steps = static_cast<std::size_t>(a.log.front().steps);
  ASSERT_EQ(a.step_losses.size(), stage1_steps + 20);
  EXPECT_EQ(a.step_losses, b.step_losses);
  EXPECT_EQ(a.model.classifier.weight->value(), b.model.classifier.weight->value());
  EXPECT_EQ(a.model.encoder[0].weight->value(), b.model.encoder[0].weight->value());
}

TEST(Trainer, ReconstructionChangesTheLossCurve) {
  // Guards the identity above against passing vacuously.
  const auto data = small_longtail(3);
  auto crt = quick_config(TrainMode::crt);
  crt.stage1_epochs = 1;
  crt.max_steps_per_stage = 20;
  auto lmr = crt;
  lmr.mode = TrainMode::lmr;
  lmr.lmr.identity_probability = 1.0;
  EXPECT_NE(train(crt, data).step_losses, train(lmr, data).step_losses);
}

TEST(Trainer, SeparableBalancedToyFitsInEveryMode) {
  SynthOptions o;
  o.separation = 8.0;
  o.noise = 0.5;
  o.val_per_class = 0;
  o.test_per_class = 0;
  const auto data = synth_longtail(ClassProfile::from_counts({40, 40, 40, 40, 40}), 8, 5, 1.0, o);
  for (auto mode : kAllModes) {
    auto c = quick_config(mode);
    c.stage1_epochs = 20;
    c.stage2_epochs = 20;
    c.stage2_lr = 1e-3;
    const auto r = train(c, data);
    EXPECT_GE(train_accuracy(r.model, data), 0.99) << to_string(mode);
  }
}

TEST(Trainer, ClassifierIsResetBeforeStageTwo) {
  const auto data = small_longtail(4);
  auto ce = quick_config(TrainMode::ce);
  ce.optimizer = OptimizerKind::sgd;
  ce.momentum = 0.0;
  ce.stage1_lr = 0.05;
  const auto stage1 = train(ce, data).model;

  // SGD at a negligible rate leaves the classifier at its reset value.
  auto crt = ce;
  crt.mode = TrainMode::crt;
  crt.stage2_lr = 1e-300;
  crt.stage2_epochs = 1;
  const auto after = train(crt, data).model;

  Rng reset_rng = Rng::stream(crt.seed, "classifier-reset");
  const auto expected = init_linear<double>(after.feature_dim(), data.num_classes(), reset_rng);
  EXPECT_EQ(after.classifier.weight->value(), expected.weight->value());
  for (double b : after.classifier.bias->value().data()) EXPECT_LT(std::abs(b), 1e-250);
  EXPECT_NE(after.classifier.weight->value(), stage1.classifier.weight->value());
  // Stage 1 is shared with the CE run.
  EXPECT_EQ(after.encoder[0].weight->value(), stage1.encoder[0].weight->value());
}

TEST(Trainer, FrozenEncoderStaysPut) {
  const auto data = small_longtail(4);
  const auto stage1 = train(quick_config(TrainMode::ce), data).model;
  auto c = quick_config(TrainMode::lmr);
  c.freeze_encoder_stage2 = true;
  const auto after = train(c, data).model;
  for (std::size_t l = 0; l < after.encoder.size(); ++l) {
    EXPECT_EQ(after.encoder[l].weight->value(), stage1.encoder[l].weight->value());
    EXPECT_EQ(after.encoder[l].bias->value(), stage1.encoder[l].bias->value());
  }
  c.freeze_encoder_stage2 = false;
  EXPECT_NE(train(c, data).model.encoder[0].weight->value(), stage1.encoder[0].weight->value());
}

TEST(Trainer, SameSeedSameLog) {
  const auto data = small_longtail(6);
  for (auto mode : kAllModes) {
    auto c = quick_config(mode);
    c.evaluate_each_epoch = true;
    c.bank_capacity = 40;
    const auto a = train(c, data);
    const auto b = train(c, data);
    EXPECT_EQ(a.step_losses, b.step_losses) << to_string(mode);
    ASSERT_EQ(a.log.size(), b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i)
      EXPECT_EQ(to_json(a.log[i]).dump(), to_json(b.log[i]).dump());
    c.seed = 1;
    EXPECT_NE(train(c, data).step_losses, a.step_losses) << to_string(mode);
  }
}

TEST(Trainer, LogHasOneRecordPerEpochAndStage) {
  const auto data = small_longtail(6);
  auto c = quick_config(TrainMode::ce);
  c.evaluate_each_epoch = true;
  auto r = train(c, data);
  ASSERT_EQ(r.log.size(), 3u);
  for (const auto& rec : r.log) {
    EXPECT_EQ(rec.stage, 1);
    EXPECT_TRUE(rec.validation.has_value());
  }
  c.mode = TrainMode::mixup;
  r = train(c, data);
  ASSERT_EQ(r.log.size(), 6u);
  EXPECT_EQ(r.log[3].stage, 2);
  EXPECT_EQ(r.log[3].epoch, 1);
}

TEST(Trainer, RandomInitialisationIsAtChance) {
  // Mean Avg C/A of untrained models over many seeds sits near 1/K.
  ParetoRecipe recipe;
  recipe.num_classes = 30;
  recipe.max_count = 500;
  SynthOptions o;
  o.test_per_class = 20;
  const auto profile = pareto_profile(recipe);
  double total = 0.0;
  const int seeds = 40;
  for (int s = 0; s < seeds; ++s) {
    const auto data = synth_longtail(profile, 32, static_cast<std::uint64_t>(s), 0.5, o);
    Rng rng = Rng::stream(static_cast<std::uint64_t>(s), "init");
    const auto model = init_model(data.dim(), {64, 32}, data.class_ids, rng);
    const auto groups = assign_groups(data.train_profile());
    total += evaluate(model, data, Split::test, groups).average_class;
  }
  EXPECT_NEAR(total / seeds, 1.0 / 30.0, 0.015);
}

TEST(Trainer, ZeroConfusabilityHidesFewShotFromCe) {
  const auto data = small_longtail(8, 0.0);
  auto c = quick_config(TrainMode::ce);
  c.stage1_epochs = 20;
  const auto r = train(c, data);
  const auto m = evaluate(r.model, data, Split::test, r.groups);
  ASSERT_TRUE(m.few.has_value());
  EXPECT_LT(*m.few, 0.05);
  ASSERT_TRUE(m.head.has_value());
  EXPECT_GT(*m.head, 0.3);
}

TEST(Trainer, DivergenceReportsStep) {
  const auto data = small_longtail(9);
  auto c = quick_config(TrainMode::ce);
  c.optimizer = OptimizerKind::sgd;
  c.stage1_lr = 1e300;
  try {
    (void)train(c, data);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.step(), 0);
    EXPECT_LT(e.step(), 10);
    EXPECT_EQ(static_cast<int>(e.exit_code()), 4);
  }
}

TEST(Trainer, InvalidConfigRejected) {
  const auto data = small_longtail(9);
  auto c = quick_config(TrainMode::lmr);
  c.batch_size = 1;
  EXPECT_THROW((void)train(c, data), ValidationError);
  c = quick_config(TrainMode::crt);
  c.stage2_epochs = 0;
  EXPECT_THROW((void)train(c, data), ValidationError);
}
