#include <gtest/gtest.h>

#include <fstream>
#include <functional>
#include <set>
#include <string>

#include "tailforge/config.hpp"

using namespace tailforge;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, ReferenceFileMatchesBuiltInDefaults) {
  std::ifstream in(TAILFORGE_DEFAULTS_INI);
  ASSERT_TRUE(in) << TAILFORGE_DEFAULTS_INI;
  const auto from_file = ExperimentConfig::parse(in, "defaults.ini");
  EXPECT_EQ(from_file.values(), ExperimentConfig().values());

  // Every key must be spelled out in the file, not just inherited.
  std::ifstream again(TAILFORGE_DEFAULTS_INI);
  std::set<std::string> listed;
  std::string line, section;
  while (std::getline(again, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == '[') {
      section = line.substr(1, line.find(']') - 1);
      continue;
    }
    const auto key = line.substr(0, line.find_first_of(" ="));
    listed.insert(section + "." + key);
  }
  std::set<std::string> expected;
  for (const auto& k : kConfigKeys) expected.insert(std::string(k.section) + "." + std::string(k.key));
  EXPECT_EQ(listed, expected);
}

TEST(Config, UnknownKeyRejectedWithName) {
  const auto msg = error_of([] { ExperimentConfig::parse_string("[training]\nbatch_sise = 3\n", "x.ini"); });
  EXPECT_NE(msg.find("training.batch_sise"), std::string::npos) << msg;
  EXPECT_NE(msg.find("x.ini:2"), std::string::npos) << msg;
}

TEST(Config, MalformedLines) {
  EXPECT_THROW(ExperimentConfig::parse_string("batch_size = 3\n"), ValidationError);
  EXPECT_THROW(ExperimentConfig::parse_string("[training\n"), ValidationError);
  EXPECT_THROW(ExperimentConfig::parse_string("[training]\nbatch_size\n"), ValidationError);
}

TEST(Config, BadValueNamesKey) {
  auto cfg = ExperimentConfig::parse_string("[training]\nbatch_size = many\n");
  auto msg = error_of([&] { (void)train_config_from(cfg); });
  EXPECT_NE(msg.find("training.batch_size"), std::string::npos) << msg;

  cfg = ExperimentConfig::parse_string("[lmr]\nmask_rule = diagonal\n");
  msg = error_of([&] { (void)train_config_from(cfg); });
  EXPECT_NE(msg.find("lmr.mask_rule"), std::string::npos) << msg;

  cfg = ExperimentConfig::parse_string("[training]\nstage1_epochs = 0\n");
  msg = error_of([&] { (void)train_config_from(cfg); });
  EXPECT_NE(msg.find("training.stage1_epochs"), std::string::npos) << msg;
}

TEST(Config, EchoRoundTrips) {
  auto cfg = ExperimentConfig::parse_string(
      "# comment\n[training]\nmode = cRT ; trailing\nseed = 9\n[lmr]\nbank_capacity = 12\n");
  const auto again = ExperimentConfig::parse_string(cfg.echo());
  EXPECT_EQ(again.values(), cfg.values());
  EXPECT_EQ(again.echo(), cfg.echo());
  EXPECT_EQ(again.get("training.mode"), "cRT");
  EXPECT_EQ(again.get_int("training.seed"), 9);
}

TEST(Config, ConvertersApplyDefaults) {
  const ExperimentConfig cfg;
  const auto tc = train_config_from(cfg);
  EXPECT_EQ(tc.mode, TrainMode::lmr);
  EXPECT_EQ(tc.batch_size, 56u);
  EXPECT_EQ(tc.encoder_dims, (std::vector<std::size_t>{64, 32}));
  EXPECT_FALSE(tc.stage2_lr.has_value());
  EXPECT_DOUBLE_EQ(tc.effective_stage2_lr(), 1e-4);
  EXPECT_FALSE(tc.contribution.epsilon.has_value());
  EXPECT_EQ(tc.lmr.omega, 20);

  const auto spec = split_spec_from(cfg);
  EXPECT_EQ(spec.val_per_class, 40);
  EXPECT_EQ(spec.test_per_class, 15);

  const auto recipe = synth_recipe_from(cfg);
  EXPECT_EQ(recipe.num_classes, 30u);
  EXPECT_EQ(recipe.max_count, 500);
}

TEST(Config, EmptyEncoderDimsMeansIdentity) {
  auto cfg = ExperimentConfig::parse_string("[model]\nencoder_dims =\n");
  EXPECT_TRUE(train_config_from(cfg).encoder_dims.empty());
}
