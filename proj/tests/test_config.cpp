#include <gtest/gtest.h>

#include "mscod/config.hpp"
#include "mscod/errors.hpp"

using namespace mscod;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "run.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, ParsesValuesAndComments) {
  const RunConfig c = parse_config(
      "# comment\n"
      "seed = 17\n"
      "hidden_dim = 32   # trailing comment\n"
      "ratios = 0.25, 0.5\n"
      "use_msib = false\n"
      "ligand_types = 5\n"
      "out_dir = runs/a\n"
      "lr = 1e-3\n");
  EXPECT_EQ(c.seed, 17u);
  EXPECT_EQ(c.model.hidden_dim, 32u);
  EXPECT_EQ(c.model.ratios, (std::vector<double>{0.25, 0.5}));
  EXPECT_FALSE(c.model.use_msib);
  EXPECT_EQ(c.model.ligand_types, 5);
  EXPECT_EQ(c.data.ligand_types, 5);
  EXPECT_EQ(c.train.out_dir, "runs/a");
  EXPECT_DOUBLE_EQ(c.train.lr, 1e-3);
  EXPECT_EQ(c.manifest_path(), std::filesystem::path("data") / "manifest.txt");
}

TEST(Config, Errors) {
  EXPECT_NE(error_of("seed = 1\nbogus = 2\n").find("unknown config key 'bogus'"), std::string::npos);
  EXPECT_NE(error_of("hidden_dim = 16\n").find("missing required config key 'seed'"), std::string::npos);
  EXPECT_NE(error_of("seed = 1\nseed = 2\n").find("duplicate config key 'seed'"), std::string::npos);
  EXPECT_NE(error_of("seed = 1\nhidden_dim = many\n").find("hidden_dim"), std::string::npos);
  EXPECT_NE(error_of("seed = 1\nuse_mhca = maybe\n").find("use_mhca"), std::string::npos);
  EXPECT_NE(error_of("seed = 1\nsigma1 = 2\n").find("sigma1"), std::string::npos);
  EXPECT_NE(error_of("seed = 1\nheads = 3\n").find("heads"), std::string::npos);
  EXPECT_NE(error_of("seed = 1\njust words\n").find("expected 'key = value'"), std::string::npos);
}

TEST(Config, HelpListsEveryKey) {
  const std::string help = config_help();
  for (const auto& k : config_keys()) EXPECT_NE(help.find(k.name), std::string::npos) << k.name;
  EXPECT_EQ(config_keys().front().name, "seed");
}
